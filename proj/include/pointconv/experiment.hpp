// Copyright 2026 The pointconv-cpp Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "pointconv/grid_cnn.hpp"
#include "pointconv/training.hpp"

namespace pointconv {

enum class ExperimentTask { kClassify, kSegment, kImage };
enum class ScalarType { kFloat32, kFloat64 };
enum class ModelKind { kPointConv, kGridCnn };
enum class DataSource { kShapes, kBars, kManifest };

std::string_view to_string(ExperimentTask task);
ExperimentTask parse_experiment_task(std::string_view name);

struct DataConfig {
  DataSource source = DataSource::kShapes;
  // shapes
  Index points = 512;
  Index train_per_class = 100;
  Index test_per_class = 25;
  double noise = 0.01;
  // bars
  Index side = 16;
  Index train = 512;
  Index test = 128;
  double image_noise = 20.0;
  // manifest
  std::string train_manifest;
  std::string test_manifest;  // may be empty
  std::uint64_t seed = 1;
};

struct TrainConfig {
  int epochs = 30;
  Index batch_size = 8;
  double lr = 1e-3;
  LrSchedule lr_schedule = LrSchedule::kCosine;
  double clip_norm = 10.0;
  bool augment = true;
  bool rotate = true;
  double jitter = 0.02;
  std::vector<Index> vector_features;
  std::uint64_t seed = 1;
};

struct OutputConfig {
  std::string checkpoint;  // empty: not written
  std::string log;         // CSV, empty: not written
};

struct ExperimentConfig {
  ExperimentTask task = ExperimentTask::kClassify;
  ScalarType scalar = ScalarType::kFloat32;
  ModelKind model = ModelKind::kPointConv;
  std::uint64_t seed = 1;
  DataConfig data;
  std::optional<NetworkConfig> network;  // nullopt: derived from a manifest dataset
  GridCnnConfig grid_cnn;
  TrainConfig train;
  OutputConfig output;
};

/// Complete default document for a task, as accepted by experiment_from_json.
nlohmann::json default_experiment_json(ExperimentTask task);

/// Sets a dotted key ("train.epochs=5", "network.encoders.0.c_mid=16").
/// The value is parsed as JSON when possible and kept as a string otherwise.
void apply_override(nlohmann::json& document, std::string_view assignment);

/// Defaults for the task, then the user document merged on top, then the
/// overrides. Sub-seeds left unset follow the top-level seed.
ExperimentConfig resolve_experiment(const nlohmann::json& user,
                                    std::span<const std::string> overrides = {});

ExperimentConfig experiment_from_json(const nlohmann::json& document);
nlohmann::json to_json(const ExperimentConfig& config);

template <typename Scalar>
DatasetSplit<Scalar> load_experiment_data(const ExperimentConfig& config);

TrainOptions train_options(const ExperimentConfig& config);

struct ExperimentOutcome {
  TrainResult result;
  Index parameter_count = 0;
  double seconds = 0.0;
};

/// Trains the configured model, writing the checkpoint and log named in
/// config.output.
ExperimentOutcome run_experiment(const ExperimentConfig& config, std::ostream* progress = nullptr);

struct AblationRow {
  DensityMode mode = DensityMode::kMlp;
  Metrics test;
};

/// Retrains `base` once per density mode (mlp, disabled, raw) applied to every
/// layer and reports the final test metrics.
std::vector<AblationRow> ablate_density(const ExperimentConfig& base, std::ostream* progress = nullptr);

struct SweepRow {
  Index c_mid = 0;
  std::vector<double> accuracies;
  double mean = 0.0;
  double sd = 0.0;  // sample standard deviation
};

/// Trial t reseeds the network and the training loop with base.seed + t; the
/// data stay fixed.
std::vector<SweepRow> sweep_cmid(const ExperimentConfig& base, std::span<const Index> c_mids,
                                 int trials, std::ostream* progress = nullptr);

}  // namespace pointconv
