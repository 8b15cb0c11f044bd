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
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "pointconv/ops.hpp"
#include "pointconv/point_ops.hpp"
#include "pointconv/pointconv.hpp"

namespace pointconv {

enum class Task { kClassify, kSegment };

/// One hierarchical level: sample n_out centroids, group K neighbors, PointConv.
struct EncodingSpec {
  Index n_out = 0;
  Index k = 16;
  std::vector<Index> mlp_channels;  // per-point MLP applied before grouping
  Index c_mid = 8;
  Index c_out = 64;
  DensityMode density = DensityMode::kMlp;
  double bandwidth = 0.1;
};

/// One PointDeconv level: interpolate to the skip level, concatenate, PointConv.
struct PropagationSpec {
  int skip_level = 0;
  Index k = 16;
  Index c_mid = 8;
  Index c_out = 64;
  DensityMode density = DensityMode::kMlp;
  double bandwidth = 0.1;
};

struct HeadSpec {
  std::vector<Index> hidden;  // fully connected widths before the output layer
  double dropout = 0.4;       // applied before the output layer
  Index classes = 2;
};

struct NetworkConfig {
  Task task = Task::kClassify;
  Index input_dim = 3;
  Index input_channels = 3;
  std::vector<EncodingSpec> encoders;
  std::vector<PropagationSpec> propagators;
  HeadSpec head;
  int weight_net_layers = 2;
  bool weight_net_batch_norm = false;
  std::uint64_t seed = 1;
};

/// Three encoders (256,16)->(64,16)->(16,16) with C_mid 8, mean pooling and a
/// 256-128-classes head.
NetworkConfig default_classification_config(Index input_dim, Index input_channels, Index classes);
/// The same encoders followed by three propagation levels back to the input.
NetworkConfig default_segmentation_config(Index input_dim, Index input_channels, Index classes);

/// Throws ValueError for structurally invalid configurations.
void validate(const NetworkConfig& config);

nlohmann::json to_json(const NetworkConfig& config);
NetworkConfig network_config_from_json(const nlohmann::json& j);

/// Positions per cloud plus batched features [B, N, C]. Densities are
/// optional per cloud (empty vectors are computed on demand).
template <typename Scalar>
struct Level {
  std::vector<MatrixX<Scalar>> positions;
  std::vector<VectorX<Scalar>> density;
  Tensor<Scalar> features;

  Index batch() const { return static_cast<Index>(positions.size()); }
  Index points() const { return positions.empty() ? 0 : positions.front().rows(); }
};

struct ForwardContext {
  Mode mode = Mode::kEval;
  std::mt19937_64* rng = nullptr;  // FPS start and dropout; required in training
};

template <typename Scalar>
class EncodingModule {
 public:
  EncodingModule() = default;
  EncodingModule(const EncodingSpec& spec, const NetworkConfig& net, Index c_in,
                 std::mt19937_64& rng);

  /// density -> inverse density -> FPS -> kNN -> PointConv -> BN -> ReLU.
  Level<Scalar> forward(const Level<Scalar>& in, ForwardContext& ctx);
  void collect(const std::string& prefix, NamedTensors<Scalar>& params,
               NamedTensors<Scalar>& buffers) const;

  EncodingSpec spec;
  std::vector<LinearLayer<Scalar>> mlp;
  std::vector<BatchNormState<Scalar>> mlp_norms;
  PointConv<Scalar> conv;
  BatchNormState<Scalar> norm;
  bool use_efficient = true;  // false selects the naive evaluation order
};

template <typename Scalar>
class PropagationModule {
 public:
  PropagationModule() = default;
  PropagationModule(const PropagationSpec& spec, const NetworkConfig& net, Index c_coarse,
                    Index c_skip, std::mt19937_64& rng);

  /// 3-NN interpolation coarse -> fine, concatenation with the fine skip
  /// features, kNN at fine resolution, PointConv -> BN -> ReLU.
  Level<Scalar> forward(const Level<Scalar>& coarse, const Level<Scalar>& fine,
                        ForwardContext& ctx);
  void collect(const std::string& prefix, NamedTensors<Scalar>& params,
               NamedTensors<Scalar>& buffers) const;

  PropagationSpec spec;
  PointConv<Scalar> conv;
  BatchNormState<Scalar> norm;
};

/// Fully connected head: (linear, BN, ReLU)* then dropout and a linear output.
template <typename Scalar>
class Head {
 public:
  Head() = default;
  Head(const HeadSpec& spec, Index c_in, std::mt19937_64& rng);

  Tensor<Scalar> forward(const Tensor<Scalar>& x, ForwardContext& ctx);
  void collect(const std::string& prefix, NamedTensors<Scalar>& params,
               NamedTensors<Scalar>& buffers) const;

  HeadSpec spec;
  std::vector<LinearLayer<Scalar>> hidden;
  std::vector<BatchNormState<Scalar>> norms;
  LinearLayer<Scalar> output;
};

template <typename Scalar>
class Network {
 public:
  explicit Network(NetworkConfig config);

  const NetworkConfig& config() const { return config_; }

  /// Classification: logits [B, classes]. Segmentation: logits [B*N, classes],
  /// row b*N + i for point i of cloud b.
  Tensor<Scalar> forward(const std::vector<PointCloud<Scalar>>& batch, ForwardContext& ctx);

  /// Input level built from a batch (all clouds need equal size).
  Level<Scalar> input_level(const std::vector<PointCloud<Scalar>>& batch) const;

  NamedTensors<Scalar> parameters() const;
  /// Non-trainable state (batch norm running statistics).
  NamedTensors<Scalar> buffers() const;
  Index parameter_count() const;

  std::vector<EncodingModule<Scalar>> encoders;
  std::vector<PropagationModule<Scalar>> propagators;
  Head<Scalar> head;

 private:
  NetworkConfig config_;
};

// ---------------------------------------------------------------------------
// Checkpoints
//
// Layout: "PCNV", u32 version, u64 length + config JSON, u32 tensor count,
// then per tensor: u32 name length, name, u32 rank, u64 dims..., raw
// little-endian values.

inline constexpr std::uint32_t kCheckpointVersion = 1;

template <typename Scalar>
void save_params(const Network<Scalar>& network, const std::filesystem::path& path);

/// Builds a network from the embedded config and loads every tensor.
template <typename Scalar>
Network<Scalar> load_params(const std::filesystem::path& path);

/// Loads into an existing network; the stored config must match its config.
template <typename Scalar>
void load_params_into(Network<Scalar>& network, const std::filesystem::path& path);

/// Reads only the embedded config of a checkpoint.
NetworkConfig read_checkpoint_config(const std::filesystem::path& path);

}  // namespace pointconv
