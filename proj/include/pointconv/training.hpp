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
#include <functional>
#include <iosfwd>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pointconv/data.hpp"
#include "pointconv/network.hpp"

namespace pointconv {

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <typename Scalar>
struct AdamState {
  AdamOptions options;
  std::int64_t step = 0;
  std::vector<std::vector<Scalar>> m;
  std::vector<std::vector<Scalar>> v;
};

/// Bias-corrected Adam update, then zeroes every gradient. Moment buffers are
/// allocated on the first call. Throws AutodiffError if a gradient is missing.
template <typename Scalar>
void adam_step(std::span<const Tensor<Scalar>> params, AdamState<Scalar>& state);

/// Rescales all gradients so their joint L2 norm is at most max_norm.
/// Returns the norm before clipping.
template <typename Scalar>
double clip_grad_norm(std::span<const Tensor<Scalar>> params, double max_norm);

struct AugmentOptions {
  double jitter_sigma = 0.02;
  bool rotate = true;
  // Feature columns that start a vector rotating with the cloud (normals,
  // copied coordinates). Each spans `dim` columns.
  std::vector<Index> vector_features;
};

/// Rotation about z (3D) or in the plane (2D) by `angle`; vector features
/// rotate along.
template <typename Scalar>
void rotate_cloud(PointCloud<Scalar>& cloud, double angle, std::span<const Index> vector_features);

/// Uniform random rotation in [0, 2pi) plus i.i.d. Gaussian jitter on
/// positions. Clears any cached density.
template <typename Scalar>
PointCloud<Scalar> augment(const PointCloud<Scalar>& cloud, std::mt19937_64& rng,
                           const AugmentOptions& options = {});

struct Metrics {
  double loss = 0.0;
  double accuracy = 0.0;
  std::vector<std::optional<double>> per_class_iou;  // nullopt: absent from prediction and truth
  double miou = 0.0;
};

/// Accuracy and per-class IoU from label sequences of equal length.
Metrics compute_metrics(std::span<const int> predicted, std::span<const int> truth, Index classes);

/// Any model trainable by train(): a forward function producing logits in
/// batch_labels() order plus its parameters.
template <typename Scalar>
struct Trainable {
  Task task = Task::kClassify;
  Index classes = 2;
  std::function<Tensor<Scalar>(const std::vector<PointCloud<Scalar>>&, ForwardContext&)> forward;
  std::vector<Tensor<Scalar>> parameters;
  std::function<void(const std::filesystem::path&)> save;  // may be empty
  double density_bandwidth = 0.0;                          // > 0: precompute input density
};

template <typename Scalar>
Trainable<Scalar> trainable(Network<Scalar>& network);

/// Evaluation-mode loss and metrics. Segmentation pools every point of every
/// cloud into one confusion matrix.
template <typename Scalar>
Metrics evaluate(Trainable<Scalar>& model, const Dataset<Scalar>& dataset, Index batch_size = 8);
template <typename Scalar>
Metrics evaluate(Network<Scalar>& network, const Dataset<Scalar>& dataset, Index batch_size = 8);

/// Labels of a batch in logits row order.
template <typename Scalar>
std::vector<int> batch_labels(const std::vector<PointCloud<Scalar>>& batch, Task task);

enum class LrSchedule {
  kConstant,
  kCosine,  // per epoch, from adam.lr down to zero after the last epoch
};

std::string_view to_string(LrSchedule schedule);
LrSchedule parse_lr_schedule(std::string_view name);

// Learning rate used during `epoch` (1-based) of `epochs`.
double scheduled_lr(double lr, LrSchedule schedule, int epoch, int epochs);

struct TrainOptions {
  int epochs = 30;
  Index batch_size = 8;
  AdamOptions adam;
  LrSchedule schedule = LrSchedule::kCosine;
  double clip_norm = 10.0;
  bool augment = true;
  AugmentOptions augmentation;
  std::uint64_t seed = 1;
  bool evaluate_test = true;
  std::optional<std::filesystem::path> checkpoint;  // best test metric, or last epoch without a test set
  std::ostream* progress = nullptr;                  // human-readable per-epoch lines
};

struct EpochRecord {
  int epoch = 0;
  std::string split;
  Metrics metrics;
};

struct TrainResult {
  std::vector<EpochRecord> log;
  std::optional<Metrics> best_test;
  int best_epoch = 0;
  std::optional<Metrics> final_test;
};

/// Writes `epoch,split,loss,accuracy,miou` rows.
void write_log_csv(std::ostream& out, std::span<const EpochRecord> log);

/// Mini-batch training with Adam. Batches of one are dropped (batch norm);
/// a dataset smaller than a batch is cycled to fill one. Throws Error on a
/// non-finite loss.
template <typename Scalar>
TrainResult train(Trainable<Scalar>& model, const DatasetSplit<Scalar>& data,
                  const TrainOptions& options);
template <typename Scalar>
TrainResult train(Network<Scalar>& network, const DatasetSplit<Scalar>& data,
                  const TrainOptions& options);

/// Copies the dataset with every cloud's density computed at `bandwidth`.
template <typename Scalar>
Dataset<Scalar> with_density(const Dataset<Scalar>& dataset, double bandwidth);

}  // namespace pointconv
