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
#include <vector>

#include "pointconv/network.hpp"
#include "pointconv/training.hpp"

namespace pointconv {

/// Image classifier on a square pixel grid: kernel x kernel stride-2 convolutions
/// with zero padding, each followed by BN and ReLU, then mean pooling and the
/// same fully connected head as the point network.
struct GridCnnConfig {
  Index side = 16;
  Index input_channels = 1;
  Index kernel = 3;
  std::vector<Index> channels{64, 128, 256};
  HeadSpec head{{128}, 0.4, 2};
  std::uint64_t seed = 1;
};

/// Rows of the im2col gather for one convolution over `batch` images stored
/// row-major: [batch * out_side^2, kernel^2] source rows, -1 outside the image.
std::vector<Index> conv_gather_indices(Index batch, Index side, Index kernel, Index stride);

template <typename Scalar>
class GridCnn {
 public:
  explicit GridCnn(GridCnnConfig config);
  const GridCnnConfig& config() const { return config_; }
  /// Clouds from image_to_pointcloud(); features are read in pixel order.
  Tensor<Scalar> forward(const std::vector<PointCloud<Scalar>>& batch, ForwardContext& ctx);
  NamedTensors<Scalar> parameters() const;

  std::vector<LinearLayer<Scalar>> convs;  // [kernel^2 * C_in, C_out] each
  std::vector<BatchNormState<Scalar>> norms;
  Head<Scalar> head;

 private:
  GridCnnConfig config_;
};

template <typename Scalar>
Trainable<Scalar> trainable(GridCnn<Scalar>& cnn);

/// The point network with the CNN's channel structure: one encoder per
/// convolution, each quartering the point count with K = kernel^2. Batch
/// norm inside the WeightNet is on.
NetworkConfig matched_point_config(const GridCnnConfig& cnn);

}  // namespace pointconv
