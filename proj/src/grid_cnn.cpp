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

#include "pointconv/grid_cnn.hpp"

#include <string>

namespace pointconv {

std::vector<Index> conv_gather_indices(Index batch, Index side, Index kernel, Index stride) {
  if (batch < 1 || side < 1 || kernel < 1 || kernel % 2 == 0 || stride < 1) {
    throw ValueError("conv_gather_indices: need positive sizes and an odd kernel");
  }
  const Index out = (side + stride - 1) / stride, half = kernel / 2;
  std::vector<Index> idx;
  idx.reserve(static_cast<std::size_t>(batch * out * out * kernel * kernel));
  for (Index b = 0; b < batch; ++b) {
    for (Index r = 0; r < out; ++r) {
      for (Index c = 0; c < out; ++c) {
        for (Index dr = -half; dr <= half; ++dr) {
          for (Index dc = -half; dc <= half; ++dc) {
            const Index sr = r * stride + dr, sc = c * stride + dc;
            const bool inside = sr >= 0 && sr < side && sc >= 0 && sc < side;
            idx.push_back(inside ? (b * side + sr) * side + sc : -1);
          }
        }
      }
    }
  }
  return idx;
}

template <typename S>
GridCnn<S>::GridCnn(GridCnnConfig config) : config_(std::move(config)) {
  if (config_.channels.empty()) throw ValueError("grid CNN needs at least one convolution");
  if (config_.head.classes < 1) throw ValueError("class count must be positive");
  std::mt19937_64 rng(config_.seed);
  Index c_in = config_.input_channels;
  for (Index c : config_.channels) {
    convs.emplace_back(config_.kernel * config_.kernel * c_in, c, rng);
    norms.emplace_back(c);
    c_in = c;
  }
  head = Head<S>(config_.head, c_in, rng);
}

template <typename S>
Tensor<S> GridCnn<S>::forward(const std::vector<PointCloud<S>>& batch, ForwardContext& ctx) {
  const Index b = static_cast<Index>(batch.size());
  if (b < 1) throw ValueError("grid CNN: empty batch");
  Index side = config_.side;
  const Index c0 = config_.input_channels;
  Tensor<S> x(Shape{b * side * side, c0});
  for (Index i = 0; i < b; ++i) {
    const auto& f = batch[static_cast<std::size_t>(i)].features;
    if (f.rows() != side * side || f.cols() != c0) {
      throw ShapeError("grid CNN: expected " + std::to_string(side * side) + " pixels with " +
                       std::to_string(c0) + " channels");
    }
    std::copy_n(f.data(), f.size(), x.data() + i * side * side * c0);
  }
  const Index k2 = config_.kernel * config_.kernel;
  for (std::size_t l = 0; l < convs.size(); ++l) {
    const auto idx = conv_gather_indices(b, side, config_.kernel, 2);
    side = (side + 1) / 2;
    const Index rows = b * side * side;
    Tensor<S> cols = reshape(gather_rows(x, idx, Shape{rows, k2}), Shape{rows, -1});
    x = relu(batch_norm(convs[l](cols), norms[l], ctx.mode));
  }
  const Tensor<S> pooled = reduce(reshape(x, Shape{b, side * side, x.dim(-1)}), 1, Reduction::kMean);
  return head.forward(pooled, ctx);
}

template <typename S>
NamedTensors<S> GridCnn<S>::parameters() const {
  NamedTensors<S> params, buffers;
  for (std::size_t i = 0; i < convs.size(); ++i) {
    convs[i].collect("conv" + std::to_string(i), params);
    params.emplace_back("conv" + std::to_string(i) + ".norm.gamma", norms[i].gamma);
    params.emplace_back("conv" + std::to_string(i) + ".norm.beta", norms[i].beta);
  }
  head.collect("head", params, buffers);
  return params;
}

template <typename S>
Trainable<S> trainable(GridCnn<S>& cnn) {
  Trainable<S> t;
  t.task = Task::kClassify;
  t.classes = cnn.config().head.classes;
  t.forward = [&cnn](const std::vector<PointCloud<S>>& batch, ForwardContext& ctx) {
    return cnn.forward(batch, ctx);
  };
  for (auto& [name, p] : cnn.parameters()) t.parameters.push_back(p);
  return t;
}

NetworkConfig matched_point_config(const GridCnnConfig& cnn) {
  NetworkConfig net;
  net.task = Task::kClassify;
  net.input_dim = 2;
  net.input_channels = cnn.input_channels;
  Index side = cnn.side;
  for (Index c : cnn.channels) {
    side = (side + 1) / 2;
    EncodingSpec e;
    e.n_out = side * side;
    e.k = cnn.kernel * cnn.kernel;
    e.c_out = c;
    net.encoders.push_back(e);
  }
  net.head = cnn.head;
  net.seed = cnn.seed;
  net.weight_net_batch_norm = true;
  return net;
}

template class GridCnn<float>;
template class GridCnn<double>;
template Trainable<float> trainable(GridCnn<float>&);
template Trainable<double> trainable(GridCnn<double>&);

}  // namespace pointconv
