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
#include <random>
#include <span>

#include "pointconv/tensor.hpp"

namespace pointconv {

// Differentiable tensor operations. Every function records a tape node when
// one of its inputs requires gradients and gradient mode is on.

/// [..., m, k] x [..., k, n] -> [..., m, n]. Leading batch extents must agree,
/// or one side's batch must be absent or all ones.
template <typename Scalar>
Tensor<Scalar> matmul(const Tensor<Scalar>& a, const Tensor<Scalar>& b);

/// x[..., d_in] * weight[d_in, d_out] + bias[d_out].
template <typename Scalar>
Tensor<Scalar> linear(const Tensor<Scalar>& x, const Tensor<Scalar>& weight,
                      const Tensor<Scalar>& bias);

template <typename Scalar>
Tensor<Scalar> relu(const Tensor<Scalar>& x);
template <typename Scalar>
Tensor<Scalar> sigmoid(const Tensor<Scalar>& x);
template <typename Scalar>
Tensor<Scalar> neg(const Tensor<Scalar>& x);
template <typename Scalar>
Tensor<Scalar> scale(const Tensor<Scalar>& x, Scalar factor);

// Binary elementwise operations. Shapes must be equal, or the smaller shape
// (leading ones dropped) must be a trailing suffix of the larger one.
template <typename Scalar>
Tensor<Scalar> add(const Tensor<Scalar>& a, const Tensor<Scalar>& b);
template <typename Scalar>
Tensor<Scalar> sub(const Tensor<Scalar>& a, const Tensor<Scalar>& b);
template <typename Scalar>
Tensor<Scalar> mul(const Tensor<Scalar>& a, const Tensor<Scalar>& b);
/// Throws ValueError if any divisor is zero.
template <typename Scalar>
Tensor<Scalar> div(const Tensor<Scalar>& a, const Tensor<Scalar>& b);

enum class Reduction { kSum, kMax, kMean };

/// Reduces one axis away. Max routes the gradient to the lowest index among ties.
template <typename Scalar>
Tensor<Scalar> reduce(const Tensor<Scalar>& x, Index axis, Reduction fn);

/// Sum of all elements, shape [1].
template <typename Scalar>
Tensor<Scalar> sum(const Tensor<Scalar>& x);

/// Same values, new shape with equal element count. Shares storage.
template <typename Scalar>
Tensor<Scalar> reshape(const Tensor<Scalar>& x, Shape shape);

/// Concatenates along the last axis; all leading extents must match.
template <typename Scalar>
Tensor<Scalar> concat(const Tensor<Scalar>& a, const Tensor<Scalar>& b);

/// Views x as rows of its last axis and picks rows by index; -1 yields a zero
/// row. Output shape is index_shape + [C].
template <typename Scalar>
Tensor<Scalar> gather_rows(const Tensor<Scalar>& x, std::span<const Index> indices,
                           const Shape& index_shape);

/// x[R, K, C], w[R, K] -> y[R, C] with y[r] = sum_k w[r,k] x[r,k].
template <typename Scalar>
Tensor<Scalar> weighted_sum(const Tensor<Scalar>& x, const Tensor<Scalar>& w);

/// Inverted dropout with keep probability 1 - p.
template <typename Scalar>
Tensor<Scalar> dropout(const Tensor<Scalar>& x, double p, std::mt19937_64& rng);

// ---------------------------------------------------------------------------
// Batch normalization

template <typename Scalar>
struct BatchNormState {
  static constexpr double kEpsilon = 1e-5;
  static constexpr double kMomentum = 0.9;

  BatchNormState() = default;
  explicit BatchNormState(Index channels)
      : gamma(Shape{channels}, Scalar(1)),
        beta(Shape{channels}, Scalar(0)),
        running_mean(Shape{channels}, Scalar(0)),
        running_var(Shape{channels}, Scalar(1)) {
    gamma.set_requires_grad();
    beta.set_requires_grad();
  }

  Index channels() const { return gamma.size(); }

  Tensor<Scalar> gamma;
  Tensor<Scalar> beta;
  Tensor<Scalar> running_mean;
  Tensor<Scalar> running_var;
};

enum class Mode { kTrain, kEval };

/// Normalizes x[..., C] per channel over all other axes. Training mode uses
/// batch statistics and updates the running averages; eval mode uses them.
template <typename Scalar>
Tensor<Scalar> batch_norm(const Tensor<Scalar>& x, BatchNormState<Scalar>& state, Mode mode);

// ---------------------------------------------------------------------------
// Loss

/// Mean over the batch of -log softmax(logits)[label]. logits is [B, C].
template <typename Scalar>
Tensor<Scalar> softmax_cross_entropy(const Tensor<Scalar>& logits, std::span<const int> labels);

}  // namespace pointconv
