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
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pointconv/network.hpp"

namespace pointconv {

/// max|a - b| / max|b| (max|a - b| when b is all zeros).
template <typename Scalar>
double relative_error(std::span<const Scalar> a, std::span<const Scalar> b);

/// Sizes of one PointConv problem: B clouds of N points, every point a
/// centroid with K neighbors.
struct ConvDims {
  Index batch = 2;
  Index points = 64;
  Index k = 8;
  Index c_in = 4;
  Index c_mid = 4;
  Index c_out = 8;
};

/// Parses "B,N,K,cin,cmid,cout". Throws ValueError on malformed or
/// non-positive entries, or K > N.
ConvDims parse_conv_dims(std::string_view text);
std::string to_string(const ConvDims& dims);

/// Random clouds in the unit ball with KDE densities, grouped for `dims`.
template <typename Scalar>
RegionTensors<Scalar> random_regions(const ConvDims& dims, std::mt19937_64& rng);

struct EquivalenceReport {
  int trials = 0;
  double max_forward_error = 0.0;
  double max_gradient_error = 0.0;         // over all parameter gradients jointly
  double max_tensor_gradient_error = 0.0;  // worst single parameter tensor, informational
  double tolerance = 0.0;
  bool passed() const {
    return max_forward_error < tolerance && max_gradient_error < tolerance;
  }
};

/// Naive and efficient evaluation on random inputs and layers; compares the
/// outputs and every parameter gradient of a random projection of them.
template <typename Scalar>
EquivalenceReport equivalence_trials(const ConvDims& dims, int trials, std::uint64_t seed);

/// Tolerance for equivalence checks: 1e-5 for float, 1e-10 for double.
template <typename Scalar>
constexpr double equivalence_tolerance() {
  return sizeof(Scalar) == sizeof(float) ? 1e-5 : 1e-10;
}

inline constexpr double kGiB = 1024.0 * 1024.0 * 1024.0;

struct AnalyticMemory {
  double naive_filter_bytes = 0;   // B N K C_in C_out scalars
  double efficient_gram_bytes = 0; // B N C_in C_mid scalars
  double kernel_bytes = 0;         // H: C_in C_mid C_out scalars
  double efficient_bytes() const { return efficient_gram_bytes + kernel_bytes; }
  double ratio() const { return efficient_gram_bytes / naive_filter_bytes; }
};

AnalyticMemory analytic_memory(const ConvDims& dims, Index scalar_bytes = 4);

struct MeasuredMemory {
  std::size_t naive_largest_bytes = 0;
  std::size_t efficient_largest_bytes = 0;
  std::size_t naive_peak_bytes = 0;
  std::size_t efficient_peak_bytes = 0;
  double dominant_ratio() const {
    return static_cast<double>(efficient_largest_bytes) / static_cast<double>(naive_largest_bytes);
  }
};

/// Runs both contraction stages on random inputs under AllocationScope and
/// reports the largest single buffer and the peak live bytes of each.
template <typename Scalar>
MeasuredMemory measure_memory(const ConvDims& dims, std::uint64_t seed);

struct GridReport {
  Index side = 0;
  Index kernel = 0;
  Index interior_points = 0;
  double max_error = 0.0;
  bool passed(double tolerance = 1e-5) const { return max_error < tolerance; }
};

/// One PointConv layer (density off, K = kernel^2) on a side x side grid
/// cloud versus a sliding-window convolution whose stencil is the layer's
/// weight function sampled at the grid offsets. Compares interior outputs.
template <typename Scalar>
GridReport grid_equivalence(Index side, Index kernel, std::uint64_t seed, double origin_x = 0.0,
                            double origin_y = 0.0, Index c_in = 2, Index c_out = 3,
                            bool constant_features = false);

struct GradcheckEntry {
  std::string name;
  double error = 0.0;
};

/// Finite-difference checks at 64-bit for the density MLP, weight MLP,
/// efficient PointConv, propagation module, batch norm and loss.
std::vector<GradcheckEntry> gradcheck_suite(std::uint64_t seed);

}  // namespace pointconv
