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

#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "pointconv/tensor.hpp"

namespace pointconv {

/// Positions (N x d, d = 2 or 3) with per-point features and optional labels.
template <typename Scalar>
struct PointCloud {
  MatrixX<Scalar> positions;
  MatrixX<Scalar> features;      // N x C, C may be 0
  std::vector<int> point_labels;  // empty or N entries
  std::optional<int> label;       // per-cloud class
  VectorX<Scalar> density;        // empty until kde_density() fills it

  Index size() const { return positions.rows(); }
  Index dim() const { return positions.cols(); }
  Index channels() const { return features.cols(); }
  bool has_density() const { return density.size() == size(); }

  /// Throws ValueError when a structural invariant fails. With `normalized`,
  /// additionally requires every point to lie in the unit ball (1e-6 slack).
  void validate(bool normalized = false) const;
};

/// Sub-sampled centroids and their K nearest neighbors, flattened row-major.
template <typename Scalar>
struct Neighborhood {
  std::vector<Index> centroid_indices;  // N'
  std::vector<Index> neighbor_indices;  // N' x K
  Index k = 0;
  MatrixX<Scalar> local_coords;             // (N' K) x d
  MatrixX<Scalar> grouped_features;         // (N' K) x C
  VectorX<Scalar> grouped_inverse_density;  // N' K, empty unless requested

  Index centroids() const { return static_cast<Index>(centroid_indices.size()); }
};

/// Start at the point nearest the coordinate mean (lowest index on ties).
struct CanonicalStart {};
/// Start at a fixed index.
struct StartIndex {
  Index index = 0;
};
using FpsStart = std::variant<CanonicalStart, StartIndex>;

/// Greedy farthest point sampling; ties go to the lowest index. Returns
/// `n_out` distinct indices in selection order.
template <typename Scalar>
std::vector<Index> farthest_point_sample(const MatrixX<Scalar>& positions, Index n_out,
                                         FpsStart start = CanonicalStart{});

/// For each centroid the K nearest points, the centroid itself first and the
/// rest ordered by (distance, index). Rows are padded with the centroid when
/// fewer than K points exist. When `with_density` is set the cloud's density
/// must be populated; the grouped value is the normalized inverse density.
template <typename Scalar>
Neighborhood<Scalar> knn_group(const PointCloud<Scalar>& cloud, std::span<const Index> centroids,
                               Index k, bool with_density = false);

/// Gaussian kernel density estimate at every point, self term included:
///   d_i = 1/N sum_j (2 pi h^2)^(-dim/2) exp(-|p_i - p_j|^2 / (2 h^2)).
template <typename Scalar>
VectorX<Scalar> kde_density(const MatrixX<Scalar>& positions, Scalar bandwidth);

/// Computes kde_density() and stores it into cloud.density.
template <typename Scalar>
void kde_density(PointCloud<Scalar>& cloud, Scalar bandwidth);

/// s_i = 1 / (d_i + eps), rescaled so that max_i s_i = 1.
template <typename Scalar>
VectorX<Scalar> inverse_density(const VectorX<Scalar>& density, Scalar eps = Scalar(1e-8));

/// Indices (M x 3) and inverse-distance weights (M x 3, rows sum to one) of
/// the three nearest sources of every target.
template <typename Scalar>
struct InterpolationWeights {
  std::vector<Index> indices;
  MatrixX<Scalar> weights;
};

template <typename Scalar>
InterpolationWeights<Scalar> three_nn_weights(const MatrixX<Scalar>& targets,
                                              const MatrixX<Scalar>& sources);

/// Inverse-distance interpolation of source features at the targets.
template <typename Scalar>
MatrixX<Scalar> three_nn_interpolate(const MatrixX<Scalar>& targets, const MatrixX<Scalar>& sources,
                                     const MatrixX<Scalar>& source_features);

}  // namespace pointconv
