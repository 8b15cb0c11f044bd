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

#include "pointconv/point_ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <limits>
#include <numeric>
#include <string>

namespace pointconv {
namespace {

template <typename S>
inline S squared_distance(const S* a, const S* b, Index d) {
  if (d == 3) {
    const S x = a[0] - b[0], y = a[1] - b[1], z = a[2] - b[2];
    return x * x + y * y + z * z;
  }
  S acc = 0;
  for (Index c = 0; c < d; ++c) acc += (a[c] - b[c]) * (a[c] - b[c]);
  return acc;
}

template <typename S>
inline S squared_distance(const MatrixX<S>& a, Index i, const MatrixX<S>& b, Index j) {
  return squared_distance(a.data() + i * a.cols(), b.data() + j * b.cols(), a.cols());
}

template <typename S>
struct Candidate {
  S dist;
  Index index;
  bool operator<(const Candidate& o) const {
    return dist < o.dist || (dist == o.dist && index < o.index);
  }
};

// The `count` nearest sources of `target` by (distance, index), excluding `skip`.
template <typename S>
std::vector<Candidate<S>> nearest(const MatrixX<S>& sources, const MatrixX<S>& targets,
                                  Index target, Index count, Index skip) {
  thread_local std::vector<Candidate<S>> all;
  all.clear();
  const Index d = sources.cols();
  const S* t = targets.data() + target * d;
  const S* src = sources.data();
  for (Index j = 0; j < sources.rows(); ++j) {
    if (j != skip) all.push_back({squared_distance(t, src + j * d, d), j});
  }
  const auto take = std::min(static_cast<std::size_t>(std::max<Index>(count, 0)), all.size());
  const auto mid = all.begin() + static_cast<std::ptrdiff_t>(take);
  if (take < all.size()) std::nth_element(all.begin(), mid, all.end());
  std::sort(all.begin(), mid);
  return {all.begin(), mid};
}

}  // namespace

template <typename S>
void PointCloud<S>::validate(bool normalized) const {
  if (size() < 1) throw ValueError("point cloud is empty");
  if (dim() != 2 && dim() != 3) {
    throw ValueError("point cloud dimension must be 2 or 3, got " + std::to_string(dim()));
  }
  if (!positions.allFinite()) throw ValueError("point cloud has non-finite coordinates");
  if (features.rows() != size() && !(features.size() == 0 && features.rows() == 0)) {
    throw ValueError("feature rows (" + std::to_string(features.rows()) +
                     ") do not match point count (" + std::to_string(size()) + ")");
  }
  if (!point_labels.empty() && static_cast<Index>(point_labels.size()) != size()) {
    throw ValueError("point label count does not match point count");
  }
  if (density.size() != 0 && density.size() != size()) {
    throw ValueError("density length does not match point count");
  }
  if (normalized && positions.rowwise().norm().maxCoeff() > S(1) + S(1e-6)) {
    throw ValueError("point cloud is not inside the unit ball");
  }
}

template <typename S>
std::vector<Index> farthest_point_sample(const MatrixX<S>& positions, Index n_out, FpsStart start) {
  const Index n = positions.rows();
  if (n_out < 1 || n_out > n) {
    throw ValueError("farthest_point_sample: n_out=" + std::to_string(n_out) +
                     " outside [1," + std::to_string(n) + "]");
  }
  Index current = 0;
  if (const auto* fixed = std::get_if<StartIndex>(&start)) {
    if (fixed->index < 0 || fixed->index >= n) {
      throw ValueError("farthest_point_sample: start index out of range");
    }
    current = fixed->index;
  } else {
    const MatrixX<S> mean = positions.colwise().mean();
    S best = squared_distance(mean, 0, positions, 0);
    for (Index j = 1; j < n; ++j) {
      const S d = squared_distance(mean, 0, positions, j);
      if (d < best) best = d, current = j;
    }
  }

  std::vector<Index> chosen;
  chosen.reserve(static_cast<std::size_t>(n_out));
  // Minimum squared distance to the chosen set; -1 marks chosen points.
  std::vector<S> min_dist(static_cast<std::size_t>(n), std::numeric_limits<S>::infinity());
  for (Index step = 0; step < n_out; ++step) {
    chosen.push_back(current);
    min_dist[static_cast<std::size_t>(current)] = S(-1);
    Index next = -1;
    S best = S(-1);
    for (Index j = 0; j < n; ++j) {
      S& md = min_dist[static_cast<std::size_t>(j)];
      if (md < S(0)) continue;
      md = std::min(md, squared_distance(positions, current, positions, j));
      if (md > best) best = md, next = j;
    }
    current = next;
  }
  return chosen;
}

template <typename S>
Neighborhood<S> knn_group(const PointCloud<S>& cloud, std::span<const Index> centroids, Index k,
                          bool with_density) {
  if (k < 1) throw ValueError("knn_group: K must be at least 1");
  if (with_density && !cloud.has_density()) {
    throw ValueError("knn_group: inverse density requested but the cloud has no density");
  }
  const Index n = cloud.size(), d = cloud.dim(), c = cloud.channels();
  Neighborhood<S> nb;
  nb.centroid_indices.assign(centroids.begin(), centroids.end());
  nb.k = k;
  const Index m = nb.centroids();
  nb.neighbor_indices.resize(static_cast<std::size_t>(m * k));
  nb.local_coords.resize(m * k, d);
  nb.grouped_features.resize(m * k, c);
  VectorX<S> inv;
  if (with_density) {
    inv = inverse_density(cloud.density);
    nb.grouped_inverse_density.resize(m * k);
  }
  for (Index i = 0; i < m; ++i) {
    const Index center = centroids[static_cast<std::size_t>(i)];
    if (center < 0 || center >= n) throw ValueError("knn_group: centroid index out of range");
    const auto near = nearest(cloud.positions, cloud.positions, center, k - 1, center);
    for (Index j = 0; j < k; ++j) {
      const Index idx = j == 0 || j > static_cast<Index>(near.size())
                            ? center
                            : near[static_cast<std::size_t>(j - 1)].index;
      const Index row = i * k + j;
      nb.neighbor_indices[static_cast<std::size_t>(row)] = idx;
      nb.local_coords.row(row) = cloud.positions.row(idx) - cloud.positions.row(center);
      if (c > 0) nb.grouped_features.row(row) = cloud.features.row(idx);
      if (with_density) nb.grouped_inverse_density(row) = inv(idx);
    }
  }
  return nb;
}

template <typename S>
VectorX<S> kde_density(const MatrixX<S>& positions, S bandwidth) {
  if (!(bandwidth > S(0))) throw ValueError("kde_density: bandwidth must be positive");
  const Index n = positions.rows();
  const S h2 = bandwidth * bandwidth;
  const S norm = std::pow(S(2) * std::numbers::pi_v<S> * h2,
                          -static_cast<S>(positions.cols()) / S(2)) /
                 static_cast<S>(n);
  VectorX<S> density = VectorX<S>::Zero(n);
  // Symmetric kernel: accumulate each pair once.
  const Index d = positions.cols();
  const S* p = positions.data();
  const S scale = S(-1) / (S(2) * h2);
  for (Index i = 0; i < n; ++i) {
    S row = S(1);
    for (Index j = i + 1; j < n; ++j) {
      const S w = std::exp(squared_distance(p + i * d, p + j * d, d) * scale);
      row += w;
      density(j) += w;
    }
    density(i) += row;
  }
  return density * norm;
}

template <typename S>
void kde_density(PointCloud<S>& cloud, S bandwidth) {
  cloud.density = kde_density(cloud.positions, bandwidth);
}

template <typename S>
VectorX<S> inverse_density(const VectorX<S>& density, S eps) {
  VectorX<S> s = (density.array() + eps).inverse();
  return s / s.maxCoeff();
}

template <typename S>
InterpolationWeights<S> three_nn_weights(const MatrixX<S>& targets, const MatrixX<S>& sources) {
  if (sources.rows() < 1) throw ValueError("three_nn_weights: no source points");
  if (targets.cols() != sources.cols()) {
    throw ShapeError("three_nn_weights: targets and sources differ in dimension");
  }
  const Index m = targets.rows();
  InterpolationWeights<S> out;
  out.indices.resize(static_cast<std::size_t>(m * 3));
  out.weights.resize(m, 3);
  for (Index t = 0; t < m; ++t) {
    const auto near = nearest(sources, targets, t, 3, -1);
    S total = 0;
    for (Index j = 0; j < 3; ++j) {
      const auto& cand = near[std::min<std::size_t>(static_cast<std::size_t>(j), near.size() - 1)];
      const S w = S(1) / (std::sqrt(cand.dist) + S(1e-8));
      out.indices[static_cast<std::size_t>(t * 3 + j)] = cand.index;
      out.weights(t, j) = w;
      total += w;
    }
    out.weights.row(t) /= total;
  }
  return out;
}

template <typename S>
MatrixX<S> three_nn_interpolate(const MatrixX<S>& targets, const MatrixX<S>& sources,
                                const MatrixX<S>& source_features) {
  if (source_features.rows() != sources.rows()) {
    throw ShapeError("three_nn_interpolate: feature rows do not match source count");
  }
  const auto w = three_nn_weights(targets, sources);
  MatrixX<S> out = MatrixX<S>::Zero(targets.rows(), source_features.cols());
  for (Index t = 0; t < targets.rows(); ++t) {
    for (Index j = 0; j < 3; ++j) {
      out.row(t) += w.weights(t, j) * source_features.row(w.indices[static_cast<std::size_t>(t * 3 + j)]);
    }
  }
  return out;
}

#define POINTCONV_INSTANTIATE_POINT_OPS(S)                                                     \
  template struct PointCloud<S>;                                                               \
  template std::vector<Index> farthest_point_sample(const MatrixX<S>&, Index, FpsStart);       \
  template Neighborhood<S> knn_group(const PointCloud<S>&, std::span<const Index>, Index, bool); \
  template VectorX<S> kde_density(const MatrixX<S>&, S);                                       \
  template void kde_density(PointCloud<S>&, S);                                                \
  template VectorX<S> inverse_density(const VectorX<S>&, S);                                   \
  template InterpolationWeights<S> three_nn_weights(const MatrixX<S>&, const MatrixX<S>&);     \
  template MatrixX<S> three_nn_interpolate(const MatrixX<S>&, const MatrixX<S>&, const MatrixX<S>&);

POINTCONV_INSTANTIATE_POINT_OPS(float)
POINTCONV_INSTANTIATE_POINT_OPS(double)

}  // namespace pointconv
