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


#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <set>
#include <vector>

#include <gtest/gtest.h>

#include "pointconv/errors.hpp"
#include "pointconv/point_ops.hpp"
#include "test_util.hpp"

namespace pointconv {
namespace {

using testing::random_points;
using Mat = MatrixX<double>;

double sq_dist(const Mat& p, Index i, Index j) { return (p.row(i) - p.row(j)).squaredNorm(); }

// Brute-force greedy FPS.
std::vector<Index> fps_oracle(const Mat& p, Index n_out, Index start) {
  std::vector<Index> chosen{start};
  while (static_cast<Index>(chosen.size()) < n_out) {
    Index best = -1;
    double best_d = -1;
    for (Index i = 0; i < p.rows(); ++i) {
      double d = INFINITY;
      for (Index c : chosen) d = std::min(d, sq_dist(p, i, c));
      if (d > best_d) {
        best_d = d;
        best = i;
      }
    }
    chosen.push_back(best);
  }
  return chosen;
}

Index canonical_oracle(const Mat& p) {
  const Eigen::RowVectorXd mean = p.colwise().mean();
  Index best = 0;
  for (Index i = 1; i < p.rows(); ++i) {
    if ((p.row(i) - mean).squaredNorm() < (p.row(best) - mean).squaredNorm()) best = i;
  }
  return best;
}

PointCloud<double> cloud_of(Mat positions, Index channels = 0) {
  PointCloud<double> c;
  c.features = Mat(positions.rows(), channels);
  for (Index i = 0; i < c.features.size(); ++i) c.features.data()[i] = 0.1 * double(i);
  c.positions = std::move(positions);
  return c;
}

TEST(FarthestPointSample, Examples) {
  Mat p(3, 3);
  p << 0, 0, 0, 1, 0, 0, 0.5, 0, 0;
  EXPECT_EQ(farthest_point_sample(p, 2, StartIndex{0}), (std::vector<Index>{0, 1}));
  const auto all = farthest_point_sample(p, 3);
  EXPECT_EQ(std::set<Index>(all.begin(), all.end()), (std::set<Index>{0, 1, 2}));
  EXPECT_THROW(farthest_point_sample(p, 0), ValueError);
  EXPECT_THROW(farthest_point_sample(p, 4), ValueError);
}

TEST(FarthestPointSample, CubeCornersMatchGreedyOracle) {
  Mat p(8, 3);
  for (Index i = 0; i < 8; ++i) p.row(i) << double(i & 1), double((i >> 1) & 1), double((i >> 2) & 1);
  EXPECT_EQ(farthest_point_sample(p, 4, StartIndex{0}), fps_oracle(p, 4, 0));
}

TEST(FarthestPointSample, RandomCloudsMatchOracleAndAreDistinct) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 10; ++trial) {
    const Mat p = random_points<double>(50, 3, rng);
    const auto got = farthest_point_sample(p, 20);
    EXPECT_EQ(got, fps_oracle(p, 20, canonical_oracle(p)));
    EXPECT_EQ(std::set<Index>(got.begin(), got.end()).size(), got.size());
  }
}

TEST(KnnGroup, SinglePointPadsWithItself) {
  const auto c = cloud_of(Mat::Zero(1, 3), 2);
  const std::vector<Index> centroids{0};
  const auto nb = knn_group(c, centroids, 3);
  EXPECT_EQ(nb.neighbor_indices, (std::vector<Index>{0, 0, 0}));
  EXPECT_TRUE(nb.local_coords.isZero(0));
}

TEST(KnnGroup, TieBreaksToLowestIndex) {
  Mat p(3, 3);
  p << 0, 0, 0, 1, 0, 0, 2, 0, 0;
  const std::vector<Index> centroids{1};
  EXPECT_EQ(knn_group(cloud_of(p), centroids, 2).neighbor_indices, (std::vector<Index>{1, 0}));
}

TEST(KnnGroup, MatchesExhaustiveSortOracle) {
  std::mt19937_64 rng(22);
  auto cloud = cloud_of(random_points<double>(64, 3, rng), 3);
  kde_density(cloud, 0.3);
  const VectorX<double> inv = inverse_density(cloud.density);
  std::vector<Index> centroids{0, 5, 17, 63};
  const Index k = 10;
  const auto nb = knn_group(cloud, centroids, k, true);
  ASSERT_EQ(nb.k, k);
  for (std::size_t r = 0; r < centroids.size(); ++r) {
    std::vector<Index> order(64);
    std::iota(order.begin(), order.end(), 0);
    const Index c = centroids[r];
    std::sort(order.begin(), order.end(), [&](Index a, Index b) {
      const double da = sq_dist(cloud.positions, a, c), db = sq_dist(cloud.positions, b, c);
      return da != db ? da < db : a < b;
    });
    EXPECT_EQ(order[0], c);
    for (Index j = 0; j < k; ++j) {
      const Index row = static_cast<Index>(r) * k + j;
      const Index idx = order[static_cast<std::size_t>(j)];
      ASSERT_EQ(nb.neighbor_indices[static_cast<std::size_t>(row)], idx);
      for (Index d = 0; d < 3; ++d) {
        EXPECT_EQ(nb.local_coords(row, d), cloud.positions(idx, d) - cloud.positions(c, d));
      }
      EXPECT_EQ(nb.grouped_features.row(row), cloud.features.row(idx));
      EXPECT_EQ(nb.grouped_inverse_density(row), inv(idx));
    }
  }
}

TEST(KnnGroup, DensityRequiredWhenRequested) {
  const auto c = cloud_of(Mat::Zero(2, 3));
  const std::vector<Index> centroids{0};
  EXPECT_THROW(knn_group(c, centroids, 1, true), ValueError);
  EXPECT_THROW(knn_group(c, centroids, 0), ValueError);
}

TEST(KnnGroup, RelabelingKeepsTheNeighborMultiset) {
  std::mt19937_64 rng(23);
  auto cloud = cloud_of(random_points<double>(40, 3, rng), 2);
  std::vector<Index> perm(40);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  PointCloud<double> shuffled = cloud;
  for (Index i = 0; i < 40; ++i) {
    shuffled.positions.row(i) = cloud.positions.row(perm[static_cast<std::size_t>(i)]);
    shuffled.features.row(i) = cloud.features.row(perm[static_cast<std::size_t>(i)]);
  }
  const Index centroid = 7;
  const Index moved = std::find(perm.begin(), perm.end(), centroid) - perm.begin();
  const std::vector<Index> a{centroid}, b{moved};
  const auto na = knn_group(cloud, a, 8), nb = knn_group(shuffled, b, 8);
  const auto rows = [](const Neighborhood<double>& n) {
    std::vector<std::vector<double>> out;
    for (Index r = 0; r < n.local_coords.rows(); ++r) {
      std::vector<double> v(n.local_coords.row(r).begin(), n.local_coords.row(r).end());
      v.insert(v.end(), n.grouped_features.row(r).begin(), n.grouped_features.row(r).end());
      out.push_back(v);
    }
    std::sort(out.begin(), out.end());
    return out;
  };
  EXPECT_EQ(rows(na), rows(nb));
}

// Double-loop KDE oracle.
VectorX<double> kde_oracle(const Mat& p, double h) {
  const double norm = std::pow(2.0 * std::numbers::pi * h * h, -double(p.cols()) / 2.0);
  VectorX<double> d(p.rows());
  for (Index i = 0; i < p.rows(); ++i) {
    double s = 0;
    for (Index j = 0; j < p.rows(); ++j) s += norm * std::exp(-sq_dist(p, i, j) / (2 * h * h));
    d(i) = s / double(p.rows());
  }
  return d;
}

TEST(KdeDensity, Examples) {
  const Mat twins = Mat::Zero(2, 3);
  const auto d = kde_density<double>(twins, 1.0);
  EXPECT_NEAR(d(0), std::pow(2 * std::numbers::pi, -1.5), 1e-15);
  EXPECT_NEAR(d(1), std::pow(2 * std::numbers::pi, -1.5), 1e-15);
  const double h = 0.3;
  EXPECT_NEAR(kde_density<double>(Mat::Zero(1, 3), h)(0), std::pow(2 * std::numbers::pi * h * h, -1.5), 1e-12);
  EXPECT_THROW(kde_density<double>(twins, 0.0), ValueError);
}

TEST(KdeDensity, MatchesDoubleLoopOracle) {
  std::mt19937_64 rng(24);
  for (Index dim : {2, 3}) {
    const Mat p = random_points<double>(32, dim, rng);
    const auto got = kde_density<double>(p, 0.25);
    const auto ref = kde_oracle(p, 0.25);
    EXPECT_LT((got - ref).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(KdeDensity, ScaleLaw) {
  std::mt19937_64 rng(25);
  const Mat p = random_points<double>(30, 3, rng);
  const double s = 2.5;
  const auto base = kde_density<double>(p, 0.2);
  const auto scaled = kde_density<double>(Mat(p * s), 0.2 * s);
  for (Index i = 0; i < 30; ++i) EXPECT_NEAR(scaled(i) / (base(i) * std::pow(s, -3.0)), 1.0, 1e-9);
}

TEST(InverseDensity, Examples) {
  VectorX<double> uniform = VectorX<double>::Constant(5, 0.7);
  EXPECT_TRUE((inverse_density(uniform).array() == 1.0).all());
  VectorX<double> d(2);
  d << 1, 2;
  const auto s = inverse_density(d);
  EXPECT_NEAR(s(0), 1.0, 1e-12);
  EXPECT_NEAR(s(1), 0.5, 1e-7);
  std::mt19937_64 rng(26);
  const auto any = inverse_density(kde_density<double>(random_points<double>(20, 3, rng), 0.2));
  EXPECT_GT(any.minCoeff(), 0.0);
  EXPECT_DOUBLE_EQ(any.maxCoeff(), 1.0);
}

TEST(ThreeNn, Examples) {
  Mat sources(3, 2);
  sources << 1, 0, -0.5, std::sqrt(0.75), -0.5, -std::sqrt(0.75);
  Mat features(3, 1);
  features << 1, 2, 3;
  EXPECT_NEAR(three_nn_interpolate<double>(Mat::Zero(1, 2), sources, features)(0, 0), 2.0, 1e-12);
  const Mat at_source = sources.row(1);
  EXPECT_NEAR(three_nn_interpolate<double>(at_source, sources, features)(0, 0), 2.0, 1e-7);
}

TEST(ThreeNn, PadsWhenFewSourcesAndKeepsConstants) {
  Mat sources(2, 3);
  sources << 0, 0, 0, 1, 0, 0;
  const Mat features = Mat::Constant(2, 2, 4.0);
  std::mt19937_64 rng(27);
  const Mat targets = random_points<double>(5, 3, rng);
  const auto w = three_nn_weights<double>(targets, sources);
  EXPECT_EQ(w.indices.size(), 15u);
  EXPECT_TRUE((three_nn_interpolate<double>(targets, sources, features).array() - 4.0).abs().maxCoeff() < 1e-12);
}

TEST(ThreeNn, MatchesDirectFormula) {
  std::mt19937_64 rng(28);
  const Mat sources = random_points<double>(20, 3, rng);
  const Mat targets = random_points<double>(10, 3, rng);
  const Mat features = random_points<double>(20, 4, rng);
  const Mat got = three_nn_interpolate<double>(targets, sources, features);
  for (Index t = 0; t < 10; ++t) {
    std::vector<Index> order(20);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](Index a, Index b) {
      const double da = (sources.row(a) - targets.row(t)).squaredNorm();
      const double db = (sources.row(b) - targets.row(t)).squaredNorm();
      return da != db ? da < db : a < b;
    });
    Eigen::RowVectorXd ref = Eigen::RowVectorXd::Zero(4);
    double total = 0;
    for (int j = 0; j < 3; ++j) {
      const double w = 1.0 / ((sources.row(order[j]) - targets.row(t)).norm() + 1e-8);
      ref += w * features.row(order[j]);
      total += w;
    }
    EXPECT_LT((got.row(t) - ref / total).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(PointOps, TranslationInvariance) {
  std::mt19937_64 rng(29);
  auto cloud = cloud_of(random_points<double>(60, 3, rng, -0.5, 0.5), 1);
  auto moved = cloud;
  moved.positions.rowwise() += Eigen::RowVector3d(0.25, -0.125, 0.5);
  kde_density(cloud, 0.2);
  kde_density(moved, 0.2);
  EXPECT_LT((cloud.density - moved.density).cwiseAbs().maxCoeff() / cloud.density.maxCoeff(), 1e-12);
  const auto a = farthest_point_sample(cloud.positions, 16);
  EXPECT_EQ(a, farthest_point_sample(moved.positions, 16));
  const auto na = knn_group(cloud, a, 8), nb = knn_group(moved, a, 8);
  EXPECT_EQ(na.neighbor_indices, nb.neighbor_indices);
  EXPECT_LT((na.local_coords - nb.local_coords).cwiseAbs().maxCoeff(), 1e-12);
  const Mat targets = random_points<double>(8, 3, rng, -0.5, 0.5);
  Mat moved_targets = targets;
  moved_targets.rowwise() += Eigen::RowVector3d(0.25, -0.125, 0.5);
  const auto wa = three_nn_weights<double>(targets, cloud.positions);
  const auto wb = three_nn_weights<double>(moved_targets, moved.positions);
  EXPECT_EQ(wa.indices, wb.indices);
  EXPECT_LT((wa.weights - wb.weights).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(PointCloud, Validate) {
  auto c = cloud_of(Mat::Zero(3, 3), 1);
  EXPECT_NO_THROW(c.validate(true));
  c.positions(0, 0) = 2.0;
  EXPECT_NO_THROW(c.validate());
  EXPECT_THROW(c.validate(true), ValueError);
  c.positions(0, 0) = std::nan("");
  EXPECT_THROW(c.validate(), ValueError);
  auto bad = cloud_of(Mat::Zero(3, 3), 1);
  bad.features = Mat::Zero(2, 1);
  EXPECT_THROW(bad.validate(), ValueError);
}

}  // namespace
}  // namespace pointconv
