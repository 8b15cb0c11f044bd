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


#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>

#include "pointconv/data.hpp"
#include "pointconv/errors.hpp"
#include "pointconv/training.hpp"
#include "test_util.hpp"

namespace pointconv {
namespace {

using testing::random_tensor;

void set_grad(Tensor<double>& t, const std::vector<double>& g) {
  auto dst = t.mutable_grad();
  std::copy(g.begin(), g.end(), dst.begin());
}

// Bias-corrected Adam, one coordinate at a time.
struct ScalarAdam {
  double lr, b1, b2, eps;
  std::vector<double> m, v;
  int t = 0;
  void step(std::vector<double>& x, const std::vector<double>& g) {
    if (m.empty()) m.assign(x.size(), 0.0), v.assign(x.size(), 0.0);
    ++t;
    for (std::size_t i = 0; i < x.size(); ++i) {
      m[i] = b1 * m[i] + (1 - b1) * g[i];
      v[i] = b2 * v[i] + (1 - b2) * g[i] * g[i];
      const double mh = m[i] / (1 - std::pow(b1, t));
      const double vh = v[i] / (1 - std::pow(b2, t));
      x[i] -= lr * mh / (std::sqrt(vh) + eps);
    }
  }
};

TEST(Adam, FirstStepMovesByLearningRateAgainstGradientSign) {
  Tensor<double> p(Shape{4}, {1.0, -2.0, 0.5, 3.0});
  set_grad(p, {0.5, -3.0, 0.05, 40.0});
  AdamState<double> state;
  state.options.lr = 0.01;
  const std::vector<Tensor<double>> params{p};
  adam_step<double>(params, state);
  const std::vector<double> before{1.0, -2.0, 0.5, 3.0}, sign{1, -1, 1, 1};
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(p[i] - before[i], -0.01 * sign[i], 0.01 * 1e-6);
  EXPECT_EQ(state.step, 1);
  EXPECT_FALSE(p.has_grad());
}

TEST(Adam, ZeroGradientLeavesParametersButAdvancesStep) {
  Tensor<double> p(Shape{3}, {1.0, 2.0, 3.0});
  set_grad(p, {0.0, 0.0, 0.0});
  AdamState<double> state;
  const std::vector<Tensor<double>> params{p};
  adam_step<double>(params, state);
  EXPECT_EQ(p[0], 1.0);
  EXPECT_EQ(p[1], 2.0);
  EXPECT_EQ(p[2], 3.0);
  EXPECT_EQ(state.step, 1);
}

TEST(Adam, MatchesScalarLoopOracle) {
  std::mt19937_64 rng(3);
  Tensor<double> a = random_tensor<double>(Shape{5}, rng);
  Tensor<double> b = random_tensor<double>(Shape{2, 3}, rng);
  std::vector<double> xa(a.values().begin(), a.values().end()), xb(b.values().begin(), b.values().end());
  AdamState<double> state;
  state.options = {2e-3, 0.8, 0.99, 1e-7};
  ScalarAdam oa{2e-3, 0.8, 0.99, 1e-7, {}, {}}, ob{2e-3, 0.8, 0.99, 1e-7, {}, {}};
  const std::vector<Tensor<double>> params{a, b};
  std::uniform_real_distribution<double> u(-2, 2);
  for (int step = 0; step < 5; ++step) {
    std::vector<double> ga(5), gb(6);
    for (auto& g : ga) g = u(rng);
    for (auto& g : gb) g = u(rng);
    set_grad(a, ga);
    set_grad(b, gb);
    adam_step<double>(params, state);
    oa.step(xa, ga);
    ob.step(xb, gb);
    for (int i = 0; i < 5; ++i) EXPECT_NEAR(a[i], xa[static_cast<std::size_t>(i)], 1e-12);
    for (int i = 0; i < 6; ++i) EXPECT_NEAR(b[i], xb[static_cast<std::size_t>(i)], 1e-12);
  }
}

TEST(Adam, UniformGradientScalingKeepsUpdateSigns) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<std::vector<double>> history(4, std::vector<double>(6));
  for (auto& g : history) {
    for (auto& x : g) x = u(rng);
  }
  for (double scale : {1e-3, 7.0, 1e3}) {
    Tensor<double> p1(Shape{6}, 0.0), p2(Shape{6}, 0.0);
    AdamState<double> s1, s2;
    const std::vector<Tensor<double>> a{p1}, b{p2};
    for (const auto& g : history) {
      std::vector<double> before1(p1.values().begin(), p1.values().end());
      std::vector<double> before2(p2.values().begin(), p2.values().end());
      std::vector<double> scaled(g);
      for (auto& x : scaled) x *= scale;
      set_grad(p1, g);
      set_grad(p2, scaled);
      adam_step<double>(a, s1);
      adam_step<double>(b, s2);
      for (int i = 0; i < 6; ++i) {
        const double d1 = p1[i] - before1[static_cast<std::size_t>(i)];
        const double d2 = p2[i] - before2[static_cast<std::size_t>(i)];
        EXPECT_EQ(std::signbit(d1), std::signbit(d2)) << "scale " << scale << " coordinate " << i;
      }
    }
  }
}

TEST(Adam, MissingGradientIsAnError) {
  Tensor<double> p(Shape{2}, 1.0);
  AdamState<double> state;
  const std::vector<Tensor<double>> params{p};
  EXPECT_THROW(adam_step<double>(params, state), AutodiffError);
}

TEST(ClipGradNorm, ScalesOnlyAboveThreshold) {
  Tensor<double> a(Shape{2}, 0.0), b(Shape{1}, 0.0);
  set_grad(a, {3.0, 0.0});
  set_grad(b, {4.0});
  const std::vector<Tensor<double>> params{a, b};
  EXPECT_DOUBLE_EQ(clip_grad_norm<double>(params, 10.0), 5.0);
  EXPECT_DOUBLE_EQ(a.grad()[0], 3.0);
  EXPECT_DOUBLE_EQ(clip_grad_norm<double>(params, 1.0), 5.0);
  EXPECT_NEAR(a.grad()[0], 0.6, 1e-15);
  EXPECT_NEAR(b.grad()[0], 0.8, 1e-15);
}

TEST(LrSchedule, CosineStartsAtBaseAndDecays) {
  EXPECT_DOUBLE_EQ(scheduled_lr(0.1, LrSchedule::kCosine, 1, 10), 0.1);
  EXPECT_NEAR(scheduled_lr(0.1, LrSchedule::kCosine, 6, 10), 0.05, 1e-15);
  double prev = 1.0;
  for (int e = 1; e <= 10; ++e) {
    const double lr = scheduled_lr(0.1, LrSchedule::kCosine, e, 10);
    EXPECT_GT(lr, 0.0);
    EXPECT_LT(lr, prev);
    prev = lr;
  }
  EXPECT_EQ(scheduled_lr(0.1, LrSchedule::kConstant, 7, 10), 0.1);
  EXPECT_EQ(parse_lr_schedule("constant"), LrSchedule::kConstant);
  EXPECT_THROW(parse_lr_schedule("step"), ValueError);
}

PointCloud<double> small_cloud() {
  PointCloud<double> c;
  c.positions.resize(3, 3);
  c.positions << 1, 0, 0, 0, 0.5, 0.2, -0.3, 0.1, 0.9;
  c.features = c.positions;
  c.label = 1;
  return c;
}

TEST(Augment, DisabledIsIdentity) {
  std::mt19937_64 rng(1);
  const PointCloud<double> c = small_cloud();
  AugmentOptions o;
  o.rotate = false;
  o.jitter_sigma = 0.0;
  const PointCloud<double> out = augment(c, rng, o);
  EXPECT_EQ(out.positions, c.positions);
  EXPECT_EQ(out.features, c.features);
  EXPECT_EQ(out.label, c.label);
}

TEST(Augment, HalfTurnFlipsTheXAxis) {
  PointCloud<double> c;
  c.positions.resize(1, 3);
  c.positions << 1, 0, 0;
  c.features = c.positions;
  const std::vector<Index> vec{0};
  rotate_cloud(c, std::numbers::pi, vec);
  EXPECT_NEAR(c.positions(0, 0), -1.0, 1e-12);
  EXPECT_NEAR(c.positions(0, 1), 0.0, 1e-12);
  EXPECT_NEAR(c.positions(0, 2), 0.0, 1e-12);
  EXPECT_NEAR(c.features(0, 0), -1.0, 1e-12);
}

TEST(Augment, RotationPreservesPairwiseDistancesAndNormals) {
  std::mt19937_64 rng(4);
  PointCloud<double> c = small_cloud();
  c.features.rowwise().normalize();
  AugmentOptions o;
  o.jitter_sigma = 0.0;
  o.vector_features = {0};
  for (int trial = 0; trial < 10; ++trial) {
    const PointCloud<double> out = augment(c, rng, o);
    for (Index i = 0; i < c.size(); ++i) {
      EXPECT_NEAR(out.features.row(i).norm(), 1.0, 1e-12);
      EXPECT_NEAR(out.positions(i, 2), c.positions(i, 2), 1e-12);
      for (Index j = 0; j < c.size(); ++j) {
        EXPECT_NEAR((out.positions.row(i) - out.positions.row(j)).norm(),
                    (c.positions.row(i) - c.positions.row(j)).norm(), 1e-12);
      }
    }
  }
}

TEST(Augment, VectorFeatureOutOfRange) {
  PointCloud<double> c = small_cloud();
  const std::vector<Index> vec{2};
  EXPECT_THROW(rotate_cloud(c, 0.3, vec), ValueError);
}

TEST(Metrics, PerfectPrediction) {
  const std::vector<int> y{0, 1, 2, 1};
  const Metrics m = compute_metrics(y, y, 3);
  EXPECT_EQ(m.accuracy, 1.0);
  EXPECT_EQ(m.miou, 1.0);
}

TEST(Metrics, ConstantPredictionOnBalancedTwoClasses) {
  // Class 0: IoU 2/4, class 1: IoU 0.
  const std::vector<int> pred{0, 0, 0, 0}, truth{0, 0, 1, 1};
  const Metrics m = compute_metrics(pred, truth, 2);
  EXPECT_EQ(m.accuracy, 0.5);
  EXPECT_DOUBLE_EQ(*m.per_class_iou[0], 0.5);
  EXPECT_DOUBLE_EQ(*m.per_class_iou[1], 0.0);
  EXPECT_DOUBLE_EQ(m.miou, 0.25);
}

TEST(Metrics, ClassesAbsentFromBothAreExcluded) {
  const std::vector<int> pred{0, 1, 1}, truth{0, 1, 0};
  const Metrics m = compute_metrics(pred, truth, 4);
  EXPECT_FALSE(m.per_class_iou[2].has_value());
  EXPECT_FALSE(m.per_class_iou[3].has_value());
  EXPECT_DOUBLE_EQ(*m.per_class_iou[0], 0.5);
  EXPECT_DOUBLE_EQ(*m.per_class_iou[1], 0.5);
  EXPECT_DOUBLE_EQ(m.miou, 0.5);
}

TEST(Metrics, LabelOutOfRange) {
  const std::vector<int> pred{0, 3}, truth{0, 1};
  EXPECT_THROW(compute_metrics(pred, truth, 3), ValueError);
}

TEST(Metrics, LogCsvHeader) {
  std::ostringstream out;
  std::vector<EpochRecord> log{{1, "train", {0.5, 0.75, {}, 0.6}}};
  write_log_csv(out, log);
  EXPECT_EQ(out.str().substr(0, out.str().find('\n')), "epoch,split,loss,accuracy,miou");
  EXPECT_NE(out.str().find("1,train,0.5,0.75,0.6"), std::string::npos);
}

NetworkConfig tiny_classifier() {
  NetworkConfig c = default_classification_config(3, 3, 4);
  c.encoders = {{16, 8, {}, 4, 16, DensityMode::kMlp, 0.2}, {4, 4, {}, 4, 32, DensityMode::kMlp, 0.3}};
  c.head = {{16}, 0.0, 4};
  return c;
}

DatasetSplit<double> tiny_shapes(Index per_class, std::uint64_t seed) {
  ShapeDatasetOptions o = classification_shapes(64, seed);
  o.train_per_class = per_class;
  o.test_per_class = 2;
  return generate_shapes<double>(o);
}

std::vector<std::vector<double>> snapshot(const Network<double>& net) {
  std::vector<std::vector<double>> out;
  for (const auto& [name, t] : net.parameters()) out.emplace_back(t.values().begin(), t.values().end());
  return out;
}

TEST(Train, ZeroLearningRateLeavesParameters) {
  Network<double> net(tiny_classifier());
  const auto before = snapshot(net);
  TrainOptions o;
  o.epochs = 2;
  o.adam.lr = 0.0;
  train(net, tiny_shapes(2, 5), o);
  EXPECT_EQ(snapshot(net), before);
}

TEST(Train, OverfitsASingleSample) {
  NetworkConfig c = tiny_classifier();
  Network<double> net(c);
  DatasetSplit<double> data = tiny_shapes(1, 6);
  data.train.clouds.resize(1);
  data.test = data.train;
  TrainOptions o;
  o.epochs = 50;
  o.adam.lr = 1e-2;
  o.schedule = LrSchedule::kConstant;
  o.augment = false;
  const TrainResult r = train(net, data, o);
  EXPECT_LT(r.log.back().metrics.loss, 0.01);
}

TEST(Train, SameSeedGivesIdenticalLogs) {
  const auto run = [] {
    Network<double> net(tiny_classifier());
    TrainOptions o;
    o.epochs = 2;
    o.seed = 11;
    return train(net, tiny_shapes(2, 7), o).log;
  };
  const auto a = run(), b = run();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].metrics.loss, b[i].metrics.loss);
    EXPECT_EQ(a[i].metrics.accuracy, b[i].metrics.accuracy);
  }
}

TEST(Train, LossDecreasesOverEarlyEpochs) {
  Network<float> net(default_classification_config(3, 3, 4));
  ShapeDatasetOptions so = classification_shapes(512, 2);
  so.train_per_class = 20;
  so.test_per_class = 0;
  TrainOptions o;
  o.epochs = 5;
  const TrainResult r = train(net, generate_shapes<float>(so), o);
  ASSERT_EQ(r.log.size(), 5u);
  int rises = 0;
  for (std::size_t i = 1; i < r.log.size(); ++i) rises += r.log[i].metrics.loss >= r.log[i - 1].metrics.loss;
  EXPECT_LE(rises, 1);
  EXPECT_LT(r.log.back().metrics.loss, r.log.front().metrics.loss);
}

TEST(Train, NonFiniteLossAborts) {
  Network<double> net(tiny_classifier());
  net.head.output.weight[0] = std::numeric_limits<double>::quiet_NaN();
  TrainOptions o;
  o.epochs = 1;
  try {
    train(net, tiny_shapes(2, 9), o);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("non-finite loss at epoch 1"), std::string::npos);
  }
}

TEST(Train, RejectsBadOptions) {
  Network<double> net(tiny_classifier());
  TrainOptions o;
  o.batch_size = 1;
  EXPECT_THROW(train(net, tiny_shapes(1, 1), o), ValueError);
  o.batch_size = 8;
  EXPECT_THROW(train(net, DatasetSplit<double>{}, o), ValueError);
}

TEST(Train, SmallTrainingSetFillsOneBatch) {
  Network<double> net(tiny_classifier());
  DatasetSplit<double> data = tiny_shapes(1, 12);
  data.train.clouds.resize(3);
  TrainOptions o;
  o.epochs = 1;
  const TrainResult r = train(net, data, o);
  EXPECT_EQ(r.log.front().split, "train");
  EXPECT_TRUE(r.final_test.has_value());
}

}  // namespace
}  // namespace pointconv
