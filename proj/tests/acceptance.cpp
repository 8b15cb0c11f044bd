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


// Acceptance checks, one line per criterion. Usage: acceptance [--criterion N]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <iomanip>
#include <iostream>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "pointconv/experiment.hpp"
#include "pointconv/verify.hpp"

namespace pc = pointconv;
using pc::Index;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fmt(double v, int precision = 3) {
  std::ostringstream s;
  s << std::setprecision(precision) << v;
  return s.str();
}

// ---------------------------------------------------------------------------

Outcome equivalence() {
  Stopwatch clock;
  const pc::ConvDims small{2, 64, 8, 4, 4, 8}, big{1, 128, 32, 64, 32, 64};
  const auto f_small = pc::equivalence_trials<float>(small, 100, 1);
  const auto f_big = pc::equivalence_trials<float>(big, 10, 2);
  const auto d_small = pc::equivalence_trials<double>(small, 100, 1);
  const auto d_big = pc::equivalence_trials<double>(big, 10, 2);
  const double secs = clock.seconds();
  const double f32 = std::max({f_small.max_forward_error, f_small.max_gradient_error,
                               f_big.max_forward_error, f_big.max_gradient_error});
  const double f64 = std::max({d_small.max_forward_error, d_small.max_gradient_error,
                               d_big.max_forward_error, d_big.max_gradient_error});
  return {f32 < 1e-5 && f64 < 1e-10 && secs < 60.0,
          "32-bit max rel " + fmt(f32) + " (< 1e-5), 64-bit " + fmt(f64) + " (< 1e-10), " +
              fmt(secs) + " s (< 60)"};
}

Outcome memory() {
  const pc::ConvDims full{32, 512, 32, 64, 32, 64}, desk{2, 64, 32, 64, 32, 64};
  const pc::AnalyticMemory a = pc::analytic_memory(full);
  const double naive = a.naive_filter_bytes / pc::kGiB, eff = a.efficient_bytes() / pc::kGiB;
  const bool analytic_ok = std::abs(naive - 8.0) <= 0.05 * 8.0 && std::abs(eff - 0.1255) <= 0.05 * 0.1255;
  const pc::MeasuredMemory m = pc::measure_memory<float>(desk, 1);
  const double expected = static_cast<double>(desk.c_mid) / static_cast<double>(desk.k * desk.c_out);
  const double rows = static_cast<double>(desk.batch * desk.points);
  const double slack = static_cast<double>(desk.c_in * desk.c_mid) /
                       (rows * static_cast<double>(desk.k * desk.c_in * desk.c_out));
  const double ratio = m.dominant_ratio();
  const bool measured_ok = std::abs(ratio - expected) <= slack;
  return {analytic_ok && measured_ok, "naive " + fmt(naive, 4) + " GiB (8), efficient " + fmt(eff, 4) +
                                          " GiB (0.1255), measured ratio " + fmt(ratio, 6) + " (1/64 = " +
                                          fmt(expected, 6) + ")"};
}

Outcome gradients() {
  Stopwatch clock;
  double worst = 0.0;
  std::string worst_name;
  for (std::uint64_t seed : {1, 2, 3}) {
    for (const auto& e : pc::gradcheck_suite(seed)) {
      if (e.error >= worst) {
        worst = e.error;
        worst_name = e.name;
      }
    }
  }
  const double secs = clock.seconds();
  return {worst < 1e-4 && secs < 300.0,
          "worst " + fmt(worst) + " (" + worst_name + ", < 1e-4), " + fmt(secs) + " s (< 300)"};
}

// Layer-level: permuting the neighbours inside each region. Network-level:
// translating the whole input cloud.
Outcome invariances() {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  double layer_worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    pc::PointConvConfig cfg;
    cfg.c_in = 4;
    cfg.c_mid = 8;
    cfg.c_out = 8;
    cfg.k = 8;
    std::mt19937_64 init(100 + static_cast<std::uint64_t>(trial));
    pc::PointConv<float> layer(cfg, init);
    const Index r = 6, k = 8;
    const auto fill = [&](pc::Shape shape, double lo, double hi) {
      pc::Tensor<float> t(std::move(shape));
      std::uniform_real_distribution<double> d(lo, hi);
      for (Index i = 0; i < t.size(); ++i) t[i] = static_cast<float>(d(rng));
      return t;
    };
    const auto local = fill({r, k, 3}, -0.3, 0.3), f = fill({r, k, 4}, -1, 1), inv = fill({r, k}, 0.1, 1);
    std::vector<Index> rows(static_cast<std::size_t>(r * k));
    for (Index ri = 0; ri < r; ++ri) {
      std::vector<Index> perm(static_cast<std::size_t>(k));
      std::iota(perm.begin(), perm.end(), Index(0));
      std::shuffle(perm.begin(), perm.end(), rng);
      for (Index j = 0; j < k; ++j) rows[static_cast<std::size_t>(ri * k + j)] = ri * k + perm[static_cast<std::size_t>(j)];
    }
    const auto permute = [&](const pc::Tensor<float>& t, Index width) {
      pc::Tensor<float> out(t.shape());
      for (Index i = 0; i < r * k; ++i) {
        std::copy_n(t.data() + rows[static_cast<std::size_t>(i)] * width, width, out.data() + i * width);
      }
      return out;
    };
    pc::NoGradGuard no_grad;
    const auto a = layer.forward_efficient(local, f, inv);
    const auto b = layer.forward_efficient(permute(local, 3), permute(f, 4), permute(inv, 1));
    layer_worst = std::max(layer_worst, pc::relative_error<float>(b.values(), a.values()));
  }

  pc::NetworkConfig config = pc::default_classification_config(3, 3, 4);
  double net_worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    config.seed = 200 + static_cast<std::uint64_t>(trial);
    pc::Network<float> net(config);
    pc::SyntheticShapeSpec spec;
    spec.shape = static_cast<pc::ShapeKind>(trial % 4);
    spec.noise_sigma = 0.01;
    spec.seed = 300 + static_cast<std::uint64_t>(trial);
    const pc::PointCloud<float> cloud = pc::sample_shape<float>(spec);
    pc::PointCloud<float> moved = cloud;
    const Eigen::RowVector3f shift(static_cast<float>(u(rng)), static_cast<float>(u(rng)),
                                   static_cast<float>(u(rng)));
    moved.positions.rowwise() += shift;
    pc::NoGradGuard no_grad;
    pc::ForwardContext ctx;
    const auto a = net.forward({cloud}, ctx), b = net.forward({moved}, ctx);
    net_worst = std::max(net_worst, pc::relative_error<float>(b.values(), a.values()));
  }
  return {layer_worst < 1e-5 && net_worst < 1e-4,
          "neighbour permutation " + fmt(layer_worst) + " (< 1e-5), network translation " +
              fmt(net_worst) + " (< 1e-4), 20 trials each"};
}

Outcome grid() {
  double worst = 0.0;
  for (Index side : {8, 16}) {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      worst = std::max(worst, pc::grid_equivalence<float>(side, 3, seed).max_error);
    }
  }
  return {worst < 1e-5, "sides 8 and 16, kernel 3, 10 seeds: max error " + fmt(worst) + " (< 1e-5)"};
}

Outcome classification() {
  const pc::ExperimentConfig c = pc::resolve_experiment({{"task", "classify"}, {"seed", 1}});
  const pc::ExperimentOutcome out = pc::run_experiment(c);
  const double acc = out.result.final_test ? out.result.final_test->accuracy : 0.0;
  return {acc >= 0.95 && out.seconds < 600.0,
          "final test accuracy " + fmt(acc, 4) + " (>= 0.95), " + fmt(out.seconds) + " s (< 600)"};
}

Outcome image_parity() {
  double worst = 0.0;
  std::string detail;
  for (std::uint64_t seed : {1, 2, 3}) {
    double acc[2];
    for (int m = 0; m < 2; ++m) {
      const nlohmann::json doc{{"task", "image"}, {"seed", seed}, {"model", m ? "grid_cnn" : "pointconv"}};
      const pc::ExperimentOutcome out = pc::run_experiment(pc::resolve_experiment(doc));
      acc[m] = out.result.final_test ? out.result.final_test->accuracy : 0.0;
    }
    worst = std::max(worst, std::abs(acc[0] - acc[1]));
    detail += " seed " + std::to_string(seed) + ": " + fmt(acc[0], 4) + " vs " + fmt(acc[1], 4) + ";";
  }
  return {worst <= 0.03, "pointconv vs grid cnn" + detail + " max gap " + fmt(worst, 3) + " (<= 0.03)"};
}

Outcome segmentation() {
  const pc::ExperimentConfig c = pc::resolve_experiment({{"task", "segment"}, {"seed", 1}});
  const pc::ExperimentOutcome out = pc::run_experiment(c);
  const double miou = out.result.final_test ? out.result.final_test->miou : 0.0;
  return {miou >= 0.85, "final test mIoU " + fmt(miou, 4) + " (>= 0.85), " + fmt(out.seconds) + " s"};
}

Outcome ablation() {
  Stopwatch clock;
  pc::ExperimentConfig c = pc::resolve_experiment({{"task", "segment"}, {"train", {{"epochs", 8}}}});
  c.output = {};
  const auto rows = pc::ablate_density(c);
  const double secs = clock.seconds();
  bool in_range = rows.size() == 3;
  std::string detail;
  for (const auto& r : rows) {
    in_range = in_range && r.test.miou >= 0.0 && r.test.miou <= 1.0 && r.test.accuracy >= 0.0 &&
               r.test.accuracy <= 1.0;
    detail += std::string(pc::to_string(r.mode)) + " " + fmt(r.test.miou, 4) + ", ";
  }
  return {in_range && secs < 1800.0, "mIoU " + detail + fmt(secs) + " s (< 1800)"};
}

// Brute-force references.
double sq(const pc::MatrixX<double>& p, Index i, Index j) { return (p.row(i) - p.row(j)).squaredNorm(); }

Outcome oracles() {
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  double kde_worst = 0.0;
  bool knn_exact = true, fps_exact = true;
  for (int trial = 0; trial < 10; ++trial) {
    pc::MatrixX<double> p(60, 3);
    for (Index i = 0; i < p.size(); ++i) p.data()[i] = u(rng);
    const double h = 0.2 + 0.05 * trial;
    const pc::VectorX<double> got = pc::kde_density<double>(p, h);
    const double norm = std::pow(2.0 * std::numbers::pi * h * h, -1.5);
    for (Index i = 0; i < p.rows(); ++i) {
      double s = 0.0;
      for (Index j = 0; j < p.rows(); ++j) s += norm * std::exp(-sq(p, i, j) / (2 * h * h));
      kde_worst = std::max(kde_worst, std::abs(got(i) - s / static_cast<double>(p.rows())));
    }

    const Eigen::RowVectorXd mean = p.colwise().mean();
    Index start = 0;
    for (Index i = 1; i < p.rows(); ++i) {
      if ((p.row(i) - mean).squaredNorm() < (p.row(start) - mean).squaredNorm()) start = i;
    }
    std::vector<Index> chosen{start};
    while (chosen.size() < 16) {
      Index best = -1;
      double best_d = -1.0;
      for (Index i = 0; i < p.rows(); ++i) {
        double d = INFINITY;
        for (Index c : chosen) d = std::min(d, sq(p, i, c));
        if (d > best_d) best_d = d, best = i;
      }
      chosen.push_back(best);
    }
    fps_exact = fps_exact && pc::farthest_point_sample(p, 16) == chosen;

    pc::PointCloud<double> cloud;
    cloud.positions = p;
    cloud.features = p;
    const Index k = 9;
    const auto nb = pc::knn_group(cloud, chosen, k);
    for (std::size_t ci = 0; ci < chosen.size(); ++ci) {
      const Index c = chosen[ci];
      std::vector<Index> order;
      for (Index j = 0; j < p.rows(); ++j) {
        if (j != c) order.push_back(j);
      }
      std::sort(order.begin(), order.end(), [&](Index a, Index b) {
        const double da = sq(p, a, c), db = sq(p, b, c);
        return da < db || (da == db && a < b);
      });
      order.insert(order.begin(), c);
      for (Index j = 0; j < k; ++j) {
        knn_exact = knn_exact && nb.neighbor_indices[ci * static_cast<std::size_t>(k) + static_cast<std::size_t>(j)] ==
                                     order[static_cast<std::size_t>(j)];
      }
    }
  }

  pc::Tensor<double> x(pc::Shape{7});
  for (Index i = 0; i < 7; ++i) x[i] = u(rng);
  std::vector<double> ref(x.values().begin(), x.values().end()), m(7, 0.0), v(7, 0.0);
  pc::AdamState<double> state;
  state.options = {3e-3, 0.9, 0.999, 1e-8};
  const std::vector<pc::Tensor<double>> params{x};
  double adam_worst = 0.0;
  for (int t = 1; t <= 20; ++t) {
    auto g = x.mutable_grad();
    for (auto& gi : g) gi = u(rng);
    const std::vector<double> grad(g.begin(), g.end());
    pc::adam_step<double>(params, state);
    for (std::size_t i = 0; i < 7; ++i) {
      m[i] = 0.9 * m[i] + 0.1 * grad[i];
      v[i] = 0.999 * v[i] + 0.001 * grad[i] * grad[i];
      const double mh = m[i] / (1 - std::pow(0.9, t)), vh = v[i] / (1 - std::pow(0.999, t));
      ref[i] -= 3e-3 * mh / (std::sqrt(vh) + 1e-8);
      adam_worst = std::max(adam_worst, std::abs(x[static_cast<Index>(i)] - ref[i]));
    }
  }
  return {kde_worst < 1e-10 && knn_exact && fps_exact && adam_worst < 1e-12,
          "kde " + fmt(kde_worst) + " (< 1e-10), knn " + (knn_exact ? "exact" : "MISMATCH") + ", fps " +
              (fps_exact ? "exact" : "MISMATCH") + ", adam " + fmt(adam_worst) + " (< 1e-12)"};
}

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome()> run;
};

const std::vector<Criterion>& criteria() {
  static const std::vector<Criterion> all{
      {1, "naive/efficient equivalence", equivalence},
      {2, "memory arithmetic", memory},
      {3, "gradient correctness", gradients},
      {4, "invariances", invariances},
      {5, "grid reduction", grid},
      {6, "synthetic classification", classification},
      {7, "grid-cnn parity", image_parity},
      {8, "synthetic segmentation", segmentation},
      {9, "density ablation", ablation},
      {10, "oracle equivalences", oracles},
  };
  return all;
}

}  // namespace

int main(int argc, char** argv) {
  int only = 0;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--criterion" && i + 1 < argc) {
      only = std::atoi(argv[++i]);
    } else {
      std::cerr << "usage: acceptance [--criterion N]\n";
      return 2;
    }
  }
  bool all_pass = true;
  bool ran = false;
  for (const auto& c : criteria()) {
    if (only && c.id != only) continue;
    ran = true;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    std::cout << "C" << c.id << " " << (o.pass ? "PASS" : "FAIL") << " " << c.name << ": " << o.detail
              << std::endl;
    all_pass = all_pass && o.pass;
  }
  if (!ran) {
    std::cerr << "no criterion " << only << "\n";
    return 2;
  }
  return all_pass ? 0 : 1;
}
