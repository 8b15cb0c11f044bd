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

#include "pointconv/verify.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>

#include "pointconv/gradcheck.hpp"

namespace pointconv {
namespace {

std::mt19937_64 trial_rng(std::uint64_t seed, std::uint64_t trial) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(trial), static_cast<std::uint32_t>(trial >> 32)};
  return std::mt19937_64(seq);
}

template <typename S>
Tensor<S> uniform(Shape shape, double lo, double hi, std::mt19937_64& rng) {
  Tensor<S> t(std::move(shape));
  std::uniform_real_distribution<double> u(lo, hi);
  for (S& v : t.values()) v = static_cast<S>(u(rng));
  return t;
}

template <typename S>
MatrixX<S> ball_points(Index n, Index dim, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  MatrixX<S> p(n, dim);
  for (Index i = 0; i < n; ++i) {
    VectorX<double> v(dim);
    for (Index j = 0; j < dim; ++j) v(j) = g(rng);
    v *= std::pow(u(rng), 1.0 / static_cast<double>(dim)) / std::max(v.norm(), 1e-12);
    p.row(i) = v.cast<S>().transpose();
  }
  return p;
}

// Projects every output onto fixed random weights so each gradient entry is
// generically nonzero.
template <typename S>
Tensor<S> project(const Tensor<S>& y, const Tensor<S>& weights) {
  return sum(mul(y, weights));
}

template <typename S>
std::vector<std::vector<S>> take_grads(const NamedTensors<S>& params) {
  std::vector<std::vector<S>> out;
  for (const auto& [name, t] : params) {
    if (t.has_grad()) {
      out.emplace_back(t.grad().begin(), t.grad().end());
    } else {
      out.emplace_back(static_cast<std::size_t>(t.size()), S(0));
    }
  }
  return out;
}

template <typename S>
void clear_grads(const NamedTensors<S>& params) {
  for (auto [name, t] : params) t.zero_grad();
}

template <typename S>
double check_all(const std::function<Tensor<S>()>& f, std::vector<Tensor<S>> tensors) {
  double worst = 0.0;
  for (auto& t : tensors) {
    const double e = static_cast<double>(gradient_check<S>(f, t));
    if (std::isnan(e)) return e;
    worst = std::max(worst, e);
  }
  return worst;
}

// Perturbs every parameter to a generic point, off the ReLU kinks.
template <typename S>
std::vector<Tensor<S>> values_of(const NamedTensors<S>& named, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-0.1, 0.1);
  std::vector<Tensor<S>> out;
  for (auto [name, t] : named) {
    for (S& v : t.values()) v += static_cast<S>(u(rng));
    out.push_back(t);
  }
  return out;
}

}  // namespace

template <typename S>
double relative_error(std::span<const S> a, std::span<const S> b) {
  if (a.size() != b.size()) throw ShapeError("relative_error: sizes differ");
  double diff = 0.0, scale = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff = std::max(diff, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
    scale = std::max(scale, std::abs(static_cast<double>(b[i])));
  }
  if (std::isnan(diff)) return diff;
  return scale > 0.0 ? diff / scale : diff;
}

ConvDims parse_conv_dims(std::string_view text) {
  std::vector<Index> v;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t comma = std::min(text.find(',', pos), text.size());
    const std::string_view field = text.substr(pos, comma - pos);
    Index x = 0;
    const auto [end, ec] = std::from_chars(field.data(), field.data() + field.size(), x);
    if (ec != std::errc() || end != field.data() + field.size() || x < 1) {
      throw ValueError("dims: '" + std::string(field) + "' is not a positive integer");
    }
    v.push_back(x);
    pos = comma + 1;
  }
  if (v.size() != 6) {
    throw ValueError("dims: expected 6 comma-separated values B,N,K,cin,cmid,cout, got " +
                     std::to_string(v.size()));
  }
  ConvDims d{v[0], v[1], v[2], v[3], v[4], v[5]};
  if (d.k > d.points) throw ValueError("dims: K exceeds the number of points");
  return d;
}

std::string to_string(const ConvDims& d) {
  return std::to_string(d.batch) + "," + std::to_string(d.points) + "," + std::to_string(d.k) +
         "," + std::to_string(d.c_in) + "," + std::to_string(d.c_mid) + "," +
         std::to_string(d.c_out);
}

template <typename S>
RegionTensors<S> random_regions(const ConvDims& d, std::mt19937_64& rng) {
  const Index r = d.batch * d.points;
  RegionTensors<S> out;
  out.local = Tensor<S>(Shape{r, d.k, 3});
  out.features = Tensor<S>(Shape{r, d.k, d.c_in});
  out.inverse_density = Tensor<S>(Shape{r, d.k});
  std::vector<Index> all(static_cast<std::size_t>(d.points));
  std::iota(all.begin(), all.end(), Index{0});
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (Index b = 0; b < d.batch; ++b) {
    PointCloud<S> cloud;
    cloud.positions = ball_points<S>(d.points, 3, rng);
    cloud.features.resize(d.points, d.c_in);
    for (Index i = 0; i < cloud.features.size(); ++i) cloud.features.data()[i] = static_cast<S>(u(rng));
    kde_density(cloud, S(0.25));
    const auto nb = knn_group(cloud, all, d.k, true);
    const Index off = b * d.points * d.k;
    std::copy_n(nb.local_coords.data(), nb.local_coords.size(), out.local.data() + off * 3);
    std::copy_n(nb.grouped_features.data(), nb.grouped_features.size(),
                out.features.data() + off * d.c_in);
    std::copy_n(nb.grouped_inverse_density.data(), nb.grouped_inverse_density.size(),
                out.inverse_density.data() + off);
  }
  return out;
}

template <typename S>
EquivalenceReport equivalence_trials(const ConvDims& d, int trials, std::uint64_t seed) {
  if (trials < 1) throw ValueError("equivalence: need at least one trial");
  EquivalenceReport report;
  report.trials = trials;
  report.tolerance = equivalence_tolerance<S>();
  for (int t = 0; t < trials; ++t) {
    std::mt19937_64 rng = trial_rng(seed, static_cast<std::uint64_t>(t));
    const RegionTensors<S> in = random_regions<S>(d, rng);
    PointConvConfig cfg;
    cfg.dim = 3;
    cfg.c_in = d.c_in;
    cfg.c_mid = d.c_mid;
    cfg.c_out = d.c_out;
    cfg.k = d.k;
    PointConv<S> layer(cfg, rng);
    const Tensor<S> proj = uniform<S>(Shape{d.batch * d.points, d.c_out}, -1.0, 1.0, rng);
    NamedTensors<S> params, buffers;
    layer.collect("conv", params, buffers);

    auto run = [&](bool efficient) {
      clear_grads(params);
      Tape<S>::active().clear();
      const Tensor<S> y = efficient
                              ? layer.forward_efficient(in.local, in.features, in.inverse_density)
                              : layer.forward_naive(in.local, in.features, in.inverse_density);
      backward(project(y, proj));
      return std::make_pair(std::vector<S>(y.values().begin(), y.values().end()), take_grads(params));
    };
    const auto [y_naive, g_naive] = run(false);
    const auto [y_eff, g_eff] = run(true);
    clear_grads(params);
    report.max_forward_error =
        std::max(report.max_forward_error, relative_error<S>(y_eff, y_naive));
    std::vector<S> flat_naive, flat_eff;
    for (std::size_t i = 0; i < g_naive.size(); ++i) {
      report.max_tensor_gradient_error =
          std::max(report.max_tensor_gradient_error, relative_error<S>(g_eff[i], g_naive[i]));
      flat_naive.insert(flat_naive.end(), g_naive[i].begin(), g_naive[i].end());
      flat_eff.insert(flat_eff.end(), g_eff[i].begin(), g_eff[i].end());
    }
    report.max_gradient_error =
        std::max(report.max_gradient_error, relative_error<S>(flat_eff, flat_naive));
  }
  return report;
}

AnalyticMemory analytic_memory(const ConvDims& d, Index scalar_bytes) {
  const double b = static_cast<double>(scalar_bytes);
  AnalyticMemory m;
  m.naive_filter_bytes = b * static_cast<double>(d.batch) * static_cast<double>(d.points) *
                         static_cast<double>(d.k) * static_cast<double>(d.c_in) *
                         static_cast<double>(d.c_out);
  m.efficient_gram_bytes = b * static_cast<double>(d.batch) * static_cast<double>(d.points) *
                           static_cast<double>(d.c_in) * static_cast<double>(d.c_mid);
  m.kernel_bytes = b * static_cast<double>(d.c_in) * static_cast<double>(d.c_mid) *
                   static_cast<double>(d.c_out);
  return m;
}

template <typename S>
MeasuredMemory measure_memory(const ConvDims& d, std::uint64_t seed) {
  std::mt19937_64 rng = trial_rng(seed, 0);
  const RegionTensors<S> in = random_regions<S>(d, rng);
  PointConvConfig cfg;
  cfg.dim = 3;
  cfg.c_in = d.c_in;
  cfg.c_mid = d.c_mid;
  cfg.c_out = d.c_out;
  cfg.k = d.k;
  PointConv<S> layer(cfg, rng);
  NoGradGuard no_grad;
  const Tensor<S> hidden = layer.weight_net.hidden(in.local);
  const Tensor<S> scale = layer.density_scale(in.inverse_density);
  MeasuredMemory m;
  {
    AllocationScope scope;
    const Tensor<S> y = layer.contract_naive(in.features, scale, hidden);
    m.naive_largest_bytes = scope.largest_bytes();
    m.naive_peak_bytes = scope.peak_bytes();
  }
  {
    AllocationScope scope;
    const Tensor<S> y = layer.contract_efficient(in.features, scale, hidden);
    m.efficient_largest_bytes = scope.largest_bytes();
    m.efficient_peak_bytes = scope.peak_bytes();
  }
  return m;
}

template <typename S>
GridReport grid_equivalence(Index side, Index kernel, std::uint64_t seed, double origin_x,
                            double origin_y, Index c_in, Index c_out, bool constant_features) {
  if (kernel != 1 && kernel != 3 && kernel != 5) {
    throw ValueError("grid-equiv: kernel must be 1, 3 or 5");
  }
  if (side < kernel + 2) throw ValueError("grid-equiv: side must be at least kernel + 2");
  const double h = 1.0 / 16.0;
  const Index k = kernel * kernel, half = kernel / 2, n = side * side;
  std::mt19937_64 rng = trial_rng(seed, 0);

  PointCloud<S> cloud;
  cloud.positions.resize(n, 2);
  cloud.features.resize(n, c_in);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (Index row = 0; row < side; ++row) {
    for (Index col = 0; col < side; ++col) {
      const Index i = row * side + col;
      cloud.positions(i, 0) = static_cast<S>(origin_x + static_cast<double>(col) * h);
      cloud.positions(i, 1) = static_cast<S>(origin_y + static_cast<double>(row) * h);
      for (Index c = 0; c < c_in; ++c) cloud.features(i, c) = constant_features ? S(1) : static_cast<S>(u(rng));
    }
  }
  PointConvConfig cfg;
  cfg.dim = 2;
  cfg.c_in = c_in;
  cfg.c_mid = 8;
  cfg.c_out = c_out;
  cfg.k = k;
  cfg.density = DensityMode::kDisabled;
  PointConv<S> layer(cfg, rng);

  NoGradGuard no_grad;
  std::vector<Index> all(static_cast<std::size_t>(n));
  std::iota(all.begin(), all.end(), Index{0});
  const Tensor<S> y = pointconv_efficient(knn_group(cloud, all, k, false), layer);

  // Stencil: the weight function at each grid offset, row-major over (dy, dx).
  Tensor<S> offsets(Shape{1, k, 2});
  for (Index dy = -half; dy <= half; ++dy) {
    for (Index dx = -half; dx <= half; ++dx) {
      S* p = offsets.data() + ((dy + half) * kernel + (dx + half)) * 2;
      p[0] = static_cast<S>(static_cast<double>(dx) * h);
      p[1] = static_cast<S>(static_cast<double>(dy) * h);
    }
  }
  const Tensor<S> stencil = layer.weight_net.filters(layer.weight_net.hidden(offsets));

  GridReport report;
  report.side = side;
  report.kernel = kernel;
  std::vector<double> oracle, got;
  for (Index row = half; row < side - half; ++row) {
    for (Index col = half; col < side - half; ++col) {
      for (Index co = 0; co < c_out; ++co) {
        double acc = 0.0;
        for (Index t = 0; t < k; ++t) {
          const Index dy = t / kernel - half, dx = t % kernel - half;
          const Index src = (row + dy) * side + (col + dx);
          for (Index ci = 0; ci < c_in; ++ci) {
            acc += static_cast<double>(cloud.features(src, ci)) *
                   static_cast<double>(stencil.data()[(t * c_in + ci) * c_out + co]);
          }
        }
        oracle.push_back(acc);
        got.push_back(static_cast<double>(y.data()[(row * side + col) * c_out + co]));
      }
      ++report.interior_points;
    }
  }
  report.max_error = relative_error<double>(got, oracle);
  return report;
}

std::vector<GradcheckEntry> gradcheck_suite(std::uint64_t seed) {
  using S = double;
  std::vector<GradcheckEntry> out;
  std::mt19937_64 rng = trial_rng(seed, 0);

  {
    DensityNet<S> net(rng);
    Tensor<S> x = uniform<S>(Shape{4, 5}, 0.05, 1.0, rng);
    const Tensor<S> p = uniform<S>(Shape{4, 5}, -1.0, 1.0, rng);
    NamedTensors<S> params;
    net.collect("density", params);
    auto tensors = values_of(params, rng);
    tensors.push_back(x);
    out.push_back({"density_net", check_all<S>([&] { return project(net(x), p); }, tensors)});
  }
  for (bool bn : {false, true}) {
    PointConvConfig cfg;
    cfg.dim = 3;
    cfg.c_in = 3;
    cfg.c_mid = 4;
    cfg.c_out = 2;
    cfg.k = 5;
    cfg.weight_net_batch_norm = bn;
    WeightNet<S> net(cfg, rng);
    Tensor<S> local = uniform<S>(Shape{4, 5, 3}, -0.5, 0.5, rng);
    const Tensor<S> p = uniform<S>(Shape{4, 5, 3, 2}, -1.0, 1.0, rng);
    NamedTensors<S> params, buffers;
    net.collect("weight_net", params, buffers);
    values_of(params, rng);
    const Mode mode = bn ? Mode::kTrain : Mode::kEval;
    auto f = [&] { return project(net.filters(net.hidden(local, mode)), p); };
    // A bias feeding batch norm has an identically zero gradient.
    std::vector<Tensor<S>> tensors{local}, zero_grad;
    for (auto [name, t] : params) {
      const bool pre_norm = bn && name.ends_with(".bias") && name.find(".layer") != std::string::npos;
      (pre_norm ? zero_grad : tensors).push_back(t);
    }
    double error = check_all<S>(f, tensors);
    if (!zero_grad.empty()) {
      Tape<S>::active().clear();
      backward(f());
      for (auto& t : zero_grad) {
        for (S g : t.grad()) error = std::max(error, std::abs(g) > 1e-10 ? 1.0 : 0.0);
        t.zero_grad();
      }
    }
    out.push_back({bn ? "weight_net_bn" : "weight_net", error});
  }
  for (bool efficient : {true, false}) {
    const ConvDims d{1, 12, 4, 3, 4, 2};
    RegionTensors<S> in = random_regions<S>(d, rng);
    PointConvConfig cfg;
    cfg.dim = 3;
    cfg.c_in = d.c_in;
    cfg.c_mid = d.c_mid;
    cfg.c_out = d.c_out;
    cfg.k = d.k;
    PointConv<S> layer(cfg, rng);
    const Tensor<S> p = uniform<S>(Shape{d.points, d.c_out}, -1.0, 1.0, rng);
    NamedTensors<S> params, buffers;
    layer.collect("conv", params, buffers);
    auto tensors = values_of(params, rng);
    tensors.push_back(in.local);
    tensors.push_back(in.features);
    tensors.push_back(in.inverse_density);
    auto f = [&] {
      return project(efficient ? layer.forward_efficient(in.local, in.features, in.inverse_density)
                               : layer.forward_naive(in.local, in.features, in.inverse_density),
                     p);
    };
    out.push_back({efficient ? "pointconv_efficient" : "pointconv_naive", check_all<S>(f, tensors)});
  }
  {
    NetworkConfig net;
    PropagationSpec spec;
    spec.k = 4;
    spec.c_mid = 4;
    spec.c_out = 3;
    spec.bandwidth = 0.5;
    PropagationModule<S> prop(spec, net, 3, 2, rng);
    Level<S> coarse, fine;
    for (int b = 0; b < 2; ++b) {
      coarse.positions.push_back(ball_points<S>(5, 3, rng));
      fine.positions.push_back(ball_points<S>(10, 3, rng));
    }
    coarse.features = uniform<S>(Shape{2, 5, 3}, -1.0, 1.0, rng);
    fine.features = uniform<S>(Shape{2, 10, 2}, -1.0, 1.0, rng);
    const Tensor<S> p = uniform<S>(Shape{2, 10, 3}, -1.0, 1.0, rng);
    NamedTensors<S> params, buffers;
    prop.collect("prop", params, buffers);
    auto tensors = values_of(params, rng);
    tensors.push_back(coarse.features);
    tensors.push_back(fine.features);
    std::mt19937_64 fwd_rng(seed);
    auto f = [&] {
      ForwardContext ctx{Mode::kTrain, &fwd_rng};
      return project(prop.forward(coarse, fine, ctx).features, p);
    };
    out.push_back({"propagation", check_all<S>(f, tensors)});
  }
  {
    BatchNormState<S> state(4);
    state.gamma = uniform<S>(Shape{4}, 0.5, 1.5, rng).set_requires_grad();
    state.beta = uniform<S>(Shape{4}, -0.5, 0.5, rng).set_requires_grad();
    Tensor<S> x = uniform<S>(Shape{3, 2, 4}, -2.0, 2.0, rng);
    const Tensor<S> p = uniform<S>(Shape{3, 2, 4}, -1.0, 1.0, rng);
    out.push_back({"batch_norm", check_all<S>([&] { return project(batch_norm(x, state, Mode::kTrain), p); },
                                              {x, state.gamma, state.beta})});
  }
  {
    Tensor<S> logits = uniform<S>(Shape{5, 4}, -3.0, 3.0, rng);
    const std::vector<int> labels{0, 3, 1, 1, 2};
    out.push_back({"softmax_cross_entropy",
                   check_all<S>([&] { return softmax_cross_entropy(logits, labels); }, {logits})});
  }
  return out;
}

#define POINTCONV_INSTANTIATE_VERIFY(S)                                                       \
  template double relative_error(std::span<const S>, std::span<const S>);                    \
  template RegionTensors<S> random_regions(const ConvDims&, std::mt19937_64&);                \
  template EquivalenceReport equivalence_trials<S>(const ConvDims&, int, std::uint64_t);     \
  template MeasuredMemory measure_memory<S>(const ConvDims&, std::uint64_t);                  \
  template GridReport grid_equivalence<S>(Index, Index, std::uint64_t, double, double, Index, \
                                          Index, bool);

POINTCONV_INSTANTIATE_VERIFY(float)
POINTCONV_INSTANTIATE_VERIFY(double)

}  // namespace pointconv
