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

#include "pointconv/pointconv.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace pointconv {
namespace {

template <typename S>
using Map = Eigen::Map<MatrixX<S>>;
template <typename S>
using ConstMap = Eigen::Map<const MatrixX<S>>;
template <typename S>
using StridedMap = Eigen::Map<MatrixX<S>, 0, Eigen::OuterStride<>>;
template <typename S>
using ConstStridedMap = Eigen::Map<const MatrixX<S>, 0, Eigen::OuterStride<>>;

template <typename S>
S* grad_of(const std::shared_ptr<detail::TensorImpl<S>>& impl) {
  return impl->requires_grad ? impl->grad_buffer() : nullptr;
}

template <typename S>
Tensor<S> uniform_tensor(Shape shape, double bound, std::mt19937_64& rng) {
  Tensor<S> t(std::move(shape));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (S& v : t.values()) v = static_cast<S>(dist(rng));
  return t;
}

void require(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

}  // namespace

std::string_view to_string(DensityMode mode) {
  switch (mode) {
    case DensityMode::kMlp:
      return "mlp";
    case DensityMode::kDisabled:
      return "disabled";
    case DensityMode::kRaw:
      return "raw";
  }
  return "mlp";
}

DensityMode parse_density_mode(std::string_view name) {
  if (name == "mlp") return DensityMode::kMlp;
  if (name == "disabled" || name == "none") return DensityMode::kDisabled;
  if (name == "raw") return DensityMode::kRaw;
  throw ValueError("unknown density mode '" + std::string(name) + "'");
}

template <typename S>
LinearLayer<S>::LinearLayer(Index in, Index out, std::mt19937_64& rng)
    : weight(uniform_tensor<S>({in, out}, std::sqrt(6.0 / static_cast<double>(in + out)), rng)),
      bias(Shape{out}, S(0)) {
  weight.set_requires_grad();
  bias.set_requires_grad();
}

template <typename S>
void LinearLayer<S>::collect(const std::string& prefix, NamedTensors<S>& params) const {
  params.emplace_back(prefix + ".weight", weight);
  params.emplace_back(prefix + ".bias", bias);
}

// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> weighted_gram(const Tensor<S>& f, const Tensor<S>& s, const Tensor<S>& m) {
  require(f.rank() == 3 && m.rank() == 3 && s.rank() == 2 && f.dim(0) == m.dim(0) &&
              f.dim(1) == m.dim(1) && s.dim(0) == f.dim(0) && s.dim(1) == f.dim(1),
          "weighted_gram: incompatible shapes f" + to_string(f.shape()) + " s" +
              to_string(s.shape()) + " m" + to_string(m.shape()));
  const Index r = f.dim(0), k = f.dim(1), c1 = f.dim(2), c2 = m.dim(2);
  Tensor<S> out(Shape{r, c1, c2});
  for (Index i = 0; i < r; ++i) {
    ConstMap<S> F(f.data() + i * k * c1, k, c1);
    ConstMap<S> M(m.data() + i * k * c2, k, c2);
    Eigen::Map<const VectorX<S>> w(s.data() + i * k, k);
    Map<S>(out.data() + i * c1 * c2, c1, c2).noalias() = F.transpose() * (w.asDiagonal() * M);
  }
  if (Tape<S>::should_record({&f, &s, &m})) {
    Tape<S>::active().record(
        "weighted_gram", {&f, &s, &m}, out,
        [fi = f.impl(), si = s.impl(), mi = m.impl(), r, k, c1, c2](const S* g) {
          S* gf = grad_of<S>(fi);
          S* gs = grad_of<S>(si);
          S* gm = grad_of<S>(mi);
          MatrixX<S> t(k, c1);
          for (Index i = 0; i < r; ++i) {
            ConstMap<S> F(fi->data->data() + i * k * c1, k, c1);
            ConstMap<S> M(mi->data->data() + i * k * c2, k, c2);
            ConstMap<S> G(g + i * c1 * c2, c1, c2);
            Eigen::Map<const VectorX<S>> w(si->data->data() + i * k, k);
            if (gf || gs) {
              t.noalias() = M * G.transpose();
              if (gf) Map<S>(gf + i * k * c1, k, c1) += w.asDiagonal() * t;
              if (gs) {
                Eigen::Map<VectorX<S>>(gs + i * k, k) += F.cwiseProduct(t).rowwise().sum();
              }
            }
            if (gm) Map<S>(gm + i * k * c2, k, c2).noalias() += w.asDiagonal() * (F * G);
          }
        });
  }
  return out;
}

template <typename S>
Tensor<S> materialize_filters(const Tensor<S>& m, const Tensor<S>& h_weight,
                              const Tensor<S>& h_bias) {
  require(m.rank() == 3 && h_weight.rank() == 3 && h_bias.rank() == 2 &&
              h_weight.dim(1) == m.dim(2) && h_bias.dim(0) == h_weight.dim(0) &&
              h_bias.dim(1) == h_weight.dim(2),
          "materialize_filters: incompatible shapes m" + to_string(m.shape()) + " h_weight" +
              to_string(h_weight.shape()) + " h_bias" + to_string(h_bias.shape()));
  const Index r = m.dim(0), k = m.dim(1), cm = m.dim(2);
  const Index cin = h_weight.dim(0), cout = h_weight.dim(2), rows = r * k;
  Tensor<S> out(Shape{r, k, cin, cout});
  ConstMap<S> M(m.data(), rows, cm);
  for (Index ci = 0; ci < cin; ++ci) {
    StridedMap<S> W(out.data() + ci * cout, rows, cout, Eigen::OuterStride<>(cin * cout));
    ConstMap<S> H(h_weight.data() + ci * cm * cout, cm, cout);
    W.noalias() = M * H;
    W.rowwise() += Eigen::Map<const Eigen::Matrix<S, 1, Eigen::Dynamic>>(h_bias.data() + ci * cout, cout);
  }
  if (Tape<S>::should_record({&m, &h_weight, &h_bias})) {
    Tape<S>::active().record(
        "materialize_filters", {&m, &h_weight, &h_bias}, out,
        [mi = m.impl(), hi = h_weight.impl(), bi = h_bias.impl(), rows, cm, cin, cout](const S* g) {
          S* gm = grad_of<S>(mi);
          S* gh = grad_of<S>(hi);
          S* gb = grad_of<S>(bi);
          ConstMap<S> M(mi->data->data(), rows, cm);
          for (Index ci = 0; ci < cin; ++ci) {
            ConstStridedMap<S> G(g + ci * cout, rows, cout, Eigen::OuterStride<>(cin * cout));
            ConstMap<S> H(hi->data->data() + ci * cm * cout, cm, cout);
            if (gm) Map<S>(gm, rows, cm).noalias() += G * H.transpose();
            if (gh) Map<S>(gh + ci * cm * cout, cm, cout).noalias() += M.transpose() * G;
            if (gb) Map<S>(gb + ci * cout, 1, cout) += G.colwise().sum();
          }
        });
  }
  return out;
}

template <typename S>
Tensor<S> contract_filters(const Tensor<S>& f, const Tensor<S>& s, const Tensor<S>& w) {
  require(f.rank() == 3 && s.rank() == 2 && w.rank() == 4 && w.dim(0) == f.dim(0) &&
              w.dim(1) == f.dim(1) && w.dim(2) == f.dim(2) && s.dim(0) == f.dim(0) &&
              s.dim(1) == f.dim(1),
          "contract_filters: incompatible shapes f" + to_string(f.shape()) + " s" +
              to_string(s.shape()) + " w" + to_string(w.shape()));
  const Index r = f.dim(0), k = f.dim(1), cin = f.dim(2), cout = w.dim(3);
  Tensor<S> out(Shape{r, cout});
  for (Index i = 0; i < r; ++i) {
    Eigen::Map<VectorX<S>> y(out.data() + i * cout, cout);
    for (Index j = 0; j < k; ++j) {
      const Index rk = i * k + j;
      Eigen::Map<const VectorX<S>> x(f.data() + rk * cin, cin);
      ConstMap<S> W(w.data() + rk * cin * cout, cin, cout);
      y.noalias() += s.data()[rk] * (W.transpose() * x);
    }
  }
  if (Tape<S>::should_record({&f, &s, &w})) {
    Tape<S>::active().record(
        "contract_filters", {&f, &s, &w}, out,
        [fi = f.impl(), si = s.impl(), wi = w.impl(), r, k, cin, cout](const S* g) {
          S* gf = grad_of<S>(fi);
          S* gs = grad_of<S>(si);
          S* gw = grad_of<S>(wi);
          VectorX<S> wg(cin);
          for (Index i = 0; i < r; ++i) {
            Eigen::Map<const VectorX<S>> gy(g + i * cout, cout);
            for (Index j = 0; j < k; ++j) {
              const Index rk = i * k + j;
              const S sv = si->data->data()[rk];
              Eigen::Map<const VectorX<S>> x(fi->data->data() + rk * cin, cin);
              ConstMap<S> W(wi->data->data() + rk * cin * cout, cin, cout);
              if (gf || gs) {
                wg.noalias() = W * gy;
                if (gf) Eigen::Map<VectorX<S>>(gf + rk * cin, cin) += sv * wg;
                if (gs) gs[rk] += x.dot(wg);
              }
              if (gw) Map<S>(gw + rk * cin * cout, cin, cout).noalias() += sv * x * gy.transpose();
            }
          }
        });
  }
  return out;
}

// ---------------------------------------------------------------------------

template <typename S>
WeightNet<S>::WeightNet(const PointConvConfig& config, std::mt19937_64& rng) {
  if (config.c_mid < 1 || config.weight_net_layers < 1) {
    throw ValueError("WeightNet needs c_mid >= 1 and at least one hidden layer");
  }
  Index in = config.dim;
  for (int i = 0; i < config.weight_net_layers; ++i) {
    layers.emplace_back(in, config.c_mid, rng);
    if (config.weight_net_batch_norm) norms.emplace_back(config.c_mid);
    in = config.c_mid;
  }
  const double bound = 1.0 / std::sqrt(static_cast<double>(config.c_mid * config.k));
  h_weight = uniform_tensor<S>({config.c_in, config.c_mid, config.c_out}, bound, rng);
  h_weight.set_requires_grad();
  h_bias = Tensor<S>(Shape{config.c_in, config.c_out}, S(0));
  h_bias.set_requires_grad();
}

template <typename S>
Tensor<S> WeightNet<S>::hidden(const Tensor<S>& local, Mode mode) {
  Tensor<S> x = local;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    x = layers[i](x);
    if (!norms.empty()) x = batch_norm(x, norms[i], mode);
    x = relu(x);
  }
  return x;
}

template <typename S>
Tensor<S> WeightNet<S>::filters(const Tensor<S>& hidden) const {
  return materialize_filters(hidden, h_weight, h_bias);
}

template <typename S>
void WeightNet<S>::collect(const std::string& prefix, NamedTensors<S>& params,
                           NamedTensors<S>& buffers) const {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    layers[i].collect(prefix + ".layer" + std::to_string(i), params);
    if (!norms.empty()) {
      const std::string p = prefix + ".norm" + std::to_string(i);
      params.emplace_back(p + ".gamma", norms[i].gamma);
      params.emplace_back(p + ".beta", norms[i].beta);
      buffers.emplace_back(p + ".running_mean", norms[i].running_mean);
      buffers.emplace_back(p + ".running_var", norms[i].running_var);
    }
  }
  params.emplace_back(prefix + ".h_weight", h_weight);
  params.emplace_back(prefix + ".h_bias", h_bias);
}

template <typename S>
DensityNet<S>::DensityNet(std::mt19937_64& rng) : l1(1, 16, rng), l2(16, 8, rng), l3(8, 1, rng) {}

template <typename S>
Tensor<S> DensityNet<S>::operator()(const Tensor<S>& inverse_density) const {
  Shape column = inverse_density.shape();
  column.push_back(1);
  Tensor<S> x = reshape(inverse_density, column);
  x = relu(l1(x));
  x = relu(l2(x));
  x = sigmoid(l3(x));
  return reshape(x, inverse_density.shape());
}

template <typename S>
void DensityNet<S>::collect(const std::string& prefix, NamedTensors<S>& params) const {
  l1.collect(prefix + ".l1", params);
  l2.collect(prefix + ".l2", params);
  l3.collect(prefix + ".l3", params);
}

template <typename S>
PointConv<S>::PointConv(const PointConvConfig& config, std::mt19937_64& rng)
    : weight_net(config, rng), config_(config) {
  if (config.c_in < 1 || config.c_out < 1) throw ValueError("PointConv needs c_in, c_out >= 1");
  if (config.density == DensityMode::kMlp) density_net = DensityNet<S>(rng);
}

template <typename S>
Tensor<S> PointConv<S>::density_scale(const Tensor<S>& inverse_density) const {
  switch (config_.density) {
    case DensityMode::kDisabled:
      return Tensor<S>(inverse_density.shape(), S(1));
    case DensityMode::kRaw:
      return inverse_density;
    case DensityMode::kMlp:
      break;
  }
  return density_net(inverse_density);
}

template <typename S>
void PointConv<S>::check_inputs(const Tensor<S>& local, const Tensor<S>& features,
                                const Tensor<S>& inverse_density) const {
  require(local.rank() == 3 && local.dim(2) == config_.dim,
          "PointConv: local coordinates must be [R,K," + std::to_string(config_.dim) + "], got " +
              to_string(local.shape()));
  require(features.rank() == 3 && features.dim(0) == local.dim(0) &&
              features.dim(1) == local.dim(1),
          "PointConv: features " + to_string(features.shape()) + " do not match regions " +
              to_string(local.shape()));
  require(features.dim(2) == config_.c_in,
          "PointConv: expected " + std::to_string(config_.c_in) + " input channels, got " +
              std::to_string(features.dim(2)));
  require(inverse_density.rank() == 2 && inverse_density.dim(0) == local.dim(0) &&
              inverse_density.dim(1) == local.dim(1),
          "PointConv: inverse density must be [R,K], got " + to_string(inverse_density.shape()));
}

template <typename S>
Tensor<S> PointConv<S>::contract_naive(const Tensor<S>& features, const Tensor<S>& scale,
                                       const Tensor<S>& hidden) const {
  return contract_filters(features, scale, weight_net.filters(hidden));
}

template <typename S>
Tensor<S> PointConv<S>::contract_efficient(const Tensor<S>& features, const Tensor<S>& scale,
                                           const Tensor<S>& hidden) const {
  const Index r = features.dim(0), cin = config_.c_in, cm = config_.c_mid, cout = config_.c_out;
  // H applied as a 1x1 convolution over the flattened (c_in, c_mid) axis.
  Tensor<S> gram = reshape(weighted_gram(features, scale, hidden), Shape{r, cin * cm});
  Tensor<S> main = matmul(gram, reshape(weight_net.h_weight, Shape{cin * cm, cout}));
  // The bias of H adds h_bias[ci] to every filter; it contracts with sum_k S F.
  Tensor<S> offset = matmul(weighted_sum(features, scale), weight_net.h_bias);
  return add(main, offset);
}

template <typename S>
Tensor<S> PointConv<S>::forward_naive(const Tensor<S>& local, const Tensor<S>& features,
                                      const Tensor<S>& inverse_density, Mode mode) {
  check_inputs(local, features, inverse_density);
  const Tensor<S> m = weight_net.hidden(local, mode);
  return contract_naive(features, density_scale(inverse_density), m);
}

template <typename S>
Tensor<S> PointConv<S>::forward_efficient(const Tensor<S>& local, const Tensor<S>& features,
                                          const Tensor<S>& inverse_density, Mode mode) {
  check_inputs(local, features, inverse_density);
  const Tensor<S> m = weight_net.hidden(local, mode);
  return contract_efficient(features, density_scale(inverse_density), m);
}

template <typename S>
void PointConv<S>::collect(const std::string& prefix, NamedTensors<S>& params,
                           NamedTensors<S>& buffers) const {
  weight_net.collect(prefix + ".weight_net", params, buffers);
  if (config_.density == DensityMode::kMlp) density_net.collect(prefix + ".density_net", params);
}

template <typename S>
RegionTensors<S> to_region_tensors(const Neighborhood<S>& nb) {
  const Index r = nb.centroids(), k = nb.k;
  const Index d = nb.local_coords.cols(), c = nb.grouped_features.cols();
  RegionTensors<S> out;
  out.local = Tensor<S>(Shape{r, k, d},
                        std::span<const S>(nb.local_coords.data(), static_cast<std::size_t>(r * k * d)));
  out.features = Tensor<S>(
      Shape{r, k, c}, std::span<const S>(nb.grouped_features.data(), static_cast<std::size_t>(r * k * c)));
  if (nb.grouped_inverse_density.size() == r * k) {
    out.inverse_density =
        Tensor<S>(Shape{r, k}, std::span<const S>(nb.grouped_inverse_density.data(),
                                                  static_cast<std::size_t>(r * k)));
  } else {
    out.inverse_density = Tensor<S>(Shape{r, k}, S(1));
  }
  return out;
}

template <typename S>
Tensor<S> pointconv_naive(const Neighborhood<S>& nb, PointConv<S>& layer) {
  const auto t = to_region_tensors(nb);
  return layer.forward_naive(t.local, t.features, t.inverse_density);
}

template <typename S>
Tensor<S> pointconv_efficient(const Neighborhood<S>& nb, PointConv<S>& layer) {
  const auto t = to_region_tensors(nb);
  return layer.forward_efficient(t.local, t.features, t.inverse_density);
}

// ---------------------------------------------------------------------------

template <typename S>
std::vector<MatrixX<S>> sample_weight_function(WeightNet<S>& net, Index dim, SamplingPlane plane,
                                               Index side, double extent) {
  if (side < 1) throw ValueError("sample_weight_function: side must be positive");
  if (dim == 3 && (plane.axis < 0 || plane.axis > 2)) {
    throw ValueError("sample_weight_function: plane axis must be 0, 1 or 2");
  }
  int free_axes[2] = {0, 1};
  if (dim == 3) {
    int n = 0;
    for (int a = 0; a < 3; ++a) {
      if (a != plane.axis) free_axes[n++] = a;
    }
  }
  Tensor<S> coords(Shape{side * side, 1, dim});
  for (Index row = 0; row < side; ++row) {
    for (Index col = 0; col < side; ++col) {
      const double u = side == 1 ? 0.0 : -extent + 2.0 * extent * col / double(side - 1);
      const double v = side == 1 ? 0.0 : extent - 2.0 * extent * row / double(side - 1);
      S* p = coords.data() + (row * side + col) * dim;
      if (dim == 3) p[plane.axis] = static_cast<S>(plane.offset);
      p[free_axes[0]] = static_cast<S>(u);
      p[free_axes[1]] = static_cast<S>(v);
    }
  }
  NoGradGuard no_grad;
  const Tensor<S> w = net.filters(net.hidden(coords, Mode::kEval));
  const Index cin = w.dim(2), cout = w.dim(3);
  std::vector<MatrixX<S>> images(static_cast<std::size_t>(cin * cout), MatrixX<S>(side, side));
  for (Index px = 0; px < side * side; ++px) {
    for (Index ci = 0; ci < cin; ++ci) {
      for (Index co = 0; co < cout; ++co) {
        images[static_cast<std::size_t>(ci * cout + co)](px / side, px % side) =
            w.data()[(px * cin + ci) * cout + co];
      }
    }
  }
  return images;
}

template <typename S>
std::vector<std::filesystem::path> write_weight_images(const std::vector<MatrixX<S>>& images,
                                                       Index c_out, const std::string& layer,
                                                       const std::filesystem::path& dir,
                                                       ImageFormat format) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> paths;
  for (std::size_t i = 0; i < images.size(); ++i) {
    const auto& img = images[i];
    const std::string stem = "wfn_" + layer + "_" + std::to_string(static_cast<Index>(i) / c_out) +
                             "_" + std::to_string(static_cast<Index>(i) % c_out);
    const auto path = dir / (stem + (format == ImageFormat::kPgm ? ".pgm" : ".csv"));
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    if (format == ImageFormat::kCsv) {
      out.precision(9);
      for (Index r = 0; r < img.rows(); ++r) {
        for (Index c = 0; c < img.cols(); ++c) out << (c ? "," : "") << img(r, c);
        out << '\n';
      }
    } else {
      const S lo = img.minCoeff(), hi = img.maxCoeff();
      out << "P5\n" << img.cols() << ' ' << img.rows() << "\n65535\n";
      for (Index r = 0; r < img.rows(); ++r) {
        for (Index c = 0; c < img.cols(); ++c) {
          const double t = hi > lo ? double(img(r, c) - lo) / double(hi - lo) : 0.0;
          const auto v = static_cast<std::uint16_t>(std::lround(t * 65535.0));
          const char bytes[2] = {static_cast<char>(v >> 8), static_cast<char>(v & 0xff)};
          out.write(bytes, 2);  // PGM samples are big-endian
        }
      }
    }
    if (!out) throw IoError("failed writing " + path.string());
    paths.push_back(path);
  }
  return paths;
}

#define POINTCONV_INSTANTIATE_POINTCONV(S)                                                     \
  template struct LinearLayer<S>;                                                              \
  template class WeightNet<S>;                                                                 \
  template class DensityNet<S>;                                                                \
  template class PointConv<S>;                                                                 \
  template Tensor<S> weighted_gram(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&);      \
  template Tensor<S> materialize_filters(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&); \
  template Tensor<S> contract_filters(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&);   \
  template RegionTensors<S> to_region_tensors(const Neighborhood<S>&);                         \
  template Tensor<S> pointconv_naive(const Neighborhood<S>&, PointConv<S>&);                   \
  template Tensor<S> pointconv_efficient(const Neighborhood<S>&, PointConv<S>&);               \
  template std::vector<MatrixX<S>> sample_weight_function(WeightNet<S>&, Index, SamplingPlane, \
                                                          Index, double);                      \
  template std::vector<std::filesystem::path> write_weight_images(                             \
      const std::vector<MatrixX<S>>&, Index, const std::string&, const std::filesystem::path&, \
      ImageFormat);

POINTCONV_INSTANTIATE_POINTCONV(float)
POINTCONV_INSTANTIATE_POINTCONV(double)

}  // namespace pointconv
