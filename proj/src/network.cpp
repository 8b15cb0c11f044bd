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

#include "pointconv/network.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>

namespace pointconv {

static_assert(std::endian::native == std::endian::little,
              "checkpoint and cloud I/O assume a little-endian host");

namespace {

const char* task_name(Task t) { return t == Task::kClassify ? "classify" : "segment"; }

Task parse_task(const std::string& s) {
  if (s == "classify") return Task::kClassify;
  if (s == "segment") return Task::kSegment;
  throw ValueError("unknown task '" + s + "'");
}

template <typename S>
void add_norm(const std::string& prefix, const BatchNormState<S>& bn, NamedTensors<S>& params,
              NamedTensors<S>& buffers) {
  params.emplace_back(prefix + ".gamma", bn.gamma);
  params.emplace_back(prefix + ".beta", bn.beta);
  buffers.emplace_back(prefix + ".running_mean", bn.running_mean);
  buffers.emplace_back(prefix + ".running_var", bn.running_var);
}

PointConvConfig conv_config(const NetworkConfig& net, Index c_in, Index c_mid, Index c_out,
                            Index k, DensityMode density) {
  PointConvConfig c;
  c.dim = net.input_dim;
  c.c_in = c_in;
  c.c_mid = c_mid;
  c.c_out = c_out;
  c.k = k;
  c.density = density;
  c.weight_net_layers = net.weight_net_layers;
  c.weight_net_batch_norm = net.weight_net_batch_norm;
  return c;
}

// Region tensors for kNN groups around `centroids` of every cloud in a level.
template <typename S>
struct Grouping {
  std::vector<Index> rows;  // flat row indices into the [B*N, C] feature view
  Tensor<S> local;
  Tensor<S> inverse_density;
};

template <typename S>
Grouping<S> group_level(const Level<S>& level, const std::vector<std::vector<Index>>& centroids,
                        Index k, DensityMode density, double bandwidth) {
  const Index batch = level.batch(), n = level.points(), d = level.positions.front().cols();
  const Index m = static_cast<Index>(centroids.front().size());
  Grouping<S> g;
  g.rows.resize(static_cast<std::size_t>(batch * m * k));
  g.local = Tensor<S>(Shape{batch * m, k, d});
  g.inverse_density = Tensor<S>(Shape{batch * m, k}, S(1));
  for (Index b = 0; b < batch; ++b) {
    PointCloud<S> cloud;
    cloud.positions = level.positions[static_cast<std::size_t>(b)];
    const bool with_density = density != DensityMode::kDisabled;
    if (with_density) {
      // knn_group normalizes the density itself; store the raw estimate.
      if (static_cast<std::size_t>(b) < level.density.size() &&
          level.density[static_cast<std::size_t>(b)].size() == n) {
        cloud.density = level.density[static_cast<std::size_t>(b)];
      } else {
        cloud.density = kde_density(cloud.positions, static_cast<S>(bandwidth));
      }
    }
    const auto nb = knn_group(cloud, centroids[static_cast<std::size_t>(b)], k, with_density);
    const Index off = b * m * k;
    for (Index i = 0; i < m * k; ++i) {
      g.rows[static_cast<std::size_t>(off + i)] = b * n + nb.neighbor_indices[static_cast<std::size_t>(i)];
    }
    std::copy_n(nb.local_coords.data(), m * k * d, g.local.data() + off * d);
    if (with_density) {
      std::copy_n(nb.grouped_inverse_density.data(), m * k, g.inverse_density.data() + off);
    }
  }
  return g;
}

}  // namespace

NetworkConfig default_classification_config(Index input_dim, Index input_channels, Index classes) {
  NetworkConfig c;
  c.task = Task::kClassify;
  c.input_dim = input_dim;
  c.input_channels = input_channels;
  c.encoders = {
      {256, 16, {32}, 8, 64, DensityMode::kMlp, 0.1},
      {64, 16, {}, 8, 128, DensityMode::kMlp, 0.1},
      {16, 16, {}, 8, 256, DensityMode::kMlp, 0.1},
  };
  c.head = {{128}, 0.4, classes};
  return c;
}

NetworkConfig default_segmentation_config(Index input_dim, Index input_channels, Index classes) {
  NetworkConfig c = default_classification_config(input_dim, input_channels, classes);
  c.task = Task::kSegment;
  c.propagators = {
      {2, 16, 8, 128, DensityMode::kMlp, 0.1},
      {1, 16, 8, 64, DensityMode::kMlp, 0.1},
      {0, 16, 8, 64, DensityMode::kMlp, 0.1},
  };
  c.head = {{64}, 0.4, classes};
  return c;
}

void validate(const NetworkConfig& c) {
  if (c.input_dim != 2 && c.input_dim != 3) throw ValueError("input_dim must be 2 or 3");
  if (c.input_channels < 1) throw ValueError("input_channels must be at least 1");
  if (c.encoders.empty()) throw ValueError("at least one encoder is required");
  if (c.head.classes < 2) throw ValueError("class count must be at least 2");
  if (c.weight_net_layers < 1) throw ValueError("weight_net_layers must be at least 1");
  Index prev = -1;
  for (const auto& e : c.encoders) {
    if (e.n_out < 1 || e.k < 1 || e.c_mid < 1 || e.c_out < 1) {
      throw ValueError("encoder extents must be positive");
    }
    if (prev > 0 && e.n_out > prev) throw ValueError("encoder n_out exceeds its input point count");
    if (e.bandwidth <= 0) throw ValueError("encoder bandwidth must be positive");
    prev = e.n_out;
  }
  if (c.task == Task::kSegment) {
    const auto levels = static_cast<int>(c.encoders.size());
    if (static_cast<int>(c.propagators.size()) != levels) {
      throw ValueError("segmentation needs one propagator per encoder");
    }
    for (int j = 0; j < levels; ++j) {
      const auto& p = c.propagators[static_cast<std::size_t>(j)];
      if (p.skip_level != levels - 1 - j) {
        throw ValueError("propagator " + std::to_string(j) + " must skip to level " +
                         std::to_string(levels - 1 - j));
      }
      if (p.k < 1 || p.c_mid < 1 || p.c_out < 1 || p.bandwidth <= 0) {
        throw ValueError("propagator extents must be positive");
      }
    }
  } else if (!c.propagators.empty()) {
    throw ValueError("classification networks take no propagators");
  }
}

nlohmann::json to_json(const NetworkConfig& c) {
  nlohmann::json j;
  j["task"] = task_name(c.task);
  j["input_dim"] = c.input_dim;
  j["input_channels"] = c.input_channels;
  j["weight_net_layers"] = c.weight_net_layers;
  j["weight_net_batch_norm"] = c.weight_net_batch_norm;
  j["seed"] = c.seed;
  j["encoders"] = nlohmann::json::array();
  for (const auto& e : c.encoders) {
    j["encoders"].push_back({{"n_out", e.n_out},
                             {"k", e.k},
                             {"mlp_channels", e.mlp_channels},
                             {"c_mid", e.c_mid},
                             {"c_out", e.c_out},
                             {"density", std::string(to_string(e.density))},
                             {"bandwidth", e.bandwidth}});
  }
  j["propagators"] = nlohmann::json::array();
  for (const auto& p : c.propagators) {
    j["propagators"].push_back({{"skip_level", p.skip_level},
                                {"k", p.k},
                                {"c_mid", p.c_mid},
                                {"c_out", p.c_out},
                                {"density", std::string(to_string(p.density))},
                                {"bandwidth", p.bandwidth}});
  }
  j["head"] = {{"hidden", c.head.hidden}, {"dropout", c.head.dropout}, {"classes", c.head.classes}};
  return j;
}

NetworkConfig network_config_from_json(const nlohmann::json& j) {
  try {
    NetworkConfig c;
    c.task = parse_task(j.at("task").get<std::string>());
    c.input_dim = j.at("input_dim").get<Index>();
    c.input_channels = j.at("input_channels").get<Index>();
    c.weight_net_layers = j.value("weight_net_layers", 2);
    c.weight_net_batch_norm = j.value("weight_net_batch_norm", false);
    c.seed = j.value("seed", std::uint64_t{1});
    for (const auto& e : j.at("encoders")) {
      EncodingSpec s;
      s.n_out = e.at("n_out").get<Index>();
      s.k = e.at("k").get<Index>();
      s.mlp_channels = e.value("mlp_channels", std::vector<Index>{});
      s.c_mid = e.at("c_mid").get<Index>();
      s.c_out = e.at("c_out").get<Index>();
      s.density = parse_density_mode(e.value("density", std::string("mlp")));
      s.bandwidth = e.value("bandwidth", 0.1);
      c.encoders.push_back(s);
    }
    for (const auto& p : j.value("propagators", nlohmann::json::array())) {
      PropagationSpec s;
      s.skip_level = p.at("skip_level").get<int>();
      s.k = p.at("k").get<Index>();
      s.c_mid = p.at("c_mid").get<Index>();
      s.c_out = p.at("c_out").get<Index>();
      s.density = parse_density_mode(p.value("density", std::string("mlp")));
      s.bandwidth = p.value("bandwidth", 0.1);
      c.propagators.push_back(s);
    }
    const auto& h = j.at("head");
    c.head.hidden = h.value("hidden", std::vector<Index>{});
    c.head.dropout = h.value("dropout", 0.4);
    c.head.classes = h.at("classes").get<Index>();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ValueError(std::string("invalid network config: ") + e.what());
  }
}

// ---------------------------------------------------------------------------

template <typename S>
EncodingModule<S>::EncodingModule(const EncodingSpec& s, const NetworkConfig& net, Index c_in,
                                  std::mt19937_64& rng)
    : spec(s) {
  for (Index width : s.mlp_channels) {
    mlp.emplace_back(c_in, width, rng);
    mlp_norms.emplace_back(width);
    c_in = width;
  }
  conv = PointConv<S>(conv_config(net, c_in, s.c_mid, s.c_out, s.k, s.density), rng);
  norm = BatchNormState<S>(s.c_out);
}

template <typename S>
Level<S> EncodingModule<S>::forward(const Level<S>& in, ForwardContext& ctx) {
  const Index batch = in.batch(), n = in.points();
  if (spec.n_out > n) {
    throw ValueError("encoder asks for " + std::to_string(spec.n_out) + " centroids from " +
                     std::to_string(n) + " points");
  }
  Tensor<S> x = in.features;
  for (std::size_t i = 0; i < mlp.size(); ++i) x = relu(batch_norm(mlp[i](x), mlp_norms[i], ctx.mode));

  Level<S> out;
  std::vector<std::vector<Index>> centroids(static_cast<std::size_t>(batch));
  for (Index b = 0; b < batch; ++b) {
    FpsStart start = CanonicalStart{};
    if (ctx.mode == Mode::kTrain && ctx.rng) {
      start = StartIndex{std::uniform_int_distribution<Index>(0, n - 1)(*ctx.rng)};
    }
    const auto& pos = in.positions[static_cast<std::size_t>(b)];
    auto& chosen = centroids[static_cast<std::size_t>(b)];
    chosen = farthest_point_sample(pos, spec.n_out, start);
    MatrixX<S> sub(spec.n_out, pos.cols());
    for (Index i = 0; i < spec.n_out; ++i) sub.row(i) = pos.row(chosen[static_cast<std::size_t>(i)]);
    out.positions.push_back(std::move(sub));
  }
  const auto g = group_level(in, centroids, spec.k, spec.density, spec.bandwidth);
  const Tensor<S> grouped = gather_rows(x, g.rows, Shape{batch * spec.n_out, spec.k});
  Tensor<S> y = use_efficient ? conv.forward_efficient(g.local, grouped, g.inverse_density, ctx.mode)
                              : conv.forward_naive(g.local, grouped, g.inverse_density, ctx.mode);
  y = reshape(y, Shape{batch, spec.n_out, spec.c_out});
  out.features = relu(batch_norm(y, norm, ctx.mode));
  return out;
}

template <typename S>
void EncodingModule<S>::collect(const std::string& prefix, NamedTensors<S>& params,
                                NamedTensors<S>& buffers) const {
  for (std::size_t i = 0; i < mlp.size(); ++i) {
    mlp[i].collect(prefix + ".mlp" + std::to_string(i), params);
    add_norm(prefix + ".mlp_norm" + std::to_string(i), mlp_norms[i], params, buffers);
  }
  conv.collect(prefix + ".conv", params, buffers);
  add_norm(prefix + ".norm", norm, params, buffers);
}

template <typename S>
PropagationModule<S>::PropagationModule(const PropagationSpec& s, const NetworkConfig& net,
                                        Index c_coarse, Index c_skip, std::mt19937_64& rng)
    : spec(s),
      conv(conv_config(net, c_coarse + c_skip, s.c_mid, s.c_out, s.k, s.density), rng),
      norm(s.c_out) {}

template <typename S>
Level<S> PropagationModule<S>::forward(const Level<S>& coarse, const Level<S>& fine,
                                       ForwardContext& ctx) {
  const Index batch = fine.batch(), nf = fine.points(), nc = coarse.points();
  if (coarse.batch() != batch || fine.features.dim(0) != batch || fine.features.dim(1) != nf) {
    throw ShapeError("propagation: coarse and fine levels do not line up");
  }
  std::vector<Index> rows(static_cast<std::size_t>(batch * nf * 3));
  Tensor<S> weights(Shape{batch * nf, 3});
  for (Index b = 0; b < batch; ++b) {
    const auto w = three_nn_weights(fine.positions[static_cast<std::size_t>(b)],
                                    coarse.positions[static_cast<std::size_t>(b)]);
    for (Index i = 0; i < nf * 3; ++i) {
      rows[static_cast<std::size_t>(b * nf * 3 + i)] = b * nc + w.indices[static_cast<std::size_t>(i)];
    }
    std::copy_n(w.weights.data(), nf * 3, weights.data() + b * nf * 3);
  }
  const Tensor<S> neighbors = gather_rows(coarse.features, rows, Shape{batch * nf, 3});
  Tensor<S> interpolated =
      reshape(weighted_sum(neighbors, weights), Shape{batch, nf, coarse.features.dim(-1)});
  const Tensor<S> x = concat(interpolated, fine.features);

  std::vector<std::vector<Index>> centroids(static_cast<std::size_t>(batch), std::vector<Index>(
                                                                                 static_cast<std::size_t>(nf)));
  for (auto& c : centroids) std::iota(c.begin(), c.end(), Index{0});
  const auto g = group_level(fine, centroids, spec.k, spec.density, spec.bandwidth);
  const Tensor<S> grouped = gather_rows(x, g.rows, Shape{batch * nf, spec.k});
  Tensor<S> y = conv.forward_efficient(g.local, grouped, g.inverse_density, ctx.mode);
  y = reshape(y, Shape{batch, nf, spec.c_out});

  Level<S> out;
  out.positions = fine.positions;
  out.density = fine.density;
  out.features = relu(batch_norm(y, norm, ctx.mode));
  return out;
}

template <typename S>
void PropagationModule<S>::collect(const std::string& prefix, NamedTensors<S>& params,
                                   NamedTensors<S>& buffers) const {
  conv.collect(prefix + ".conv", params, buffers);
  add_norm(prefix + ".norm", norm, params, buffers);
}

template <typename S>
Head<S>::Head(const HeadSpec& s, Index c_in, std::mt19937_64& rng) : spec(s) {
  for (Index width : s.hidden) {
    hidden.emplace_back(c_in, width, rng);
    norms.emplace_back(width);
    c_in = width;
  }
  output = LinearLayer<S>(c_in, s.classes, rng);
}

template <typename S>
Tensor<S> Head<S>::forward(const Tensor<S>& in, ForwardContext& ctx) {
  Tensor<S> x = in;
  for (std::size_t i = 0; i < hidden.size(); ++i) x = relu(batch_norm(hidden[i](x), norms[i], ctx.mode));
  if (ctx.mode == Mode::kTrain && spec.dropout > 0.0) {
    if (!ctx.rng) throw ValueError("training forward needs a random generator");
    x = dropout(x, spec.dropout, *ctx.rng);
  }
  return output(x);
}

template <typename S>
void Head<S>::collect(const std::string& prefix, NamedTensors<S>& params,
                      NamedTensors<S>& buffers) const {
  for (std::size_t i = 0; i < hidden.size(); ++i) {
    hidden[i].collect(prefix + ".fc" + std::to_string(i), params);
    add_norm(prefix + ".fc_norm" + std::to_string(i), norms[i], params, buffers);
  }
  output.collect(prefix + ".out", params);
}

template <typename S>
Network<S>::Network(NetworkConfig config) : config_(std::move(config)) {
  if (config_.head.classes < 1) throw ValueError("class count must be positive");
  std::mt19937_64 rng(config_.seed);
  std::vector<Index> channels{config_.input_channels};
  for (const auto& e : config_.encoders) {
    encoders.emplace_back(e, config_, channels.back(), rng);
    channels.push_back(e.c_out);
  }
  Index c = channels.back();
  for (const auto& p : config_.propagators) {
    if (p.skip_level < 0 || p.skip_level >= static_cast<int>(channels.size())) {
      throw ValueError("propagator skip level out of range");
    }
    propagators.emplace_back(p, config_, c, channels[static_cast<std::size_t>(p.skip_level)], rng);
    c = p.c_out;
  }
  head = Head<S>(config_.head, c, rng);
}

template <typename S>
Level<S> Network<S>::input_level(const std::vector<PointCloud<S>>& batch) const {
  if (batch.empty()) throw ValueError("empty batch");
  const Index n = batch.front().size(), c = config_.input_channels;
  Level<S> level;
  level.features = Tensor<S>(Shape{static_cast<Index>(batch.size()), n, c});
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto& cloud = batch[b];
    if (cloud.size() != n) throw ShapeError("all clouds in a batch need the same point count");
    if (cloud.dim() != config_.input_dim) {
      throw ShapeError("cloud dimension " + std::to_string(cloud.dim()) + " does not match config " +
                       std::to_string(config_.input_dim));
    }
    if (cloud.channels() != c) {
      throw ShapeError("cloud has " + std::to_string(cloud.channels()) + " feature channels, config expects " +
                       std::to_string(c));
    }
    level.positions.push_back(cloud.positions);
    level.density.push_back(cloud.density);
    std::copy_n(cloud.features.data(), n * c, level.features.data() + static_cast<Index>(b) * n * c);
  }
  return level;
}

template <typename S>
Tensor<S> Network<S>::forward(const std::vector<PointCloud<S>>& batch, ForwardContext& ctx) {
  std::vector<Level<S>> levels;
  levels.push_back(input_level(batch));
  for (auto& e : encoders) levels.push_back(e.forward(levels.back(), ctx));
  if (config_.task == Task::kClassify) {
    return head.forward(reduce(levels.back().features, 1, Reduction::kMean), ctx);
  }
  Level<S> current = levels.back();
  for (auto& p : propagators) {
    current = p.forward(current, levels[static_cast<std::size_t>(p.spec.skip_level)], ctx);
  }
  const Index b = current.batch(), n = current.points();
  const Tensor<S> flat = reshape(current.features, Shape{b * n, current.features.dim(-1)});
  return head.forward(flat, ctx);
}

template <typename S>
NamedTensors<S> Network<S>::parameters() const {
  NamedTensors<S> params, buffers;
  for (std::size_t i = 0; i < encoders.size(); ++i) {
    encoders[i].collect("enc" + std::to_string(i), params, buffers);
  }
  for (std::size_t i = 0; i < propagators.size(); ++i) {
    propagators[i].collect("prop" + std::to_string(i), params, buffers);
  }
  head.collect("head", params, buffers);
  return params;
}

template <typename S>
NamedTensors<S> Network<S>::buffers() const {
  NamedTensors<S> params, buffers;
  for (std::size_t i = 0; i < encoders.size(); ++i) {
    encoders[i].collect("enc" + std::to_string(i), params, buffers);
  }
  for (std::size_t i = 0; i < propagators.size(); ++i) {
    propagators[i].collect("prop" + std::to_string(i), params, buffers);
  }
  head.collect("head", params, buffers);
  return buffers;
}

template <typename S>
Index Network<S>::parameter_count() const {
  Index n = 0;
  for (const auto& [name, t] : parameters()) n += t.size();
  return n;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

template <typename T>
void write_pod(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in, const std::filesystem::path& path) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (in.gcount() != static_cast<std::streamsize>(sizeof(T))) {
    throw FormatError("truncated checkpoint " + path.string());
  }
  return v;
}

std::string read_bytes(std::istream& in, std::size_t n, const std::filesystem::path& path) {
  std::string s(n, '\0');
  in.read(s.data(), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) {
    throw FormatError("truncated checkpoint " + path.string());
  }
  return s;
}

nlohmann::json read_header(std::istream& in, const std::filesystem::path& path) {
  const std::string magic = read_bytes(in, 4, path);
  if (magic != "PCNV") throw FormatError(path.string() + " is not a checkpoint (bad magic)");
  const auto version = read_pod<std::uint32_t>(in, path);
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto len = read_pod<std::uint64_t>(in, path);
  try {
    return nlohmann::json::parse(read_bytes(in, static_cast<std::size_t>(len), path));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("checkpoint config is not valid JSON: " + std::string(e.what()));
  }
}

template <typename S>
std::map<std::string, Tensor<S>> all_named(const Network<S>& network) {
  std::map<std::string, Tensor<S>> named;
  for (auto& [n, t] : network.parameters()) named.emplace(n, t);
  for (auto& [n, t] : network.buffers()) named.emplace(n, t);
  return named;
}

template <typename S>
void read_tensors(std::istream& in, Network<S>& network, bool stored_double,
                  const std::filesystem::path& path) {
  auto named = all_named(network);
  const auto count = read_pod<std::uint32_t>(in, path);
  if (count != named.size()) {
    throw FormatError("checkpoint holds " + std::to_string(count) + " tensors, network has " +
                      std::to_string(named.size()));
  }
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = read_bytes(in, read_pod<std::uint32_t>(in, path), path);
    const auto it = named.find(name);
    if (it == named.end()) throw FormatError("checkpoint tensor '" + name + "' is unknown");
    const auto rank = read_pod<std::uint32_t>(in, path);
    Shape shape;
    for (std::uint32_t r = 0; r < rank; ++r) shape.push_back(static_cast<Index>(read_pod<std::uint64_t>(in, path)));
    Tensor<S>& t = it->second;
    if (shape != t.shape()) {
      throw FormatError("tensor '" + name + "' has shape " + to_string(shape) + ", expected " +
                        to_string(t.shape()));
    }
    for (Index j = 0; j < t.size(); ++j) {
      t[j] = stored_double ? static_cast<S>(read_pod<double>(in, path))
                           : static_cast<S>(read_pod<float>(in, path));
    }
  }
}

}  // namespace

template <typename S>
void save_params(const Network<S>& network, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  nlohmann::json header = to_json(network.config());
  header["scalar"] = sizeof(S) == 8 ? "f64" : "f32";
  const std::string text = header.dump();
  out.write("PCNV", 4);
  write_pod<std::uint32_t>(out, kCheckpointVersion);
  write_pod<std::uint64_t>(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  NamedTensors<S> all = network.parameters();
  for (auto& b : network.buffers()) all.push_back(b);
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(all.size()));
  for (const auto& [name, t] : all) {
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (Index e : t.shape()) write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(e));
    out.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(S)));
  }
  if (!out) throw IoError("failed writing " + path.string());
}

NetworkConfig read_checkpoint_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return network_config_from_json(read_header(in, path));
}

template <typename S>
Network<S> load_params(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  const auto header = read_header(in, path);
  Network<S> network(network_config_from_json(header));
  read_tensors(in, network, header.value("scalar", std::string("f32")) == "f64", path);
  return network;
}

template <typename S>
void load_params_into(Network<S>& network, const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  const auto header = read_header(in, path);
  const NetworkConfig stored = network_config_from_json(header);
  if (stored.head.classes != network.config().head.classes) {
    throw FormatError("checkpoint has " + std::to_string(stored.head.classes) +
                      " classes, network expects " + std::to_string(network.config().head.classes));
  }
  nlohmann::json a = to_json(stored), b = to_json(network.config());
  a.erase("seed");
  b.erase("seed");
  if (a != b) throw FormatError("checkpoint config does not match the network config");
  read_tensors(in, network, header.value("scalar", std::string("f32")) == "f64", path);
}

#define POINTCONV_INSTANTIATE_NETWORK(S)                                              \
  template struct Level<S>;                                                           \
  template class EncodingModule<S>;                                                   \
  template class PropagationModule<S>;                                                \
  template class Head<S>;                                                             \
  template class Network<S>;                                                          \
  template void save_params(const Network<S>&, const std::filesystem::path&);         \
  template Network<S> load_params(const std::filesystem::path&);                      \
  template void load_params_into(Network<S>&, const std::filesystem::path&);

POINTCONV_INSTANTIATE_NETWORK(float)
POINTCONV_INSTANTIATE_NETWORK(double)

}  // namespace pointconv
