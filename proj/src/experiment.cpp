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


#include "pointconv/experiment.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <ostream>
#include <set>

#include "pointconv/errors.hpp"

namespace pointconv {

namespace {

using nlohmann::json;

std::string_view scalar_name(ScalarType s) { return s == ScalarType::kFloat64 ? "f64" : "f32"; }

ScalarType parse_scalar(std::string_view name) {
  if (name == "f32") return ScalarType::kFloat32;
  if (name == "f64") return ScalarType::kFloat64;
  throw ValueError("scalar must be f32 or f64, got '" + std::string(name) + "'");
}

std::string_view model_name(ModelKind m) { return m == ModelKind::kGridCnn ? "grid_cnn" : "pointconv"; }

ModelKind parse_model(std::string_view name) {
  if (name == "pointconv") return ModelKind::kPointConv;
  if (name == "grid_cnn") return ModelKind::kGridCnn;
  throw ValueError("model must be pointconv or grid_cnn, got '" + std::string(name) + "'");
}

std::string_view source_name(DataSource s) {
  switch (s) {
    case DataSource::kShapes: return "shapes";
    case DataSource::kBars: return "bars";
    case DataSource::kManifest: return "manifest";
  }
  return "shapes";
}

DataSource parse_source(std::string_view name) {
  if (name == "shapes") return DataSource::kShapes;
  if (name == "bars") return DataSource::kBars;
  if (name == "manifest") return DataSource::kManifest;
  throw ValueError("data.source must be shapes, bars or manifest, got '" + std::string(name) + "'");
}

void check_keys(const json& object, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!object.is_object()) throw ValueError("config '" + where + "' must be an object");
  const std::set<std::string> known(allowed.begin(), allowed.end());
  for (const auto& [key, value] : object.items()) {
    if (!known.count(key)) {
      throw ValueError("unknown config key '" + (where.empty() ? key : where + "." + key) + "'");
    }
  }
}

json head_json(const HeadSpec& h) {
  return {{"hidden", h.hidden}, {"dropout", h.dropout}, {"classes", h.classes}};
}

json network_json(const NetworkConfig& c) {
  json j = to_json(c);
  j.erase("seed");
  return j;
}

json train_json(int epochs, bool augment, bool rotate, double jitter, std::vector<Index> vector_features) {
  return {{"epochs", epochs},     {"batch_size", 8},  {"lr", 1e-3},
          {"lr_schedule", "cosine"}, {"clip_norm", 10.0},    {"augment", augment}, {"rotate", rotate},
          {"jitter", jitter},     {"vector_features", vector_features}};
}

ExperimentTask task_of(const json& doc) {
  if (!doc.is_object() || !doc.contains("task")) return ExperimentTask::kClassify;
  if (!doc["task"].is_string()) throw ValueError("config 'task' must be a string");
  return parse_experiment_task(doc["task"].get<std::string>());
}

Index data_classes(const ExperimentConfig& c) {
  switch (c.task) {
    case ExperimentTask::kClassify: return 4;
    case ExperimentTask::kSegment: return 4;
    case ExperimentTask::kImage: return 2;
  }
  return 2;
}

}  // namespace

std::string_view to_string(ExperimentTask task) {
  switch (task) {
    case ExperimentTask::kClassify: return "classify";
    case ExperimentTask::kSegment: return "segment";
    case ExperimentTask::kImage: return "image";
  }
  return "classify";
}

ExperimentTask parse_experiment_task(std::string_view name) {
  if (name == "classify") return ExperimentTask::kClassify;
  if (name == "segment") return ExperimentTask::kSegment;
  if (name == "image") return ExperimentTask::kImage;
  throw ValueError("task must be classify, segment or image, got '" + std::string(name) + "'");
}

json default_experiment_json(ExperimentTask task) {
  json j;
  j["task"] = std::string(to_string(task));
  j["scalar"] = "f32";
  j["seed"] = 1;
  j["model"] = "pointconv";
  const std::string name(to_string(task));
  j["output"] = {{"checkpoint", name + ".ckpt"}, {"log", name + "_log.csv"}};
  switch (task) {
    case ExperimentTask::kClassify:
      j["data"] = {{"source", "shapes"}, {"points", 512}, {"train_per_class", 100},
                   {"test_per_class", 25}, {"noise", 0.01}};
      j["network"] = network_json(default_classification_config(3, 3, 4));
      j["train"] = train_json(30, true, true, 0.02, {0});
      break;
    case ExperimentTask::kSegment:
      j["data"] = {{"source", "shapes"}, {"points", 1024}, {"train_per_class", 100},
                   {"test_per_class", 25}, {"noise", 0.01}};
      j["network"] = network_json(default_segmentation_config(3, 6, 4));
      j["train"] = train_json(40, true, false, 0.02, {0, 3});
      break;
    case ExperimentTask::kImage: {
      const GridCnnConfig g;
      j["data"] = {{"source", "bars"}, {"side", g.side}, {"train", 512}, {"test", 128},
                   {"image_noise", 20.0}};
      j["grid_cnn"] = {{"kernel", g.kernel}, {"channels", g.channels}, {"head", head_json(g.head)}};
      j["network"] = nullptr;  // matched to grid_cnn
      j["train"] = train_json(20, false, false, 0.0, {});
      break;
    }
  }
  return j;
}

void apply_override(json& doc, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    throw ValueError("override must look like key=value, got '" + std::string(assignment) + "'");
  }
  const std::string key(assignment.substr(0, eq));
  const std::string text(assignment.substr(eq + 1));
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;

  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ValueError("empty component in override key '" + key + "'");
    json* child = nullptr;
    if (node->is_array()) {
      std::size_t index = 0;
      try {
        std::size_t used = 0;
        index = std::stoul(part, &used);
        if (used != part.size()) throw std::invalid_argument(part);
      } catch (const std::exception&) {
        throw ValueError("override key '" + key + "': '" + part + "' is not an array index");
      }
      if (index >= node->size()) {
        throw ValueError("override key '" + key + "': index " + part + " out of range");
      }
      child = &(*node)[index];
    } else {
      if (node->is_null()) *node = json::object();
      if (!node->is_object()) {
        throw ValueError("override key '" + key + "': '" + part + "' indexes a scalar");
      }
      child = &(*node)[part];
    }
    if (dot == std::string::npos) {
      *child = value;
      return;
    }
    node = child;
    start = dot + 1;
  }
}

ExperimentConfig resolve_experiment(const json& user, std::span<const std::string> overrides) {
  if (!user.is_null() && !user.is_object()) throw ValueError("config must be a JSON object");
  json probe = user.is_null() ? json::object() : user;
  for (const auto& o : overrides) apply_override(probe, o);
  json doc = default_experiment_json(task_of(probe));
  if (!user.is_null()) doc.merge_patch(user);
  for (const auto& o : overrides) apply_override(doc, o);
  return experiment_from_json(doc);
}

ExperimentConfig experiment_from_json(const json& doc) {
  try {
    check_keys(doc, "", {"task", "scalar", "seed", "model", "data", "network", "grid_cnn", "train", "output"});
    ExperimentConfig c;
    c.task = parse_experiment_task(doc.value("task", std::string("classify")));
    c.scalar = parse_scalar(doc.value("scalar", std::string("f32")));
    c.seed = doc.value("seed", std::uint64_t{1});
    c.model = parse_model(doc.value("model", std::string("pointconv")));

    const json data = doc.value("data", json::object());
    check_keys(data, "data", {"source", "points", "train_per_class", "test_per_class", "noise", "side",
                              "train", "test", "image_noise", "train_manifest", "test_manifest", "seed"});
    DataConfig& d = c.data;
    d.source = parse_source(data.value("source", std::string(
                                                     c.task == ExperimentTask::kImage ? "bars" : "shapes")));
    d.points = data.value("points", d.points);
    d.train_per_class = data.value("train_per_class", d.train_per_class);
    d.test_per_class = data.value("test_per_class", d.test_per_class);
    d.noise = data.value("noise", d.noise);
    d.side = data.value("side", d.side);
    d.train = data.value("train", d.train);
    d.test = data.value("test", d.test);
    d.image_noise = data.value("image_noise", d.image_noise);
    d.train_manifest = data.value("train_manifest", std::string());
    d.test_manifest = data.value("test_manifest", std::string());
    d.seed = data.value("seed", c.seed);

    const json grid = doc.value("grid_cnn", json::object());
    check_keys(grid, "grid_cnn", {"kernel", "channels", "head", "seed"});
    c.grid_cnn.side = d.side;
    c.grid_cnn.kernel = grid.value("kernel", c.grid_cnn.kernel);
    c.grid_cnn.channels = grid.value("channels", c.grid_cnn.channels);
    if (grid.contains("head")) {
      const json& h = grid["head"];
      check_keys(h, "grid_cnn.head", {"hidden", "dropout", "classes"});
      c.grid_cnn.head.hidden = h.value("hidden", c.grid_cnn.head.hidden);
      c.grid_cnn.head.dropout = h.value("dropout", c.grid_cnn.head.dropout);
      c.grid_cnn.head.classes = h.value("classes", c.grid_cnn.head.classes);
    }
    c.grid_cnn.seed = grid.value("seed", c.seed);

    if (doc.contains("network") && !doc["network"].is_null()) {
      json net = doc["network"];
      check_keys(net, "network", {"task", "input_dim", "input_channels", "encoders", "propagators",
                                  "head", "weight_net_layers", "weight_net_batch_norm", "seed"});
      if (!net.contains("seed")) net["seed"] = c.seed;
      c.network = network_config_from_json(net);
    } else if (c.task == ExperimentTask::kImage && d.source == DataSource::kBars) {
      c.network = matched_point_config(c.grid_cnn);
      c.network->seed = c.seed;
    }

    const json train = doc.value("train", json::object());
    check_keys(train, "train", {"epochs", "batch_size", "lr", "lr_schedule", "clip_norm", "augment", "rotate", "jitter",
                                "vector_features", "seed"});
    TrainConfig& t = c.train;
    t.epochs = train.value("epochs", t.epochs);
    t.batch_size = train.value("batch_size", t.batch_size);
    t.lr = train.value("lr", t.lr);
    if (train.contains("lr_schedule")) {
      if (!train["lr_schedule"].is_string()) throw ValueError("train.lr_schedule must be a string");
      t.lr_schedule = parse_lr_schedule(train["lr_schedule"].get<std::string>());
    }
    t.clip_norm = train.value("clip_norm", t.clip_norm);
    t.augment = train.value("augment", t.augment);
    t.rotate = train.value("rotate", t.rotate);
    t.jitter = train.value("jitter", t.jitter);
    t.vector_features = train.value("vector_features", t.vector_features);
    t.seed = train.value("seed", c.seed);

    const json output = doc.value("output", json::object());
    check_keys(output, "output", {"checkpoint", "log"});
    c.output.checkpoint = output.value("checkpoint", std::string());
    c.output.log = output.value("log", std::string());

    // Cross-field checks.
    if (t.epochs < 0) throw ValueError("train.epochs must be non-negative");
    if (t.batch_size < 2) throw ValueError("train.batch_size must be at least 2");
    if (!(t.lr >= 0)) throw ValueError("train.lr must be non-negative");
    if (!(t.clip_norm > 0)) throw ValueError("train.clip_norm must be positive");
    if (!(t.jitter >= 0)) throw ValueError("train.jitter must be non-negative");
    if (c.model == ModelKind::kGridCnn && c.task != ExperimentTask::kImage) {
      throw ValueError("model grid_cnn needs task image");
    }
    if (c.model == ModelKind::kGridCnn && d.source != DataSource::kBars) {
      throw ValueError("model grid_cnn needs data.source bars");
    }
    switch (d.source) {
      case DataSource::kShapes:
        if (c.task == ExperimentTask::kImage) throw ValueError("task image needs data.source bars or manifest");
        if (d.points < 8 || d.train_per_class < 1 || d.test_per_class < 0) {
          throw ValueError("data: need points >= 8, train_per_class >= 1, test_per_class >= 0");
        }
        break;
      case DataSource::kBars:
        if (c.task != ExperimentTask::kImage) throw ValueError("data.source bars needs task image");
        if (d.side < 4 || d.train < 1 || d.test < 0) {
          throw ValueError("data: need side >= 4, train >= 1, test >= 0");
        }
        break;
      case DataSource::kManifest:
        if (d.train_manifest.empty()) throw ValueError("data.source manifest needs data.train_manifest");
        break;
    }
    if (c.network) {
      validate(*c.network);
      const Task want = c.task == ExperimentTask::kSegment ? Task::kSegment : Task::kClassify;
      if (c.network->task != want) {
        throw ValueError("network.task does not match task " + std::string(to_string(c.task)));
      }
      if (d.source != DataSource::kManifest && c.network->head.classes != data_classes(c)) {
        throw ValueError("network.head.classes must be " + std::to_string(data_classes(c)) +
                         " for the built-in " + std::string(to_string(c.task)) + " data");
      }
    }
    return c;
  } catch (const json::exception& e) {
    throw ValueError(std::string("invalid config: ") + e.what());
  }
}

json to_json(const ExperimentConfig& c) {
  json j;
  j["task"] = std::string(to_string(c.task));
  j["scalar"] = std::string(scalar_name(c.scalar));
  j["seed"] = c.seed;
  j["model"] = std::string(model_name(c.model));
  const DataConfig& d = c.data;
  j["data"] = {{"source", std::string(source_name(d.source))}, {"seed", d.seed}};
  switch (d.source) {
    case DataSource::kShapes:
      j["data"].update({{"points", d.points}, {"train_per_class", d.train_per_class},
                        {"test_per_class", d.test_per_class}, {"noise", d.noise}});
      break;
    case DataSource::kBars:
      j["data"].update({{"side", d.side}, {"train", d.train}, {"test", d.test}, {"image_noise", d.image_noise}});
      break;
    case DataSource::kManifest:
      j["data"].update({{"train_manifest", d.train_manifest}, {"test_manifest", d.test_manifest}});
      break;
  }
  j["network"] = c.network ? to_json(*c.network) : json(nullptr);
  if (c.task == ExperimentTask::kImage) {
    j["grid_cnn"] = {{"kernel", c.grid_cnn.kernel},
                     {"channels", c.grid_cnn.channels},
                     {"head", head_json(c.grid_cnn.head)},
                     {"seed", c.grid_cnn.seed}};
  }
  const TrainConfig& t = c.train;
  j["train"] = {{"epochs", t.epochs},       {"batch_size", t.batch_size}, {"lr", t.lr},
                {"lr_schedule", to_string(t.lr_schedule)}, {"clip_norm", t.clip_norm}, {"augment", t.augment},       {"rotate", t.rotate},
                {"jitter", t.jitter},       {"vector_features", t.vector_features}, {"seed", t.seed}};
  j["output"] = {{"checkpoint", c.output.checkpoint}, {"log", c.output.log}};
  return j;
}

template <typename S>
DatasetSplit<S> load_experiment_data(const ExperimentConfig& c) {
  const DataConfig& d = c.data;
  switch (d.source) {
    case DataSource::kShapes: {
      ShapeDatasetOptions o = c.task == ExperimentTask::kSegment ? segmentation_shapes(d.points, d.seed)
                                                                 : classification_shapes(d.points, d.seed);
      o.train_per_class = d.train_per_class;
      o.test_per_class = d.test_per_class;
      o.noise_sigma = d.noise;
      return generate_shapes<S>(o);
    }
    case DataSource::kBars: {
      BarImageOptions o;
      o.side = d.side;
      o.train = d.train;
      o.test = d.test;
      o.noise_sigma = d.image_noise;
      o.seed = d.seed;
      return generate_bar_dataset<S>(o);
    }
    case DataSource::kManifest: {
      DatasetSplit<S> split;
      split.train = read_dataset<S>(d.train_manifest);
      if (!d.test_manifest.empty()) split.test = read_dataset<S>(d.test_manifest);
      const Task want = c.task == ExperimentTask::kSegment ? Task::kSegment : Task::kClassify;
      if (split.train.task != want || (!split.test.empty() && split.test.task != want)) {
        throw ValueError("manifest task does not match task " + std::string(to_string(c.task)));
      }
      return split;
    }
  }
  throw ValueError("unknown data source");
}

TrainOptions train_options(const ExperimentConfig& c) {
  TrainOptions o;
  o.epochs = c.train.epochs;
  o.batch_size = c.train.batch_size;
  o.adam.lr = c.train.lr;
  o.schedule = c.train.lr_schedule;
  o.clip_norm = c.train.clip_norm;
  o.augment = c.train.augment;
  o.augmentation.jitter_sigma = c.train.jitter;
  o.augmentation.rotate = c.train.rotate;
  o.augmentation.vector_features = c.train.vector_features;
  o.seed = c.train.seed;
  if (!c.output.checkpoint.empty()) o.checkpoint = c.output.checkpoint;
  return o;
}

namespace {

template <typename S>
NetworkConfig network_for(const ExperimentConfig& c, const Dataset<S>& train) {
  if (c.network) return *c.network;
  if (train.empty()) throw ValueError("training manifest is empty");
  const auto& cloud = train.clouds.front();
  NetworkConfig n = c.task == ExperimentTask::kSegment
                        ? default_segmentation_config(cloud.dim(), cloud.channels(), train.classes)
                        : default_classification_config(cloud.dim(), cloud.channels(), train.classes);
  n.seed = c.seed;
  return n;
}

void ensure_parent(const std::filesystem::path& p) {
  if (p.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(p.parent_path(), ec);
    if (ec) throw IoError("cannot create " + p.parent_path().string() + ": " + ec.message());
  }
}

template <typename S>
ExperimentOutcome run_typed(const ExperimentConfig& c, std::ostream* progress) {
  const DatasetSplit<S> data = load_experiment_data<S>(c);
  TrainOptions options = train_options(c);
  options.progress = progress;
  if (options.checkpoint) ensure_parent(*options.checkpoint);

  ExperimentOutcome out;
  const auto start = std::chrono::steady_clock::now();
  if (c.model == ModelKind::kGridCnn) {
    if (options.checkpoint && progress) *progress << "grid_cnn has no checkpoint format; none written\n";
    options.checkpoint.reset();
    GridCnn<S> cnn(c.grid_cnn);
    for (const auto& [name, p] : cnn.parameters()) out.parameter_count += p.size();
    Trainable<S> model = trainable(cnn);
    out.result = train(model, data, options);
  } else {
    const NetworkConfig nc = network_for(c, data.train);
    if (nc.head.classes < data.train.classes) {
      throw ValueError("network has " + std::to_string(nc.head.classes) + " classes, data has " +
                       std::to_string(data.train.classes));
    }
    Network<S> network(nc);
    out.parameter_count = network.parameter_count();
    out.result = train(network, data, options);
  }
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  if (!c.output.log.empty()) {
    ensure_parent(c.output.log);
    std::ofstream log(c.output.log);
    if (!log) throw IoError("cannot write " + c.output.log);
    write_log_csv(log, out.result.log);
    if (!log) throw IoError("failed writing " + c.output.log);
  }
  return out;
}

}  // namespace

ExperimentOutcome run_experiment(const ExperimentConfig& c, std::ostream* progress) {
  return c.scalar == ScalarType::kFloat64 ? run_typed<double>(c, progress) : run_typed<float>(c, progress);
}

std::vector<AblationRow> ablate_density(const ExperimentConfig& base, std::ostream* progress) {
  if (base.model != ModelKind::kPointConv) throw ValueError("ablate-density needs model pointconv");
  std::vector<AblationRow> rows;
  for (DensityMode mode : {DensityMode::kMlp, DensityMode::kDisabled, DensityMode::kRaw}) {
    ExperimentConfig c = base;
    c.output = {};
    if (!c.network) throw ValueError("ablate-density needs an explicit network config");
    for (auto& e : c.network->encoders) e.density = mode;
    for (auto& p : c.network->propagators) p.density = mode;
    if (progress) *progress << "density " << to_string(mode) << '\n';
    const ExperimentOutcome out = run_experiment(c, progress);
    if (!out.result.final_test) throw ValueError("ablate-density needs a test split");
    rows.push_back({mode, *out.result.final_test});
  }
  return rows;
}

std::vector<SweepRow> sweep_cmid(const ExperimentConfig& base, std::span<const Index> c_mids, int trials,
                                 std::ostream* progress) {
  if (base.model != ModelKind::kPointConv) throw ValueError("sweep-cmid needs model pointconv");
  if (!base.network) throw ValueError("sweep-cmid needs an explicit network config");
  if (trials < 1) throw ValueError("sweep-cmid needs at least one trial");
  std::vector<SweepRow> rows;
  for (Index c_mid : c_mids) {
    if (c_mid < 1) throw ValueError("C_mid must be positive");
    SweepRow row;
    row.c_mid = c_mid;
    for (int t = 0; t < trials; ++t) {
      ExperimentConfig c = base;
      c.output = {};
      c.network->seed = base.seed + static_cast<std::uint64_t>(t);
      c.train.seed = base.seed + static_cast<std::uint64_t>(t);
      for (auto& e : c.network->encoders) e.c_mid = c_mid;
      for (auto& p : c.network->propagators) p.c_mid = c_mid;
      if (progress) *progress << "c_mid " << c_mid << " trial " << t << '\n';
      const ExperimentOutcome out = run_experiment(c, progress);
      if (!out.result.final_test) throw ValueError("sweep-cmid needs a test split");
      row.accuracies.push_back(c.task == ExperimentTask::kSegment ? out.result.final_test->miou
                                                                  : out.result.final_test->accuracy);
    }
    const double n = static_cast<double>(row.accuracies.size());
    row.mean = std::accumulate(row.accuracies.begin(), row.accuracies.end(), 0.0) / n;
    double ss = 0.0;
    for (double a : row.accuracies) ss += (a - row.mean) * (a - row.mean);
    row.sd = row.accuracies.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
    rows.push_back(row);
  }
  return rows;
}

template DatasetSplit<float> load_experiment_data(const ExperimentConfig&);
template DatasetSplit<double> load_experiment_data(const ExperimentConfig&);

}  // namespace pointconv
