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


// pointconv: train, evaluate and verify PointConv networks from the command line.
//
// Exit codes: 0 success, 1 verification failure, 2 usage or config error,
// 3 I/O or file format error.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "pointconv/data.hpp"
#include "pointconv/errors.hpp"
#include "pointconv/experiment.hpp"
#include "pointconv/grid_cnn.hpp"
#include "pointconv/network.hpp"
#include "pointconv/training.hpp"
#include "pointconv/verify.hpp"

namespace pc = pointconv;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kOk = 0;
constexpr int kVerifyFailed = 1;
constexpr int kUsage = 2;
constexpr int kIo = 3;

struct Globals {
  std::optional<std::uint64_t> seed;
  int threads = 1;
  std::string config;
  std::vector<std::string> sets;
};

std::uint64_t seed_or(const Globals& g, std::uint64_t fallback) { return g.seed.value_or(fallback); }

json read_config_file(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw pc::IoError("cannot open config " + path);
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw pc::ValueError("config " + path + " is not valid JSON");
  if (!j.is_object()) throw pc::ValueError("config " + path + " must hold a JSON object");
  return j;
}

bool has_path(const json& doc, const std::string& dotted) {
  const json* node = &doc;
  std::stringstream parts(dotted);
  std::string part;
  while (std::getline(parts, part, '.')) {
    if (!node->is_object() || !node->contains(part)) return false;
    node = &(*node)[part];
  }
  return true;
}

bool set_mentions(const std::vector<std::string>& sets, const std::string& key) {
  for (const auto& s : sets) {
    if (s.rfind(key + "=", 0) == 0) return true;
  }
  return false;
}

// Layering: task defaults < config file < command defaults (only for keys the
// file and --set leave alone) < --set < --seed < command flags.
struct ConfigBuilder {
  const Globals& globals;
  json file;
  std::vector<std::string> command_defaults;
  std::vector<std::string> flags;

  explicit ConfigBuilder(const Globals& g) : globals(g), file(read_config_file(g.config)) {}

  void fallback(const std::string& key, const std::string& value) {
    if (!has_path(file, key) && !set_mentions(globals.sets, key)) command_defaults.push_back(key + "=" + value);
  }
  void flag(const std::string& key, const std::string& value) { flags.push_back(key + "=" + value); }

  pc::ExperimentConfig build() const {
    std::vector<std::string> all = command_defaults;
    all.insert(all.end(), globals.sets.begin(), globals.sets.end());
    if (globals.seed) all.push_back("seed=" + std::to_string(*globals.seed));
    all.insert(all.end(), flags.begin(), flags.end());
    return pc::resolve_experiment(file, all);
  }
};

std::string fixed(double v, int digits = 4) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

std::string sci(double v) {
  std::ostringstream s;
  s << std::scientific << std::setprecision(3) << v;
  return s.str();
}

void print_metrics(const pc::Metrics& m, bool segment) {
  std::cout << "loss " << fixed(m.loss) << " accuracy " << fixed(m.accuracy);
  if (segment) {
    std::cout << " miou " << fixed(m.miou) << "\nper-class iou";
    for (std::size_t c = 0; c < m.per_class_iou.size(); ++c) {
      std::cout << ' ' << c << ':' << (m.per_class_iou[c] ? fixed(*m.per_class_iou[c]) : std::string("n/a"));
    }
  }
  std::cout << '\n';
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string task;
  std::optional<int> epochs;
  std::optional<double> lr;
  std::optional<int> batch_size;
  std::string checkpoint;
  std::string log;
  bool f64 = false;
  bool quiet = false;
};

int cmd_train(const Globals& g, const TrainArgs& a) {
  ConfigBuilder b(g);
  if (!a.task.empty()) b.flag("task", a.task);
  if (a.epochs) b.flag("train.epochs", std::to_string(*a.epochs));
  if (a.lr) b.flag("train.lr", json(*a.lr).dump());
  if (a.batch_size) b.flag("train.batch_size", std::to_string(*a.batch_size));
  if (!a.checkpoint.empty()) b.flag("output.checkpoint", json(a.checkpoint).dump());
  if (!a.log.empty()) b.flag("output.log", json(a.log).dump());
  if (a.f64) b.flag("scalar", "\"f64\"");
  const pc::ExperimentConfig c = b.build();

  std::cout << "config " << pc::to_json(c).dump() << '\n';
  const pc::ExperimentOutcome out = pc::run_experiment(c, a.quiet ? nullptr : &std::cout);
  const bool segment = c.task == pc::ExperimentTask::kSegment;
  std::cout << "parameters " << out.parameter_count << "\ntime " << fixed(out.seconds, 1) << " s\n";
  if (out.result.final_test) {
    std::cout << "final test ";
    print_metrics(*out.result.final_test, segment);
    std::cout << "best test epoch " << out.result.best_epoch << ' '
              << (segment ? "miou " + fixed(out.result.best_test->miou)
                          : "accuracy " + fixed(out.result.best_test->accuracy))
              << '\n';
  }
  if (!c.output.checkpoint.empty() && c.model == pc::ModelKind::kPointConv) {
    std::cout << "checkpoint " << c.output.checkpoint << '\n';
  }
  if (!c.output.log.empty()) std::cout << "log " << c.output.log << '\n';
  return kOk;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string checkpoint;
  std::string manifest;
  std::string task;
  bool f64 = false;
};

template <typename S>
int eval_typed(const pc::ExperimentConfig& c, const EvalArgs& a) {
  pc::Network<S> network = pc::load_params<S>(a.checkpoint);
  pc::Dataset<S> data = a.manifest.empty() ? pc::load_experiment_data<S>(c).test : pc::read_dataset<S>(a.manifest);
  if (data.empty()) throw pc::ValueError("evaluation set is empty");
  if (data.task != network.config().task) throw pc::ValueError("dataset task does not match the checkpoint");
  std::cout << "evaluated " << data.size() << " clouds\n";
  print_metrics(pc::evaluate(network, data), network.config().task == pc::Task::kSegment);
  return kOk;
}

int cmd_eval(const Globals& g, const EvalArgs& a) {
  const pc::NetworkConfig stored = pc::read_checkpoint_config(a.checkpoint);
  ConfigBuilder b(g);
  std::string task = a.task;
  if (task.empty() && !has_path(b.file, "task") && !set_mentions(g.sets, "task")) {
    task = stored.task == pc::Task::kSegment ? "segment" : stored.input_dim == 2 ? "image" : "classify";
  }
  if (!task.empty()) b.flag("task", task);
  const pc::ExperimentConfig c = b.build();
  return a.f64 ? eval_typed<double>(c, a) : eval_typed<float>(c, a);
}

// ---------------------------------------------------------------------------

int cmd_gradcheck(const Globals& g, std::vector<std::uint64_t> seeds, double tolerance) {
  if (g.seed) seeds = {*g.seed};
  bool ok = true;
  std::cout << std::left << std::setw(6) << "seed" << std::setw(24) << "module" << "max_rel_err\n";
  for (std::uint64_t s : seeds) {
    for (const auto& e : pc::gradcheck_suite(s)) {
      const bool pass = e.error < tolerance;
      ok = ok && pass;
      std::cout << std::left << std::setw(6) << s << std::setw(24) << e.name << sci(e.error)
                << (pass ? "  ok" : "  FAIL") << '\n';
    }
  }
  std::cout << (ok ? "PASS" : "FAIL") << " max_rel_err < " << tolerance << '\n';
  return ok ? kOk : kVerifyFailed;
}

int cmd_equivalence(const Globals& g, int trials, const std::string& dims_text, bool f64) {
  const pc::ConvDims dims = pc::parse_conv_dims(dims_text);
  if (trials < 1) throw pc::ValueError("--trials must be positive");
  const std::uint64_t seed = seed_or(g, 1);
  const pc::EquivalenceReport r = f64 ? pc::equivalence_trials<double>(dims, trials, seed)
                                      : pc::equivalence_trials<float>(dims, trials, seed);
  std::cout << "equivalence dims " << pc::to_string(dims) << " trials " << r.trials << " scalar "
            << (f64 ? "f64" : "f32") << " seed " << seed << '\n'
            << "forward  max_rel_err " << sci(r.max_forward_error) << '\n'
            << "gradient max_rel_err " << sci(r.max_gradient_error) << " (worst single tensor "
            << sci(r.max_tensor_gradient_error) << ")\n"
            << (r.passed() ? "PASS" : "FAIL") << " max_rel_err < " << r.tolerance << '\n';
  return r.passed() ? kOk : kVerifyFailed;
}

int cmd_bench_memory(const Globals& g, const std::string& dims_text, const std::string& measure_text) {
  const pc::ConvDims dims = pc::parse_conv_dims(dims_text);
  const pc::ConvDims desk = pc::parse_conv_dims(measure_text);
  const pc::AnalyticMemory m = pc::analytic_memory(dims);
  std::cout << "analytic, dims " << pc::to_string(dims) << ", 4-byte scalars, GiB = 2^30 bytes\n"
            << "  naive filters       " << std::setprecision(6) << m.naive_filter_bytes / pc::kGiB << " GiB\n"
            << "  efficient gram      " << m.efficient_gram_bytes / pc::kGiB << " GiB\n"
            << "  efficient + kernel  " << m.efficient_bytes() / pc::kGiB << " GiB\n"
            << "  ratio               " << m.ratio() << " (C_mid/(K*C_out) = "
            << double(dims.c_mid) / double(dims.k * dims.c_out) << ")\n";

  const pc::MeasuredMemory mm = pc::measure_memory<float>(desk, seed_or(g, 1));
  const auto elems = [](std::size_t bytes) { return bytes / sizeof(float); };
  std::cout << "measured, dims " << pc::to_string(desk) << ", float\n"
            << "  naive largest buffer      " << mm.naive_largest_bytes << " bytes ("
            << elems(mm.naive_largest_bytes) << " elements)\n"
            << "  efficient largest buffer  " << mm.efficient_largest_bytes << " bytes ("
            << elems(mm.efficient_largest_bytes) << " elements)\n"
            << "  naive peak                " << mm.naive_peak_bytes << " bytes\n"
            << "  efficient peak            " << mm.efficient_peak_bytes << " bytes\n"
            << "  dominant ratio            " << mm.dominant_ratio() << " (C_mid/(K*C_out) = "
            << double(desk.c_mid) / double(desk.k * desk.c_out) << ")\n";
  return kOk;
}

int cmd_grid_equiv(const Globals& g, pc::Index side, pc::Index kernel, double ox, double oy) {
  if (side < kernel + 2) throw pc::ValueError("--side must be at least kernel + 2");
  const std::uint64_t seed = seed_or(g, 1);
  const pc::GridReport r = pc::grid_equivalence<float>(side, kernel, seed, ox, oy);
  std::cout << "grid-equiv side " << r.side << " kernel " << r.kernel << " seed " << seed << " interior "
            << r.interior_points << " max_rel_err " << sci(r.max_error) << '\n'
            << (r.passed() ? "PASS" : "FAIL") << " max_rel_err < 1e-05\n";
  return r.passed() ? kOk : kVerifyFailed;
}

// ---------------------------------------------------------------------------

int cmd_ablate(const Globals& g, std::optional<int> epochs) {
  ConfigBuilder b(g);
  b.fallback("task", "\"segment\"");
  b.fallback("train.epochs", "8");
  b.fallback("output", "{}");
  if (epochs) b.flag("train.epochs", std::to_string(*epochs));
  const pc::ExperimentConfig c = b.build();
  const auto rows = pc::ablate_density(c, &std::cout);
  bool in_range = true;
  std::cout << "\n" << std::left << std::setw(14) << "variant" << std::setw(10) << "miou" << "accuracy\n";
  for (const auto& r : rows) {
    const char* name = r.mode == pc::DensityMode::kMlp        ? "mlp"
                       : r.mode == pc::DensityMode::kDisabled ? "no-density"
                                                              : "raw-density";
    in_range = in_range && r.test.miou >= 0.0 && r.test.miou <= 1.0;
    std::cout << std::left << std::setw(14) << name << std::setw(10) << fixed(r.test.miou)
              << fixed(r.test.accuracy) << '\n';
  }
  std::cout << "\nmIoU  no-density  raw-density  mlp\n      " << fixed(rows[1].test.miou) << "      "
            << fixed(rows[2].test.miou) << "       " << fixed(rows[0].test.miou) << '\n';
  return in_range ? kOk : kVerifyFailed;
}

int cmd_sweep(const Globals& g, std::vector<pc::Index> c_mids, int trials, std::optional<int> epochs) {
  ConfigBuilder b(g);
  b.fallback("train.epochs", "5");
  b.fallback("output", "{}");
  if (epochs) b.flag("train.epochs", std::to_string(*epochs));
  const pc::ExperimentConfig c = b.build();
  const auto rows = pc::sweep_cmid(c, c_mids, trials, &std::cout);
  const char* metric = c.task == pc::ExperimentTask::kSegment ? "miou" : "accuracy";
  std::cout << '\n';
  for (const auto& r : rows) {
    std::cout << "c_mid " << std::setw(3) << r.c_mid << "  " << metric << ' ' << fixed(r.mean) << " +- "
              << fixed(r.sd) << "  (";
    for (std::size_t i = 0; i < r.accuracies.size(); ++i) std::cout << (i ? " " : "") << fixed(r.accuracies[i]);
    std::cout << ")\n";
  }
  return kOk;
}

// ---------------------------------------------------------------------------

struct VizArgs {
  std::string checkpoint;
  std::string out = "filters";
  std::string layer = "encoder0";
  pc::Index side = 32;
  double extent = 0.3;
  int axis = 2;
  double offset = 0.0;
  std::string format = "pgm";
};

int cmd_viz(const VizArgs& a) {
  pc::Network<float> net = pc::load_params<float>(a.checkpoint);
  pc::WeightNet<float>* wn = nullptr;
  pc::Index c_out = 0;
  auto index_of = [&](const std::string& prefix) -> std::optional<std::size_t> {
    if (a.layer.rfind(prefix, 0) != 0) return std::nullopt;
    const std::string rest = a.layer.substr(prefix.size());
    if (rest.empty() || rest.find_first_not_of("0123456789") != std::string::npos) {
      throw pc::ValueError("--layer must look like encoder0 or propagator1");
    }
    return std::stoul(rest);
  };
  if (auto i = index_of("encoder")) {
    if (*i >= net.encoders.size()) throw pc::ValueError("checkpoint has " + std::to_string(net.encoders.size()) + " encoders");
    wn = &net.encoders[*i].conv.weight_net;
    c_out = net.encoders[*i].conv.config().c_out;
  } else if (auto j = index_of("propagator")) {
    if (*j >= net.propagators.size()) throw pc::ValueError("checkpoint has " + std::to_string(net.propagators.size()) + " propagators");
    wn = &net.propagators[*j].conv.weight_net;
    c_out = net.propagators[*j].conv.config().c_out;
  } else {
    throw pc::ValueError("--layer must look like encoder0 or propagator1");
  }
  if (a.format != "pgm" && a.format != "csv") throw pc::ValueError("--format must be pgm or csv");
  const auto images = pc::sample_weight_function(*wn, net.config().input_dim, pc::SamplingPlane{a.axis, a.offset},
                                                 a.side, a.extent);
  const auto paths = pc::write_weight_images(images, c_out, a.layer, a.out,
                                             a.format == "pgm" ? pc::ImageFormat::kPgm : pc::ImageFormat::kCsv);
  std::cout << "wrote " << paths.size() << " images of " << a.side << "x" << a.side << " to " << a.out << '\n';
  return kOk;
}

int cmd_gen_data(const Globals& g, const std::string& task, const std::string& out, bool pgm) {
  ConfigBuilder b(g);
  if (!task.empty()) b.flag("task", task);
  const pc::ExperimentConfig c = b.build();
  if (c.data.source == pc::DataSource::kManifest) throw pc::ValueError("gen-data needs a synthetic data source");
  const fs::path dir(out);
  fs::create_directories(dir);
  const pc::DatasetSplit<float> split = pc::load_experiment_data<float>(c);
  pc::write_dataset(split.train, dir / "train.json", "train");
  pc::write_dataset(split.test, dir / "test.json", "test");
  std::cout << "wrote " << split.train.size() << " train and " << split.test.size() << " test clouds to "
            << dir.string() << '\n';
  if (pgm) {
    if (c.task != pc::ExperimentTask::kImage) throw pc::ValueError("--pgm applies to the image task only");
    const fs::path images = dir / "images";
    fs::create_directories(images);
    const auto bars = pc::generate_bar_images(c.data.train, c.data.side, c.data.image_noise, pc::mix_seed(c.data.seed, 1));
    for (std::size_t i = 0; i < bars.size(); ++i) {
      pc::write_pnm(bars[i].first, images / ("train_" + std::to_string(i) + "_" + std::to_string(bars[i].second) + ".pgm"));
    }
    std::cout << "wrote " << bars.size() << " training images to " << images.string() << '\n';
  }
  return kOk;
}

int cmd_img2cloud(const std::string& input, const std::string& output, bool raw, std::optional<int> label) {
  const pc::Image image = pc::read_pnm(input);
  pc::ImageCloudSpec spec;
  spec.normalize = !raw;
  pc::PointCloud<float> cloud = pc::image_to_pointcloud<float>(image, spec);
  if (label) cloud.label = *label;
  pc::save_cloud(cloud, output);
  std::cout << "wrote " << cloud.size() << " points with " << cloud.channels() << " channels to " << output << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PointConv point-cloud networks: training, evaluation and verification"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "Seed for data, initialization and sampling");
  app.add_option("--threads", g.threads, "Worker threads; computation is single-threaded, so only 1 changes nothing")
      ->check(CLI::PositiveNumber);
  app.add_option("--config", g.config, "Experiment config (JSON, see docs/config.md)");
  app.add_option("--set", g.sets, "Config override key=value, repeatable (e.g. train.epochs=5)");

  std::function<int()> run;

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Train a network; writes a checkpoint and a CSV log");
  t->add_option("--task", train.task, "classify, segment or image")->check(CLI::IsMember({"classify", "segment", "image"}));
  t->add_option("--epochs", train.epochs)->check(CLI::NonNegativeNumber);
  t->add_option("--lr", train.lr);
  t->add_option("--batch-size", train.batch_size);
  t->add_option("--checkpoint", train.checkpoint);
  t->add_option("--log", train.log);
  t->add_flag("--f64", train.f64, "Use 64-bit scalars");
  t->add_flag("--quiet", train.quiet, "Suppress per-epoch lines");
  t->callback([&] { run = [&] { return cmd_train(g, train); }; });

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Evaluate a checkpoint on a test split or manifest");
  e->add_option("--checkpoint", ev.checkpoint)->required();
  e->add_option("--manifest", ev.manifest, "Dataset manifest; default: the configured test split");
  e->add_option("--task", ev.task)->check(CLI::IsMember({"classify", "segment", "image"}));
  e->add_flag("--f64", ev.f64);
  e->callback([&] { run = [&] { return cmd_eval(g, ev); }; });

  std::vector<std::uint64_t> gc_seeds{1, 2, 3};
  double gc_tol = 1e-4;
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient checks at 64-bit");
  gc->add_option("--seeds", gc_seeds)->delimiter(',');
  gc->add_option("--tolerance", gc_tol);
  gc->callback([&] { run = [&] { return cmd_gradcheck(g, gc_seeds, gc_tol); }; });

  int eq_trials = 100;
  std::string eq_dims = "2,64,8,4,4,8";
  bool eq_f64 = false;
  auto* eq = app.add_subcommand("equivalence", "Naive vs. efficient PointConv, forward and gradients");
  eq->add_option("--trials", eq_trials);
  eq->add_option("--dims", eq_dims, "B,N,K,C_in,C_mid,C_out");
  eq->add_flag("--f64", eq_f64, "64-bit scalars with the 1e-10 bound");
  eq->callback([&] { run = [&] { return cmd_equivalence(g, eq_trials, eq_dims, eq_f64); }; });

  std::string bm_dims = "32,512,32,64,32,64";
  std::string bm_measure = "2,64,32,64,32,64";
  auto* bm = app.add_subcommand("bench-memory", "Filter memory of both evaluation orders");
  bm->add_option("--dims", bm_dims, "Analytic dims B,N,K,C_in,C_mid,C_out");
  bm->add_option("--measure-dims", bm_measure, "Dims for the instrumented run");
  bm->callback([&] { run = [&] { return cmd_bench_memory(g, bm_dims, bm_measure); }; });

  std::optional<int> ab_epochs;
  auto* ab = app.add_subcommand("ablate-density", "Retrain with mlp, no and raw density scaling");
  ab->add_option("--epochs", ab_epochs, "Epochs per variant (default 8)")->check(CLI::NonNegativeNumber);
  ab->callback([&] { run = [&] { return cmd_ablate(g, ab_epochs); }; });

  std::vector<pc::Index> sw_cmids{4, 8, 16, 32};
  int sw_trials = 3;
  std::optional<int> sw_epochs;
  auto* sw = app.add_subcommand("sweep-cmid", "Test accuracy over C_mid values, mean and sd over trials");
  sw->add_option("--c-mids", sw_cmids)->delimiter(',');
  sw->add_option("--trials", sw_trials);
  sw->add_option("--epochs", sw_epochs, "Epochs per run (default 5)")->check(CLI::NonNegativeNumber);
  sw->callback([&] { run = [&] { return cmd_sweep(g, sw_cmids, sw_trials, sw_epochs); }; });

  VizArgs viz;
  auto* vz = app.add_subcommand("viz-filters", "Sample a layer's learned weight function into images");
  vz->add_option("--checkpoint", viz.checkpoint)->required();
  vz->add_option("--out", viz.out, "Output directory");
  vz->add_option("--layer", viz.layer, "encoderI or propagatorI");
  vz->add_option("--side", viz.side, "Image side in samples")->check(CLI::PositiveNumber);
  vz->add_option("--extent", viz.extent, "Half-width of the sampled offset square")->check(CLI::PositiveNumber);
  vz->add_option("--axis", viz.axis, "Coordinate held fixed for 3D layers")->check(CLI::Range(0, 2));
  vz->add_option("--offset", viz.offset, "Value of the fixed coordinate");
  vz->add_option("--format", viz.format)->check(CLI::IsMember({"pgm", "csv"}));
  vz->callback([&] { run = [&] { return cmd_viz(viz); }; });

  std::string gd_task, gd_out;
  bool gd_pgm = false;
  auto* gd = app.add_subcommand("gen-data", "Write a synthetic dataset as clouds plus JSON manifests");
  gd->add_option("--task", gd_task)->check(CLI::IsMember({"classify", "segment", "image"}));
  gd->add_option("--out", gd_out)->required();
  gd->add_flag("--pgm", gd_pgm, "Also write the training images (image task)");
  gd->callback([&] { run = [&] { return cmd_gen_data(g, gd_task, gd_out, gd_pgm); }; });

  std::string ic_in, ic_out;
  bool ic_raw = false;
  std::optional<int> ic_label;
  auto* ic = app.add_subcommand("img2cloud", "Convert a PGM/PPM image into a 2D point cloud");
  ic->add_option("--input", ic_in)->required();
  ic->add_option("--output", ic_out, ".xyz or .pcb")->required();
  ic->add_flag("--raw", ic_raw, "Keep pixel-unit coordinates");
  ic->add_option("--label", ic_label, "Cloud label stored with .pcb output");
  ic->callback([&] { run = [&] { return cmd_img2cloud(ic_in, ic_out, ic_raw, ic_label); }; });

  pc::Index ge_side = 8, ge_kernel = 3;
  double ge_ox = 0.0, ge_oy = 0.0;
  auto* ge = app.add_subcommand("grid-equiv", "PointConv on a regular grid vs. sliding-window convolution");
  ge->add_option("--side", ge_side);
  ge->add_option("--kernel", ge_kernel, "1, 3 or 5");
  ge->add_option("--origin-x", ge_ox);
  ge->add_option("--origin-y", ge_oy);
  ge->callback([&] { run = [&] { return cmd_grid_equiv(g, ge_side, ge_kernel, ge_ox, ge_oy); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    return run();
  } catch (const pc::IoError& err) {
    std::cerr << "io error: " << err.what() << '\n';
    return kIo;
  } catch (const pc::FormatError& err) {
    std::cerr << "format error: " << err.what() << '\n';
    return kIo;
  } catch (const fs::filesystem_error& err) {
    std::cerr << "io error: " << err.what() << '\n';
    return kIo;
  } catch (const pc::ValueError& err) {
    std::cerr << "error: " << err.what() << '\n';
    return kUsage;
  } catch (const pc::ShapeError& err) {
    std::cerr << "error: " << err.what() << '\n';
    return kUsage;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << '\n';
    return kVerifyFailed;
  }
}
