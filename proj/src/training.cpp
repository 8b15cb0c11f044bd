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

#include "pointconv/training.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numbers>
#include <numeric>
#include <ostream>

namespace pointconv {
namespace {

std::mt19937_64 epoch_rng(std::uint64_t seed, int epoch) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch)};
  return std::mt19937_64(seq);
}

template <typename S>
std::vector<int> argmax_rows(const Tensor<S>& logits) {
  const Index rows = logits.dim(0), cols = logits.dim(1);
  std::vector<int> out(static_cast<std::size_t>(rows));
  const S* p = logits.data();
  for (Index r = 0; r < rows; ++r) {
    out[static_cast<std::size_t>(r)] =
        static_cast<int>(std::max_element(p + r * cols, p + (r + 1) * cols) - (p + r * cols));
  }
  return out;
}


bool improves(const Metrics& m, const std::optional<Metrics>& best, Task task) {
  if (!best) return true;
  return task == Task::kClassify ? m.accuracy > best->accuracy : m.miou > best->miou;
}

}  // namespace

template <typename S>
void adam_step(std::span<const Tensor<S>> params, AdamState<S>& state) {
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(static_cast<std::size_t>(p.size()), S(0));
      state.v.emplace_back(static_cast<std::size_t>(p.size()), S(0));
    }
  }
  if (state.m.size() != params.size()) {
    throw ValueError("adam_step: optimizer state was built for " + std::to_string(state.m.size()) +
                     " parameters, got " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].has_grad()) {
      throw AutodiffError("adam_step: parameter " + std::to_string(i) + " has no gradient");
    }
  }
  ++state.step;
  const AdamOptions& o = state.options;
  const S b1 = static_cast<S>(o.beta1), b2 = static_cast<S>(o.beta2);
  const S c1 = S(1) - static_cast<S>(std::pow(o.beta1, static_cast<double>(state.step)));
  const S c2 = S(1) - static_cast<S>(std::pow(o.beta2, static_cast<double>(state.step)));
  const S lr = static_cast<S>(o.lr), eps = static_cast<S>(o.epsilon);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor<S> p = params[i];
    const auto g = p.grad();
    auto& m = state.m[i];
    auto& v = state.v[i];
    S* x = p.data();
    for (std::size_t j = 0; j < m.size(); ++j) {
      m[j] = b1 * m[j] + (S(1) - b1) * g[j];
      v[j] = b2 * v[j] + (S(1) - b2) * g[j] * g[j];
      const S m_hat = m[j] / c1;
      const S v_hat = v[j] / c2;
      x[j] -= lr * m_hat / (std::sqrt(v_hat) + eps);
    }
    p.zero_grad();
  }
}

template <typename S>
double clip_grad_norm(std::span<const Tensor<S>> params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params) {
    if (!p.has_grad()) continue;
    for (S g : p.grad()) sq += static_cast<double>(g) * static_cast<double>(g);
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0) {
    const S factor = static_cast<S>(max_norm / norm);
    for (auto p : params) {
      if (!p.has_grad()) continue;
      for (S& g : p.mutable_grad()) g *= factor;
    }
  }
  return norm;
}

template <typename S>
void rotate_cloud(PointCloud<S>& cloud, double angle, std::span<const Index> vector_features) {
  const Index d = cloud.dim();
  if (d != 2 && d != 3) throw ValueError("rotate_cloud: clouds must be 2D or 3D");
  const S c = static_cast<S>(std::cos(angle)), s = static_cast<S>(std::sin(angle));
  auto rotate_cols = [&](auto&& block) {
    for (Index i = 0; i < block.rows(); ++i) {
      const S x = block(i, 0), y = block(i, 1);
      block(i, 0) = c * x - s * y;
      block(i, 1) = s * x + c * y;
    }
  };
  rotate_cols(cloud.positions.leftCols(2));
  for (Index off : vector_features) {
    if (off < 0 || off + d > cloud.channels()) {
      throw ValueError("rotate_cloud: vector feature at column " + std::to_string(off) +
                       " exceeds " + std::to_string(cloud.channels()) + " channels");
    }
    rotate_cols(cloud.features.middleCols(off, 2));
  }
}

template <typename S>
PointCloud<S> augment(const PointCloud<S>& cloud, std::mt19937_64& rng, const AugmentOptions& o) {
  PointCloud<S> out = cloud;
  if (o.rotate) {
    const double angle = std::uniform_real_distribution<double>(0.0, 2.0 * std::numbers::pi)(rng);
    rotate_cloud(out, angle, o.vector_features);
  }
  if (o.jitter_sigma > 0) {
    std::normal_distribution<double> noise(0.0, o.jitter_sigma);
    S* p = out.positions.data();
    for (Index i = 0; i < out.positions.size(); ++i) p[i] += static_cast<S>(noise(rng));
    out.density.resize(0);
  }
  return out;
}

Metrics compute_metrics(std::span<const int> predicted, std::span<const int> truth, Index classes) {
  if (predicted.size() != truth.size()) {
    throw ValueError("compute_metrics: " + std::to_string(predicted.size()) + " predictions for " +
                     std::to_string(truth.size()) + " labels");
  }
  if (truth.empty()) throw ValueError("compute_metrics: no labels");
  if (classes < 1) throw ValueError("compute_metrics: need at least one class");
  const auto n_cls = static_cast<std::size_t>(classes);
  std::vector<std::size_t> inter(n_cls, 0), pred_count(n_cls, 0), true_count(n_cls, 0);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const int p = predicted[i], t = truth[i];
    if (p < 0 || t < 0 || p >= classes || t >= classes) {
      throw ValueError("compute_metrics: label out of range [0, " + std::to_string(classes) + ")");
    }
    ++pred_count[static_cast<std::size_t>(p)];
    ++true_count[static_cast<std::size_t>(t)];
    if (p == t) {
      ++correct;
      ++inter[static_cast<std::size_t>(t)];
    }
  }
  Metrics m;
  m.accuracy = static_cast<double>(correct) / static_cast<double>(truth.size());
  m.per_class_iou.resize(n_cls);
  double total = 0.0;
  int present = 0;
  for (std::size_t c = 0; c < n_cls; ++c) {
    const std::size_t uni = pred_count[c] + true_count[c] - inter[c];
    if (uni == 0) continue;
    m.per_class_iou[c] = static_cast<double>(inter[c]) / static_cast<double>(uni);
    total += *m.per_class_iou[c];
    ++present;
  }
  m.miou = present ? total / present : 0.0;
  return m;
}

template <typename S>
std::vector<int> batch_labels(const std::vector<PointCloud<S>>& batch, Task task) {
  std::vector<int> labels;
  for (const auto& cloud : batch) {
    if (task == Task::kClassify) {
      if (!cloud.label) throw ValueError("classification requires a label on every cloud");
      labels.push_back(*cloud.label);
    } else {
      if (static_cast<Index>(cloud.point_labels.size()) != cloud.size()) {
        throw ValueError("segmentation requires a label on every point");
      }
      labels.insert(labels.end(), cloud.point_labels.begin(), cloud.point_labels.end());
    }
  }
  return labels;
}

template <typename S>
Dataset<S> with_density(const Dataset<S>& dataset, double bandwidth) {
  Dataset<S> out = dataset;
  for (auto& cloud : out.clouds) kde_density(cloud, static_cast<S>(bandwidth));
  return out;
}

template <typename S>
Trainable<S> trainable(Network<S>& network) {
  Trainable<S> t;
  t.task = network.config().task;
  t.classes = network.config().head.classes;
  t.forward = [&network](const std::vector<PointCloud<S>>& batch, ForwardContext& ctx) {
    return network.forward(batch, ctx);
  };
  for (auto& [name, p] : network.parameters()) t.parameters.push_back(p);
  t.save = [&network](const std::filesystem::path& path) { save_params(network, path); };
  const auto& encoders = network.config().encoders;
  t.density_bandwidth = encoders.empty() ? 0.0 : encoders.front().bandwidth;
  return t;
}

template <typename S>
Metrics evaluate(Network<S>& network, const Dataset<S>& dataset, Index batch_size) {
  Trainable<S> model = trainable(network);
  return evaluate(model, dataset, batch_size);
}

template <typename S>
TrainResult train(Network<S>& network, const DatasetSplit<S>& data, const TrainOptions& o) {
  Trainable<S> model = trainable(network);
  return train(model, data, o);
}

template <typename S>
Metrics evaluate(Trainable<S>& model, const Dataset<S>& dataset, Index batch_size) {
  if (dataset.empty()) throw ValueError("evaluate: empty dataset");
  if (batch_size < 1) throw ValueError("evaluate: batch size must be positive");
  const Task task = model.task;
  const Index classes = model.classes;
  NoGradGuard no_grad;
  ForwardContext ctx{Mode::kEval, nullptr};
  std::vector<int> predicted, truth;
  double loss_sum = 0.0;
  const Index n = static_cast<Index>(dataset.clouds.size());
  for (Index start = 0; start < n; start += batch_size) {
    const Index stop = std::min(n, start + batch_size);
    std::vector<PointCloud<S>> batch(dataset.clouds.begin() + start, dataset.clouds.begin() + stop);
    const auto labels = batch_labels(batch, task);
    const Tensor<S> logits = model.forward(batch, ctx);
    loss_sum += static_cast<double>(softmax_cross_entropy(logits, labels).item()) *
                static_cast<double>(labels.size());
    const auto pred = argmax_rows(logits);
    predicted.insert(predicted.end(), pred.begin(), pred.end());
    truth.insert(truth.end(), labels.begin(), labels.end());
  }
  Metrics m = compute_metrics(predicted, truth, classes);
  m.loss = loss_sum / static_cast<double>(truth.size());
  return m;
}

void write_log_csv(std::ostream& out, std::span<const EpochRecord> log) {
  out << "epoch,split,loss,accuracy,miou\n";
  out << std::setprecision(9);
  for (const auto& r : log) {
    out << r.epoch << ',' << r.split << ',' << r.metrics.loss << ',' << r.metrics.accuracy << ','
        << r.metrics.miou << '\n';
  }
}

std::string_view to_string(LrSchedule schedule) {
  return schedule == LrSchedule::kCosine ? "cosine" : "constant";
}

LrSchedule parse_lr_schedule(std::string_view name) {
  if (name == "cosine") return LrSchedule::kCosine;
  if (name == "constant") return LrSchedule::kConstant;
  throw ValueError("unknown learning-rate schedule '" + std::string(name) + "' (expected cosine or constant)");
}

double scheduled_lr(double lr, LrSchedule schedule, int epoch, int epochs) {
  if (schedule == LrSchedule::kConstant || epochs <= 0) return lr;
  const double t = static_cast<double>(epoch - 1) / static_cast<double>(epochs);
  return 0.5 * lr * (1.0 + std::cos(std::numbers::pi * t));
}

template <typename S>
TrainResult train(Trainable<S>& model, const DatasetSplit<S>& data, const TrainOptions& o) {
  if (data.train.empty()) throw ValueError("train: empty training set");
  if (o.epochs < 0) throw ValueError("train: epochs must be non-negative");
  if (o.batch_size < 2) throw ValueError("train: batch size must be at least 2 (batch norm)");
  const Task task = model.task;
  if (data.train.task != task) throw ValueError("train: dataset task does not match the model");
  const double bandwidth = model.density_bandwidth;

  // Input-level density is fixed unless positions are jittered.
  const bool jitter = o.augment && o.augmentation.jitter_sigma > 0;
  const bool cache = bandwidth > 0;
  const Dataset<S> train_set = jitter || !cache ? data.train : with_density(data.train, bandwidth);
  const Dataset<S> test_set =
      data.test.empty() || !cache ? data.test : with_density(data.test, bandwidth);

  const std::vector<Tensor<S>>& params = model.parameters;
  AdamState<S> adam;
  adam.options = o.adam;
  TrainResult result;
  const Index n = static_cast<Index>(train_set.clouds.size());
  const Index classes = model.classes;

  for (int epoch = 1; epoch <= o.epochs; ++epoch) {
    std::mt19937_64 rng = epoch_rng(o.seed, epoch);
    adam.options.lr = scheduled_lr(o.adam.lr, o.schedule, epoch, o.epochs);
    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index(0));
    std::shuffle(order.begin(), order.end(), rng);
    for (Index i = n; i < o.batch_size; ++i) order.push_back(order[static_cast<std::size_t>(i % n)]);

    std::vector<int> predicted, truth;
    double loss_sum = 0.0;
    const Index total = static_cast<Index>(order.size());
    for (Index start = 0; start + 1 < total; start += o.batch_size) {
      const Index stop = std::min(total, start + o.batch_size);
      std::vector<PointCloud<S>> batch;
      for (Index i = start; i < stop; ++i) {
        const auto& cloud = train_set.clouds[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])];
        batch.push_back(o.augment ? augment(cloud, rng, o.augmentation) : cloud);
      }
      const auto labels = batch_labels(batch, task);
      Tape<S>::active().clear();
      ForwardContext ctx{Mode::kTrain, &rng};
      const Tensor<S> logits = model.forward(batch, ctx);
      const Tensor<S> loss = softmax_cross_entropy(logits, labels);
      const double value = static_cast<double>(loss.item());
      if (!std::isfinite(value)) {
        Tape<S>::active().clear();
        throw Error("train: non-finite loss at epoch " + std::to_string(epoch) + ", batch starting at " +
                    std::to_string(start) + " (lower the learning rate or check the input data)");
      }
      backward(loss);
      clip_grad_norm<S>(params, o.clip_norm);
      adam_step<S>(params, adam);
      loss_sum += value * static_cast<double>(labels.size());
      const auto pred = argmax_rows(logits);
      predicted.insert(predicted.end(), pred.begin(), pred.end());
      truth.insert(truth.end(), labels.begin(), labels.end());
    }

    Metrics train_metrics = compute_metrics(predicted, truth, classes);
    train_metrics.loss = loss_sum / static_cast<double>(truth.size());
    result.log.push_back({epoch, "train", train_metrics});
    if (o.progress) {
      *o.progress << "epoch " << epoch << " train loss " << train_metrics.loss << " acc "
                  << train_metrics.accuracy;
    }
    if (o.evaluate_test && !test_set.empty()) {
      const Metrics test_metrics = evaluate(model, test_set, o.batch_size);
      result.log.push_back({epoch, "test", test_metrics});
      result.final_test = test_metrics;
      if (o.progress) {
        *o.progress << " | test loss " << test_metrics.loss << " acc " << test_metrics.accuracy
                    << " miou " << test_metrics.miou;
      }
      if (improves(test_metrics, result.best_test, task)) {
        result.best_test = test_metrics;
        result.best_epoch = epoch;
        if (o.checkpoint && model.save) model.save(*o.checkpoint);
      }
    }
    if (o.progress) *o.progress << '\n' << std::flush;
  }
  if (o.checkpoint && model.save && !result.best_test) model.save(*o.checkpoint);
  return result;
}

#define POINTCONV_INSTANTIATE_TRAINING(S)                                                          \
  template void adam_step(std::span<const Tensor<S>>, AdamState<S>&);                              \
  template double clip_grad_norm(std::span<const Tensor<S>>, double);                              \
  template void rotate_cloud(PointCloud<S>&, double, std::span<const Index>);                      \
  template PointCloud<S> augment(const PointCloud<S>&, std::mt19937_64&, const AugmentOptions&);   \
  template Trainable<S> trainable(Network<S>&);                                                    \
  template Metrics evaluate(Trainable<S>&, const Dataset<S>&, Index);                              \
  template Metrics evaluate(Network<S>&, const Dataset<S>&, Index);                                \
  template TrainResult train(Trainable<S>&, const DatasetSplit<S>&, const TrainOptions&);          \
  template std::vector<int> batch_labels(const std::vector<PointCloud<S>>&, Task);                 \
  template Dataset<S> with_density(const Dataset<S>&, double);                                     \
  template TrainResult train(Network<S>&, const DatasetSplit<S>&, const TrainOptions&);

POINTCONV_INSTANTIATE_TRAINING(float)
POINTCONV_INSTANTIATE_TRAINING(double)

}  // namespace pointconv
