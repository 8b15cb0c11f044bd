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

#include "pointconv/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace pointconv {
namespace {

template <typename S>
using Impl = detail::TensorImpl<S>;
template <typename S>
using ImplPtr = std::shared_ptr<Impl<S>>;
template <typename S>
using Map = Eigen::Map<MatrixX<S>>;
template <typename S>
using ConstMap = Eigen::Map<const MatrixX<S>>;

// Gradient buffer of an input, or nullptr when it does not need one.
template <typename S>
S* grad_of(const ImplPtr<S>& impl) {
  return impl->requires_grad ? impl->grad_buffer() : nullptr;
}

template <typename S>
void record(std::string_view op, std::initializer_list<const Tensor<S>*> inputs, Tensor<S>& out,
            typename Tape<S>::BackwardFn fn) {
  Tape<S>::active().record(op, inputs, out, std::move(fn));
}

Shape strip_leading_ones(const Shape& s) {
  auto it = std::find_if(s.begin(), s.end(), [](Index e) { return e != 1; });
  return Shape(it, s.end());
}

bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

Shape broadcast_shape(const Shape& a, const Shape& b, std::string_view op) {
  if (a == b) return a;
  if (is_suffix(strip_leading_ones(b), a)) return a;
  if (is_suffix(strip_leading_ones(a), b)) return b;
  throw ShapeError(std::string(op) + ": cannot broadcast " + to_string(a) + " with " +
                   to_string(b));
}

// Elementwise binary op under trailing-suffix broadcasting: element i of the
// output reads a[i % |a|] and b[i % |b|]. The loops walk whole blocks of the
// smaller operand so no modulo appears in the inner loop.
template <typename Fn>
void broadcast_for(Index n, Index na, Index nb, Fn&& fn) {
  if (na == n && nb == n) {
    for (Index i = 0; i < n; ++i) fn(i, i, i);
  } else if (na == n) {
    for (Index base = 0; base < n; base += nb) {
      for (Index j = 0; j < nb; ++j) fn(base + j, base + j, j);
    }
  } else {
    for (Index base = 0; base < n; base += na) {
      for (Index j = 0; j < na; ++j) fn(base + j, j, base + j);
    }
  }
}

template <typename S, typename F, typename DA, typename DB>
Tensor<S> binary(std::string_view op, const Tensor<S>& a, const Tensor<S>& b, F f, DA dfa,
                 DB dfb) {
  Tensor<S> out(broadcast_shape(a.shape(), b.shape(), op));
  const Index n = out.size(), na = a.size(), nb = b.size();
  const S* pa = a.data();
  const S* pb = b.data();
  S* po = out.data();
  broadcast_for(n, na, nb, [&](Index i, Index ia, Index ib) { po[i] = f(pa[ia], pb[ib]); });
  if (Tape<S>::should_record({&a, &b})) {
    record<S>(op, {&a, &b}, out,
              [ia = a.impl(), ib = b.impl(), n, na, nb, dfa, dfb](const S* g) {
                const S* xa = ia->data->data();
                const S* xb = ib->data->data();
                if (S* ga = grad_of<S>(ia)) {
                  broadcast_for(n, na, nb, [&](Index i, Index ja, Index jb) {
                    ga[ja] += g[i] * dfa(xa[ja], xb[jb]);
                  });
                }
                if (S* gb = grad_of<S>(ib)) {
                  broadcast_for(n, na, nb, [&](Index i, Index ja, Index jb) {
                    gb[jb] += g[i] * dfb(xa[ja], xb[jb]);
                  });
                }
              });
  }
  return out;
}

template <typename S, typename F, typename D>
Tensor<S> unary(std::string_view op, const Tensor<S>& x, F f, D df) {
  Tensor<S> out(x.shape());
  const Index n = x.size();
  const S* px = x.data();
  S* po = out.data();
  for (Index i = 0; i < n; ++i) po[i] = f(px[i]);
  if (Tape<S>::should_record({&x})) {
    record<S>(op, {&x}, out, [ix = x.impl(), io = std::weak_ptr<Impl<S>>(out.impl()), n, df](const S* g) {
      S* gx = grad_of<S>(ix);
      if (!gx) return;
      const S* xv = ix->data->data();
      // The output is alive while its node runs; the tape holds it.
      const S* yv = io.lock()->data->data();
      for (Index i = 0; i < n; ++i) gx[i] += g[i] * df(xv[i], yv[i]);
    });
  }
  return out;
}

}  // namespace

template <typename S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.rank() < 2 || b.rank() < 2) {
    throw ShapeError("matmul: operands need rank >= 2, got " + to_string(a.shape()) + " and " +
                     to_string(b.shape()));
  }
  const Index m = a.dim(-2), k = a.dim(-1), n = b.dim(-1);
  const Shape abatch(a.shape().begin(), a.shape().end() - 2);
  const Shape bbatch(b.shape().begin(), b.shape().end() - 2);
  const Index na = numel(abatch), nb = numel(bbatch);
  if (k != b.dim(-2) || !(abatch == bbatch || na == 1 || nb == 1)) {
    throw ShapeError("matmul: cannot multiply " + to_string(a.shape()) + " by " +
                     to_string(b.shape()));
  }
  Shape shape = na > nb || (na == nb && abatch.size() >= bbatch.size()) ? abatch : bbatch;
  const Index batch = std::max(na, nb);
  shape.push_back(m);
  shape.push_back(n);
  Tensor<S> out(shape);
  for (Index i = 0; i < batch; ++i) {
    ConstMap<S> A(a.data() + (na == 1 ? 0 : i) * m * k, m, k);
    ConstMap<S> B(b.data() + (nb == 1 ? 0 : i) * k * n, k, n);
    Map<S> C(out.data() + i * m * n, m, n);
    C.noalias() = A * B;
  }
  if (Tape<S>::should_record({&a, &b})) {
    record<S>("matmul", {&a, &b}, out,
              [ia = a.impl(), ib = b.impl(), m, k, n, na, nb, batch](const S* g) {
                S* ga = grad_of<S>(ia);
                S* gb = grad_of<S>(ib);
                for (Index i = 0; i < batch; ++i) {
                  const Index oa = (na == 1 ? 0 : i) * m * k;
                  const Index ob = (nb == 1 ? 0 : i) * k * n;
                  ConstMap<S> A(ia->data->data() + oa, m, k);
                  ConstMap<S> B(ib->data->data() + ob, k, n);
                  ConstMap<S> G(g + i * m * n, m, n);
                  if (ga) Map<S>(ga + oa, m, k).noalias() += G * B.transpose();
                  if (gb) Map<S>(gb + ob, k, n).noalias() += A.transpose() * G;
                }
              });
  }
  return out;
}

template <typename S>
Tensor<S> linear(const Tensor<S>& x, const Tensor<S>& weight, const Tensor<S>& bias) {
  if (weight.rank() != 2 || bias.rank() != 1 || x.dim(-1) != weight.dim(0) ||
      bias.dim(0) != weight.dim(1)) {
    throw ShapeError("linear: incompatible shapes x" + to_string(x.shape()) + " weight" +
                     to_string(weight.shape()) + " bias" + to_string(bias.shape()));
  }
  const Index din = weight.dim(0), dout = weight.dim(1);
  const Index rows = x.size() / din;
  Shape shape = x.shape();
  shape.back() = dout;
  Tensor<S> out(shape);
  Map<S> Y(out.data(), rows, dout);
  Y.noalias() = x.matrix() * weight.matrix();
  Y.rowwise() += bias.vector().transpose();
  if (Tape<S>::should_record({&x, &weight, &bias})) {
    record<S>("linear", {&x, &weight, &bias}, out,
              [ix = x.impl(), iw = weight.impl(), ib = bias.impl(), rows, din, dout](const S* g) {
                ConstMap<S> G(g, rows, dout);
                ConstMap<S> X(ix->data->data(), rows, din);
                ConstMap<S> W(iw->data->data(), din, dout);
                if (S* gx = grad_of<S>(ix)) Map<S>(gx, rows, din).noalias() += G * W.transpose();
                if (S* gw = grad_of<S>(iw)) Map<S>(gw, din, dout).noalias() += X.transpose() * G;
                if (S* gb = grad_of<S>(ib)) {
                  Eigen::Map<VectorX<S>>(gb, dout) += G.colwise().sum().transpose();
                }
              });
  }
  return out;
}

template <typename S>
Tensor<S> relu(const Tensor<S>& x) {
  return unary<S>(
      "relu", x, [](S v) { return v > S(0) ? v : S(0); },
      [](S v, S) { return v > S(0) ? S(1) : S(0); });
}

template <typename S>
Tensor<S> sigmoid(const Tensor<S>& x) {
  return unary<S>(
      "sigmoid", x,
      [](S v) {
        // Split by sign so exp never overflows.
        if (v >= S(0)) return S(1) / (S(1) + std::exp(-v));
        const S e = std::exp(v);
        return e / (S(1) + e);
      },
      [](S, S y) { return y * (S(1) - y); });
}

template <typename S>
Tensor<S> neg(const Tensor<S>& x) {
  return unary<S>("neg", x, [](S v) { return -v; }, [](S, S) { return S(-1); });
}

template <typename S>
Tensor<S> scale(const Tensor<S>& x, S factor) {
  return unary<S>(
      "scale", x, [factor](S v) { return factor * v; }, [factor](S, S) { return factor; });
}

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  return binary<S>(
      "add", a, b, [](S x, S y) { return x + y; }, [](S, S) { return S(1); },
      [](S, S) { return S(1); });
}

template <typename S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
  return binary<S>(
      "sub", a, b, [](S x, S y) { return x - y; }, [](S, S) { return S(1); },
      [](S, S) { return S(-1); });
}

template <typename S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
  return binary<S>(
      "mul", a, b, [](S x, S y) { return x * y; }, [](S, S y) { return y; },
      [](S x, S) { return x; });
}

template <typename S>
Tensor<S> div(const Tensor<S>& a, const Tensor<S>& b) {
  for (S v : b.values()) {
    if (v == S(0)) throw ValueError("div: division by zero");
  }
  return binary<S>(
      "div", a, b, [](S x, S y) { return x / y; }, [](S, S y) { return S(1) / y; },
      [](S x, S y) { return -x / (y * y); });
}

template <typename S>
Tensor<S> reduce(const Tensor<S>& x, Index axis, Reduction fn) {
  const Index rank = x.rank();
  if (axis < 0) axis += rank;
  if (axis < 0 || axis >= rank) {
    throw ShapeError("reduce: axis out of range for shape " + to_string(x.shape()));
  }
  const auto& xs = x.shape();
  const Index len = xs[static_cast<std::size_t>(axis)];
  const Index outer = numel(Shape(xs.begin(), xs.begin() + axis));
  const Index inner = numel(Shape(xs.begin() + axis + 1, xs.end()));
  Shape shape = xs;
  shape.erase(shape.begin() + axis);
  if (shape.empty()) shape.push_back(1);
  Tensor<S> out(shape);
  std::vector<Index> argmax;
  if (fn == Reduction::kMax) argmax.resize(static_cast<std::size_t>(outer * inner));
  const S* px = x.data();
  S* po = out.data();
  for (Index o = 0; o < outer; ++o) {
    for (Index i = 0; i < inner; ++i) {
      const S* col = px + o * len * inner + i;
      S acc = col[0];
      Index best = 0;
      for (Index j = 1; j < len; ++j) {
        const S v = col[j * inner];
        if (fn == Reduction::kMax) {
          if (v > acc) acc = v, best = j;  // strict: ties keep the lowest index
        } else {
          acc += v;
        }
      }
      if (fn == Reduction::kMean) acc /= static_cast<S>(len);
      if (fn == Reduction::kMax) argmax[static_cast<std::size_t>(o * inner + i)] = best;
      po[o * inner + i] = acc;
    }
  }
  if (Tape<S>::should_record({&x})) {
    record<S>("reduce", {&x}, out,
              [ix = x.impl(), fn, outer, inner, len, argmax = std::move(argmax)](const S* g) {
                S* gx = grad_of<S>(ix);
                if (!gx) return;
                const S w = fn == Reduction::kMean ? S(1) / static_cast<S>(len) : S(1);
                for (Index o = 0; o < outer; ++o) {
                  for (Index i = 0; i < inner; ++i) {
                    const S go = g[o * inner + i];
                    S* col = gx + o * len * inner + i;
                    if (fn == Reduction::kMax) {
                      col[argmax[static_cast<std::size_t>(o * inner + i)] * inner] += go;
                    } else {
                      for (Index j = 0; j < len; ++j) col[j * inner] += w * go;
                    }
                  }
                }
              });
  }
  return out;
}

template <typename S>
Tensor<S> sum(const Tensor<S>& x) {
  return reduce(reshape(x, Shape{x.size()}), 0, Reduction::kSum);
}

template <typename S>
Tensor<S> reshape(const Tensor<S>& x, Shape shape) {
  Index known = 1;
  auto inferred = shape.end();
  for (auto it = shape.begin(); it != shape.end(); ++it) {
    if (*it == -1 && inferred == shape.end()) {
      inferred = it;
    } else {
      known *= *it;
    }
  }
  if (inferred != shape.end() && known > 0 && x.size() % known == 0) *inferred = x.size() / known;
  if (numel(shape) != x.size() ||
      std::any_of(shape.begin(), shape.end(), [](Index e) { return e <= 0; })) {
    throw ShapeError("reshape: cannot view " + to_string(x.shape()) + " as " + to_string(shape));
  }
  auto impl = std::make_shared<Impl<S>>();
  impl->shape = std::move(shape);
  impl->data = x.impl()->data;
  auto out = Tensor<S>::from_impl(std::move(impl));
  if (Tape<S>::should_record({&x})) {
    record<S>("reshape", {&x}, out, [ix = x.impl()](const S* g) {
      S* gx = grad_of<S>(ix);
      if (!gx) return;
      const std::size_t n = ix->data->size();
      for (std::size_t i = 0; i < n; ++i) gx[i] += g[i];
    });
  }
  return out;
}

template <typename S>
Tensor<S> concat(const Tensor<S>& a, const Tensor<S>& b) {
  const Shape la(a.shape().begin(), a.shape().end() - 1);
  const Shape lb(b.shape().begin(), b.shape().end() - 1);
  if (la != lb) {
    throw ShapeError("concat: leading extents differ, " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
  }
  const Index ca = a.dim(-1), cb = b.dim(-1), rows = numel(la);
  Shape shape = la;
  shape.push_back(ca + cb);
  Tensor<S> out(shape);
  Map<S> Y(out.data(), rows, ca + cb);
  Y.leftCols(ca) = a.matrix();
  Y.rightCols(cb) = b.matrix();
  if (Tape<S>::should_record({&a, &b})) {
    record<S>("concat", {&a, &b}, out, [ia = a.impl(), ib = b.impl(), rows, ca, cb](const S* g) {
      ConstMap<S> G(g, rows, ca + cb);
      if (S* ga = grad_of<S>(ia)) Map<S>(ga, rows, ca) += G.leftCols(ca);
      if (S* gb = grad_of<S>(ib)) Map<S>(gb, rows, cb) += G.rightCols(cb);
    });
  }
  return out;
}

template <typename S>
Tensor<S> gather_rows(const Tensor<S>& x, std::span<const Index> indices, const Shape& index_shape) {
  if (numel(index_shape) != static_cast<Index>(indices.size())) {
    throw ShapeError("gather_rows: index shape " + to_string(index_shape) + " does not hold " +
                     std::to_string(indices.size()) + " indices");
  }
  const Index c = x.dim(-1), rows = x.size() / c;
  for (Index idx : indices) {
    if (idx < -1 || idx >= rows) {
      throw ShapeError("gather_rows: index " + std::to_string(idx) + " out of range for " +
                       std::to_string(rows) + " rows");
    }
  }
  Shape shape = index_shape;
  shape.push_back(c);
  Tensor<S> out(shape);
  const S* px = x.data();
  S* po = out.data();
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] >= 0) std::copy_n(px + indices[r] * c, c, po + static_cast<Index>(r) * c);
  }
  if (Tape<S>::should_record({&x})) {
    record<S>("gather_rows", {&x}, out,
              [ix = x.impl(), idx = std::vector<Index>(indices.begin(), indices.end()), c](
                  const S* g) {
                S* gx = grad_of<S>(ix);
                if (!gx) return;
                for (std::size_t r = 0; r < idx.size(); ++r) {
                  if (idx[r] < 0) continue;
                  S* dst = gx + idx[r] * c;
                  const S* src = g + static_cast<Index>(r) * c;
                  for (Index j = 0; j < c; ++j) dst[j] += src[j];
                }
              });
  }
  return out;
}

template <typename S>
Tensor<S> weighted_sum(const Tensor<S>& x, const Tensor<S>& w) {
  if (x.rank() < 2 || w.rank() != x.rank() - 1 || w.dim(-1) != x.dim(-2) ||
      w.size() * x.dim(-1) != x.size()) {
    throw ShapeError("weighted_sum: incompatible shapes x" + to_string(x.shape()) + " w" +
                     to_string(w.shape()));
  }
  const Index k = x.dim(-2), c = x.dim(-1), regions = w.size() / k;
  Shape shape = x.shape();
  shape.erase(shape.end() - 2);
  Tensor<S> out(shape);
  for (Index r = 0; r < regions; ++r) {
    ConstMap<S> X(x.data() + r * k * c, k, c);
    Eigen::Map<const VectorX<S>> W(w.data() + r * k, k);
    Eigen::Map<VectorX<S>>(out.data() + r * c, c).noalias() = X.transpose() * W;
  }
  if (Tape<S>::should_record({&x, &w})) {
    record<S>("weighted_sum", {&x, &w}, out, [ix = x.impl(), iw = w.impl(), regions, k, c](const S* g) {
      S* gx = grad_of<S>(ix);
      S* gw = grad_of<S>(iw);
      for (Index r = 0; r < regions; ++r) {
        Eigen::Map<const VectorX<S>> G(g + r * c, c);
        Eigen::Map<const VectorX<S>> W(iw->data->data() + r * k, k);
        ConstMap<S> X(ix->data->data() + r * k * c, k, c);
        if (gx) Map<S>(gx + r * k * c, k, c).noalias() += W * G.transpose();
        if (gw) Eigen::Map<VectorX<S>>(gw + r * k, k).noalias() += X * G;
      }
    });
  }
  return out;
}

template <typename S>
Tensor<S> dropout(const Tensor<S>& x, double p, std::mt19937_64& rng) {
  if (p < 0.0 || p >= 1.0) throw ValueError("dropout: probability must lie in [0,1)");
  if (p == 0.0) return x;
  std::bernoulli_distribution keep(1.0 - p);
  const S factor = static_cast<S>(1.0 / (1.0 - p));
  std::vector<S> mask(static_cast<std::size_t>(x.size()));
  for (S& m : mask) m = keep(rng) ? factor : S(0);
  Tensor<S> out(x.shape());
  for (Index i = 0; i < x.size(); ++i) out[i] = x[i] * mask[static_cast<std::size_t>(i)];
  if (Tape<S>::should_record({&x})) {
    record<S>("dropout", {&x}, out, [ix = x.impl(), mask = std::move(mask)](const S* g) {
      S* gx = grad_of<S>(ix);
      if (!gx) return;
      for (std::size_t i = 0; i < mask.size(); ++i) gx[i] += g[i] * mask[i];
    });
  }
  return out;
}

template <typename S>
Tensor<S> batch_norm(const Tensor<S>& x, BatchNormState<S>& state, Mode mode) {
  const Index c = x.dim(-1);
  if (c != state.channels()) {
    throw ShapeError("batch_norm: input has " + std::to_string(c) + " channels, state has " +
                     std::to_string(state.channels()));
  }
  const Index rows = x.size() / c;
  const S eps = static_cast<S>(BatchNormState<S>::kEpsilon);
  ConstMap<S> X(x.data(), rows, c);
  VectorX<S> mean(c), invstd(c);
  if (mode == Mode::kTrain) {
    if (rows < 2) throw ValueError("batch_norm: training needs at least two values per channel");
    mean = X.colwise().mean().transpose();
    const VectorX<S> var =
        (X.rowwise() - mean.transpose()).array().square().colwise().sum().transpose() /
        static_cast<S>(rows);
    invstd = (var.array() + eps).rsqrt();
    const S m = static_cast<S>(BatchNormState<S>::kMomentum);
    const S unbias = static_cast<S>(rows) / static_cast<S>(rows - 1);
    state.running_mean.vector() = m * state.running_mean.vector() + (S(1) - m) * mean;
    state.running_var.vector() = m * state.running_var.vector() + (S(1) - m) * unbias * var;
  } else {
    mean = state.running_mean.vector();
    invstd = (state.running_var.vector().array() + eps).rsqrt();
  }
  auto xhat = std::make_shared<MatrixX<S>>((X.rowwise() - mean.transpose()) * invstd.asDiagonal());
  Tensor<S> out(x.shape());
  Map<S>(out.data(), rows, c) =
      ((*xhat) * state.gamma.vector().asDiagonal()).rowwise() + state.beta.vector().transpose();
  if (Tape<S>::should_record({&x, &state.gamma, &state.beta})) {
    record<S>("batch_norm", {&x, &state.gamma, &state.beta}, out,
              [ix = x.impl(), ig = state.gamma.impl(), ib = state.beta.impl(), xhat, invstd, rows,
               c, train = mode == Mode::kTrain](const S* g) {
                ConstMap<S> G(g, rows, c);
                const VectorX<S> sum_g = G.colwise().sum().transpose();
                const VectorX<S> sum_gx = G.cwiseProduct(*xhat).colwise().sum().transpose();
                if (S* gg = grad_of<S>(ig)) Eigen::Map<VectorX<S>>(gg, c) += sum_gx;
                if (S* gb = grad_of<S>(ib)) Eigen::Map<VectorX<S>>(gb, c) += sum_g;
                S* gx = grad_of<S>(ix);
                if (!gx) return;
                Eigen::Map<const VectorX<S>> gamma(ig->data->data(), c);
                const VectorX<S> scale_c = gamma.cwiseProduct(invstd);
                Map<S> GX(gx, rows, c);
                if (train) {
                  const S n = static_cast<S>(rows);
                  for (Index r = 0; r < rows; ++r) {
                    for (Index j = 0; j < c; ++j) {
                      GX(r, j) += scale_c(j) / n *
                                  (n * G(r, j) - sum_g(j) - (*xhat)(r, j) * sum_gx(j));
                    }
                  }
                } else {
                  GX += G * scale_c.asDiagonal();
                }
              });
  }
  return out;
}

template <typename S>
Tensor<S> softmax_cross_entropy(const Tensor<S>& logits, std::span<const int> labels) {
  if (logits.rank() != 2) {
    throw ShapeError("softmax_cross_entropy: logits must be [B,C], got " +
                     to_string(logits.shape()));
  }
  const Index b = logits.dim(0), c = logits.dim(1);
  if (static_cast<Index>(labels.size()) != b) {
    throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(b) + " rows");
  }
  for (int l : labels) {
    if (l < 0 || l >= c) {
      throw ValueError("softmax_cross_entropy: label " + std::to_string(l) + " outside [0," +
                       std::to_string(c) + ")");
    }
  }
  ConstMap<S> L(logits.data(), b, c);
  auto probs = std::make_shared<MatrixX<S>>(b, c);
  S total = 0;
  for (Index r = 0; r < b; ++r) {
    const S mx = L.row(r).maxCoeff();
    probs->row(r) = (L.row(r).array() - mx).exp();
    const S z = probs->row(r).sum();
    probs->row(r) /= z;
    total += std::log(z) + mx - L(r, labels[static_cast<std::size_t>(r)]);
  }
  Tensor<S> out = Tensor<S>::scalar(total / static_cast<S>(b));
  if (Tape<S>::should_record({&logits})) {
    record<S>("softmax_cross_entropy", {&logits}, out,
              [il = logits.impl(), probs, lab = std::vector<int>(labels.begin(), labels.end()), b,
               c](const S* g) {
                S* gl = grad_of<S>(il);
                if (!gl) return;
                const S w = g[0] / static_cast<S>(b);
                Map<S> GL(gl, b, c);
                GL += w * (*probs);
                for (Index r = 0; r < b; ++r) GL(r, lab[static_cast<std::size_t>(r)]) -= w;
              });
  }
  return out;
}

#define POINTCONV_INSTANTIATE_OPS(S)                                                          \
  template Tensor<S> matmul(const Tensor<S>&, const Tensor<S>&);                              \
  template Tensor<S> linear(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&);            \
  template Tensor<S> relu(const Tensor<S>&);                                                  \
  template Tensor<S> sigmoid(const Tensor<S>&);                                               \
  template Tensor<S> neg(const Tensor<S>&);                                                   \
  template Tensor<S> scale(const Tensor<S>&, S);                                              \
  template Tensor<S> add(const Tensor<S>&, const Tensor<S>&);                                 \
  template Tensor<S> sub(const Tensor<S>&, const Tensor<S>&);                                 \
  template Tensor<S> mul(const Tensor<S>&, const Tensor<S>&);                                 \
  template Tensor<S> div(const Tensor<S>&, const Tensor<S>&);                                 \
  template Tensor<S> reduce(const Tensor<S>&, Index, Reduction);                              \
  template Tensor<S> sum(const Tensor<S>&);                                                   \
  template Tensor<S> reshape(const Tensor<S>&, Shape);                                        \
  template Tensor<S> concat(const Tensor<S>&, const Tensor<S>&);                              \
  template Tensor<S> gather_rows(const Tensor<S>&, std::span<const Index>, const Shape&);     \
  template Tensor<S> weighted_sum(const Tensor<S>&, const Tensor<S>&);                        \
  template Tensor<S> dropout(const Tensor<S>&, double, std::mt19937_64&);                     \
  template Tensor<S> batch_norm(const Tensor<S>&, BatchNormState<S>&, Mode);                  \
  template Tensor<S> softmax_cross_entropy(const Tensor<S>&, std::span<const int>);

POINTCONV_INSTANTIATE_OPS(float)
POINTCONV_INSTANTIATE_OPS(double)

}  // namespace pointconv
