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

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <new>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "pointconv/errors.hpp"

namespace pointconv {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

Index numel(const Shape& shape);
std::string to_string(const Shape& shape);

// ---------------------------------------------------------------------------
// Allocation accounting
//
// Every tensor buffer (values and gradients) goes through CountingAllocator,
// which keeps per-thread byte counters. AllocationScope reads them.

struct AllocationCounters {
  std::size_t live = 0;
  std::size_t peak = 0;
  std::size_t largest = 0;
};

namespace detail {
AllocationCounters& allocation_counters();
void note_allocation(std::size_t bytes);
void note_deallocation(std::size_t bytes);
}  // namespace detail

/// Records the peak live tensor bytes (relative to the live count at
/// construction) and the largest single tensor allocation made on this thread
/// while the scope is alive. Scopes nest.
class AllocationScope {
 public:
  AllocationScope();
  ~AllocationScope();
  AllocationScope(const AllocationScope&) = delete;
  AllocationScope& operator=(const AllocationScope&) = delete;

  std::size_t peak_bytes() const;
  std::size_t largest_bytes() const;

 private:
  AllocationCounters saved_;
  std::size_t baseline_;
};

// Buffers are 64-byte aligned.
inline constexpr std::size_t kBufferAlignment = 64;

template <typename T>
struct CountingAllocator {
  using value_type = T;

  CountingAllocator() noexcept = default;
  template <typename U>
  CountingAllocator(const CountingAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) {
    T* p = static_cast<T*>(::operator new(n * sizeof(T), std::align_val_t{kBufferAlignment}));
    detail::note_allocation(n * sizeof(T));
    return p;
  }
  void deallocate(T* p, std::size_t n) noexcept {
    detail::note_deallocation(n * sizeof(T));
    ::operator delete(p, n * sizeof(T), std::align_val_t{kBufferAlignment});
  }

  template <typename U>
  bool operator==(const CountingAllocator<U>&) const noexcept { return true; }
};

template <typename Scalar>
using Buffer = std::vector<Scalar, CountingAllocator<Scalar>>;

// ---------------------------------------------------------------------------
// Gradient mode

namespace detail {
int& no_grad_depth();
}

/// Disables tape recording on this thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard() { ++detail::no_grad_depth(); }
  ~NoGradGuard() { --detail::no_grad_depth(); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

inline bool grad_enabled() { return detail::no_grad_depth() == 0; }

// ---------------------------------------------------------------------------
// Tensor

namespace detail {

template <typename Scalar>
struct TensorImpl {
  Shape shape;
  std::shared_ptr<Buffer<Scalar>> data;
  std::unique_ptr<Buffer<Scalar>> grad;
  bool requires_grad = false;
  // Generation of the tape that produced this value; 0 for leaves.
  std::uint64_t tape_generation = 0;
  std::size_t tape_index = 0;

  Scalar* grad_buffer() {
    if (!grad) grad = std::make_unique<Buffer<Scalar>>(data->size(), Scalar(0));
    return grad->data();
  }
};

}  // namespace detail

/// Dense row-major tensor handle. Copies share storage; use clone() for a deep
/// copy. The shape of a tensor never changes; reshape() returns a new handle.
template <typename Scalar>
class Tensor {
 public:
  using Impl = detail::TensorImpl<Scalar>;
  using value_type = Scalar;

  Tensor() = default;
  explicit Tensor(Shape shape) : Tensor(std::move(shape), Scalar(0)) {}
  Tensor(Shape shape, Scalar fill) {
    const Index n = checked_numel(shape);
    impl_ = std::make_shared<Impl>();
    impl_->shape = std::move(shape);
    impl_->data = std::make_shared<Buffer<Scalar>>(static_cast<std::size_t>(n), fill);
  }
  Tensor(Shape shape, std::span<const Scalar> values) {
    const Index n = checked_numel(shape);
    if (static_cast<Index>(values.size()) != n) {
      throw ShapeError("tensor of shape " + to_string(shape) + " needs " + std::to_string(n) +
                       " values, got " + std::to_string(values.size()));
    }
    impl_ = std::make_shared<Impl>();
    impl_->shape = std::move(shape);
    impl_->data = std::make_shared<Buffer<Scalar>>(values.begin(), values.end());
  }
  Tensor(Shape shape, std::initializer_list<Scalar> values)
      : Tensor(std::move(shape), std::span<const Scalar>(values.begin(), values.size())) {}

  static Tensor scalar(Scalar value) { return Tensor(Shape{1}, value); }

  /// Wraps an existing implementation; used by operations and the tape.
  static Tensor from_impl(std::shared_ptr<Impl> impl) {
    Tensor t;
    t.impl_ = std::move(impl);
    return t;
  }

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  Index rank() const { return static_cast<Index>(impl_->shape.size()); }
  Index dim(Index axis) const {
    if (axis < 0) axis += rank();
    if (axis < 0 || axis >= rank()) {
      throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " +
                       to_string(shape()));
    }
    return impl_->shape[static_cast<std::size_t>(axis)];
  }
  Index size() const { return static_cast<Index>(impl_->data->size()); }

  Scalar* data() { return impl_->data->data(); }
  const Scalar* data() const { return impl_->data->data(); }
  std::span<Scalar> values() { return {data(), static_cast<std::size_t>(size())}; }
  std::span<const Scalar> values() const { return {data(), static_cast<std::size_t>(size())}; }
  Scalar& operator[](Index i) { return (*impl_->data)[static_cast<std::size_t>(i)]; }
  Scalar operator[](Index i) const { return (*impl_->data)[static_cast<std::size_t>(i)]; }

  Scalar item() const {
    if (size() != 1) throw ShapeError("item() on tensor of shape " + to_string(shape()));
    return (*impl_->data)[0];
  }

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool on = true) {
    impl_->requires_grad = on;
    return *this;
  }

  bool has_grad() const { return impl_->grad != nullptr; }
  std::span<const Scalar> grad() const {
    if (!impl_->grad) throw AutodiffError("tensor has no gradient");
    return {impl_->grad->data(), impl_->grad->size()};
  }
  std::span<Scalar> mutable_grad() {
    impl_->grad_buffer();
    return {impl_->grad->data(), impl_->grad->size()};
  }
  void zero_grad() { impl_->grad.reset(); }

  /// Same storage, cut from the tape and not requiring gradients.
  Tensor detach() const {
    auto impl = std::make_shared<Impl>();
    impl->shape = impl_->shape;
    impl->data = impl_->data;
    return from_impl(std::move(impl));
  }

  Tensor clone() const {
    auto impl = std::make_shared<Impl>();
    impl->shape = impl_->shape;
    impl->data = std::make_shared<Buffer<Scalar>>(*impl_->data);
    return from_impl(std::move(impl));
  }

  /// View as a matrix with the last axis as columns.
  Eigen::Map<MatrixX<Scalar>> matrix() { return {data(), rows(), cols()}; }
  Eigen::Map<const MatrixX<Scalar>> matrix() const { return {data(), rows(), cols()}; }
  Eigen::Map<VectorX<Scalar>> vector() { return {data(), size()}; }
  Eigen::Map<const VectorX<Scalar>> vector() const { return {data(), size()}; }

  const std::shared_ptr<Impl>& impl() const { return impl_; }

 private:
  static Index checked_numel(const Shape& shape) {
    for (Index e : shape) {
      if (e <= 0) throw ShapeError("tensor extents must be positive, got " + to_string(shape));
    }
    return numel(shape);
  }
  Index cols() const { return shape().empty() ? 1 : shape().back(); }
  Index rows() const { return size() / cols(); }

  std::shared_ptr<Impl> impl_;
};

// ---------------------------------------------------------------------------
// Tape

/// Append-only record of differentiable operations on this thread. Nodes are
/// stored in creation order, which is a topological order; backward() walks
/// them once in reverse and then clears the tape.
template <typename Scalar>
class Tape {
 public:
  using Impl = detail::TensorImpl<Scalar>;
  using BackwardFn = std::function<void(const Scalar* grad_out)>;

  struct Node {
    std::string_view op;
    std::vector<std::shared_ptr<Impl>> inputs;
    std::shared_ptr<Impl> output;
    BackwardFn backward;
  };

  static Tape& active();

  /// True when `inputs` contain a tensor requiring gradients and recording is on.
  static bool should_record(std::initializer_list<const Tensor<Scalar>*> inputs) {
    if (!grad_enabled()) return false;
    for (const Tensor<Scalar>* t : inputs) {
      if (t->defined() && t->requires_grad()) return true;
    }
    return false;
  }

  void record(std::string_view op, std::initializer_list<const Tensor<Scalar>*> inputs,
              Tensor<Scalar>& output, BackwardFn backward);

  void backward(const Tensor<Scalar>& loss);
  void clear();

  std::size_t size() const { return nodes_.size(); }
  const std::vector<Node>& nodes() const { return nodes_; }

 private:
  std::vector<Node> nodes_;
  std::uint64_t generation_ = 1;
};

/// Populates gradients of every tensor reachable from `loss` on the active
/// tape, then clears the tape.
template <typename Scalar>
void backward(const Tensor<Scalar>& loss) {
  Tape<Scalar>::active().backward(loss);
}

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace pointconv
