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

#include "pointconv/tensor.hpp"

#include <algorithm>

namespace pointconv {

Index numel(const Shape& shape) {
  Index n = 1;
  for (Index e : shape) n *= e;
  return n;
}

std::string to_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

namespace detail {

AllocationCounters& allocation_counters() {
  thread_local AllocationCounters counters;
  return counters;
}

void note_allocation(std::size_t bytes) {
  auto& c = allocation_counters();
  c.live += bytes;
  c.peak = std::max(c.peak, c.live);
  c.largest = std::max(c.largest, bytes);
}

void note_deallocation(std::size_t bytes) {
  auto& c = allocation_counters();
  // Buffers freed on a thread other than the allocating one would underflow.
  c.live = bytes > c.live ? 0 : c.live - bytes;
}

int& no_grad_depth() {
  thread_local int depth = 0;
  return depth;
}

}  // namespace detail

AllocationScope::AllocationScope() {
  auto& c = detail::allocation_counters();
  saved_ = c;
  baseline_ = c.live;
  c.peak = c.live;
  c.largest = 0;
}

AllocationScope::~AllocationScope() {
  auto& c = detail::allocation_counters();
  c.peak = std::max(saved_.peak, c.peak);
  c.largest = std::max(saved_.largest, c.largest);
}

std::size_t AllocationScope::peak_bytes() const {
  const auto& c = detail::allocation_counters();
  return c.peak > baseline_ ? c.peak - baseline_ : 0;
}

std::size_t AllocationScope::largest_bytes() const { return detail::allocation_counters().largest; }

template <typename Scalar>
Tape<Scalar>& Tape<Scalar>::active() {
  thread_local Tape tape;
  return tape;
}

template <typename Scalar>
void Tape<Scalar>::record(std::string_view op, std::initializer_list<const Tensor<Scalar>*> inputs,
                          Tensor<Scalar>& output, BackwardFn backward) {
  Node node;
  node.op = op;
  for (const Tensor<Scalar>* t : inputs) {
    if (t->defined()) node.inputs.push_back(t->impl());
  }
  node.output = output.impl();
  node.backward = std::move(backward);
  output.set_requires_grad(true);
  output.impl()->tape_generation = generation_;
  output.impl()->tape_index = nodes_.size();
  nodes_.push_back(std::move(node));
}

template <typename Scalar>
void Tape<Scalar>::backward(const Tensor<Scalar>& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw AutodiffError("backward() needs a scalar loss, got shape " +
                        (loss.defined() ? to_string(loss.shape()) : std::string("<undefined>")));
  }
  const auto& impl = loss.impl();
  if (impl->tape_generation != generation_ || impl->tape_index >= nodes_.size() ||
      nodes_[impl->tape_index].output != impl) {
    throw AutodiffError(
        "loss is not on the active tape (backward() already ran for this forward pass?)");
  }
  impl->grad_buffer()[0] = Scalar(1);
  for (std::size_t i = impl->tape_index + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (node.output->grad) node.backward(node.output->grad->data());
  }
  clear();
}

template <typename Scalar>
void Tape<Scalar>::clear() {
  nodes_.clear();
  ++generation_;
}

template class Tape<float>;
template class Tape<double>;

}  // namespace pointconv
