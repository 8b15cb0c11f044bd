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

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include "pointconv/tensor.hpp"

namespace pointconv {

/// Largest relative disagreement between the taped gradient of `f` with
/// respect to `x` and a central finite difference with step `eps`:
///   max_i |analytic_i - numeric_i| / max(|analytic_i|, |numeric_i|, 1e-8).
/// `x` is perturbed in place and restored. Any NaN yields NaN. Meant for
/// 64-bit tensors.
template <typename Scalar>
Scalar gradient_check(const std::function<Tensor<Scalar>(const Tensor<Scalar>&)>& f,
                      Tensor<Scalar>& x, Scalar eps = Scalar(1e-5)) {
  const bool had_flag = x.requires_grad();
  x.set_requires_grad(true);
  x.zero_grad();
  Tape<Scalar>::active().clear();
  backward(f(x));
  if (!x.has_grad()) {
    // f does not depend on x; the analytic gradient is zero.
    x.mutable_grad();
  }
  const std::vector<Scalar> analytic(x.grad().begin(), x.grad().end());
  x.zero_grad();
  x.set_requires_grad(had_flag);

  NoGradGuard no_grad;
  Scalar worst = 0;
  for (Index i = 0; i < x.size(); ++i) {
    const Scalar saved = x[i];
    x[i] = saved + eps;
    const Scalar up = f(x).item();
    x[i] = saved - eps;
    const Scalar down = f(x).item();
    x[i] = saved;
    const Scalar numeric = (up - down) / (Scalar(2) * eps);
    const Scalar a = analytic[static_cast<std::size_t>(i)];
    if (std::isnan(a) || std::isnan(numeric)) return std::numeric_limits<Scalar>::quiet_NaN();
    const Scalar denom = std::max({std::abs(a), std::abs(numeric), Scalar(1e-8)});
    worst = std::max(worst, std::abs(a - numeric) / denom);
  }
  return worst;
}

/// Convenience overload for closures that capture the checked tensor.
template <typename Scalar>
Scalar gradient_check(const std::function<Tensor<Scalar>()>& f, Tensor<Scalar>& x,
                      Scalar eps = Scalar(1e-5)) {
  return gradient_check<Scalar>(
      std::function<Tensor<Scalar>(const Tensor<Scalar>&)>([&f](const Tensor<Scalar>&) { return f(); }),
      x, eps);
}

}  // namespace pointconv
