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

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include "pointconv/tensor.hpp"

namespace pointconv::testing {

template <typename S>
Tensor<S> random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0,
                        bool requires_grad = false) {
  Tensor<S> t(std::move(shape));
  std::uniform_real_distribution<double> u(lo, hi);
  for (Index i = 0; i < t.size(); ++i) t[i] = static_cast<S>(u(rng));
  t.set_requires_grad(requires_grad);
  return t;
}

template <typename S>
MatrixX<S> random_points(Index n, Index d, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  MatrixX<S> p(n, d);
  std::uniform_real_distribution<double> u(lo, hi);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < d; ++j) p(i, j) = static_cast<S>(u(rng));
  }
  return p;
}

inline std::filesystem::path temp_dir(const std::string& name) {
  const std::filesystem::path dir = std::filesystem::path(POINTCONV_TEST_TMP) / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace pointconv::testing
