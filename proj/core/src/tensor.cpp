// Copyright 2026 The m2vae Authors.
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
#include "m2vae/tensor.hpp"

#include <algorithm>
#include <cmath>

namespace m2vae {

void Tensor::fill(double v) { std::fill(data.begin(), data.end(), v); }

bool Tensor::all_finite() const {
  return std::all_of(data.begin(), data.end(), [](double x) { return std::isfinite(x); });
}

double dot(std::span<const double> a, std::span<const double> b) {
  double r = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) r += a[i] * b[i];
  return r;
}

double squared_norm(std::span<const double> a) { return dot(a, a); }

double cosine(std::span<const double> a, std::span<const double> b) {
  const double na = std::max(std::sqrt(squared_norm(a)), 1e-12);
  const double nb = std::max(std::sqrt(squared_norm(b)), 1e-12);
  return dot(a, b) / (na * nb);
}

}  // namespace m2vae
