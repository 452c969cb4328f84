// Copyright 2026 The fusedet Authors. All Rights Reserved.
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
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <string>

#include "fusedet/neural/tensor.hpp"

namespace fusedet::nn {

struct GradCheckOptions {
  double step = 1e-5;
  /// Coordinates checked per parameter tensor; larger tensors are sampled
  /// uniformly without replacement.
  std::size_t max_per_tensor = std::numeric_limits<std::size_t>::max();
  std::uint64_t seed = 0;
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t checked = 0;

  bool passed(double tolerance) const { return max_relative_error < tolerance; }
};

/// |a - n| / max(|a|, |n|, 1e-8)
inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-8});
}

/// Compares the analytic gradients already stored in `params[i].grad`
/// against central differences of `loss`, which must recompute the scalar
/// loss from the current parameter values.
template <typename LossFn>
GradCheckResult gradient_check(LossFn&& loss, std::span<const ParamRef<double>> params,
                               const GradCheckOptions& options = {}) {
  GradCheckResult result;
  std::mt19937_64 rng(options.seed);
  for (const auto& p : params) {
    std::vector<std::size_t> coords(p.value->size());
    std::iota(coords.begin(), coords.end(), 0);
    if (coords.size() > options.max_per_tensor) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(options.max_per_tensor);
      std::sort(coords.begin(), coords.end());
    }
    for (std::size_t idx : coords) {
      double& x = (*p.value)[idx];
      const double saved = x;
      x = saved + options.step;
      const double up = loss();
      x = saved - options.step;
      const double down = loss();
      x = saved;
      const double numeric = (up - down) / (2.0 * options.step);
      const double analytic = (*p.grad)[idx];
      const double err = relative_error(analytic, numeric);
      ++result.checked;
      if (result.checked == 1 || err > result.max_relative_error) {
        result.max_relative_error = err;
        result.worst_parameter = p.name;
        result.worst_index = idx;
        result.worst_analytic = analytic;
        result.worst_numeric = numeric;
      }
    }
  }
  return result;
}

}  // namespace fusedet::nn
