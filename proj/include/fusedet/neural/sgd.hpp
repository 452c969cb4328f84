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

#include <span>
#include <vector>

#include "fusedet/neural/tensor.hpp"

namespace fusedet::nn {

/// Stochastic gradient descent with heavy-ball momentum:
///   v <- momentum * v + g;  p <- p - learning_rate * v
template <typename T>
class Sgd {
 public:
  Sgd(double learning_rate, double momentum) : learning_rate(learning_rate), momentum(momentum) {}

  void step(std::span<const ParamRef<T>> params) {
    if (velocity_.empty()) {
      for (const auto& p : params) velocity_.emplace_back(p.value->shape());
    }
    if (velocity_.size() != params.size()) {
      throw Error(Errc::ShapeMismatch, "parameter list changed between SGD steps");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      Tensor<T>& value = *params[i].value;
      const Tensor<T>& grad = *params[i].grad;
      Tensor<T>& v = velocity_[i];
      if (grad.shape() != value.shape() || v.shape() != value.shape()) {
        throw Error(Errc::ShapeMismatch, "gradient shape differs for " + params[i].name);
      }
      const T mu = static_cast<T>(momentum), lr = static_cast<T>(learning_rate);
      for (std::size_t j = 0; j < value.size(); ++j) {
        v[j] = mu * v[j] + grad[j];
        value[j] -= lr * v[j];
      }
    }
  }

  const std::vector<Tensor<T>>& velocity() const { return velocity_; }

  double learning_rate;
  double momentum;

 private:
  std::vector<Tensor<T>> velocity_;
};

template <typename T>
void zero_grads(std::span<const ParamRef<T>> params) {
  for (const auto& p : params) p.grad->fill(T(0));
}

}  // namespace fusedet::nn
