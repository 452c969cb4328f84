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
#include <random>
#include <span>
#include <string>
#include <vector>

#include "fusedet/neural/tensor.hpp"

namespace fusedet::nn {

/// y = x W^T + b on (N, in) rows. Zero input entries are skipped, which
/// makes mostly-empty feature rows cheap. Without a bias, b stays zero and
/// is not exposed as a parameter.
template <typename T>
class Linear {
 public:
  Linear() = default;
  Linear(std::size_t in, std::size_t out, std::mt19937_64& rng, bool use_bias = true)
      : weight({out, in}), bias({out}), grad_weight({out, in}), grad_bias({out}), use_bias_(use_bias) {
    glorot_uniform(weight, in, out, rng);
  }

  std::size_t in_features() const { return weight.dim(1); }
  std::size_t out_features() const { return weight.dim(0); }

  Tensor<T> forward(const Tensor<T>& x) {
    const std::size_t in = in_features(), out = out_features();
    if (x.rank() != 2 || x.dim(1) != in) {
      throw Error(Errc::ShapeMismatch, "linear expects (N," + std::to_string(in) + "), got " + shape_string(x));
    }
    input_ = x;
    transpose_weight();
    const std::size_t n_rows = x.dim(0);
    Tensor<T> y({n_rows, out});
    for (std::size_t n = 0; n < n_rows; ++n) {
      T* yr = y.data() + n * out;
      const T* xr = x.data() + n * in;
      std::copy(bias.data(), bias.data() + out, yr);
      for (std::size_t i = 0; i < in; ++i) {
        const T xi = xr[i];
        if (xi == T(0)) continue;
        const T* wt = weight_t_.data() + i * out;
#pragma omp simd
        for (std::size_t o = 0; o < out; ++o) yr[o] += xi * wt[o];
      }
    }
    return y;
  }

  /// Accumulates parameter gradients; returns dL/dx when requested.
  Tensor<T> backward(const Tensor<T>& grad_y, bool need_input_grad = true) {
    const std::size_t in = in_features(), out = out_features();
    const std::size_t n_rows = input_.dim(0);
    if (grad_y.rank() != 2 || grad_y.dim(0) != n_rows || grad_y.dim(1) != out) {
      throw Error(Errc::ShapeMismatch, "linear backward got " + shape_string(grad_y));
    }
    std::vector<T> gwt(in * out, T(0));
    for (std::size_t n = 0; n < n_rows; ++n) {
      const T* g = grad_y.data() + n * out;
      const T* xr = input_.data() + n * in;
      for (std::size_t o = 0; o < out; ++o) grad_bias[o] += g[o];
      for (std::size_t i = 0; i < in; ++i) {
        const T xi = xr[i];
        if (xi == T(0)) continue;
        T* dst = gwt.data() + i * out;
#pragma omp simd
        for (std::size_t o = 0; o < out; ++o) dst[o] += xi * g[o];
      }
    }
    for (std::size_t o = 0; o < out; ++o) {
      for (std::size_t i = 0; i < in; ++i) grad_weight[o * in + i] += gwt[i * out + o];
    }
    Tensor<T> grad_x;
    if (!need_input_grad) return grad_x;
    grad_x.resize({n_rows, in});
    for (std::size_t n = 0; n < n_rows; ++n) {
      const T* g = grad_y.data() + n * out;
      T* gx = grad_x.data() + n * in;
      for (std::size_t i = 0; i < in; ++i) {
        const T* wt = weight_t_.data() + i * out;
        T s = T(0);
#pragma omp simd reduction(+ : s)
        for (std::size_t o = 0; o < out; ++o) s += wt[o] * g[o];
        gx[i] = s;
      }
    }
    return grad_x;
  }

  void collect(std::vector<ParamRef<T>>& params, const std::string& prefix) {
    params.push_back({prefix + ".weight", &weight, &grad_weight});
    if (use_bias_) params.push_back({prefix + ".bias", &bias, &grad_bias});
  }

  bool has_bias() const { return use_bias_; }

  Tensor<T> weight, bias;
  Tensor<T> grad_weight, grad_bias;

 private:
  bool use_bias_ = true;
  void transpose_weight() {
    const std::size_t in = in_features(), out = out_features();
    weight_t_.resize(in * out);
    for (std::size_t o = 0; o < out; ++o) {
      for (std::size_t i = 0; i < in; ++i) weight_t_[i * out + o] = weight[o * in + i];
    }
  }

  Tensor<T> input_;
  std::vector<T> weight_t_;
};

/// Batch normalization over a (N, C, S) layout: statistics per channel C,
/// pooled over the batch N and the trailing spatial extent S.
template <typename T>
class BatchNorm {
 public:
  BatchNorm() = default;
  explicit BatchNorm(std::size_t channels)
      : gamma({channels}, T(1)), beta({channels}), running_mean({channels}), running_var({channels}, T(1)),
        grad_gamma({channels}), grad_beta({channels}) {}

  std::size_t channels() const { return gamma.size(); }

  /// `x` holds N * C * S values laid out as (N, C, S).
  Tensor<T> forward(const Tensor<T>& x, std::size_t batch, std::size_t spatial, Mode mode) {
    const std::size_t c_count = channels();
    if (x.size() != batch * c_count * spatial) {
      throw Error(Errc::ShapeMismatch, "batch norm input " + shape_string(x) + " does not match channels");
    }
    const std::size_t m = batch * spatial;
    if (mode == Mode::Train && m < 2) {
      throw Error(Errc::BatchTooSmall, "training-mode batch norm needs at least 2 samples per channel");
    }
    batch_ = batch;
    spatial_ = spatial;
    mode_ = mode;
    inv_std_.assign(c_count, T(0));
    xhat_.resize(x.shape());
    Tensor<T> y(x.shape());
    for (std::size_t c = 0; c < c_count; ++c) {
      double mean, var;
      if (mode == Mode::Train) {
        double sum = 0.0;
        for (std::size_t n = 0; n < batch; ++n) {
          const T* p = x.data() + (n * c_count + c) * spatial;
          for (std::size_t s = 0; s < spatial; ++s) sum += p[s];
        }
        mean = sum / static_cast<double>(m);
        double sq = 0.0;
        for (std::size_t n = 0; n < batch; ++n) {
          const T* p = x.data() + (n * c_count + c) * spatial;
          for (std::size_t s = 0; s < spatial; ++s) {
            const double d = p[s] - mean;
            sq += d * d;
          }
        }
        var = sq / static_cast<double>(m);
        const double unbiased = sq / static_cast<double>(m - 1);
        running_mean[c] = static_cast<T>(momentum * running_mean[c] + (1.0 - momentum) * mean);
        running_var[c] = static_cast<T>(momentum * running_var[c] + (1.0 - momentum) * unbiased);
      } else {
        mean = running_mean[c];
        var = running_var[c];
      }
      const double inv_std = 1.0 / std::sqrt(var + eps);
      inv_std_[c] = static_cast<T>(inv_std);
      const T g = gamma[c], b = beta[c];
      for (std::size_t n = 0; n < batch; ++n) {
        const std::size_t off = (n * c_count + c) * spatial;
        for (std::size_t s = 0; s < spatial; ++s) {
          const T xh = static_cast<T>((x[off + s] - mean) * inv_std);
          xhat_[off + s] = xh;
          y[off + s] = g * xh + b;
        }
      }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& grad_y) {
    const std::size_t c_count = channels();
    const std::size_t m = batch_ * spatial_;
    Tensor<T> grad_x(grad_y.shape());
    for (std::size_t c = 0; c < c_count; ++c) {
      double sum_g = 0.0, sum_gx = 0.0;
      for (std::size_t n = 0; n < batch_; ++n) {
        const std::size_t off = (n * c_count + c) * spatial_;
        for (std::size_t s = 0; s < spatial_; ++s) {
          sum_g += grad_y[off + s];
          sum_gx += static_cast<double>(grad_y[off + s]) * xhat_[off + s];
        }
      }
      grad_gamma[c] += static_cast<T>(sum_gx);
      grad_beta[c] += static_cast<T>(sum_g);
      const double scale = static_cast<double>(gamma[c]) * inv_std_[c];
      for (std::size_t n = 0; n < batch_; ++n) {
        const std::size_t off = (n * c_count + c) * spatial_;
        for (std::size_t s = 0; s < spatial_; ++s) {
          if (mode_ == Mode::Train) {
            grad_x[off + s] = static_cast<T>(
                scale * (grad_y[off + s] - sum_g / static_cast<double>(m) -
                         xhat_[off + s] * sum_gx / static_cast<double>(m)));
          } else {
            grad_x[off + s] = static_cast<T>(scale * grad_y[off + s]);
          }
        }
      }
    }
    return grad_x;
  }

  void collect(std::vector<ParamRef<T>>& params, const std::string& prefix) {
    params.push_back({prefix + ".gamma", &gamma, &grad_gamma});
    params.push_back({prefix + ".beta", &beta, &grad_beta});
  }
  void collect_buffers(std::vector<BufferRef<T>>& buffers, const std::string& prefix) {
    buffers.push_back({prefix + ".running_mean", &running_mean});
    buffers.push_back({prefix + ".running_var", &running_var});
  }

  Tensor<T> gamma, beta, running_mean, running_var;
  Tensor<T> grad_gamma, grad_beta;
  double momentum = 0.99;
  double eps = 1e-5;

 private:
  std::size_t batch_ = 0, spatial_ = 0;
  Mode mode_ = Mode::Train;
  std::vector<T> inv_std_;
  Tensor<T> xhat_;
};

template <typename T>
void relu_inplace(Tensor<T>& x) {
  for (auto& v : x.values()) v = v > T(0) ? v : T(0);
}

/// Zeroes gradient entries where the forward output was clamped.
template <typename T>
void relu_backward_inplace(Tensor<T>& grad, const Tensor<T>& output) {
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (!(output[i] > T(0))) grad[i] = T(0);
  }
}

/// Linear -> BatchNorm -> ReLU on (N, in) rows.
template <typename T>
class Fcn {
 public:
  Fcn() = default;
  /// The linear part has no bias: the following batch norm cancels it.
  Fcn(std::size_t in, std::size_t out, std::mt19937_64& rng) : linear(in, out, rng, false), bn(out) {}

  std::size_t in_features() const { return linear.in_features(); }
  std::size_t out_features() const { return linear.out_features(); }

  Tensor<T> forward(const Tensor<T>& x, Mode mode) {
    Tensor<T> y = bn.forward(linear.forward(x), x.dim(0), 1, mode);
    relu_inplace(y);
    output_ = y;
    return y;
  }

  Tensor<T> backward(Tensor<T> grad_y, bool need_input_grad = true) {
    relu_backward_inplace(grad_y, output_);
    return linear.backward(bn.backward(grad_y), need_input_grad);
  }

  void collect(std::vector<ParamRef<T>>& params, const std::string& prefix) {
    linear.collect(params, prefix + ".linear");
    bn.collect(params, prefix + ".bn");
  }
  void collect_buffers(std::vector<BufferRef<T>>& buffers, const std::string& prefix) {
    bn.collect_buffers(buffers, prefix + ".bn");
  }

  Linear<T> linear;
  BatchNorm<T> bn;

 private:
  Tensor<T> output_;
};

/// Element-wise max over contiguous row segments: rows [offsets[k],
/// offsets[k+1]) of an (N, C) tensor reduce to row k of the (K, C) result.
/// Gradient flows to the lowest-index maximal row.
template <typename T>
class SegmentMax {
 public:
  Tensor<T> forward(const Tensor<T>& x, std::span<const std::size_t> offsets) {
    const std::size_t k_count = offsets.size() - 1, c_count = x.dim(1);
    rows_ = x.dim(0);
    argmax_.assign(k_count * c_count, 0);
    Tensor<T> y({k_count, c_count});
    for (std::size_t k = 0; k < k_count; ++k) {
      if (offsets[k + 1] <= offsets[k]) {
        throw Error(Errc::EmptyVoxelRow, "voxel " + std::to_string(k) + " has no points");
      }
      for (std::size_t c = 0; c < c_count; ++c) {
        std::size_t best = offsets[k];
        for (std::size_t n = offsets[k] + 1; n < offsets[k + 1]; ++n) {
          if (x.at(n, c) > x.at(best, c)) best = n;
        }
        argmax_[k * c_count + c] = best;
        y.at(k, c) = x.at(best, c);
      }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& grad_y) const {
    const std::size_t c_count = grad_y.dim(1);
    Tensor<T> grad_x({rows_, c_count});
    for (std::size_t k = 0; k < grad_y.dim(0); ++k) {
      for (std::size_t c = 0; c < c_count; ++c) grad_x.at(argmax_[k * c_count + c], c) += grad_y.at(k, c);
    }
    return grad_x;
  }

 private:
  std::size_t rows_ = 0;
  std::vector<std::size_t> argmax_;
};

/// Voxel feature encoding layer: a shared point-wise FCN to out/2 features,
/// a per-voxel element-wise max, and the max concatenated back onto every
/// point. Points are stored voxel-contiguously; `offsets` delimits voxels.
template <typename T>
class Vfe {
 public:
  Vfe() = default;
  Vfe(std::size_t in, std::size_t out, std::mt19937_64& rng) : fcn(in, out / 2, rng) {
    if (out % 2 != 0) throw Error(Errc::InvalidConfig, "VFE output width must be even");
  }

  std::size_t in_features() const { return fcn.in_features(); }
  std::size_t out_features() const { return 2 * fcn.out_features(); }

  Tensor<T> forward(const Tensor<T>& x, std::span<const std::size_t> offsets, Mode mode) {
    offsets_.assign(offsets.begin(), offsets.end());
    const Tensor<T> pointwise = fcn.forward(x, mode);
    summary = pool_.forward(pointwise, offsets);
    const std::size_t half = fcn.out_features();
    Tensor<T> out({x.dim(0), 2 * half});
    for (std::size_t k = 0; k + 1 < offsets.size(); ++k) {
      for (std::size_t n = offsets[k]; n < offsets[k + 1]; ++n) {
        for (std::size_t c = 0; c < half; ++c) {
          out.at(n, c) = pointwise.at(n, c);
          out.at(n, half + c) = summary.at(k, c);
        }
      }
    }
    return out;
  }

  Tensor<T> backward(const Tensor<T>& grad_out, bool need_input_grad = true) {
    const std::size_t half = fcn.out_features();
    const std::size_t rows = grad_out.dim(0);
    Tensor<T> grad_point({rows, half});
    Tensor<T> grad_summary({offsets_.size() - 1, half});
    for (std::size_t k = 0; k + 1 < offsets_.size(); ++k) {
      for (std::size_t n = offsets_[k]; n < offsets_[k + 1]; ++n) {
        for (std::size_t c = 0; c < half; ++c) {
          grad_point.at(n, c) = grad_out.at(n, c);
          grad_summary.at(k, c) += grad_out.at(n, half + c);
        }
      }
    }
    const Tensor<T> routed = pool_.backward(grad_summary);
    for (std::size_t i = 0; i < grad_point.size(); ++i) grad_point[i] += routed[i];
    return fcn.backward(std::move(grad_point), need_input_grad);
  }

  void collect(std::vector<ParamRef<T>>& params, const std::string& prefix) { fcn.collect(params, prefix + ".fcn"); }
  void collect_buffers(std::vector<BufferRef<T>>& buffers, const std::string& prefix) {
    fcn.collect_buffers(buffers, prefix + ".fcn");
  }

  Fcn<T> fcn;
  /// Per-voxel max of the point-wise features from the last forward, (K, out/2).
  Tensor<T> summary;

 private:
  std::vector<std::size_t> offsets_;
  SegmentMax<T> pool_;
};

/// Padded view of a VFE layer: (K, T, in) slots plus a (K, T) validity mask.
/// Returns (K, T, out) rows with masked slots zeroed; the voxel summary is
/// left in `layer.summary`.
template <typename T>
Tensor<T> vfe_forward_padded(Vfe<T>& layer, const Tensor<T>& voxel_points, const std::vector<bool>& mask, Mode mode) {
  if (voxel_points.rank() != 3 || mask.size() != voxel_points.dim(0) * voxel_points.dim(1)) {
    throw Error(Errc::ShapeMismatch, "padded VFE input must be (K, T, in) with a (K, T) mask");
  }
  const std::size_t k_count = voxel_points.dim(0), slots = voxel_points.dim(1), in = voxel_points.dim(2);
  std::vector<std::size_t> offsets{0};
  std::vector<std::size_t> slot_of_row;
  for (std::size_t k = 0; k < k_count; ++k) {
    for (std::size_t t = 0; t < slots; ++t) {
      if (mask[k * slots + t]) slot_of_row.push_back(k * slots + t);
    }
    if (slot_of_row.size() == offsets.back()) {
      throw Error(Errc::EmptyVoxelRow, "voxel " + std::to_string(k) + " has no unmasked slot");
    }
    offsets.push_back(slot_of_row.size());
  }
  Tensor<T> rows({slot_of_row.size(), in});
  for (std::size_t r = 0; r < slot_of_row.size(); ++r) {
    std::copy_n(voxel_points.data() + slot_of_row[r] * in, in, rows.data() + r * in);
  }
  const Tensor<T> out_rows = layer.forward(rows, offsets, mode);
  const std::size_t out = out_rows.dim(1);
  Tensor<T> out_padded({k_count, slots, out});
  for (std::size_t r = 0; r < slot_of_row.size(); ++r) {
    std::copy_n(out_rows.data() + r * out, out, out_padded.data() + slot_of_row[r] * out);
  }
  return out_padded;
}

}  // namespace fusedet::nn
