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
#include <array>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "fusedet/neural/layers.hpp"

namespace fusedet::nn {

/// Kernel, stride and zero padding along (depth, height, width). 2-D
/// layers use depth 1 / stride 1 / pad 0 on the first axis.
struct ConvSpec {
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::array<int, 3> kernel{1, 3, 3};
  std::array<int, 3> stride{1, 1, 1};
  std::array<int, 3> pad{0, 1, 1};
  bool bn_relu = true;

  static ConvSpec conv2d(std::size_t in, std::size_t out, int k, int stride, int pad, bool bn_relu = true) {
    return {in, out, {1, k, k}, {1, stride, stride}, {0, pad, pad}, bn_relu};
  }
  static ConvSpec conv3d(std::size_t in, std::size_t out, int k, std::array<int, 3> stride,
                         std::array<int, 3> pad, bool bn_relu = true) {
    return {in, out, {k, k, k}, stride, pad, bn_relu};
  }
};

/// floor((in + 2 pad - k) / stride) + 1
inline int conv_out_size(int in, int k, int stride, int pad) {
  const int span = in + 2 * pad - k;
  return span < 0 ? 0 : span / stride + 1;
}

/// (in - 1) * stride - 2 pad + k
inline int deconv_out_size(int in, int k, int stride, int pad) { return (in - 1) * stride - 2 * pad + k; }

/// Cross-correlation over (N, C, D, H, W) or (N, C, H, W) inputs, optionally
/// followed by batch norm and ReLU. Layers without batch norm carry a bias.
///
/// `forward_sparse` takes the input as a list of occupied sites with their
/// feature rows; every other site is zero. Its result equals `forward` on the
/// zero-filled dense grid, at a cost proportional to the occupied sites.
template <typename T>
class Conv {
 public:
  Conv() = default;
  Conv(const ConvSpec& spec, std::mt19937_64& rng) : spec_(spec) {
    if (spec.stride[0] < 1 || spec.stride[1] < 1 || spec.stride[2] < 1) {
      throw Error(Errc::InvalidConfig, "convolution stride must be >= 1");
    }
    const std::size_t taps = static_cast<std::size_t>(spec.kernel[0] * spec.kernel[1] * spec.kernel[2]);
    weight.resize({spec.out_channels, spec.in_channels, static_cast<std::size_t>(spec.kernel[0]),
                   static_cast<std::size_t>(spec.kernel[1]), static_cast<std::size_t>(spec.kernel[2])});
    grad_weight.resize(weight.shape());
    glorot_uniform(weight, spec.in_channels * taps, spec.out_channels * taps, rng);
    if (spec.bn_relu) {
      bn = BatchNorm<T>(spec.out_channels);
    } else {
      bias.resize({spec.out_channels});
      grad_bias.resize({spec.out_channels});
    }
  }

  const ConvSpec& spec() const { return spec_; }

  std::array<int, 3> output_dims(const std::array<int, 3>& in) const {
    return {conv_out_size(in[0], spec_.kernel[0], spec_.stride[0], spec_.pad[0]),
            conv_out_size(in[1], spec_.kernel[1], spec_.stride[1], spec_.pad[1]),
            conv_out_size(in[2], spec_.kernel[2], spec_.stride[2], spec_.pad[2])};
  }

  Tensor<T> forward(const Tensor<T>& x, Mode mode) {
    rank_ = x.rank();
    if ((rank_ != 4 && rank_ != 5) || x.dim(1) != spec_.in_channels) {
      throw Error(Errc::ShapeMismatch, "conv expects (N," + std::to_string(spec_.in_channels) +
                                           ",[D,]H,W), got " + shape_string(x));
    }
    sparse_ = false;
    batch_ = x.dim(0);
    in_dims_ = rank_ == 5 ? std::array<int, 3>{int(x.dim(2)), int(x.dim(3)), int(x.dim(4))}
                          : std::array<int, 3>{1, int(x.dim(2)), int(x.dim(3))};
    set_out_dims();
    input_ = x;
    Tensor<T> y = make_output();
    dense_forward(x, y);
    return finish_forward(std::move(y), mode);
  }

  /// `sites` holds (n, d, h, w) for each row of `features` (K, C_in);
  /// `in_dims` is (N, D, H, W) of the implied dense input. The output is 5-D.
  Tensor<T> forward_sparse(std::span<const std::array<int, 4>> sites, const Tensor<T>& features,
                           std::array<int, 4> in_dims, Mode mode) {
    if (features.rank() != 2 || features.dim(0) != sites.size() || features.dim(1) != spec_.in_channels) {
      throw Error(Errc::ShapeMismatch, "sparse conv features " + shape_string(features) + " do not match sites");
    }
    rank_ = 5;
    sparse_ = true;
    batch_ = static_cast<std::size_t>(in_dims[0]);
    in_dims_ = {in_dims[1], in_dims[2], in_dims[3]};
    set_out_dims();
    sites_.assign(sites.begin(), sites.end());
    input_ = features;
    transposed_weight();
    Tensor<T> y = make_output();
    const std::size_t cin = spec_.in_channels, cout = spec_.out_channels;
    const std::size_t plane = out_plane();
    for (std::size_t k = 0; k < sites_.size(); ++k) {
      const T* f = features.data() + k * cin;
      for_each_tap(sites_[k], [&](std::size_t tap, std::size_t out_offset) {
        const T* wt = weight_t_.data() + tap * cout * cin;
        T* dst = y.data() + static_cast<std::size_t>(sites_[k][0]) * cout * plane + out_offset;
        for (std::size_t co = 0; co < cout; ++co) {
          const T* w = wt + co * cin;
          T s = T(0);
#pragma omp simd reduction(+ : s)
          for (std::size_t ci = 0; ci < cin; ++ci) s += w[ci] * f[ci];
          dst[co * plane] += s;
        }
      });
    }
    return finish_forward(std::move(y), mode);
  }

  /// Accumulates parameter gradients. Returns dL/dx in the layout of the last
  /// forward: dense input shape, or (K, C_in) rows after forward_sparse.
  Tensor<T> backward(Tensor<T> grad_y, bool need_input_grad = true) {
    if (grad_y.size() != batch_ * spec_.out_channels * out_plane()) {
      throw Error(Errc::ShapeMismatch, "conv backward got " + shape_string(grad_y));
    }
    if (spec_.bn_relu) {
      relu_backward_inplace(grad_y, output_);
      grad_y = bn.backward(grad_y);
    } else {
      const std::size_t plane = out_plane();
      for (std::size_t n = 0; n < batch_; ++n) {
        for (std::size_t co = 0; co < spec_.out_channels; ++co) {
          const T* g = grad_y.data() + (n * spec_.out_channels + co) * plane;
          double s = 0.0;
          for (std::size_t i = 0; i < plane; ++i) s += g[i];
          grad_bias[co] += static_cast<T>(s);
        }
      }
    }
    return sparse_ ? sparse_backward(grad_y, need_input_grad) : dense_backward(grad_y, need_input_grad);
  }

  void collect(std::vector<ParamRef<T>>& params, const std::string& prefix) {
    params.push_back({prefix + ".weight", &weight, &grad_weight});
    if (spec_.bn_relu) {
      bn.collect(params, prefix + ".bn");
    } else {
      params.push_back({prefix + ".bias", &bias, &grad_bias});
    }
  }
  void collect_buffers(std::vector<BufferRef<T>>& buffers, const std::string& prefix) {
    if (spec_.bn_relu) bn.collect_buffers(buffers, prefix + ".bn");
  }

  Tensor<T> weight, bias;
  Tensor<T> grad_weight, grad_bias;
  BatchNorm<T> bn;

 private:
  std::size_t in_plane() const { return static_cast<std::size_t>(in_dims_[0]) * in_dims_[1] * in_dims_[2]; }
  std::size_t out_plane() const { return static_cast<std::size_t>(out_dims_[0]) * out_dims_[1] * out_dims_[2]; }

  void set_out_dims() {
    out_dims_ = output_dims(in_dims_);
    if (out_dims_[0] <= 0 || out_dims_[1] <= 0 || out_dims_[2] <= 0) {
      throw Error(Errc::ShapeMismatch, "convolution input is smaller than its kernel");
    }
  }

  Tensor<T> make_output() const {
    std::vector<std::size_t> shape{batch_, spec_.out_channels};
    if (rank_ == 5) shape.push_back(static_cast<std::size_t>(out_dims_[0]));
    shape.push_back(static_cast<std::size_t>(out_dims_[1]));
    shape.push_back(static_cast<std::size_t>(out_dims_[2]));
    Tensor<T> y(shape);
    if (!spec_.bn_relu) {
      const std::size_t plane = out_plane();
      for (std::size_t n = 0; n < batch_; ++n) {
        for (std::size_t co = 0; co < spec_.out_channels; ++co) {
          std::fill_n(y.data() + (n * spec_.out_channels + co) * plane, plane, bias[co]);
        }
      }
    }
    return y;
  }

  Tensor<T> finish_forward(Tensor<T> y, Mode mode) {
    if (spec_.bn_relu) {
      y = bn.forward(y, batch_, out_plane(), mode);
      relu_inplace(y);
      output_ = y;
    }
    return y;
  }

  // Range of output positions o with 0 <= o * stride - pad + k < in.
  static std::pair<int, int> valid_range(int in, int out, int k, int stride, int pad) {
    int lo = pad - k > 0 ? (pad - k + stride - 1) / stride : 0;
    int hi = (in - 1 + pad - k) >= 0 ? (in - 1 + pad - k) / stride : -1;
    return {lo, std::min(hi, out - 1)};
  }

  using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using MatrixMap = Eigen::Map<RowMatrix>;
  using ConstMatrixMap = Eigen::Map<const RowMatrix>;

  std::size_t patch_rows() const {
    return spec_.in_channels * static_cast<std::size_t>(spec_.kernel[0] * spec_.kernel[1] * spec_.kernel[2]);
  }

  // Applies fn(row, output offset, input offset) for every in-bounds run of
  // an unrolled patch matrix row; rows enumerate (ci, kd, kh, kw). Offsets
  // are per sample; run length is `count` with input stride sw.
  template <typename Fn>
  void for_each_patch_run(Fn&& fn) const {
    const auto [kd_n, kh_n, kw_n] = spec_.kernel;
    const auto [sd, sh, sw] = spec_.stride;
    const auto [pd, ph, pw] = spec_.pad;
    const auto [D, H, W] = in_dims_;
    const auto [OD, OH, OW] = out_dims_;
    std::size_t row = 0;
    for (std::size_t ci = 0; ci < spec_.in_channels; ++ci) {
      for (int kd = 0; kd < kd_n; ++kd) {
        const auto [od0, od1] = valid_range(D, OD, kd, sd, pd);
        for (int kh = 0; kh < kh_n; ++kh) {
          const auto [oh0, oh1] = valid_range(H, OH, kh, sh, ph);
          for (int kw = 0; kw < kw_n; ++kw, ++row) {
            const auto [ow0, ow1] = valid_range(W, OW, kw, sw, pw);
            if (ow1 < ow0) continue;
            for (int od = od0; od <= od1; ++od) {
              const int id = od * sd - pd + kd;
              for (int oh = oh0; oh <= oh1; ++oh) {
                const int ih = oh * sh - ph + kh;
                const std::size_t out_off = (static_cast<std::size_t>(od) * OH + oh) * OW + ow0;
                const std::size_t in_off = ci * in_plane() + (static_cast<std::size_t>(id) * H + ih) * W +
                                           static_cast<std::size_t>(ow0 * sw - pw + kw);
                fn(row, out_off, in_off, static_cast<std::size_t>(ow1 - ow0 + 1), sw);
              }
            }
          }
        }
      }
    }
  }

  // Unrolled input patches of every sample: (N, Cin*taps, out_plane).
  void im2col(const Tensor<T>& x) {
    const std::size_t rows = patch_rows(), plane = out_plane();
    cols_.assign(batch_ * rows * plane, T(0));
    for (std::size_t n = 0; n < batch_; ++n) {
      T* cols = cols_.data() + n * rows * plane;
      const T* in = x.data() + n * spec_.in_channels * in_plane();
      for_each_patch_run([&](std::size_t row, std::size_t out_off, std::size_t in_off, std::size_t count, int sw) {
        T* dst = cols + row * plane + out_off;
        const T* src = in + in_off;
        for (std::size_t i = 0; i < count; ++i) dst[i] = src[i * static_cast<std::size_t>(sw)];
      });
    }
  }

  void dense_forward(const Tensor<T>& x, Tensor<T>& y) {
    im2col(x);
    const std::size_t rows = patch_rows(), plane = out_plane(), cout = spec_.out_channels;
    const ConstMatrixMap w(weight.data(), static_cast<Eigen::Index>(cout), static_cast<Eigen::Index>(rows));
    for (std::size_t n = 0; n < batch_; ++n) {
      const ConstMatrixMap cols(cols_.data() + n * rows * plane, static_cast<Eigen::Index>(rows),
                                static_cast<Eigen::Index>(plane));
      MatrixMap out(y.data() + n * cout * plane, static_cast<Eigen::Index>(cout), static_cast<Eigen::Index>(plane));
      out.noalias() += w * cols;
    }
  }

  Tensor<T> dense_backward(const Tensor<T>& g, bool need_input_grad) {
    const std::size_t rows = patch_rows(), plane = out_plane(), cout = spec_.out_channels;
    const ConstMatrixMap w(weight.data(), static_cast<Eigen::Index>(cout), static_cast<Eigen::Index>(rows));
    MatrixMap gw(grad_weight.data(), static_cast<Eigen::Index>(cout), static_cast<Eigen::Index>(rows));
    Tensor<T> grad_x;
    if (need_input_grad) grad_x.resize(input_.shape());
    RowMatrix grad_cols;
    for (std::size_t n = 0; n < batch_; ++n) {
      const ConstMatrixMap cols(cols_.data() + n * rows * plane, static_cast<Eigen::Index>(rows),
                                static_cast<Eigen::Index>(plane));
      const ConstMatrixMap gout(g.data() + n * cout * plane, static_cast<Eigen::Index>(cout),
                                static_cast<Eigen::Index>(plane));
      gw.noalias() += gout * cols.transpose();
      if (!need_input_grad) continue;
      grad_cols.noalias() = w.transpose() * gout;
      T* gin = grad_x.data() + n * spec_.in_channels * in_plane();
      for_each_patch_run([&](std::size_t row, std::size_t out_off, std::size_t in_off, std::size_t count, int sw) {
        const T* src = grad_cols.data() + row * plane + out_off;
        T* dst = gin + in_off;
        for (std::size_t i = 0; i < count; ++i) dst[i * static_cast<std::size_t>(sw)] += src[i];
      });
    }
    return grad_x;
  }

  // weight_t_[tap][co][ci]
  void transposed_weight() {
    const std::size_t cin = spec_.in_channels, cout = spec_.out_channels;
    const std::size_t taps = static_cast<std::size_t>(spec_.kernel[0] * spec_.kernel[1] * spec_.kernel[2]);
    weight_t_.resize(taps * cout * cin);
    for (std::size_t co = 0; co < cout; ++co) {
      for (std::size_t ci = 0; ci < cin; ++ci) {
        for (std::size_t t = 0; t < taps; ++t) {
          weight_t_[(t * cout + co) * cin + ci] = weight[(co * cin + ci) * taps + t];
        }
      }
    }
  }

  // Calls fn(tap, offset of the output cell within a channel plane) for each
  // kernel tap through which `site` reaches a valid output cell.
  template <typename Fn>
  void for_each_tap(const std::array<int, 4>& site, Fn&& fn) const {
    const auto [kd_n, kh_n, kw_n] = spec_.kernel;
    const auto [sd, sh, sw] = spec_.stride;
    const auto [pd, ph, pw] = spec_.pad;
    const auto [OD, OH, OW] = out_dims_;
    for (int kd = 0; kd < kd_n; ++kd) {
      const int nd = site[1] + pd - kd;
      if (nd < 0 || nd % sd != 0 || nd / sd >= OD) continue;
      for (int kh = 0; kh < kh_n; ++kh) {
        const int nh = site[2] + ph - kh;
        if (nh < 0 || nh % sh != 0 || nh / sh >= OH) continue;
        for (int kw = 0; kw < kw_n; ++kw) {
          const int nw = site[3] + pw - kw;
          if (nw < 0 || nw % sw != 0 || nw / sw >= OW) continue;
          const std::size_t tap = static_cast<std::size_t>((kd * kh_n + kh) * kw_n + kw);
          fn(tap, (static_cast<std::size_t>(nd / sd) * OH + nh / sh) * OW + nw / sw);
        }
      }
    }
  }

  Tensor<T> sparse_backward(const Tensor<T>& g, bool need_input_grad) {
    const std::size_t cin = spec_.in_channels, cout = spec_.out_channels;
    const std::size_t taps = static_cast<std::size_t>(spec_.kernel[0] * spec_.kernel[1] * spec_.kernel[2]);
    const std::size_t plane = out_plane();
    std::vector<T> gwt(taps * cout * cin, T(0));
    Tensor<T> grad_x;
    if (need_input_grad) grad_x.resize({sites_.size(), cin});
    std::vector<T> gcol(cout);
    for (std::size_t k = 0; k < sites_.size(); ++k) {
      const T* f = input_.data() + k * cin;
      T* gf = need_input_grad ? grad_x.data() + k * cin : nullptr;
      for_each_tap(sites_[k], [&](std::size_t tap, std::size_t out_offset) {
        const T* src = g.data() + static_cast<std::size_t>(sites_[k][0]) * cout * plane + out_offset;
        for (std::size_t co = 0; co < cout; ++co) gcol[co] = src[co * plane];
        for (std::size_t co = 0; co < cout; ++co) {
          const T go = gcol[co];
          if (go == T(0)) continue;
          T* dst = gwt.data() + (tap * cout + co) * cin;
#pragma omp simd
          for (std::size_t ci = 0; ci < cin; ++ci) dst[ci] += go * f[ci];
          if (gf) {
            const T* w = weight_t_.data() + (tap * cout + co) * cin;
#pragma omp simd
            for (std::size_t ci = 0; ci < cin; ++ci) gf[ci] += go * w[ci];
          }
        }
      });
    }
    for (std::size_t co = 0; co < cout; ++co) {
      for (std::size_t ci = 0; ci < cin; ++ci) {
        for (std::size_t t = 0; t < taps; ++t) {
          grad_weight[(co * cin + ci) * taps + t] += gwt[(t * cout + co) * cin + ci];
        }
      }
    }
    return grad_x;
  }

  ConvSpec spec_;
  std::size_t rank_ = 5;
  bool sparse_ = false;
  std::size_t batch_ = 0;
  std::array<int, 3> in_dims_{}, out_dims_{};
  Tensor<T> input_;
  std::vector<T> cols_;
  Tensor<T> output_;
  std::vector<std::array<int, 4>> sites_;
  std::vector<T> weight_t_;
};

/// Transposed 2-D convolution on (N, C, H, W); weight layout (in, out, k, k).
template <typename T>
class Deconv {
 public:
  Deconv() = default;
  Deconv(std::size_t in, std::size_t out, int k, int stride, int pad, bool bn_relu, std::mt19937_64& rng)
      : k_(k), stride_(stride), pad_(pad), bn_relu_(bn_relu) {
    if (stride < 1) throw Error(Errc::InvalidConfig, "deconvolution stride must be >= 1");
    weight.resize({in, out, static_cast<std::size_t>(k), static_cast<std::size_t>(k)});
    grad_weight.resize(weight.shape());
    glorot_uniform(weight, in * k * k, out * k * k, rng);
    if (bn_relu) {
      bn = BatchNorm<T>(out);
    } else {
      bias.resize({out});
      grad_bias.resize({out});
    }
  }

  std::size_t in_channels() const { return weight.dim(0); }
  std::size_t out_channels() const { return weight.dim(1); }

  Tensor<T> forward(const Tensor<T>& x, Mode mode) {
    if (x.rank() != 4 || x.dim(1) != in_channels()) {
      throw Error(Errc::ShapeMismatch, "deconv expects (N," + std::to_string(in_channels()) + ",H,W), got " +
                                           shape_string(x));
    }
    input_ = x;
    const std::size_t n_batch = x.dim(0), cin = in_channels(), cout = out_channels();
    const int H = int(x.dim(2)), W = int(x.dim(3));
    OH_ = deconv_out_size(H, k_, stride_, pad_);
    OW_ = deconv_out_size(W, k_, stride_, pad_);
    if (OH_ <= 0 || OW_ <= 0) throw Error(Errc::ShapeMismatch, "deconvolution output would be empty");
    Tensor<T> y({n_batch, cout, std::size_t(OH_), std::size_t(OW_)});
    const std::size_t oplane = std::size_t(OH_) * OW_, iplane = std::size_t(H) * W;
    for (std::size_t n = 0; n < n_batch; ++n) {
      if (!bn_relu_) {
        for (std::size_t co = 0; co < cout; ++co) std::fill_n(y.data() + (n * cout + co) * oplane, oplane, bias[co]);
      }
      for (std::size_t ci = 0; ci < cin; ++ci) {
        const T* in = x.data() + (n * cin + ci) * iplane;
        for (std::size_t co = 0; co < cout; ++co) {
          T* out = y.data() + (n * cout + co) * oplane;
          const T* wk = weight.data() + (ci * cout + co) * std::size_t(k_ * k_);
          for (int kh = 0; kh < k_; ++kh) {
            for (int kw = 0; kw < k_; ++kw) {
              const T w = wk[kh * k_ + kw];
              for (int ih = 0; ih < H; ++ih) {
                const int oh = ih * stride_ - pad_ + kh;
                if (oh < 0 || oh >= OH_) continue;
                for (int iw = 0; iw < W; ++iw) {
                  const int ow = iw * stride_ - pad_ + kw;
                  if (ow < 0 || ow >= OW_) continue;
                  out[std::size_t(oh) * OW_ + ow] += w * in[std::size_t(ih) * W + iw];
                }
              }
            }
          }
        }
      }
    }
    if (bn_relu_) {
      y = bn.forward(y, n_batch, oplane, mode);
      relu_inplace(y);
      output_ = y;
    }
    return y;
  }

  Tensor<T> backward(Tensor<T> g, bool need_input_grad = true) {
    const std::size_t n_batch = input_.dim(0), cin = in_channels(), cout = out_channels();
    const int H = int(input_.dim(2)), W = int(input_.dim(3));
    const std::size_t oplane = std::size_t(OH_) * OW_, iplane = std::size_t(H) * W;
    if (g.size() != n_batch * cout * oplane) throw Error(Errc::ShapeMismatch, "deconv backward got " + shape_string(g));
    if (bn_relu_) {
      relu_backward_inplace(g, output_);
      g = bn.backward(g);
    } else {
      for (std::size_t n = 0; n < n_batch; ++n) {
        for (std::size_t co = 0; co < cout; ++co) {
          double s = 0.0;
          for (std::size_t i = 0; i < oplane; ++i) s += g[(n * cout + co) * oplane + i];
          grad_bias[co] += static_cast<T>(s);
        }
      }
    }
    Tensor<T> grad_x;
    if (need_input_grad) grad_x.resize(input_.shape());
    for (std::size_t n = 0; n < n_batch; ++n) {
      for (std::size_t ci = 0; ci < cin; ++ci) {
        const T* in = input_.data() + (n * cin + ci) * iplane;
        T* gin = need_input_grad ? grad_x.data() + (n * cin + ci) * iplane : nullptr;
        for (std::size_t co = 0; co < cout; ++co) {
          const T* gout = g.data() + (n * cout + co) * oplane;
          const std::size_t wbase = (ci * cout + co) * std::size_t(k_ * k_);
          for (int kh = 0; kh < k_; ++kh) {
            for (int kw = 0; kw < k_; ++kw) {
              const T w = weight[wbase + std::size_t(kh * k_ + kw)];
              T acc = T(0);
              for (int ih = 0; ih < H; ++ih) {
                const int oh = ih * stride_ - pad_ + kh;
                if (oh < 0 || oh >= OH_) continue;
                for (int iw = 0; iw < W; ++iw) {
                  const int ow = iw * stride_ - pad_ + kw;
                  if (ow < 0 || ow >= OW_) continue;
                  const T go = gout[std::size_t(oh) * OW_ + ow];
                  acc += go * in[std::size_t(ih) * W + iw];
                  if (gin) gin[std::size_t(ih) * W + iw] += w * go;
                }
              }
              grad_weight[wbase + std::size_t(kh * k_ + kw)] += acc;
            }
          }
        }
      }
    }
    return grad_x;
  }

  void collect(std::vector<ParamRef<T>>& params, const std::string& prefix) {
    params.push_back({prefix + ".weight", &weight, &grad_weight});
    if (bn_relu_) {
      bn.collect(params, prefix + ".bn");
    } else {
      params.push_back({prefix + ".bias", &bias, &grad_bias});
    }
  }
  void collect_buffers(std::vector<BufferRef<T>>& buffers, const std::string& prefix) {
    if (bn_relu_) bn.collect_buffers(buffers, prefix + ".bn");
  }

  Tensor<T> weight, bias;
  Tensor<T> grad_weight, grad_bias;
  BatchNorm<T> bn;

 private:
  int k_ = 2, stride_ = 2, pad_ = 0;
  bool bn_relu_ = true;
  int OH_ = 0, OW_ = 0;
  Tensor<T> input_, output_;
};

}  // namespace fusedet::nn
