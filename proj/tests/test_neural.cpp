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


#include <array>
#include <cmath>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "fusedet/neural/checkpoint.hpp"
#include "fusedet/neural/conv.hpp"
#include "fusedet/neural/gradcheck.hpp"
#include "fusedet/neural/layers.hpp"
#include "fusedet/neural/sgd.hpp"
#include "test_support.hpp"

namespace fusedet::nn {
namespace {

constexpr double kTol = 1e-4;

Tensor<double> random_tensor(std::vector<std::size_t> shape, std::mt19937_64& rng, double scale = 1.0) {
  Tensor<double> t(std::move(shape));
  std::normal_distribution<double> n(0.0, scale);
  for (auto& v : t.values()) v = n(rng);
  return t;
}

double dot(const Tensor<double>& a, const Tensor<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Checks parameter and input gradients of the scalar loss <forward(x), w>
// for a fixed random projection w.
template <typename Forward, typename Backward>
GradCheckResult check_layer(std::vector<ParamRef<double>> params, Tensor<double>& x, Forward&& forward,
                            Backward&& backward, std::uint64_t seed = 1) {
  std::mt19937_64 rng(seed);
  Tensor<double> probe = forward(x);
  const Tensor<double> w = random_tensor(probe.shape(), rng);
  zero_grads<double>(params);
  forward(x);
  Tensor<double> gx = backward(w);
  EXPECT_EQ(gx.size(), x.size());
  params.push_back({"input", &x, &gx});
  auto loss = [&] { return dot(forward(x), w); };
  return gradient_check(loss, params);
}

#define EXPECT_GRAD_OK(r)                                                                                    \
  EXPECT_TRUE((r).passed(kTol)) << (r).worst_parameter << "[" << (r).worst_index << "] analytic "            \
                                << (r).worst_analytic << " numeric " << (r).worst_numeric << " rel "       \
                                << (r).max_relative_error

TEST(Fcn, IdentityEvalClampsNegative) {
  std::mt19937_64 rng(0);
  Fcn<double> fcn(2, 2, rng);
  fcn.linear.weight.fill(0.0);
  fcn.linear.weight.at(0, 0) = 1.0;
  fcn.linear.weight.at(1, 1) = 1.0;
  fcn.bn.eps = 0.0;
  Tensor<double> x({1, 2});
  x[0] = -1.0;
  x[1] = 2.0;
  const Tensor<double> y = fcn.forward(x, Mode::Eval);
  EXPECT_EQ(y[0], 0.0);
  EXPECT_EQ(y[1], 2.0);
}

TEST(BatchNorm, TrainStatisticsAreStandardized) {
  std::mt19937_64 rng(2);
  BatchNorm<double> bn(5);
  Tensor<double> x = random_tensor({40, 5, 1}, rng, 5.0);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] += static_cast<double>(i % 5);
  const Tensor<double> y = bn.forward(x, 40, 1, Mode::Train);
  for (std::size_t c = 0; c < 5; ++c) {
    double mean = 0.0, sq = 0.0;
    for (std::size_t n = 0; n < 40; ++n) mean += y[n * 5 + c];
    mean /= 40.0;
    for (std::size_t n = 0; n < 40; ++n) sq += (y[n * 5 + c] - mean) * (y[n * 5 + c] - mean);
    EXPECT_NEAR(mean, 0.0, 1e-6);
    EXPECT_NEAR(sq / 40.0, 1.0, 1e-6);
  }
  for (std::size_t c = 0; c < 5; ++c) EXPECT_GE(bn.running_var[c], 0.0);
}

TEST(BatchNorm, SingleSampleTrainThrows) {
  BatchNorm<double> bn(2);
  Tensor<double> x({1, 2});
  try {
    bn.forward(x, 1, 1, Mode::Train);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::BatchTooSmall);
  }
}

TEST(Gradient, LinearSumHasOuterProductGradient) {
  std::mt19937_64 rng(3);
  Linear<double> lin(4, 3, rng);
  Tensor<double> x = random_tensor({1, 4}, rng);
  zero_grads<double>(std::vector<ParamRef<double>>{{"w", &lin.weight, &lin.grad_weight}});
  lin.forward(x);
  lin.backward(Tensor<double>({1, 3}, 1.0));
  for (std::size_t o = 0; o < 3; ++o) {
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(lin.grad_weight.at(o, i), x[i], 1e-12);
  }
}

TEST(Gradient, Linear) {
  std::mt19937_64 rng(4);
  Linear<double> lin(6, 5, rng);
  std::normal_distribution<double> n;
  for (auto& v : lin.bias.values()) v = n(rng);
  std::vector<ParamRef<double>> params;
  lin.collect(params, "linear");
  Tensor<double> x = random_tensor({7, 6}, rng);
  auto r = check_layer(params, x, [&](const Tensor<double>& in) { return lin.forward(in); },
                       [&](const Tensor<double>& g) { return lin.backward(g); });
  EXPECT_LT(r.max_relative_error, 1e-8);
}

TEST(Gradient, BatchNormTrainAndEval) {
  for (Mode mode : {Mode::Train, Mode::Eval}) {
    std::mt19937_64 rng(5);
    BatchNorm<double> bn(3);
    for (auto& v : bn.gamma.values()) v = 0.5 + std::uniform_real_distribution<double>()(rng);
    for (auto& v : bn.beta.values()) v = std::normal_distribution<double>()(rng);
    bn.running_var.fill(1.7);
    std::vector<ParamRef<double>> params;
    bn.collect(params, "bn");
    Tensor<double> x = random_tensor({4, 3, 5}, rng);
    auto r = check_layer(params, x, [&](const Tensor<double>& in) { return bn.forward(in, 4, 5, mode); },
                         [&](const Tensor<double>& g) { return bn.backward(g); });
    EXPECT_GRAD_OK(r);
  }
}

TEST(Gradient, Fcn) {
  std::mt19937_64 rng(6);
  Fcn<double> fcn(5, 4, rng);
  std::vector<ParamRef<double>> params;
  fcn.collect(params, "fcn");
  Tensor<double> x = random_tensor({9, 5}, rng);
  auto r = check_layer(params, x, [&](const Tensor<double>& in) { return fcn.forward(in, Mode::Train); },
                       [&](const Tensor<double>& g) { return fcn.backward(g); });
  EXPECT_GRAD_OK(r);
}

TEST(Gradient, SegmentMax) {
  std::mt19937_64 rng(7);
  SegmentMax<double> pool;
  const std::vector<std::size_t> offsets{0, 3, 4, 8};
  Tensor<double> x = random_tensor({8, 3}, rng);
  auto r = check_layer({}, x, [&](const Tensor<double>& in) { return pool.forward(in, offsets); },
                       [&](const Tensor<double>& g) { return pool.backward(g); });
  EXPECT_GRAD_OK(r);
}

TEST(Gradient, Vfe) {
  std::mt19937_64 rng(8);
  Vfe<double> vfe(5, 8, rng);
  std::vector<ParamRef<double>> params;
  vfe.collect(params, "vfe");
  const std::vector<std::size_t> offsets{0, 2, 3, 7, 10};
  Tensor<double> x = random_tensor({10, 5}, rng);
  auto r = check_layer(params, x, [&](const Tensor<double>& in) { return vfe.forward(in, offsets, Mode::Train); },
                       [&](const Tensor<double>& g) { return vfe.backward(g); });
  EXPECT_GRAD_OK(r);
}

TEST(Gradient, Conv2dWithAndWithoutBn) {
  for (bool bn_relu : {true, false}) {
    std::mt19937_64 rng(9);
    Conv<double> conv(ConvSpec::conv2d(2, 3, 3, 2, 1, bn_relu), rng);
    if (!bn_relu) {
      for (auto& v : conv.bias.values()) v = std::normal_distribution<double>()(rng);
    }
    std::vector<ParamRef<double>> params;
    conv.collect(params, "conv");
    Tensor<double> x = random_tensor({2, 2, 5, 6}, rng);
    auto r = check_layer(params, x, [&](const Tensor<double>& in) { return conv.forward(in, Mode::Train); },
                         [&](const Tensor<double>& g) { return conv.backward(g); });
    EXPECT_GRAD_OK(r);
  }
}

TEST(Gradient, Conv3dDense) {
  std::mt19937_64 rng(10);
  Conv<double> conv(ConvSpec::conv3d(2, 3, 3, {2, 1, 1}, {1, 1, 1}), rng);
  std::vector<ParamRef<double>> params;
  conv.collect(params, "conv");
  Tensor<double> x = random_tensor({1, 2, 4, 4, 5}, rng);
  auto r = check_layer(params, x, [&](const Tensor<double>& in) { return conv.forward(in, Mode::Train); },
                       [&](const Tensor<double>& g) { return conv.backward(g); });
  EXPECT_GRAD_OK(r);
}

TEST(Gradient, Conv3dSparse) {
  std::mt19937_64 rng(11);
  Conv<double> conv(ConvSpec::conv3d(3, 4, 3, {2, 1, 1}, {1, 1, 1}), rng);
  std::vector<ParamRef<double>> params;
  conv.collect(params, "conv");
  const std::vector<std::array<int, 4>> sites{{0, 0, 0, 0}, {0, 1, 2, 3}, {0, 3, 1, 1}, {0, 2, 3, 0}, {0, 0, 2, 2}};
  const std::array<int, 4> dims{1, 4, 4, 4};
  Tensor<double> x = random_tensor({sites.size(), 3}, rng);
  auto r = check_layer(
      params, x, [&](const Tensor<double>& in) { return conv.forward_sparse(sites, in, dims, Mode::Train); },
      [&](const Tensor<double>& g) { return conv.backward(g); });
  EXPECT_GRAD_OK(r);
}

TEST(Gradient, DeconvWithAndWithoutBn) {
  for (bool bn_relu : {true, false}) {
    std::mt19937_64 rng(12);
    Deconv<double> deconv(3, 2, 3, 2, 1, bn_relu, rng);
    std::vector<ParamRef<double>> params;
    deconv.collect(params, "deconv");
    Tensor<double> x = random_tensor({1, 3, 3, 4}, rng);
    auto r = check_layer(params, x, [&](const Tensor<double>& in) { return deconv.forward(in, Mode::Train); },
                         [&](const Tensor<double>& g) { return deconv.backward(g); });
    EXPECT_GRAD_OK(r);
  }
}

TEST(Gradient, QuadraticErrorShrinksWithStep) {
  Tensor<double> p({1}, 0.7), g({1}, 0.0);
  std::vector<ParamRef<double>> params{{"p", &p, &g}};
  auto f = [&] { return p[0] * p[0] * p[0]; };
  g[0] = 3.0 * 0.7 * 0.7;
  GradCheckOptions coarse, fine;
  coarse.step = 1e-2;
  fine.step = 1e-3;
  const double e1 = gradient_check(f, params, coarse).max_relative_error;
  const double e2 = gradient_check(f, params, fine).max_relative_error;
  EXPECT_NEAR(e1 / e2, 100.0, 1.0);
}

TEST(Conv, OnesKernelSumsWindow) {
  std::mt19937_64 rng(0);
  Conv<double> conv(ConvSpec::conv2d(1, 1, 3, 1, 0, false), rng);
  conv.weight.fill(1.0);
  conv.bias.fill(0.0);
  Tensor<double> x({1, 1, 3, 3}, 1.0);
  const Tensor<double> y = conv.forward(x, Mode::Eval);
  ASSERT_EQ(y.size(), 1u);
  EXPECT_DOUBLE_EQ(y[0], 9.0);
  EXPECT_EQ(conv_out_size(8, 3, 2, 1), 4);
  EXPECT_EQ(deconv_out_size(4, 2, 2, 0), 8);
}

TEST(Conv, WrongChannelsThrow) {
  std::mt19937_64 rng(0);
  Conv<double> conv(ConvSpec::conv2d(2, 1, 3, 1, 1), rng);
  Tensor<double> x({1, 3, 4, 4});
  try {
    conv.forward(x, Mode::Eval);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::ShapeMismatch);
  }
}

TEST(Conv, SparseMatchesDense) {
  std::mt19937_64 rng(13);
  Conv<double> sparse(ConvSpec::conv3d(3, 4, 3, {2, 1, 1}, {1, 1, 1}), rng);
  Conv<double> dense = sparse;
  const std::array<int, 4> dims{2, 5, 4, 6};
  std::vector<std::array<int, 4>> sites;
  std::bernoulli_distribution occupied(0.2);
  for (int n = 0; n < dims[0]; ++n)
    for (int d = 0; d < dims[1]; ++d)
      for (int h = 0; h < dims[2]; ++h)
        for (int w = 0; w < dims[3]; ++w)
          if (occupied(rng)) sites.push_back({n, d, h, w});
  const Tensor<double> rows = random_tensor({sites.size(), 3}, rng);
  Tensor<double> grid({2, 3, 5, 4, 6});
  for (std::size_t k = 0; k < sites.size(); ++k) {
    const auto [n, d, h, w] = sites[k];
    for (int c = 0; c < 3; ++c) grid[(((n * 3 + c) * 5 + d) * 4 + h) * 6 + w] = rows.at(k, c);
  }
  const Tensor<double> a = sparse.forward_sparse(sites, rows, dims, Mode::Train);
  const Tensor<double> b = dense.forward(grid, Mode::Train);
  ASSERT_EQ(a.shape(), b.shape());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
}

TEST(Deconv, DeltaInputCopiesKernel) {
  std::mt19937_64 rng(0);
  Deconv<double> deconv(1, 1, 2, 2, 0, false, rng);
  deconv.weight.fill(1.0);
  deconv.bias.fill(0.0);
  Tensor<double> x({1, 1, 3, 4});
  x[1 * 4 + 2] = 1.0;
  const Tensor<double> y = deconv.forward(x, Mode::Eval);
  ASSERT_EQ(y.dim(2), 6u);
  ASSERT_EQ(y.dim(3), 8u);
  for (std::size_t r = 0; r < 6; ++r) {
    for (std::size_t c = 0; c < 8; ++c) {
      const bool inside = (r == 2 || r == 3) && (c == 4 || c == 5);
      EXPECT_EQ(y[r * 8 + c], inside ? 1.0 : 0.0);
    }
  }
}

TEST(Vfe, TwoPointExample) {
  SegmentMax<double> pool;
  Tensor<double> x({2, 2});
  x[0] = 1;
  x[1] = 5;
  x[2] = 3;
  x[3] = 2;
  const std::vector<std::size_t> offsets{0, 2};
  const Tensor<double> m = pool.forward(x, offsets);
  EXPECT_EQ(m[0], 3.0);
  EXPECT_EQ(m[1], 5.0);
}

TEST(Vfe, ConcatenatesVoxelMaxOntoPoints) {
  std::mt19937_64 rng(14);
  Vfe<double> vfe(4, 6, rng);
  const std::vector<std::size_t> offsets{0, 1, 4};
  Tensor<double> x = random_tensor({4, 4}, rng);
  const Tensor<double> y = vfe.forward(x, offsets, Mode::Train);
  ASSERT_EQ(y.dim(1), 6u);
  for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(y.at(0, c), y.at(0, c + 3));  // single-point voxel
  for (std::size_t n = 1; n < 4; ++n) {
    for (std::size_t c = 0; c < 3; ++c) {
      EXPECT_EQ(y.at(n, c + 3), vfe.summary.at(1, c));
      EXPECT_LE(y.at(n, c), vfe.summary.at(1, c));
    }
  }
}

TEST(Vfe, WithinVoxelPermutationInvariance) {
  std::mt19937_64 rng(15);
  for (int trial = 0; trial < 20; ++trial) {
    Vfe<double> vfe(5, 8, rng);
    Vfe<double> copy = vfe;
    const std::size_t k_count = 4, slots = 5;
    Tensor<double> points = random_tensor({k_count, slots, 5}, rng);
    std::vector<bool> mask(k_count * slots);
    std::bernoulli_distribution keep(0.7);
    for (std::size_t k = 0; k < k_count; ++k) {
      for (std::size_t t = 0; t < slots; ++t) mask[k * slots + t] = t == 0 || keep(rng);
    }
    std::vector<std::size_t> perm(slots);
    Tensor<double> permuted = points;
    std::vector<bool> permuted_mask(mask.size());
    for (std::size_t k = 0; k < k_count; ++k) {
      std::iota(perm.begin(), perm.end(), 0);
      std::shuffle(perm.begin(), perm.end(), rng);
      for (std::size_t t = 0; t < slots; ++t) {
        permuted_mask[k * slots + t] = mask[k * slots + perm[t]];
        for (std::size_t c = 0; c < 5; ++c) {
          permuted[(k * slots + t) * 5 + c] = points[(k * slots + perm[t]) * 5 + c];
        }
      }
    }
    vfe_forward_padded(vfe, points, mask, Mode::Eval);
    vfe_forward_padded(copy, permuted, permuted_mask, Mode::Eval);
    ASSERT_EQ(vfe.summary.shape(), copy.summary.shape());
    for (std::size_t i = 0; i < vfe.summary.size(); ++i) EXPECT_NEAR(vfe.summary[i], copy.summary[i], 1e-12);
  }
}

TEST(Vfe, EmptySegmentThrows) {
  SegmentMax<double> pool;
  Tensor<double> x({2, 1});
  const std::vector<std::size_t> offsets{0, 2, 2};
  try {
    pool.forward(x, offsets);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::EmptyVoxelRow);
  }
}

TEST(Sgd, PlainStep) {
  Tensor<double> p({1}, 1.0), g({1}, 2.0);
  std::vector<ParamRef<double>> params{{"p", &p, &g}};
  Sgd<double> sgd(0.1, 0.0);
  sgd.step(params);
  EXPECT_NEAR(p[0], 0.8, 1e-15);
}

TEST(Sgd, MomentumRecurrence) {
  Tensor<double> p({1}, 0.0), g({1}, 1.0);
  std::vector<ParamRef<double>> params{{"p", &p, &g}};
  Sgd<double> sgd(1.0, 0.9);
  sgd.step(params);
  sgd.step(params);
  EXPECT_NEAR(p[0], -2.9, 1e-12);
}

TEST(Sgd, ZeroGradientLeavesParameters) {
  Tensor<double> p({3}, 0.25), g({3}, 0.0);
  std::vector<ParamRef<double>> params{{"p", &p, &g}};
  Sgd<double> sgd(0.5, 0.9);
  for (int i = 0; i < 3; ++i) sgd.step(params);
  for (double v : p.values()) EXPECT_EQ(v, 0.25);
}

TEST(Sgd, ShapeMismatchThrows) {
  Tensor<double> p({3}), g({2});
  std::vector<ParamRef<double>> params{{"p", &p, &g}};
  Sgd<double> sgd(0.5, 0.9);
  try {
    sgd.step(params);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::ShapeMismatch);
  }
}

TEST(Eval, ForwardIsBitIdentical) {
  std::mt19937_64 rng(16);
  Conv<float> conv(ConvSpec::conv2d(3, 4, 3, 1, 1), rng);
  Tensor<float> x({1, 3, 6, 6});
  std::normal_distribution<float> n;
  for (auto& v : x.values()) v = n(rng);
  const Tensor<float> a = conv.forward(x, Mode::Eval);
  const Tensor<float> b = conv.forward(x, Mode::Eval);
  EXPECT_EQ(std::vector<float>(a.values().begin(), a.values().end()),
            std::vector<float>(b.values().begin(), b.values().end()));
}

TEST(Checkpoint, RoundTripRestoresValues) {
  testing::TempDir dir;
  std::mt19937_64 rng(17);
  Fcn<float> a(4, 3, rng), b(4, 3, rng);
  a.bn.running_mean.fill(0.5f);
  std::vector<ParamRef<float>> pa, pb;
  std::vector<BufferRef<float>> ba, bb;
  a.collect(pa, "fcn");
  a.collect_buffers(ba, "fcn");
  b.collect(pb, "fcn");
  b.collect_buffers(bb, "fcn");
  save_checkpoint<float>(dir.path(), pa, ba);
  load_checkpoint<float>(dir.path(), pb, bb);
  for (std::size_t i = 0; i < a.linear.weight.size(); ++i) EXPECT_EQ(a.linear.weight[i], b.linear.weight[i]);
  EXPECT_EQ(b.bn.running_mean[0], 0.5f);
}

}  // namespace
}  // namespace fusedet::nn
