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

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "fusedet/detector.hpp"
#include "fusedet/error.hpp"
#include "fusedet/neural/gradcheck.hpp"
#include "fusedet/neural/sgd.hpp"
#include "test_support.hpp"

namespace fusedet {
namespace {

using testing::random_scene;
using testing::tiny_config;

struct Case {
  FusionMode mode;
  int patch;
};

class FullGradient : public ::testing::TestWithParam<Case> {};

TEST_P(FullGradient, MatchesCentralDifferences) {
  const auto [mode, patch] = GetParam();
  const NetworkConfig cfg = tiny_config(mode, patch);
  const auto scene = random_scene(11);
  const SceneInput input = build_scene_input(scene.cloud, scene.calib, cfg, &scene.features, &scene.image);
  ASSERT_GT(input.voxels.size(), 2u);
  const AnchorGrid anchors = generate_anchors(cfg);
  const TrainingTargets targets = assign_targets(anchors, scene.boxes, cfg.anchors);

  Network<double> net(cfg);
  const auto params = net.parameters();
  auto loss = [&] { return compute_loss(net.forward(input, nn::Mode::Train), targets, cfg.loss).total; };
  nn::zero_grads<double>(params);
  const auto result = compute_loss(net.forward(input, nn::Mode::Train), targets, cfg.loss);
  net.backward(result.grad_logits, result.grad_regression);

  nn::GradCheckOptions options;
  options.max_per_tensor = 12;
  const auto check = nn::gradient_check(loss, params, options);
  EXPECT_TRUE(check.passed(1e-4)) << check.worst_parameter << "[" << check.worst_index
                                  << "] analytic=" << check.worst_analytic << " numeric=" << check.worst_numeric
                                  << " rel=" << check.max_relative_error;
}

template <typename F>
Errc code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return Errc::InvalidConfig;
}

Box3D box_at(double x, double y, double z, double l, double w, double h, double yaw) {
  Box3D b;
  b.center = {x, y, z};
  b.l = l;
  b.w = w;
  b.h = h;
  b.yaw = yaw;
  return b;
}

TEST(Config, FusedDimensionContracts) {
  const NetworkConfig pf = NetworkConfig::kitti(FusionMode::PointFusion);
  EXPECT_EQ(pf.point_input_dim(), 23u);
  EXPECT_EQ(pf.vfe.front().first, 23u);
  EXPECT_EQ(pf.vfe.back().second, 128u);
  const NetworkConfig vf = NetworkConfig::kitti(FusionMode::VoxelFusion);
  EXPECT_EQ(vf.voxel_feature_dim(), 128u);
  EXPECT_EQ(vf.vfe.back().second, 64u);
  const NetworkConfig lo = NetworkConfig::kitti(FusionMode::LidarOnly);
  EXPECT_EQ(lo.point_input_dim(), 7u);
  EXPECT_EQ(NetworkConfig::kitti(FusionMode::RawPatch, 3).point_input_dim(), 34u);
  for (const auto& cfg : {pf, vf, lo}) EXPECT_NO_THROW(cfg.validate());
  const auto [mode, k] = parse_fusion_mode("patch5");
  EXPECT_EQ(mode, FusionMode::RawPatch);
  EXPECT_EQ(k, 5);
  EXPECT_THROW(parse_fusion_mode("patch4"), Error);
  EXPECT_THROW(parse_fusion_mode("camera"), Error);
}

TEST(Config, ToyOutputIsHalfTheBevGrid) {
  const NetworkConfig cfg = NetworkConfig::toy(FusionMode::LidarOnly);
  const auto dims = cfg.grid.grid_dims();
  EXPECT_EQ(cfg.output_dims(), (std::array<int, 2>{dims[1] / 2, dims[0] / 2}));
  Network<float> net(cfg);
  const auto scene = random_scene(1);
  const SceneInput input = build_scene_input(scene.cloud, scene.calib, cfg, nullptr, nullptr);
  const auto out = net.forward(input, nn::Mode::Eval);
  EXPECT_EQ(out.scores.dim(2), static_cast<std::size_t>(dims[1] / 2));
  EXPECT_EQ(out.scores.dim(3), static_cast<std::size_t>(dims[0] / 2));
  EXPECT_EQ(out.regression.dim(1), 14u);
}

TEST(Config, TextRoundTripAndUnknownKey) {
  NetworkConfig cfg = NetworkConfig::toy(FusionMode::VoxelFusion);
  cfg.schedule.epochs = 12;
  cfg.post.score_threshold = 0.25;
  cfg.seed = 99;
  const NetworkConfig back = parse_network_config(format_network_config(cfg), NetworkConfig{});
  EXPECT_EQ(format_network_config(back), format_network_config(cfg));
  EXPECT_EQ(back.fusion_mode, FusionMode::VoxelFusion);
  EXPECT_EQ(back.schedule.epochs, 12);
  EXPECT_EQ(code_of([] { parse_network_config("no_such_key = 3\n", NetworkConfig{}); }), Errc::InvalidConfig);
}

TEST(Config, IndivisibleGridRejected) {
  NetworkConfig cfg = NetworkConfig::toy(FusionMode::LidarOnly);
  cfg.grid.range_max[0] = cfg.grid.range_min[0] + 30 * cfg.grid.voxel_size[0];
  EXPECT_EQ(code_of([&] { generate_anchors(cfg); }), Errc::IndivisibleGrid);
}

TEST(Anchors, CountCenterAndOrdering) {
  VoxelGridConfig grid;
  grid.range_min = {0, -4, -3};
  grid.range_max = {8, 4, 1};
  grid.voxel_size = {1, 1, 4};
  const AnchorGrid a = generate_anchors(grid, AnchorConfig{}, 2, 2);
  EXPECT_EQ(a.rows, 4);
  EXPECT_EQ(a.cols, 4);
  ASSERT_EQ(a.size(), 32u);
  EXPECT_DOUBLE_EQ(a.anchors[0].center.x(), 1.0);
  EXPECT_DOUBLE_EQ(a.anchors[0].center.y(), -3.0);
  EXPECT_DOUBLE_EQ(a.anchors[0].center.z(), -1.0);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_DOUBLE_EQ(a.anchors[i].yaw, i % 2 ? kPi / 2 : 0.0);
  EXPECT_DOUBLE_EQ(a.anchors[2].center.x(), 3.0);             // next column
  EXPECT_DOUBLE_EQ(a.anchors[2 * 4].center.y(), -1.0);        // next row
  EXPECT_DOUBLE_EQ(a.anchors[0].l, 3.9);
}

TEST(Residuals, Examples) {
  const Box3D anchor = box_at(10, 2, -1, 3.9, 1.6, 1.56, 0);
  const double da = std::sqrt(3.9 * 3.9 + 1.6 * 1.6);
  EXPECT_NEAR(da, 4.2154, 1e-4);
  const Residual r = encode_residuals(anchor, box_at(10 + da, 2, -1, 3.9, 1.6, 1.56, 0));
  EXPECT_NEAR(r[0], 1.0, 1e-12);
  for (int i = 1; i < 7; ++i) EXPECT_NEAR(r[i], 0.0, 1e-12);
  const Residual zero{};
  const Box3D same = decode_residuals(anchor, zero);
  EXPECT_EQ(same.center, anchor.center);
  EXPECT_DOUBLE_EQ(same.l, anchor.l);
  Residual dl{};
  dl[3] = std::log(2.0);
  EXPECT_NEAR(decode_residuals(anchor, dl).l, 7.8, 1e-12);
  EXPECT_EQ(code_of([&] { encode_residuals(anchor, box_at(0, 0, 0, 0, 1, 1, 0)); }), Errc::NonPositiveSize);
  EXPECT_DOUBLE_EQ(smooth_l1(0.5), 0.125);
  EXPECT_DOUBLE_EQ(smooth_l1(2.0), 1.5);
  EXPECT_DOUBLE_EQ(smooth_l1(-2.0), 1.5);
}

TEST(Residuals, RoundTripRandomPairs) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int i = 0; i < 100; ++i) {
    const Box3D a = box_at(20 * u(rng), 20 * u(rng), u(rng), 3.9, 1.6, 1.56, i % 2 ? kPi / 2 : 0.0);
    const Box3D g = box_at(20 * u(rng), 20 * u(rng), u(rng), 4 + u(rng), 1.7 + 0.5 * u(rng), 1.5 + 0.3 * u(rng),
                           kPi * u(rng));
    const Box3D d = decode_residuals(a, encode_residuals(a, g));
    EXPECT_LT((d.center - g.center).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_NEAR(d.l, g.l, 1e-9);
    EXPECT_NEAR(d.w, g.w, 1e-9);
    EXPECT_NEAR(d.h, g.h, 1e-9);
    EXPECT_NEAR(std::abs(normalize_angle(d.yaw - g.yaw)), 0.0, 1e-9);
    EXPECT_GT(d.yaw, -kPi);
    EXPECT_LE(d.yaw, kPi);
  }
}

TEST(Targets, EmptySceneAllNegative) {
  const AnchorGrid anchors = generate_anchors(NetworkConfig::toy(FusionMode::LidarOnly));
  const TrainingTargets t = assign_targets(anchors, {}, AnchorConfig{});
  EXPECT_EQ(t.negatives(), anchors.size());
  EXPECT_EQ(t.positives(), 0u);
}

TEST(Targets, IdenticalGtIsPositiveWithZeroResiduals) {
  const AnchorGrid anchors = generate_anchors(NetworkConfig::toy(FusionMode::LidarOnly));
  const std::size_t idx = 137;
  const std::vector<Box3D> gts{anchors.anchors[idx]};
  const TrainingTargets t = assign_targets(anchors, gts, AnchorConfig{});
  EXPECT_EQ(t.labels[idx], AnchorLabel::Positive);
  EXPECT_EQ(t.matched[idx], 0);
  for (double r : t.residuals[idx]) EXPECT_NEAR(r, 0.0, 1e-12);
}

TEST(Targets, PartitionAndArgmaxRule) {
  const NetworkConfig cfg = NetworkConfig::toy(FusionMode::LidarOnly);
  const AnchorGrid anchors = generate_anchors(cfg);
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> x(1, 15), y(-7, 7), u(-1, 1);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<Box3D> gts;
    for (int i = 0; i < 1 + trial % 4; ++i) {
      gts.push_back(box_at(x(rng), y(rng), -1 + 0.2 * u(rng), 4 + 0.4 * u(rng), 1.7 + 0.1 * u(rng), 1.5,
                           kPi * u(rng)));
    }
    const TrainingTargets t = assign_targets(anchors, gts, cfg.anchors);
    ASSERT_EQ(t.labels.size(), anchors.size());
    std::size_t pos = 0, neg = 0, ign = 0;
    std::vector<int> per_gt(gts.size(), 0);
    for (std::size_t i = 0; i < anchors.size(); ++i) {
      switch (t.labels[i]) {
        case AnchorLabel::Positive:
          ++pos;
          ASSERT_GE(t.matched[i], 0);
          ++per_gt[static_cast<std::size_t>(t.matched[i])];
          break;
        case AnchorLabel::Negative:
          ++neg;
          EXPECT_EQ(t.matched[i], -1);
          break;
        case AnchorLabel::Ignore:
          ++ign;
          EXPECT_EQ(t.matched[i], -1);
          break;
      }
      double best = 0.0;
      for (const auto& g : gts) best = std::max(best, bev_iou(anchors.anchors[i], g));
      if (best >= cfg.anchors.positive_iou) {
        EXPECT_EQ(t.labels[i], AnchorLabel::Positive);
      }
      if (t.labels[i] == AnchorLabel::Negative) {
        EXPECT_LT(best, cfg.anchors.negative_iou);
      }
    }
    EXPECT_EQ(pos + neg + ign, anchors.size());
    for (int c : per_gt) EXPECT_GE(c, 1);
  }
}

TEST(Loss, PerfectPredictionsApproachZero) {
  const NetworkConfig cfg = NetworkConfig::toy(FusionMode::LidarOnly);
  const AnchorGrid anchors = generate_anchors(cfg);
  const std::vector<Box3D> gts{box_at(8.3, 0.7, -1.0, 4.0, 1.7, 1.5, 0.2)};
  const TrainingTargets t = assign_targets(anchors, gts, cfg.anchors);
  const auto [rows, cols] = cfg.output_dims();
  NetworkOutput<double> out;
  out.logits.resize({1, 2, static_cast<std::size_t>(rows), static_cast<std::size_t>(cols)});
  out.regression.resize({1, 14, static_cast<std::size_t>(rows), static_cast<std::size_t>(cols)});
  const std::size_t plane = static_cast<std::size_t>(rows * cols);
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    const std::size_t cell = i / 2, o = i % 2;
    out.logits[o * plane + cell] = t.labels[i] == AnchorLabel::Positive ? 40.0 : -40.0;
    if (t.labels[i] == AnchorLabel::Positive) {
      for (std::size_t k = 0; k < 7; ++k) out.regression[(o * 7 + k) * plane + cell] = t.residuals[i][k];
    }
  }
  out.scores = out.logits;
  const auto loss = compute_loss(out, t, cfg.loss);
  EXPECT_LT(loss.total, 1e-12);
  TrainingTargets all_pos = t;
  std::fill(all_pos.labels.begin(), all_pos.labels.end(), AnchorLabel::Ignore);
  EXPECT_EQ(code_of([&] { compute_loss(out, all_pos, cfg.loss); }), Errc::NoNegatives);
}

TEST(Forward, EmptySceneGivesConstantScoreMap) {
  const NetworkConfig cfg = tiny_config(FusionMode::LidarOnly);
  Network<double> net(cfg);
  SceneInput empty;
  empty.points.resize({0, 7});
  const auto out = net.forward(empty, nn::Mode::Eval);
  const std::size_t plane = out.scores.dim(2) * out.scores.dim(3);
  double bias[2] = {0, 0};
  for (const auto& p : net.parameters()) {
    if (p.name.find("score") != std::string::npos && p.name.ends_with("bias")) {
      bias[0] = (*p.value)[0];
      bias[1] = (*p.value)[1];
    }
  }
  for (std::size_t o = 0; o < 2; ++o) {
    for (std::size_t i = 0; i < plane; ++i) {
      EXPECT_NEAR(out.scores[o * plane + i], 1.0 / (1.0 + std::exp(-bias[o])), 1e-12);
    }
  }
}

SceneInput permute_voxels(const SceneInput& in, std::mt19937_64& rng) {
  std::vector<std::size_t> order(in.voxels.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  SceneInput out;
  out.points.resize(in.points.shape());
  if (!in.point_image.empty()) out.point_image.resize(in.point_image.shape());
  if (!in.voxel_image.empty()) out.voxel_image.resize(in.voxel_image.shape());
  std::size_t row = 0;
  for (std::size_t k : order) {
    out.voxels.push_back(in.voxels[k]);
    for (std::size_t r = in.offsets[k]; r < in.offsets[k + 1]; ++r, ++row) {
      std::copy_n(in.points.data() + r * 7, 7, out.points.data() + row * 7);
      if (!in.point_image.empty()) {
        const std::size_t w = in.point_image.dim(1);
        std::copy_n(in.point_image.data() + r * w, w, out.point_image.data() + row * w);
      }
    }
    out.offsets.push_back(row);
    if (!in.voxel_image.empty()) {
      const std::size_t w = in.voxel_image.dim(1);
      std::copy_n(in.voxel_image.data() + k * w, w, out.voxel_image.data() + (out.voxels.size() - 1) * w);
    }
  }
  return out;
}

TEST_P(FullGradient, ForwardIgnoresVoxelOrder) {
  const auto [mode, patch] = GetParam();
  const NetworkConfig cfg = tiny_config(mode, patch);
  const auto scene = random_scene(21);
  const SceneInput input = build_scene_input(scene.cloud, scene.calib, cfg, &scene.features, &scene.image);
  std::mt19937_64 rng(2);
  const SceneInput shuffled = permute_voxels(input, rng);
  for (nn::Mode m : {nn::Mode::Eval, nn::Mode::Train}) {
    Network<float> a(cfg), b(cfg);
    const auto oa = a.forward(input, m);
    const auto ob = b.forward(shuffled, m);
    EXPECT_TRUE(std::equal(oa.logits.values().begin(), oa.logits.values().end(), ob.logits.values().begin()));
    EXPECT_TRUE(
        std::equal(oa.regression.values().begin(), oa.regression.values().end(), ob.regression.values().begin()));
  }
}

TEST(Infer, ThresholdSingleAnchorAndDuplicates) {
  const NetworkConfig cfg = NetworkConfig::toy(FusionMode::LidarOnly);
  const AnchorGrid anchors = generate_anchors(cfg);
  const auto [rows, cols] = cfg.output_dims();
  const std::size_t plane = static_cast<std::size_t>(rows * cols);
  NetworkOutput<float> out;
  out.logits.resize({1, 2, static_cast<std::size_t>(rows), static_cast<std::size_t>(cols)}, -5.0f);
  out.regression.resize({1, 14, static_cast<std::size_t>(rows), static_cast<std::size_t>(cols)});
  auto refresh = [&] {
    out.scores = out.logits;
    for (auto& v : out.scores.values()) v = 1.0f / (1.0f + std::exp(-v));
  };
  refresh();
  EXPECT_TRUE(decode_detections(out, anchors, cfg.post).empty());

  const std::size_t cell = 5 * static_cast<std::size_t>(cols) + 7;
  out.logits[cell] = 3.0f;
  refresh();
  auto dets = decode_detections(out, anchors, cfg.post);
  ASSERT_EQ(dets.size(), 1u);
  EXPECT_LT((dets[0].box.center - anchors.anchors[cell * 2].center).norm(), 1e-6);
  EXPECT_NEAR(dets[0].score, 1.0 / (1.0 + std::exp(-3.0)), 1e-6);

  // The neighbouring cell regresses onto the same box with a lower score.
  const double da = std::hypot(cfg.anchors.length, cfg.anchors.width);
  out.logits[cell + 1] = 2.0f;
  out.regression[0 * plane + cell + 1] = static_cast<float>(-(anchors.anchors[2 * (cell + 1)].center.x() -
                                                              anchors.anchors[2 * cell].center.x()) / da);
  refresh();
  dets = decode_detections(out, anchors, cfg.post);
  ASSERT_EQ(dets.size(), 1u);
  EXPECT_NEAR(dets[0].score, 1.0 / (1.0 + std::exp(-3.0)), 1e-6);
}

TEST(Infer, RandomNetworkOutputRespectsNms) {
  NetworkConfig cfg = tiny_config(FusionMode::PointFusion);
  cfg.post.score_threshold = 0.0;
  const AnchorGrid anchors = generate_anchors(cfg);
  Network<float> net(cfg);
  const auto scene = random_scene(31);
  const SceneInput input = build_scene_input(scene.cloud, scene.calib, cfg, &scene.features, &scene.image);
  const auto dets = infer(net, input, anchors, cfg.post);
  ASSERT_FALSE(dets.empty());
  for (std::size_t i = 0; i < dets.size(); ++i) {
    if (i > 0) {
      EXPECT_GE(dets[i - 1].score, dets[i].score);
    }
    for (std::size_t j = i + 1; j < dets.size(); ++j) EXPECT_LT(bev_iou(dets[i].box, dets[j].box), cfg.post.nms_iou);
  }
  const auto again = infer(net, input, anchors, cfg.post);
  ASSERT_EQ(again.size(), dets.size());
  for (std::size_t i = 0; i < dets.size(); ++i) EXPECT_EQ(again[i].score, dets[i].score);
}

TEST(Train, LearningRateSchedule) {
  Schedule s;
  EXPECT_DOUBLE_EQ(s.learning_rate_at(0), 0.01);
  EXPECT_DOUBLE_EQ(s.learning_rate_at(149), 0.01);
  EXPECT_DOUBLE_EQ(s.learning_rate_at(150), 0.001);
  const Schedule toy = NetworkConfig::toy(FusionMode::LidarOnly).schedule;
  EXPECT_EQ(toy.epochs, 30);
  EXPECT_DOUBLE_EQ(toy.learning_rate_at(19), 0.01);
  EXPECT_DOUBLE_EQ(toy.learning_rate_at(20), 0.001);
}

std::vector<TrainingSample> tiny_samples(const NetworkConfig& cfg, int count) {
  const AnchorGrid anchors = generate_anchors(cfg);
  std::vector<TrainingSample> samples;
  for (int i = 0; i < count; ++i) {
    const auto scene = random_scene(100 + static_cast<std::uint64_t>(i));
    samples.push_back({build_scene_input(scene.cloud, scene.calib, cfg, &scene.features, &scene.image),
                       assign_targets(anchors, scene.boxes, cfg.anchors)});
  }
  return samples;
}

TEST(Train, SeededRunsAreIdentical) {
  NetworkConfig cfg = tiny_config(FusionMode::PointFusion);
  cfg.schedule.epochs = 3;
  cfg.schedule.lr_boundary = 2;
  const auto samples = tiny_samples(cfg, 4);
  TrainOptions options;
  options.seed = 8;
  Network<float> a(cfg), b(cfg);
  const TrainResult ra = train(a, samples, cfg.schedule, options);
  const TrainResult rb = train(b, samples, cfg.schedule, options);
  ASSERT_EQ(ra.step_losses.size(), 12u);
  ASSERT_EQ(ra.epoch_losses.size(), 3u);
  for (std::size_t i = 0; i < ra.step_losses.size(); ++i) EXPECT_NEAR(ra.step_losses[i], rb.step_losses[i], 1e-6);
}

TEST(Train, CheckpointsAreWritten) {
  testing::TempDir dir;
  NetworkConfig cfg = tiny_config(FusionMode::LidarOnly);
  cfg.schedule.epochs = 2;
  cfg.schedule.checkpoint_every = 1;
  const auto samples = tiny_samples(cfg, 2);
  TrainOptions options;
  options.checkpoint_dir = dir.path();
  Network<float> net(cfg);
  train(net, samples, cfg.schedule, options);
  EXPECT_TRUE(std::filesystem::exists(dir / "epoch_1/manifest.txt"));
  EXPECT_TRUE(std::filesystem::exists(dir / "epoch_2/manifest.txt"));
}

TEST(Train, DivergenceIsReported) {
  NetworkConfig cfg = tiny_config(FusionMode::LidarOnly);
  cfg.schedule.epochs = 1;
  cfg.loss.alpha = std::numeric_limits<double>::infinity();
  const auto samples = tiny_samples(cfg, 2);
  Network<float> net(cfg);
  EXPECT_EQ(code_of([&] { train(net, samples, cfg.schedule, TrainOptions{}); }), Errc::DivergedLoss);
}

TEST_P(FullGradient, SingleSceneOverfit) {
  const auto [mode, patch] = GetParam();
  SynthConfig synth;
  const NetworkConfig cfg = NetworkConfig::toy(mode, patch);
  const SynthScene scene = generate_scene(synth, 17);
  const AnchorGrid anchors = generate_anchors(cfg);
  const std::vector<TrainingSample> samples{
      {build_scene_input(scene.cloud, scene.calib, cfg, &scene.features, &scene.image),
       assign_targets(anchors, lidar_boxes(scene.labels, scene.calib), cfg.anchors)}};
  ASSERT_GT(samples[0].targets.positives(), 0u);
  Network<float> net(cfg);
  TrainOptions options;
  options.max_steps = 200;
  Schedule schedule = cfg.schedule;
  schedule.epochs = 200;
  schedule.lr_boundary = 200;
  const TrainResult r = train(net, samples, schedule, options);
  ASSERT_EQ(r.step_losses.size(), 200u);
  EXPECT_LT(r.step_losses.back(), 0.05 * r.step_losses.front())
      << "initial " << r.step_losses.front() << " final " << r.step_losses.back();
}

INSTANTIATE_TEST_SUITE_P(Modes, FullGradient,
                         ::testing::Values(Case{FusionMode::LidarOnly, 0}, Case{FusionMode::PointFusion, 0},
                                           Case{FusionMode::VoxelFusion, 0}, Case{FusionMode::RawPatch, 3},
                                           Case{FusionMode::RawPatch, 5}));

}  // namespace
}  // namespace fusedet
