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
#include <random>

#include <gtest/gtest.h>

#include "fusedet/error.hpp"
#include "fusedet/eval.hpp"
#include "fusedet/geometry.hpp"

namespace fusedet {
namespace {

GroundTruthObject car(double x, double z, double yaw, double height_px, int occlusion, double truncation) {
  GroundTruthObject o;
  o.class_name = "Car";
  o.truncation = truncation;
  o.occlusion = occlusion;
  o.bbox2d = {100.0, 100.0, 160.0, 100.0 + height_px};
  o.h = 1.5;
  o.w = 1.7;
  o.l = 4.0;
  o.location = {x, 1.6, z};
  o.rotation_y = yaw;
  return o;
}

GroundTruthObject as_detection(GroundTruthObject o, double score) {
  o.score = score;
  o.truncation = -1;
  o.occlusion = -1;
  return o;
}

// Independent evaluator: full IoU matrix, explicit role tables, and AP from
// every score cutoff rather than an incrementally built curve.
struct Oracle {
  static double iou(const GroundTruthObject& a, const GroundTruthObject& b, IouKind kind) {
    const Box3D ba = camera_box_to_canonical(a), bb = camera_box_to_canonical(b);
    return kind == IouKind::Bev ? bev_iou(ba, bb) : iou_3d(ba, bb);
  }

  static bool in_bucket(const GroundTruthObject& g, EvalBucket b) {
    if (b == EvalBucket::All) return true;
    const double h = g.bbox2d.bottom - g.bbox2d.top;
    const int level = static_cast<int>(b);
    for (int i = 0; i <= level; ++i) {
      const auto& t = kDifficultyThresholds[i];
      if (h >= t.min_height && g.occlusion <= t.max_occlusion && g.truncation <= t.max_truncation) return true;
    }
    return false;
  }

  static bool in_dont_care(const GroundTruthObject& d, const std::vector<GroundTruthObject>& gts) {
    for (const auto& g : gts) {
      if (g.class_name != "DontCare") continue;
      const double iw = std::min(d.bbox2d.right, g.bbox2d.right) - std::max(d.bbox2d.left, g.bbox2d.left);
      const double ih = std::min(d.bbox2d.bottom, g.bbox2d.bottom) - std::max(d.bbox2d.top, g.bbox2d.top);
      const double area = (d.bbox2d.right - d.bbox2d.left) * (d.bbox2d.bottom - d.bbox2d.top);
      if (iw > 0 && ih > 0 && area > 0 && iw * ih / area > 0.5) return true;
    }
    return false;
  }

  // 1 TP, 0 FP, -1 neither, for each detection in descending score order.
  static std::vector<int> flags(std::vector<GroundTruthObject> dets, const std::vector<GroundTruthObject>& gts,
                                const Criterion& c) {
    std::stable_sort(dets.begin(), dets.end(), [](const auto& a, const auto& b) { return *a.score > *b.score; });
    std::vector<int> out(dets.size(), -1);
    std::vector<bool> used(gts.size(), false);
    for (std::size_t d = 0; d < dets.size(); ++d) {
      if (dets[d].class_name != "Car") continue;
      int pick = -1;
      double pick_iou = 0.0;
      bool pick_eligible = false;
      for (std::size_t g = 0; g < gts.size(); ++g) {
        if (used[g] || gts[g].class_name != "Car") continue;
        const double v = iou(dets[d], gts[g], c.kind);
        if (v < c.threshold) continue;
        const bool e = in_bucket(gts[g], c.bucket);
        if (pick < 0 || (e && !pick_eligible) || (e == pick_eligible && v > pick_iou)) {
          pick = static_cast<int>(g);
          pick_iou = v;
          pick_eligible = e;
        }
      }
      if (pick >= 0) {
        used[static_cast<std::size_t>(pick)] = true;
        out[d] = pick_eligible ? 1 : -1;
      } else {
        out[d] = in_dont_care(dets[d], gts) ? -1 : 0;
      }
    }
    return out;
  }

  static double ap(const std::vector<std::vector<GroundTruthObject>>& dets,
                   const std::vector<std::vector<GroundTruthObject>>& gts, const Criterion& c) {
    std::vector<std::pair<double, int>> scored;
    std::size_t n_gt = 0;
    for (std::size_t s = 0; s < gts.size(); ++s) {
      for (const auto& g : gts[s]) n_gt += g.class_name == "Car" && in_bucket(g, c.bucket);
      std::vector<GroundTruthObject> sorted = dets[s];
      std::stable_sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return *a.score > *b.score; });
      const auto f = flags(dets[s], gts[s], c);
      for (std::size_t d = 0; d < f.size(); ++d) {
        if (f[d] >= 0) scored.emplace_back(*sorted[d].score, f[d]);
      }
    }
    if (n_gt == 0) return 0.0;
    double sum = 0.0;
    for (int level = 0; level <= 10; ++level) {
      const double r = level / 10.0;
      double best = 0.0;
      for (const auto& [cut, unused] : scored) {
        std::size_t tp = 0, kept = 0;
        for (const auto& [score, f] : scored) {
          if (score >= cut) {
            ++kept;
            tp += static_cast<std::size_t>(f);
          }
        }
        const double recall = static_cast<double>(tp) / n_gt;
        if (recall >= r) best = std::max(best, static_cast<double>(tp) / kept);
      }
      sum += best;
    }
    return sum / 11;
  }
};

struct RandomScenes {
  std::vector<std::vector<GroundTruthObject>> dets, gts;
};

RandomScenes random_scenes(std::uint64_t seed, int count) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0, 1);
  RandomScenes out;
  for (int s = 0; s < count; ++s) {
    std::vector<GroundTruthObject> gts, dets;
    const int n_gt = static_cast<int>(u(rng) * 6);
    for (int g = 0; g < n_gt; ++g) {
      GroundTruthObject o = car(-6 + 12 * u(rng), 10 + 8 * u(rng), 3.2 * u(rng), 15 + 50 * u(rng),
                                static_cast<int>(u(rng) * 4), 0.6 * u(rng));
      if (u(rng) < 0.1) o.class_name = "Van";
      if (u(rng) < 0.1) {
        o.class_name = "DontCare";
        o.bbox2d = {200 * u(rng), 50 * u(rng), 0, 0};
        o.bbox2d.right = o.bbox2d.left + 40 + 100 * u(rng);
        o.bbox2d.bottom = o.bbox2d.top + 40 + 100 * u(rng);
      }
      gts.push_back(o);
    }
    const int n_det = static_cast<int>(u(rng) * 9);
    for (int d = 0; d < n_det; ++d) {
      GroundTruthObject o;
      if (!gts.empty() && u(rng) < 0.7) {
        o = gts[static_cast<std::size_t>(u(rng) * gts.size())];
        if (o.dont_care()) o.class_name = "Car";
        o.location += Eigen::Vector3d(0.6 * (u(rng) - 0.5), 0.2 * (u(rng) - 0.5), 0.6 * (u(rng) - 0.5));
        o.rotation_y += 0.3 * (u(rng) - 0.5);
        o.l *= 0.9 + 0.2 * u(rng);
      } else {
        o = car(-6 + 12 * u(rng), 10 + 8 * u(rng), 3.2 * u(rng), 30, 0, 0);
      }
      o.bbox2d.left = 250 * u(rng);
      o.bbox2d.top = 150 * u(rng);
      o.bbox2d.right = o.bbox2d.left + 20 + 60 * u(rng);
      o.bbox2d.bottom = o.bbox2d.top + 20 + 60 * u(rng);
      dets.push_back(as_detection(o, u(rng)));
    }
    out.gts.push_back(std::move(gts));
    out.dets.push_back(std::move(dets));
  }
  return out;
}

std::vector<Criterion> all_criteria() {
  std::vector<Criterion> out;
  for (IouKind kind : {IouKind::Bev, IouKind::ThreeD}) {
    for (double t : {0.5, 0.7, 0.8}) {
      for (EvalBucket b : {EvalBucket::Easy, EvalBucket::Moderate, EvalBucket::Hard, EvalBucket::All}) {
        out.push_back({kind, t, b});
      }
    }
  }
  return out;
}

TEST(Bucket, Examples) {
  EXPECT_EQ(bucket(car(0, 10, 0, 50, 0, 0.0)), Difficulty::Easy);
  EXPECT_EQ(bucket(car(0, 10, 0, 30, 1, 0.2)), Difficulty::Moderate);
  EXPECT_EQ(bucket(car(0, 10, 0, 30, 2, 0.45)), Difficulty::Hard);
  EXPECT_EQ(bucket(car(0, 10, 0, 10, 0, 0.0)), Difficulty::Ignored);
  EXPECT_EQ(bucket(car(0, 10, 0, 50, 3, 0.0)), Difficulty::Ignored);
  EXPECT_TRUE(eligible(car(0, 10, 0, 50, 0, 0.0), EvalBucket::Hard));
  EXPECT_FALSE(eligible(car(0, 10, 0, 30, 1, 0.2), EvalBucket::Easy));
  EXPECT_TRUE(eligible(car(0, 10, 0, 10, 0, 0.0), EvalBucket::All));
}

TEST(Bucket, NestedEligibility) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0, 1);
  for (int i = 0; i < 2000; ++i) {
    const auto g = car(0, 10, 0, 60 * u(rng), static_cast<int>(u(rng) * 4), 0.7 * u(rng));
    EXPECT_TRUE(!eligible(g, EvalBucket::Easy) || eligible(g, EvalBucket::Moderate));
    EXPECT_TRUE(!eligible(g, EvalBucket::Moderate) || eligible(g, EvalBucket::Hard));
  }
}

TEST(AveragePrecision, Examples) {
  EXPECT_DOUBLE_EQ(average_precision({{1.0, 1.0}}), 1.0);
  EXPECT_DOUBLE_EQ(average_precision({}), 0.0);
  EXPECT_DOUBLE_EQ(average_precision({{0.5, 1.0}, {1.0, 0.0}}), 6.0 / 11.0);
  EXPECT_DOUBLE_EQ(average_precision({{1.0, 1.0}}, EvalOptions::Interpolation::Forty), 1.0);
  EXPECT_DOUBLE_EQ(average_precision({{0.5, 1.0}, {1.0, 0.0}}, EvalOptions::Interpolation::Forty), 20.0 / 40.0);
}

TEST(Match, Examples) {
  const Criterion c{IouKind::ThreeD, 0.7, EvalBucket::Moderate};
  const std::vector<GroundTruthObject> gts{car(0, 10, 0, 50, 0, 0)};
  std::vector<GroundTruthObject> dets{as_detection(gts[0], 0.9)};
  auto m = match(dets, gts, c);
  EXPECT_EQ(m.tp[0], 1);
  EXPECT_EQ(m.matched[0], 0);
  dets.push_back(as_detection(gts[0], 0.8));
  m = match(dets, gts, c);
  EXPECT_EQ(m.tp[0], 1);
  EXPECT_EQ(m.fp[1], 1);

  // A hard-only object is neither hit nor miss for the easy bucket.
  const std::vector<GroundTruthObject> hard{car(0, 10, 0, 30, 2, 0.4)};
  m = match(std::vector{as_detection(hard[0], 0.9)}, hard, {IouKind::Bev, 0.7, EvalBucket::Easy});
  EXPECT_EQ(m.ignored[0], 1);
  EXPECT_EQ(m.tp[0] + m.fp[0], 0);

  GroundTruthObject region;
  region.class_name = "DontCare";
  region.bbox2d = {0, 0, 500, 500};
  GroundTruthObject far = as_detection(car(30, 60, 0, 50, 0, 0), 0.5);
  m = match(std::vector{far}, std::vector{region}, c);
  EXPECT_EQ(m.ignored[0], 1);
  m = match(std::vector{far}, gts, c);
  EXPECT_EQ(m.fp[0], 1);
}

TEST(Evaluate, MatchesBruteForceOracle) {
  const RandomScenes data = random_scenes(11, 100);
  const auto criteria = all_criteria();
  const ApTable table = evaluate(data.dets, data.gts, criteria);
  ASSERT_EQ(table.cells.size(), criteria.size());
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    EXPECT_EQ(table.cells[i].ap, Oracle::ap(data.dets, data.gts, criteria[i]))
        << to_string(criteria[i].kind) << " " << criteria[i].threshold << " " << to_string(criteria[i].bucket);
  }
  // Also scene by scene, where most tables are tiny.
  for (std::size_t s = 0; s < data.gts.size(); ++s) {
    const std::vector<std::vector<GroundTruthObject>> d{data.dets[s]}, g{data.gts[s]};
    const ApTable one = evaluate(d, g, criteria);
    for (std::size_t i = 0; i < criteria.size(); ++i) EXPECT_EQ(one.cells[i].ap, Oracle::ap(d, g, criteria[i]));
  }
}

TEST(Evaluate, SelfMatchIsPerfect) {
  std::vector<std::vector<GroundTruthObject>> gts{
      {car(-4, 10, 0.1, 50, 0, 0.0), car(4, 15, 1.2, 30, 1, 0.2)},
      {car(0, 12, -0.5, 28, 2, 0.4), car(-5, 20, 2.0, 45, 0, 0.1)},
  };
  std::vector<std::vector<GroundTruthObject>> dets;
  for (const auto& scene : gts) {
    dets.emplace_back();
    for (const auto& g : scene) dets.back().push_back(as_detection(g, 1.0));
  }
  const auto criteria = kitti_criteria();
  ASSERT_EQ(criteria.size(), 12u);
  const ApTable table = evaluate(dets, gts, criteria);
  for (const auto& cell : table.cells) EXPECT_DOUBLE_EQ(cell.ap, 1.0);

  const std::vector<std::vector<GroundTruthObject>> none(2);
  for (const auto& cell : evaluate(none, gts, criteria).cells) EXPECT_EQ(cell.ap, 0.0);
}

TEST(Evaluate, SceneCountMismatch) {
  const std::vector<std::vector<GroundTruthObject>> a(2), b(3);
  try {
    evaluate(a, b, kitti_criteria());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::SceneMismatch);
  }
}

TEST(Evaluate, RankingOnlyDependence) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    RandomScenes data = random_scenes(100 + seed, 20);
    const auto criteria = all_criteria();
    const ApTable before = evaluate(data.dets, data.gts, criteria);
    for (auto& scene : data.dets) {
      for (auto& d : scene) d.score = std::exp(3.0 * *d.score) - 7.0;
    }
    const ApTable after = evaluate(data.dets, data.gts, criteria);
    for (std::size_t i = 0; i < criteria.size(); ++i) EXPECT_EQ(before.cells[i].ap, after.cells[i].ap);
  }
}

TEST(Evaluate, UnmatchableDetectionNeverHelps) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    RandomScenes data = random_scenes(200 + seed, 10);
    const auto criteria = all_criteria();
    const ApTable before = evaluate(data.dets, data.gts, criteria);
    std::mt19937_64 rng(seed);
    data.dets[rng() % data.dets.size()].push_back(
        as_detection(car(40, 80, 0, 50, 0, 0), std::uniform_real_distribution<double>(0, 1)(rng)));
    const ApTable after = evaluate(data.dets, data.gts, criteria);
    for (std::size_t i = 0; i < criteria.size(); ++i) EXPECT_LE(after.cells[i].ap, before.cells[i].ap);
  }
}

TEST(Evaluate, StricterThresholdNeverHelps) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const RandomScenes data = random_scenes(300 + seed, 10);
    for (IouKind kind : {IouKind::Bev, IouKind::ThreeD}) {
      for (EvalBucket b : {EvalBucket::Easy, EvalBucket::Moderate, EvalBucket::Hard, EvalBucket::All}) {
        const std::vector<Criterion> c{{kind, 0.7, b}, {kind, 0.8, b}};
        const ApTable t = evaluate(data.dets, data.gts, c);
        EXPECT_LE(t.cells[1].ap, t.cells[0].ap);
      }
    }
  }
}

TEST(Evaluate, TextAndCsvOutput) {
  const std::vector<std::vector<GroundTruthObject>> gts{{car(0, 10, 0, 50, 0, 0)}};
  const std::vector<std::vector<GroundTruthObject>> dets{{as_detection(gts[0][0], 0.7)}};
  const std::vector<Criterion> c{{IouKind::ThreeD, 0.7, EvalBucket::Moderate}};
  const ApTable t = evaluate(dets, gts, c);
  const std::string csv = format_csv(t);
  EXPECT_EQ(csv, "criterion,bucket,AP,gt_count,det_count\n3d@0.70,moderate,100.0000,1,1\n");
  EXPECT_NE(format_table(t).find("100.00"), std::string::npos);
}

}  // namespace
}  // namespace fusedet
