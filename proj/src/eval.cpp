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

#include "fusedet/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "fusedet/error.hpp"
#include "fusedet/geometry.hpp"

namespace fusedet {

Difficulty bucket(const GroundTruthObject& gt) {
  const double height = gt.bbox2d.height();
  for (int i = 0; i < 3; ++i) {
    const auto& t = kDifficultyThresholds[i];
    if (height >= t.min_height && gt.occlusion <= t.max_occlusion && gt.truncation <= t.max_truncation) {
      return static_cast<Difficulty>(i);
    }
  }
  return Difficulty::Ignored;
}

bool eligible(const GroundTruthObject& gt, EvalBucket b) {
  if (b == EvalBucket::All) return true;
  const Difficulty d = bucket(gt);
  return d != Difficulty::Ignored && static_cast<int>(d) <= static_cast<int>(b);
}

std::vector<Criterion> kitti_criteria() {
  std::vector<Criterion> out;
  for (IouKind kind : {IouKind::Bev, IouKind::ThreeD}) {
    for (double t : {0.7, 0.8}) {
      for (EvalBucket b : {EvalBucket::Easy, EvalBucket::Moderate, EvalBucket::Hard}) out.push_back({kind, t, b});
    }
  }
  return out;
}

std::string to_string(IouKind kind) { return kind == IouKind::Bev ? "bev" : "3d"; }

std::string to_string(EvalBucket bucket) {
  switch (bucket) {
    case EvalBucket::Easy: return "easy";
    case EvalBucket::Moderate: return "moderate";
    case EvalBucket::Hard: return "hard";
    case EvalBucket::All: return "all";
  }
  return "unknown";
}

namespace {

double overlap_fraction(const BBox2D& det, const BBox2D& region) {
  const double iw = std::min(det.right, region.right) - std::max(det.left, region.left);
  const double ih = std::min(det.bottom, region.bottom) - std::max(det.top, region.top);
  const double area = det.width() * det.height();
  if (iw <= 0 || ih <= 0 || area <= 0) return 0.0;
  return iw * ih / area;
}

}  // namespace

MatchResult match(std::span<const GroundTruthObject> dets, std::span<const GroundTruthObject> gts,
                  const Criterion& criterion, const EvalOptions& options) {
  MatchResult r;
  r.tp.assign(dets.size(), 0);
  r.fp.assign(dets.size(), 0);
  r.ignored.assign(dets.size(), 0);
  r.matched.assign(dets.size(), -1);

  std::vector<int> role(gts.size(), -1);  // 1 eligible, 0 ineligible, -1 unused
  std::vector<Box3D> gt_boxes(gts.size());
  for (std::size_t g = 0; g < gts.size(); ++g) {
    if (gts[g].class_name != options.class_name) continue;
    role[g] = eligible(gts[g], criterion.bucket) ? 1 : 0;
    gt_boxes[g] = camera_box_to_canonical(gts[g]);
  }
  std::vector<bool> taken(gts.size(), false);
  auto iou = [&](const Box3D& a, const Box3D& b) {
    return criterion.kind == IouKind::Bev ? bev_iou(a, b) : iou_3d(a, b);
  };

  for (std::size_t d = 0; d < dets.size(); ++d) {
    if (dets[d].class_name != options.class_name) {
      r.ignored[d] = 1;
      continue;
    }
    const Box3D box = camera_box_to_canonical(dets[d]);
    int best[2] = {-1, -1};
    double best_iou[2] = {-1.0, -1.0};
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (role[g] < 0 || taken[g]) continue;
      const double v = iou(box, gt_boxes[g]);
      if (v >= criterion.threshold && v > best_iou[role[g]]) {
        best_iou[role[g]] = v;
        best[role[g]] = static_cast<int>(g);
      }
    }
    if (best[1] >= 0) {
      r.tp[d] = 1;
      r.matched[d] = best[1];
      taken[static_cast<std::size_t>(best[1])] = true;
    } else if (best[0] >= 0) {
      r.ignored[d] = 1;
      r.matched[d] = best[0];
      taken[static_cast<std::size_t>(best[0])] = true;
    } else if (std::any_of(gts.begin(), gts.end(), [&](const GroundTruthObject& g) {
                 return g.dont_care() && overlap_fraction(dets[d].bbox2d, g.bbox2d) > options.dont_care_overlap;
               })) {
      r.ignored[d] = 1;
    } else {
      r.fp[d] = 1;
    }
  }
  return r;
}

double average_precision(const PrCurve& curve, EvalOptions::Interpolation mode) {
  const bool eleven = mode == EvalOptions::Interpolation::Eleven;
  const int levels = eleven ? 11 : 40;
  double sum = 0.0;
  for (int i = 0; i < levels; ++i) {
    const double r = eleven ? i / 10.0 : (i + 1) / 40.0;
    double best = 0.0;
    for (const auto& p : curve) {
      if (p.recall >= r) best = std::max(best, p.precision);
    }
    sum += best;
  }
  return sum / levels;
}

ApTable evaluate(std::span<const std::vector<GroundTruthObject>> dets,
                 std::span<const std::vector<GroundTruthObject>> gts, std::span<const Criterion> criteria,
                 const EvalOptions& options) {
  if (dets.size() != gts.size()) {
    throw Error(Errc::SceneMismatch, std::to_string(dets.size()) + " detection scenes vs " +
                                         std::to_string(gts.size()) + " label scenes");
  }
  // Per-scene detections in descending score, ties by file order.
  std::vector<std::vector<GroundTruthObject>> sorted(dets.begin(), dets.end());
  for (auto& scene : sorted) {
    std::stable_sort(scene.begin(), scene.end(), [](const GroundTruthObject& a, const GroundTruthObject& b) {
      return a.score.value_or(0.0) > b.score.value_or(0.0);
    });
  }

  ApTable table;
  table.class_name = options.class_name;
  for (const Criterion& c : criteria) {
    struct Ranked {
      double score;
      std::size_t scene, index;
      bool tp;
    };
    std::vector<Ranked> ranked;
    std::size_t n_gt = 0;
    for (std::size_t s = 0; s < gts.size(); ++s) {
      for (const auto& g : gts[s]) n_gt += g.class_name == options.class_name && eligible(g, c.bucket);
      const MatchResult m = match(sorted[s], gts[s], c, options);
      for (std::size_t d = 0; d < sorted[s].size(); ++d) {
        if (m.tp[d] || m.fp[d]) ranked.push_back({sorted[s][d].score.value_or(0.0), s, d, m.tp[d] != 0});
      }
    }
    std::sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) {
      if (a.score != b.score) return a.score > b.score;
      return a.scene != b.scene ? a.scene < b.scene : a.index < b.index;
    });
    PrCurve curve;
    std::size_t tp = 0;
    for (std::size_t i = 0; i < ranked.size(); ++i) {
      tp += ranked[i].tp;
      if (n_gt > 0) curve.push_back({static_cast<double>(tp) / n_gt, static_cast<double>(tp) / (i + 1)});
    }
    table.cells.push_back({c, n_gt > 0 ? average_precision(curve, options.interpolation) : 0.0, n_gt, ranked.size()});
  }
  return table;
}

namespace {

std::string criterion_name(const Criterion& c) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s@%.2f", to_string(c.kind).c_str(), c.threshold);
  return buf;
}

}  // namespace

std::string format_table(const ApTable& table) {
  std::ostringstream out;
  char line[128];
  std::snprintf(line, sizeof line, "%-10s %-10s %8s %8s %8s\n", "criterion", "bucket", "AP", "gt", "det");
  out << "class " << table.class_name << '\n' << line;
  for (const auto& cell : table.cells) {
    std::snprintf(line, sizeof line, "%-10s %-10s %8.2f %8zu %8zu\n", criterion_name(cell.criterion).c_str(),
                  to_string(cell.criterion.bucket).c_str(), 100.0 * cell.ap, cell.gt_count, cell.det_count);
    out << line;
  }
  return out.str();
}

std::string format_csv(const ApTable& table) {
  std::ostringstream out;
  out << "criterion,bucket,AP,gt_count,det_count\n";
  char line[128];
  for (const auto& cell : table.cells) {
    std::snprintf(line, sizeof line, "%s,%s,%.4f,%zu,%zu\n", criterion_name(cell.criterion).c_str(),
                  to_string(cell.criterion.bucket).c_str(), 100.0 * cell.ap, cell.gt_count, cell.det_count);
    out << line;
  }
  return out.str();
}

}  // namespace fusedet
