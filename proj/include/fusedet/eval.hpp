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

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fusedet/types.hpp"

namespace fusedet {

enum class Difficulty { Easy, Moderate, Hard, Ignored };

struct DifficultyThresholds {
  double min_height;
  int max_occlusion;
  double max_truncation;
};

/// Easy, Moderate, Hard limits in that order.
inline constexpr DifficultyThresholds kDifficultyThresholds[3] = {{40.0, 0, 0.15}, {25.0, 1, 0.30}, {25.0, 2, 0.50}};

/// Most favourable difficulty whose limits all pass, else Ignored.
Difficulty bucket(const GroundTruthObject& gt);

/// Evaluation buckets. Eligibility is cumulative (Easy objects count in
/// Moderate and Hard); All admits every object of the evaluated class.
enum class EvalBucket { Easy, Moderate, Hard, All };

bool eligible(const GroundTruthObject& gt, EvalBucket b);

enum class IouKind { Bev, ThreeD };

struct Criterion {
  IouKind kind = IouKind::ThreeD;
  double threshold = 0.7;
  EvalBucket bucket = EvalBucket::Moderate;
};

/// {BEV, 3D} x {0.7, 0.8} x {Easy, Moderate, Hard}.
std::vector<Criterion> kitti_criteria();

std::string to_string(IouKind kind);
std::string to_string(EvalBucket bucket);

struct MatchResult {
  std::vector<std::uint8_t> tp;
  std::vector<std::uint8_t> fp;
  /// Neither TP nor FP: matched an ineligible object or inside a DontCare region.
  std::vector<std::uint8_t> ignored;
  /// Object index matched by each detection, -1 if none.
  std::vector<int> matched;
};

struct EvalOptions {
  std::string class_name = "Car";
  enum class Interpolation { Eleven, Forty } interpolation = Interpolation::Eleven;
  /// Fraction of a detection's 2D box that must lie in a DontCare region to ignore it.
  double dont_care_overlap = 0.5;
};

/// Greedy matching of one scene. `dets` must be sorted by descending score.
/// Each detection takes the unmatched eligible object of highest IoU at or
/// above the threshold (TP); failing that an unmatched ineligible object of
/// the evaluated class (ignored); failing that a DontCare region (ignored);
/// otherwise it is a FP. Objects of other classes play no part, and
/// detections of other classes are ignored.
MatchResult match(std::span<const GroundTruthObject> dets, std::span<const GroundTruthObject> gts,
                  const Criterion& criterion, const EvalOptions& options = {});

struct PrPoint {
  double recall = 0.0;
  double precision = 0.0;
};
using PrCurve = std::vector<PrPoint>;

/// Interpolated AP: mean over recall levels r of the best precision at
/// recall >= r. Eleven uses r in {0, 0.1, ..., 1}; Forty uses {1/40, ..., 1}.
double average_precision(const PrCurve& curve, EvalOptions::Interpolation mode = EvalOptions::Interpolation::Eleven);

struct ApCell {
  Criterion criterion;
  double ap = 0.0;
  std::size_t gt_count = 0;
  std::size_t det_count = 0;
};

struct ApTable {
  std::string class_name;
  std::vector<ApCell> cells;
};

/// Pools all scenes, ranks counted detections by score (ties by scene then
/// detection order) and computes one AP per criterion. Throws SceneMismatch
/// if the scene counts differ.
ApTable evaluate(std::span<const std::vector<GroundTruthObject>> dets,
                 std::span<const std::vector<GroundTruthObject>> gts, std::span<const Criterion> criteria,
                 const EvalOptions& options = {});

/// Aligned text with AP in percent.
std::string format_table(const ApTable& table);
/// criterion,bucket,AP,gt_count,det_count
std::string format_csv(const ApTable& table);

}  // namespace fusedet
