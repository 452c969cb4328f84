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

#include <Eigen/Core>

#include "fusedet/eval.hpp"
#include "fusedet/types.hpp"

namespace fusedet {

struct Rgb {
  std::uint8_t r = 0;
  std::uint8_t g = 0;
  std::uint8_t b = 0;
};

inline constexpr Rgb kTruthColor{0, 220, 0};
inline constexpr Rgb kDetectionColor{0, 160, 255};
/// Missed objects and false positives.
inline constexpr Rgb kErrorColor{255, 0, 0};

/// 1px Bresenham segment between pixel centres; off-image pixels are skipped.
void draw_line(Image& image, const Eigen::Vector2d& a, const Eigen::Vector2d& b, Rgb color);

/// Wireframe of a LiDAR-frame box. Boxes with a corner behind the camera are
/// not drawn. Returns whether anything was drawn.
bool draw_box(Image& image, const Box3D& box, const Calibration& calib, Rgb color);

/// Copy of the image with ground truth and detections (both camera-frame
/// records) overlaid. Matching uses the given criterion; unmatched
/// detections and missed objects are drawn in kErrorColor.
Image render_detections(const Image& image, std::span<const GroundTruthObject> truth,
                        std::span<const GroundTruthObject> detections, const Calibration& calib,
                        const Criterion& criterion, const EvalOptions& options = {});

}  // namespace fusedet
