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


#include "fusedet/draw.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdlib>
#include <vector>

#include "fusedet/geometry.hpp"

namespace fusedet {

void draw_line(Image& image, const Eigen::Vector2d& a, const Eigen::Vector2d& b, Rgb color) {
  // Keep integer stepping bounded for far-off projections.
  constexpr double kLimit = 1e6;
  auto to_pixel = [&](double v) { return static_cast<long>(std::floor(std::clamp(v, -kLimit, kLimit))); };
  long x0 = to_pixel(a.x()), y0 = to_pixel(a.y());
  const long x1 = to_pixel(b.x()), y1 = to_pixel(b.y());
  const long dx = std::labs(x1 - x0), dy = -std::labs(y1 - y0);
  const long sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
  long err = dx + dy;
  for (;;) {
    if (x0 >= 0 && y0 >= 0 && x0 < image.width && y0 < image.height) {
      image.at(static_cast<int>(x0), static_cast<int>(y0), 0) = color.r;
      image.at(static_cast<int>(x0), static_cast<int>(y0), 1) = color.g;
      image.at(static_cast<int>(x0), static_cast<int>(y0), 2) = color.b;
    }
    if (x0 == x1 && y0 == y1) break;
    const long e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      x0 += sx;
    }
    if (e2 <= dx) {
      err += dx;
      y0 += sy;
    }
  }
}

bool draw_box(Image& image, const Box3D& box, const Calibration& calib, Rgb color) {
  static constexpr int kEdges[12][2] = {{0, 1}, {1, 2}, {2, 3}, {3, 0}, {4, 5}, {5, 6},
                                        {6, 7}, {7, 4}, {0, 4}, {1, 5}, {2, 6}, {3, 7}};
  const Projector project(calib);
  std::array<Eigen::Vector2d, 8> px;
  const auto corners = box_corners(box);
  for (std::size_t i = 0; i < 8; ++i) {
    const ProjectedPoint p = project(corners[i]);
    if (p.depth <= 0.1) return false;
    px[i] = {p.u, p.v};
  }
  for (const auto& e : kEdges) draw_line(image, px[static_cast<std::size_t>(e[0])], px[static_cast<std::size_t>(e[1])], color);
  return true;
}

Image render_detections(const Image& image, std::span<const GroundTruthObject> truth,
                        std::span<const GroundTruthObject> detections, const Calibration& calib,
                        const Criterion& criterion, const EvalOptions& options) {
  std::vector<GroundTruthObject> dets(detections.begin(), detections.end());
  std::stable_sort(dets.begin(), dets.end(), [](const GroundTruthObject& a, const GroundTruthObject& b) {
    return a.score.value_or(0.0) > b.score.value_or(0.0);
  });
  const MatchResult m = match(dets, truth, criterion, options);
  std::vector<bool> hit(truth.size(), false);
  for (int g : m.matched) {
    if (g >= 0) hit[static_cast<std::size_t>(g)] = true;
  }

  Image out = image;
  for (std::size_t g = 0; g < truth.size(); ++g) {
    if (truth[g].class_name != options.class_name) continue;
    const bool missed = !hit[g] && eligible(truth[g], criterion.bucket);
    draw_box(out, camera_label_to_lidar_box(truth[g], calib), calib, missed ? kErrorColor : kTruthColor);
  }
  for (std::size_t d = 0; d < dets.size(); ++d) {
    if (dets[d].class_name != options.class_name) continue;
    draw_box(out, camera_label_to_lidar_box(dets[d], calib), calib, m.fp[d] ? kErrorColor : kDetectionColor);
  }
  return out;
}

}  // namespace fusedet
