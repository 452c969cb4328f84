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
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace fusedet {

/// One LiDAR return: x forward, y left, z up (meters); r is reflectance.
struct RawPoint {
  float x = 0.f;
  float y = 0.f;
  float z = 0.f;
  float r = 0.f;
};

enum class Frame { Lidar };

struct PointCloud {
  std::vector<RawPoint> points;
  Frame frame = Frame::Lidar;

  std::size_t size() const noexcept { return points.size(); }
  bool empty() const noexcept { return points.empty(); }
};

using Matrix34 = Eigen::Matrix<double, 3, 4>;

/// Projection chain from the LiDAR frame to pixels of the left color camera.
struct Calibration {
  Matrix34 P = Matrix34::Identity();
  Eigen::Matrix3d R0 = Eigen::Matrix3d::Identity();
  Matrix34 velo_to_cam = Matrix34::Identity();
  int image_width = 0;
  int image_height = 0;

  /// Rectified camera frame from LiDAR frame, as a rigid 4x4.
  Eigen::Matrix4d rect_from_lidar() const;
  /// Full 3x4 map from homogeneous LiDAR coordinates to homogeneous pixels.
  Matrix34 pixel_from_lidar() const;
  /// Throws MalformedMatrix when R0 or the extrinsic rotation is not
  /// orthonormal within 1e-3.
  void validate() const;
};

struct BBox2D {
  double left = 0.0;
  double top = 0.0;
  double right = 0.0;
  double bottom = 0.0;

  double width() const noexcept { return right - left; }
  double height() const noexcept { return bottom - top; }
};

/// A KITTI label record. Geometry is in the rectified camera frame with
/// `location` at the bottom center of the box.
struct GroundTruthObject {
  std::string class_name;
  double truncation = 0.0;
  int occlusion = 0;
  double alpha = 0.0;
  BBox2D bbox2d;
  double h = 0.0;
  double w = 0.0;
  double l = 0.0;
  Eigen::Vector3d location = Eigen::Vector3d::Zero();
  double rotation_y = 0.0;
  /// Present only when the record came from a results file.
  std::optional<double> score;

  bool dont_care() const noexcept { return class_name == "DontCare"; }
};

/// Oriented box in the LiDAR frame; `center` is the geometric center and
/// `yaw` is measured about +z from +x, normalized to (-pi, pi].
struct Box3D {
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  double l = 1.0;
  double w = 1.0;
  double h = 1.0;
  double yaw = 0.0;
};

struct Detection {
  Box3D box;
  double score = 0.0;
  std::string class_name = "Car";
};

/// Dense (channels, height, width) feature tensor aligned with an image.
/// A pixel (u, v) of the original image maps to cell coordinates
/// (u * image_scale / stride, v * image_scale / stride); cell centers sit at
/// integer coordinates.
struct FeatureMap {
  int channels = 0;
  int height = 0;
  int width = 0;
  double stride = 1.0;
  double image_scale = 1.0;
  std::vector<float> data;

  float at(int c, int y, int x) const {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  float& at(int c, int y, int x) {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
};

/// 8-bit RGB raster, row-major.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;

  Image() = default;
  Image(int w, int h, std::uint8_t fill = 0)
      : width(w), height(h), rgb(static_cast<std::size_t>(w) * h * 3, fill) {}

  std::uint8_t& at(int x, int y, int c) {
    return rgb[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }
  std::uint8_t at(int x, int y, int c) const {
    return rgb[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }
  /// Channel value rescaled to [0, 1].
  float value(int x, int y, int c) const { return at(x, y, c) / 255.0f; }
};

}  // namespace fusedet
