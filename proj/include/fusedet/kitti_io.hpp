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

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fusedet/types.hpp"

namespace fusedet {

namespace fs = std::filesystem;

/// Reads a packed little-endian float32 (x, y, z, r) velodyne scan.
PointCloud read_point_cloud(const fs::path& path);
void write_point_cloud(const fs::path& path, const PointCloud& cloud);

/// Reads P2, R0_rect and Tr_velo_to_cam. An optional `image_size: W H`
/// line fills the image dimensions; otherwise they stay 0 and callers take
/// them from the image header.
Calibration read_calibration(const fs::path& path);
void write_calibration(const fs::path& path, const Calibration& calib);

/// Parses label (15 fields) or result (16 fields, trailing score) files.
std::vector<GroundTruthObject> read_labels(const fs::path& path);
GroundTruthObject parse_label_line(const std::string& line);
void write_labels(const fs::path& path, std::span<const GroundTruthObject> objects);

/// Reads a rank-3 float32 NPY tensor. The stride comes from the argument or
/// from a `<path>.meta` sidecar holding `stride` and optional `image_scale`.
FeatureMap read_tensor(const fs::path& path, std::optional<double> stride = std::nullopt);
void write_tensor(const fs::path& path, const FeatureMap& map);

/// Binary PPM (P6, maxval 255).
Image read_image(const fs::path& path);
void write_image(const fs::path& path, const Image& image);

/// Camera-frame label record of a LiDAR-frame detection; truncation and
/// occlusion are -1.
GroundTruthObject detection_to_object(const Detection& det, const Calibration& calib);

/// Formats one detection as a KITTI result line (16 fields, 4 decimals).
std::string format_detection(const Detection& det, const Calibration& calib);

/// Writes detections in KITTI result format, boxes converted to the camera
/// frame. Throws IoFailure when the file cannot be written.
void write_detections(const fs::path& path, std::span<const Detection> detections,
                      const Calibration& calib);

/// 2D image box of a LiDAR-frame box: bounding rectangle of the projected
/// corners in front of the camera, clipped to the image.
BBox2D project_box_2d(const Box3D& box, const Calibration& calib);

}  // namespace fusedet
