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

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "fusedet/types.hpp"

namespace fusedet {

/// SplitMix64 finalizer, used to derive independent seeds.
std::uint64_t splitmix64(std::uint64_t x);

inline constexpr double kPi = 3.14159265358979323846;

/// Maps an angle to (-pi, pi].
double normalize_angle(double radians);

// ---------------------------------------------------------------------------
// Projection

struct ProjectedPoint {
  double u = 0.0;
  double v = 0.0;
  double depth = 0.0;
  bool in_image = false;
};

/// Precomputed LiDAR-to-pixel map for repeated projection.
class Projector {
 public:
  explicit Projector(const Calibration& calib);

  ProjectedPoint operator()(double x, double y, double z) const;
  ProjectedPoint operator()(const Eigen::Vector3d& p) const { return (*this)(p.x(), p.y(), p.z()); }

 private:
  Matrix34 m_;
  int width_;
  int height_;
};

std::vector<ProjectedPoint> lidar_to_image(const PointCloud& points, const Calibration& calib);

/// Keeps the points that project inside the image with positive depth.
PointCloud crop_to_frustum(const PointCloud& points, const Calibration& calib);

// ---------------------------------------------------------------------------
// Camera <-> LiDAR boxes

/// Geometry fields of a KITTI label (camera frame, bottom-center location).
struct CameraBox {
  double h = 0.0;
  double w = 0.0;
  double l = 0.0;
  Eigen::Vector3d location = Eigen::Vector3d::Zero();
  double rotation_y = 0.0;
};

Box3D camera_label_to_lidar_box(const GroundTruthObject& gt, const Calibration& calib);
CameraBox lidar_box_to_camera(const Box3D& box, const Calibration& calib);

/// Calibration-free rigid mapping of a camera-frame box into a right-handed
/// x-forward, z-up frame. IoU is preserved, so evaluation can compare label
/// records directly.
Box3D camera_box_to_canonical(const GroundTruthObject& object);

// ---------------------------------------------------------------------------
// Voxelization

struct VoxelGridConfig {
  std::array<double, 3> range_min{0.0, -40.0, -3.0};
  std::array<double, 3> range_max{70.4, 40.0, 1.0};
  /// Edge lengths along x, y, z.
  std::array<double, 3> voxel_size{0.2, 0.2, 0.4};
  int max_points = 35;
  std::uint64_t rng_seed = 0;

  /// Throws InvalidConfig unless every extent is a positive integer multiple
  /// of its voxel size (within 1e-9) and max_points >= 1.
  void validate() const;
  /// Cell counts along x, y, z.
  std::array<int, 3> grid_dims() const;
};

struct VoxelIndex {
  int x = 0;
  int y = 0;
  int z = 0;

  friend bool operator==(const VoxelIndex&, const VoxelIndex&) = default;
};

struct Voxel {
  VoxelIndex index;
  std::vector<RawPoint> points;
  /// Positions of `points` in the input cloud, ascending.
  std::vector<std::uint32_t> source;
  Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
};

struct VoxelGrid {
  VoxelGridConfig cfg;
  /// Non-empty voxels ordered by (z, y, x) cell index.
  std::vector<Voxel> voxels;
  /// Per input point: owning voxel position in `voxels`, or -1 when the point
  /// lies outside the crop range.
  std::vector<std::int32_t> assignment;
};

VoxelIndex voxel_index_of(const RawPoint& p, const VoxelGridConfig& cfg);
bool in_grid(const VoxelIndex& index, const VoxelGridConfig& cfg);

/// Groups points into voxels. Voxels holding more than `max_points` points
/// keep a uniform random subset drawn from a stream seeded by the config seed
/// and the voxel's cell index, so the result is independent of point order
/// among voxels.
VoxelGrid voxelize(const PointCloud& points, const VoxelGridConfig& cfg);

/// [x, y, z, r, x - cx, y - cy, z - cz]
using DecoratedPoint = std::array<double, 7>;

std::vector<DecoratedPoint> decorate(const Voxel& voxel);

// ---------------------------------------------------------------------------
// Box overlap

/// Footprint corners, counter-clockwise.
std::array<Eigen::Vector2d, 4> bev_corners(const Box3D& box);
/// Corners 0-3 are the bottom face (counter-clockwise), 4-7 the top face.
std::array<Eigen::Vector3d, 8> box_corners(const Box3D& box);

double bev_intersection_area(const Box3D& a, const Box3D& b);
double bev_iou(const Box3D& a, const Box3D& b);
double iou_3d(const Box3D& a, const Box3D& b);

/// Greedy suppression in descending score order (ties by lower index).
/// Returns kept indices in that order.
std::vector<std::size_t> nms_bev(std::span<const Box3D> boxes, std::span<const double> scores,
                                 double iou_threshold);

// ---------------------------------------------------------------------------
// Voxel regions of interest

struct Roi {
  double u_min = 0.0;
  double v_min = 0.0;
  double u_max = 0.0;
  double v_max = 0.0;
  bool valid = false;
};

/// Image rectangle covering the projection of a voxel cell, clipped to the
/// image. A cell straddling the camera plane projects to an unbounded region
/// and yields the whole image.
Roi project_voxel_roi(const VoxelIndex& index, const VoxelGridConfig& cfg, const Calibration& calib);

}  // namespace fusedet
