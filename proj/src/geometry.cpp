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

#include "fusedet/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <Eigen/Dense>

#include "fusedet/error.hpp"

namespace fusedet {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

namespace {

double max_orthonormality_error(const Eigen::Matrix3d& r) {
  return (r * r.transpose() - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
}

Eigen::Matrix4d invert_rigid_chain(const Calibration& calib) {
  const Eigen::Matrix4d t = calib.rect_from_lidar();
  if (std::abs(t.block<3, 3>(0, 0).determinant()) < 1e-12) {
    throw Error(Errc::SingularTransform, "rectified-from-LiDAR rotation is singular");
  }
  return t.inverse();
}

using Polygon = std::vector<Eigen::Vector2d>;

double cross(const Eigen::Vector2d& a, const Eigen::Vector2d& b) { return a.x() * b.y() - a.y() * b.x(); }

double polygon_area(const Polygon& poly) {
  if (poly.size() < 3) return 0.0;
  double twice = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) twice += cross(poly[i], poly[(i + 1) % poly.size()]);
  return 0.5 * std::abs(twice);
}

// Sutherland-Hodgman: clip a convex subject polygon by a counter-clockwise
// convex clip polygon.
Polygon clip_convex(Polygon subject, const std::array<Eigen::Vector2d, 4>& clip) {
  for (std::size_t e = 0; e < clip.size() && !subject.empty(); ++e) {
    const Eigen::Vector2d& a = clip[e];
    const Eigen::Vector2d& b = clip[(e + 1) % clip.size()];
    const Eigen::Vector2d edge = b - a;
    Polygon out;
    out.reserve(subject.size() + 2);
    for (std::size_t i = 0; i < subject.size(); ++i) {
      const Eigen::Vector2d& p = subject[i];
      const Eigen::Vector2d& q = subject[(i + 1) % subject.size()];
      const double sp = cross(edge, p - a);
      const double sq = cross(edge, q - a);
      if (sp >= 0.0) out.push_back(p);
      if ((sp >= 0.0) != (sq >= 0.0)) {
        const double t = sp / (sp - sq);
        out.push_back(p + t * (q - p));
      }
    }
    subject = std::move(out);
  }
  return subject;
}

}  // namespace

double normalize_angle(double radians) {
  double a = std::remainder(radians, 2.0 * kPi);
  if (a <= -kPi) a += 2.0 * kPi;
  return a;
}

Eigen::Matrix4d Calibration::rect_from_lidar() const {
  Eigen::Matrix4d r0 = Eigen::Matrix4d::Identity();
  r0.block<3, 3>(0, 0) = R0;
  Eigen::Matrix4d tr = Eigen::Matrix4d::Identity();
  tr.block<3, 4>(0, 0) = velo_to_cam;
  return r0 * tr;
}

Matrix34 Calibration::pixel_from_lidar() const { return P * rect_from_lidar(); }

void Calibration::validate() const {
  if (max_orthonormality_error(R0) > 1e-3) {
    throw Error(Errc::MalformedMatrix, "R0_rect is not orthonormal");
  }
  if (max_orthonormality_error(velo_to_cam.block<3, 3>(0, 0)) > 1e-3) {
    throw Error(Errc::MalformedMatrix, "Tr_velo_to_cam rotation is not orthonormal");
  }
}

Projector::Projector(const Calibration& calib)
    : m_(calib.pixel_from_lidar()), width_(calib.image_width), height_(calib.image_height) {}

ProjectedPoint Projector::operator()(double x, double y, double z) const {
  const double h0 = m_(0, 0) * x + m_(0, 1) * y + m_(0, 2) * z + m_(0, 3);
  const double h1 = m_(1, 0) * x + m_(1, 1) * y + m_(1, 2) * z + m_(1, 3);
  const double h2 = m_(2, 0) * x + m_(2, 1) * y + m_(2, 2) * z + m_(2, 3);
  ProjectedPoint p;
  p.depth = h2;
  if (h2 != 0.0) {
    p.u = h0 / h2;
    p.v = h1 / h2;
  }
  p.in_image = h2 > 0.0 && p.u >= 0.0 && p.u < width_ && p.v >= 0.0 && p.v < height_;
  return p;
}

std::vector<ProjectedPoint> lidar_to_image(const PointCloud& points, const Calibration& calib) {
  const Projector project(calib);
  std::vector<ProjectedPoint> out;
  out.reserve(points.size());
  for (const auto& p : points.points) out.push_back(project(p.x, p.y, p.z));
  return out;
}

PointCloud crop_to_frustum(const PointCloud& points, const Calibration& calib) {
  const Projector project(calib);
  PointCloud out;
  for (const auto& p : points.points) {
    if (project(p.x, p.y, p.z).in_image) out.points.push_back(p);
  }
  return out;
}

Box3D camera_label_to_lidar_box(const GroundTruthObject& gt, const Calibration& calib) {
  const Eigen::Matrix4d lidar_from_rect = invert_rigid_chain(calib);
  const Eigen::Vector4d center_rect(gt.location.x(), gt.location.y() - gt.h / 2.0, gt.location.z(), 1.0);
  const Eigen::Vector4d c = lidar_from_rect * center_rect;
  Box3D box;
  box.center = c.head<3>();
  box.l = gt.l;
  box.w = gt.w;
  box.h = gt.h;
  box.yaw = normalize_angle(-gt.rotation_y - kPi / 2.0);
  return box;
}

CameraBox lidar_box_to_camera(const Box3D& box, const Calibration& calib) {
  const Eigen::Matrix4d t = calib.rect_from_lidar();
  if (std::abs(t.block<3, 3>(0, 0).determinant()) < 1e-12) {
    throw Error(Errc::SingularTransform, "rectified-from-LiDAR rotation is singular");
  }
  const Eigen::Vector4d c = t * box.center.homogeneous();
  CameraBox cam;
  cam.h = box.h;
  cam.w = box.w;
  cam.l = box.l;
  cam.location = Eigen::Vector3d(c.x(), c.y() + box.h / 2.0, c.z());
  cam.rotation_y = normalize_angle(-box.yaw - kPi / 2.0);
  return cam;
}

Box3D camera_box_to_canonical(const GroundTruthObject& object) {
  Box3D box;
  const auto& loc = object.location;
  box.center = Eigen::Vector3d(loc.z(), -loc.x(), -(loc.y() - object.h / 2.0));
  box.l = object.l;
  box.w = object.w;
  box.h = object.h;
  box.yaw = normalize_angle(-object.rotation_y - kPi / 2.0);
  return box;
}

void VoxelGridConfig::validate() const {
  for (int a = 0; a < 3; ++a) {
    if (!(voxel_size[a] > 0.0)) throw Error(Errc::InvalidConfig, "voxel sizes must be positive");
    const double cells = (range_max[a] - range_min[a]) / voxel_size[a];
    if (cells < 1.0 - 1e-9 || std::abs(cells - std::round(cells)) * voxel_size[a] > 1e-9) {
      throw Error(Errc::InvalidConfig, "crop extent is not an integer multiple of the voxel size");
    }
  }
  if (max_points < 1) throw Error(Errc::InvalidConfig, "max points per voxel must be >= 1");
}

std::array<int, 3> VoxelGridConfig::grid_dims() const {
  std::array<int, 3> dims{};
  for (int a = 0; a < 3; ++a) {
    dims[a] = static_cast<int>(std::lround((range_max[a] - range_min[a]) / voxel_size[a]));
  }
  return dims;
}

VoxelIndex voxel_index_of(const RawPoint& p, const VoxelGridConfig& cfg) {
  return {static_cast<int>(std::floor((p.x - cfg.range_min[0]) / cfg.voxel_size[0])),
          static_cast<int>(std::floor((p.y - cfg.range_min[1]) / cfg.voxel_size[1])),
          static_cast<int>(std::floor((p.z - cfg.range_min[2]) / cfg.voxel_size[2]))};
}

bool in_grid(const VoxelIndex& index, const VoxelGridConfig& cfg) {
  const auto dims = cfg.grid_dims();
  return index.x >= 0 && index.x < dims[0] && index.y >= 0 && index.y < dims[1] && index.z >= 0 &&
         index.z < dims[2];
}

VoxelGrid voxelize(const PointCloud& points, const VoxelGridConfig& cfg) {
  cfg.validate();
  const auto dims = cfg.grid_dims();
  VoxelGrid grid;
  grid.cfg = cfg;
  grid.assignment.assign(points.size(), -1);

  // (linear cell index, point index), sorted: groups cells, keeps file order.
  std::vector<std::pair<std::int64_t, std::uint32_t>> keyed;
  keyed.reserve(points.size());
  for (std::uint32_t i = 0; i < points.size(); ++i) {
    const auto idx = voxel_index_of(points.points[i], cfg);
    if (!in_grid(idx, cfg)) continue;
    const std::int64_t linear = (static_cast<std::int64_t>(idx.z) * dims[1] + idx.y) * dims[0] + idx.x;
    keyed.emplace_back(linear, i);
  }
  std::sort(keyed.begin(), keyed.end());

  for (std::size_t begin = 0; begin < keyed.size();) {
    std::size_t end = begin;
    while (end < keyed.size() && keyed[end].first == keyed[begin].first) ++end;

    std::vector<std::uint32_t> members;
    members.reserve(end - begin);
    for (std::size_t k = begin; k < end; ++k) members.push_back(keyed[k].second);

    const auto ordinal = static_cast<std::int32_t>(grid.voxels.size());
    for (auto m : members) grid.assignment[m] = ordinal;

    if (members.size() > static_cast<std::size_t>(cfg.max_points)) {
      std::mt19937_64 rng(splitmix64(cfg.rng_seed ^ splitmix64(static_cast<std::uint64_t>(keyed[begin].first))));
      for (std::size_t k = 0; k < static_cast<std::size_t>(cfg.max_points); ++k) {
        std::uniform_int_distribution<std::size_t> pick(k, members.size() - 1);
        std::swap(members[k], members[pick(rng)]);
      }
      members.resize(static_cast<std::size_t>(cfg.max_points));
      std::sort(members.begin(), members.end());
    }

    Voxel voxel;
    voxel.index = voxel_index_of(points.points[members.front()], cfg);
    voxel.source = members;
    Eigen::Vector3d sum = Eigen::Vector3d::Zero();
    for (auto m : members) {
      const auto& p = points.points[m];
      voxel.points.push_back(p);
      sum += Eigen::Vector3d(p.x, p.y, p.z);
    }
    voxel.centroid = sum / static_cast<double>(members.size());
    grid.voxels.push_back(std::move(voxel));
    begin = end;
  }
  return grid;
}

std::vector<DecoratedPoint> decorate(const Voxel& voxel) {
  if (voxel.points.empty()) throw Error(Errc::EmptyVoxel, "cannot decorate an empty voxel");
  std::vector<DecoratedPoint> out;
  out.reserve(voxel.points.size());
  for (const auto& p : voxel.points) {
    const double x = p.x, y = p.y, z = p.z;
    out.push_back({x, y, z, static_cast<double>(p.r), x - voxel.centroid.x(), y - voxel.centroid.y(),
                   z - voxel.centroid.z()});
  }
  return out;
}

std::array<Eigen::Vector2d, 4> bev_corners(const Box3D& box) {
  const double c = std::cos(box.yaw), s = std::sin(box.yaw);
  const double hl = box.l / 2.0, hw = box.w / 2.0;
  const double local[4][2] = {{hl, -hw}, {hl, hw}, {-hl, hw}, {-hl, -hw}};
  std::array<Eigen::Vector2d, 4> out;
  for (int i = 0; i < 4; ++i) {
    out[i] = {box.center.x() + c * local[i][0] - s * local[i][1],
              box.center.y() + s * local[i][0] + c * local[i][1]};
  }
  return out;
}

std::array<Eigen::Vector3d, 8> box_corners(const Box3D& box) {
  const auto bev = bev_corners(box);
  std::array<Eigen::Vector3d, 8> out;
  for (int i = 0; i < 4; ++i) {
    out[i] = {bev[i].x(), bev[i].y(), box.center.z() - box.h / 2.0};
    out[i + 4] = {bev[i].x(), bev[i].y(), box.center.z() + box.h / 2.0};
  }
  return out;
}

double bev_intersection_area(const Box3D& a, const Box3D& b) {
  const double reach = 0.5 * (std::hypot(a.l, a.w) + std::hypot(b.l, b.w));
  if ((a.center.head<2>() - b.center.head<2>()).norm() > reach) return 0.0;
  const auto ca = bev_corners(a);
  const auto cb = bev_corners(b);
  return polygon_area(clip_convex(Polygon(ca.begin(), ca.end()), cb));
}

double bev_iou(const Box3D& a, const Box3D& b) {
  const double inter = bev_intersection_area(a, b);
  const double uni = a.l * a.w + b.l * b.w - inter;
  if (uni < 1e-12) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

double iou_3d(const Box3D& a, const Box3D& b) {
  const double z_lo = std::max(a.center.z() - a.h / 2.0, b.center.z() - b.h / 2.0);
  const double z_hi = std::min(a.center.z() + a.h / 2.0, b.center.z() + b.h / 2.0);
  const double overlap = std::max(0.0, z_hi - z_lo);
  if (overlap <= 0.0) return 0.0;
  const double inter = bev_intersection_area(a, b) * overlap;
  const double uni = a.l * a.w * a.h + b.l * b.w * b.h - inter;
  if (uni < 1e-12) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

std::vector<std::size_t> nms_bev(std::span<const Box3D> boxes, std::span<const double> scores,
                                 double iou_threshold) {
  if (boxes.size() != scores.size()) throw Error(Errc::ShapeMismatch, "boxes and scores differ in length");
  std::vector<std::size_t> order(boxes.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return scores[i] > scores[j]; });

  std::vector<bool> suppressed(boxes.size(), false);
  std::vector<std::size_t> kept;
  for (std::size_t oi = 0; oi < order.size(); ++oi) {
    const std::size_t i = order[oi];
    if (suppressed[i]) continue;
    kept.push_back(i);
    for (std::size_t oj = oi + 1; oj < order.size(); ++oj) {
      const std::size_t j = order[oj];
      if (!suppressed[j] && bev_iou(boxes[i], boxes[j]) >= iou_threshold) suppressed[j] = true;
    }
  }
  return kept;
}

Roi project_voxel_roi(const VoxelIndex& index, const VoxelGridConfig& cfg, const Calibration& calib) {
  const Projector project(calib);
  const double w = calib.image_width, h = calib.image_height;
  Roi roi{1e300, 1e300, -1e300, -1e300, false};
  int in_front = 0;
  for (int corner = 0; corner < 8; ++corner) {
    const double x = cfg.range_min[0] + (index.x + (corner & 1)) * cfg.voxel_size[0];
    const double y = cfg.range_min[1] + (index.y + ((corner >> 1) & 1)) * cfg.voxel_size[1];
    const double z = cfg.range_min[2] + (index.z + ((corner >> 2) & 1)) * cfg.voxel_size[2];
    const auto p = project(x, y, z);
    if (p.depth <= 0.0) continue;
    ++in_front;
    roi.u_min = std::min(roi.u_min, p.u);
    roi.v_min = std::min(roi.v_min, p.v);
    roi.u_max = std::max(roi.u_max, p.u);
    roi.v_max = std::max(roi.v_max, p.v);
  }
  if (in_front == 0) return {};
  if (in_front < 8) {
    roi = {0.0, 0.0, w, h, w > 0.0 && h > 0.0};
    return roi;
  }
  roi.u_min = std::max(roi.u_min, 0.0);
  roi.v_min = std::max(roi.v_min, 0.0);
  roi.u_max = std::min(roi.u_max, w);
  roi.v_max = std::min(roi.v_max, h);
  roi.valid = roi.u_min <= roi.u_max && roi.v_min <= roi.v_max;
  return roi;
}

}  // namespace fusedet
