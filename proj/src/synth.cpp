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

#include "fusedet/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

#include <Eigen/Geometry>

#include "fusedet/error.hpp"
#include "fusedet/fusion.hpp"
#include "fusedet/geometry.hpp"
#include "fusedet/kitti_io.hpp"

namespace fusedet {

Calibration synth_calibration(const SynthConfig& cfg) {
  Calibration c;
  c.P << cfg.focal, 0, cfg.image_width / 2.0, 0,  //
      0, cfg.focal, cfg.image_height / 2.0, 0,    //
      0, 0, 1, 0;
  c.R0.setIdentity();
  c.velo_to_cam << 0, -1, 0, 0,  //
      0, 0, -1, -0.08,           //
      1, 0, 0, -0.27;
  c.image_width = cfg.image_width;
  c.image_height = cfg.image_height;
  return c;
}

std::uint64_t scene_seed(std::uint64_t seed, std::size_t index) {
  return splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(index) + 1));
}

namespace {

struct Placed {
  Box3D box;
  bool positive = false;
  std::array<double, 3> color{};
  float reflectance = 0.0f;
  BBox2D bbox;
  double truncation = 0.0;
};

/// Ray parameter of the first hit of a ray from the origin, or -1.
double ray_box(const Eigen::Vector3d& dir, const Box3D& box) {
  const double c = std::cos(box.yaw), s = std::sin(box.yaw);
  const Eigen::Vector3d o(-(c * box.center.x() + s * box.center.y()), -(-s * box.center.x() + c * box.center.y()),
                          -box.center.z());
  const Eigen::Vector3d d(c * dir.x() + s * dir.y(), -s * dir.x() + c * dir.y(), dir.z());
  const double half[3] = {box.l / 2, box.w / 2, box.h / 2};
  double t0 = 0.0, t1 = 1e9;
  for (int a = 0; a < 3; ++a) {
    if (std::abs(d[a]) < 1e-12) {
      if (std::abs(o[a]) > half[a]) return -1.0;
      continue;
    }
    double ta = (-half[a] - o[a]) / d[a], tb = (half[a] - o[a]) / d[a];
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
    if (t0 > t1) return -1.0;
  }
  return t0 > 0 ? t0 : -1.0;
}

/// Unclipped pixel bounds of a box whose corners are all in front.
std::optional<BBox2D> raw_bounds(const Box3D& box, const Projector& project) {
  BBox2D b{1e18, 1e18, -1e18, -1e18};
  for (const auto& p : box_corners(box)) {
    const auto q = project(p);
    if (q.depth <= 0.1) return std::nullopt;
    b.left = std::min(b.left, q.u);
    b.right = std::max(b.right, q.u);
    b.top = std::min(b.top, q.v);
    b.bottom = std::max(b.bottom, q.v);
  }
  return b;
}

double area(const BBox2D& b) { return std::max(0.0, b.width()) * std::max(0.0, b.height()); }

BBox2D clip(const BBox2D& b, int w, int h) {
  return {std::clamp(b.left, 0.0, static_cast<double>(w)), std::clamp(b.top, 0.0, static_cast<double>(h)),
          std::clamp(b.right, 0.0, static_cast<double>(w)), std::clamp(b.bottom, 0.0, static_cast<double>(h))};
}

std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); }

}  // namespace

SynthScene generate_scene(const SynthConfig& cfg, std::uint64_t seed) {
  if (cfg.min_pairs < 0 || cfg.max_pairs < cfg.min_pairs || cfg.image_width < 1 || cfg.image_height < 1) {
    throw Error(Errc::InvalidConfig, "invalid synthetic scene configuration");
  }
  std::mt19937_64 rng(splitmix64(seed));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double a, double b) { return a + (b - a) * unit(rng); };
  std::normal_distribution<double> normal(0.0, 1.0);

  SynthScene scene;
  scene.calib = synth_calibration(cfg);
  const Projector project(scene.calib);

  // Object placement by rejection sampling.
  const int pairs = std::uniform_int_distribution<int>(cfg.min_pairs, cfg.max_pairs)(rng);
  std::vector<Placed> objects;
  for (int i = 0; i < 2 * pairs; ++i) {
    for (int attempt = 0; attempt < 200; ++attempt) {
      Placed p;
      p.positive = i % 2 == 0;
      const double x = uniform(cfg.min_forward, cfg.max_forward);
      const double lateral = std::min(cfg.max_lateral, 0.8 * x - 2.0);
      p.box.center = {x, uniform(-lateral, lateral), 0.0};
      p.box.l = uniform(3.5, 4.3);
      p.box.w = uniform(1.5, 1.8);
      p.box.h = uniform(1.4, 1.7);
      p.box.center.z() = -cfg.sensor_height + p.box.h / 2;
      p.box.yaw = normalize_angle((unit(rng) < 0.5 ? 0.0 : kPi / 2) + uniform(-0.3, 0.3));
      const double reach = 0.5 * std::hypot(p.box.l, p.box.w);
      bool clear = true;
      for (const auto& o : objects) {
        const double gap = (o.box.center.head<2>() - p.box.center.head<2>()).norm();
        if (gap < reach + 0.5 * std::hypot(o.box.l, o.box.w) + 0.3) clear = false;
      }
      if (!clear) continue;
      const auto raw = raw_bounds(p.box, project);
      if (!raw) continue;
      p.bbox = clip(*raw, cfg.image_width, cfg.image_height);
      const double full = area(*raw);
      if (full <= 0 || area(p.bbox) < 0.6 * full) continue;
      p.truncation = 1.0 - area(p.bbox) / full;
      const double sign = p.positive ? 1.0 : -1.0;
      const double base = 0.5 + cfg.color_jitter * normal(rng);
      p.color = {base + sign * cfg.color_gap / 2 + cfg.color_jitter * normal(rng),
                 base + cfg.color_jitter * normal(rng),
                 base - sign * cfg.color_gap / 2 + cfg.color_jitter * normal(rng)};
      p.reflectance = static_cast<float>(uniform(0.2, 0.8));
      objects.push_back(p);
      break;
    }
  }

  // LiDAR scan: nearest hit per ray among objects and the ground plane.
  for (int b = 0; b < cfg.beams; ++b) {
    const double elev = (cfg.min_elevation_deg + (cfg.max_elevation_deg - cfg.min_elevation_deg) * b /
                                                     std::max(1, cfg.beams - 1)) * kPi / 180.0;
    for (double az = -46.0; az <= 46.0 + 1e-9; az += cfg.azimuth_step_deg) {
      const double a = az * kPi / 180.0;
      const Eigen::Vector3d dir(std::cos(elev) * std::cos(a), std::cos(elev) * std::sin(a), std::sin(elev));
      double best = cfg.max_range;
      int hit = -1;
      for (std::size_t o = 0; o < objects.size(); ++o) {
        const double t = ray_box(dir, objects[o].box);
        if (t > 0 && t < best) {
          best = t;
          hit = static_cast<int>(o);
        }
      }
      const double noise = cfg.range_noise * normal(rng);
      const double keep = unit(rng);
      const double shade = unit(rng);
      if (hit < 0) {
        if (dir.z() >= 0) continue;
        const double t = cfg.sensor_height / -dir.z();
        if (t >= cfg.max_range || keep > cfg.ground_keep) continue;
        best = t;
      }
      const Eigen::Vector3d p = dir * (best + noise);
      float r = hit < 0 ? static_cast<float>(0.2 * shade)
                        : std::clamp(objects[static_cast<std::size_t>(hit)].reflectance + 0.1f * static_cast<float>(shade - 0.5), 0.0f, 1.0f);
      scene.cloud.points.push_back({static_cast<float>(p.x()), static_cast<float>(p.y()), static_cast<float>(p.z()), r});
    }
  }

  // Labels, far to near for occlusion levels.
  std::vector<std::size_t> order(objects.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return objects[a].box.center.x() > objects[b].box.center.x(); });
  for (std::size_t i = 0; i < objects.size(); ++i) {
    const Placed& p = objects[i];
    const CameraBox cam = lidar_box_to_camera(p.box, scene.calib);
    GroundTruthObject gt;
    gt.class_name = p.positive ? cfg.positive_class : cfg.decoy_class;
    gt.truncation = std::round(p.truncation * 100.0) / 100.0;
    gt.bbox2d = p.bbox;
    gt.h = cam.h;
    gt.w = cam.w;
    gt.l = cam.l;
    gt.location = cam.location;
    gt.rotation_y = cam.rotation_y;
    gt.alpha = normalize_angle(cam.rotation_y - std::atan2(cam.location.x(), cam.location.z()));
    // Occluded fraction of the box by nearer objects, sampled on a grid.
    int covered = 0, total = 0;
    for (int sy = 0; sy < 8; ++sy) {
      for (int sx = 0; sx < 8; ++sx) {
        const double u = p.bbox.left + (sx + 0.5) / 8 * p.bbox.width();
        const double v = p.bbox.top + (sy + 0.5) / 8 * p.bbox.height();
        ++total;
        for (const auto& o : objects) {
          if (o.box.center.x() < p.box.center.x() && u >= o.bbox.left && u <= o.bbox.right && v >= o.bbox.top &&
              v <= o.bbox.bottom) {
            ++covered;
            break;
          }
        }
      }
    }
    const double frac = static_cast<double>(covered) / total;
    gt.occlusion = frac < 0.1 ? 0 : frac < 0.5 ? 1 : 2;
    scene.labels.push_back(gt);
  }

  // Image: sky and ground, then object boxes painted far to near.
  scene.image = Image(cfg.image_width, cfg.image_height);
  const double horizon = cfg.image_height / 2.0;
  for (int y = 0; y < cfg.image_height; ++y) {
    for (int x = 0; x < cfg.image_width; ++x) {
      const double base[3] = {y < horizon ? 0.62 : 0.38, y < horizon ? 0.68 : 0.38, y < horizon ? 0.78 : 0.36};
      for (int c = 0; c < 3; ++c) scene.image.at(x, y, c) = to_byte(base[c] + cfg.pixel_noise * normal(rng));
    }
  }
  for (std::size_t i : order) {
    const Placed& p = objects[i];
    const int x0 = static_cast<int>(std::floor(p.bbox.left)), x1 = static_cast<int>(std::ceil(p.bbox.right));
    const int y0 = static_cast<int>(std::floor(p.bbox.top)), y1 = static_cast<int>(std::ceil(p.bbox.bottom));
    for (int y = std::max(0, y0); y < std::min(cfg.image_height, y1); ++y) {
      for (int x = std::max(0, x0); x < std::min(cfg.image_width, x1); ++x) {
        for (int c = 0; c < 3; ++c) scene.image.at(x, y, c) = to_byte(p.color[static_cast<std::size_t>(c)] + cfg.pixel_noise * normal(rng));
      }
    }
  }

  scene.features = synthesize_feature_map(scene.image, scene.labels, cfg.feature_channels, cfg.feature_stride,
                                          cfg.positive_class, cfg.feature_scale);
  return scene;
}

std::string scene_id(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06zu", index);
  return buf;
}

void write_scene(const DatasetPaths& paths, const std::string& id, const SynthScene& scene) {
  for (const char* dir : {"velodyne", "calib", "label_2", "image_2", "features"}) {
    std::filesystem::create_directories(paths.root / dir);
  }
  write_point_cloud(paths.velodyne(id), scene.cloud);
  write_calibration(paths.calib(id), scene.calib);
  write_labels(paths.label(id), scene.labels);
  write_image(paths.image(id), scene.image);
  write_tensor(paths.features(id), scene.features);
}

void write_synth_dataset(const std::filesystem::path& root, const SynthConfig& cfg, std::size_t train,
                         std::size_t val, std::uint64_t seed) {
  const DatasetPaths paths{root};
  std::filesystem::create_directories(root);
  std::ofstream train_list(paths.split("train")), val_list(paths.split("val"));
  if (!train_list || !val_list) throw Error(Errc::IoFailure, "cannot write split files in " + root.string());
  for (std::size_t i = 0; i < train + val; ++i) {
    const std::string id = scene_id(i);
    write_scene(paths, id, generate_scene(cfg, scene_seed(seed, i)));
    (i < train ? train_list : val_list) << id << '\n';
  }
  if (!train_list || !val_list) throw Error(Errc::IoFailure, "short write to split files in " + root.string());
}

std::vector<std::string> read_split(const std::filesystem::path& root, const std::string& name) {
  const DatasetPaths paths{root};
  std::vector<std::string> ids;
  if (!name.empty()) {
    std::ifstream in(paths.split(name));
    if (!in) throw Error(Errc::IoFailure, "no split file " + paths.split(name).string());
    std::string id;
    while (in >> id) ids.push_back(id);
    return ids;
  }
  const auto dir = root / "velodyne";
  if (!std::filesystem::is_directory(dir)) throw Error(Errc::IoFailure, "no velodyne directory in " + root.string());
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.path().extension() == ".bin") ids.push_back(e.path().stem().string());
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

SceneFiles load_scene(const DatasetPaths& paths, const std::string& id, bool want_image, bool want_features) {
  SceneFiles s;
  s.cloud = read_point_cloud(paths.velodyne(id));
  s.calib = read_calibration(paths.calib(id));
  if (std::filesystem::exists(paths.label(id))) s.labels = read_labels(paths.label(id));
  if (want_image || s.calib.image_width <= 0) {
    if (std::filesystem::exists(paths.image(id))) {
      s.image = read_image(paths.image(id));
      if (s.calib.image_width <= 0) {
        s.calib.image_width = s.image->width;
        s.calib.image_height = s.image->height;
      }
    } else if (want_image) {
      throw Error(Errc::IoFailure, "missing image " + paths.image(id).string());
    }
  }
  if (want_features) s.features = read_tensor(paths.features(id));
  return s;
}

}  // namespace fusedet
