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

#include "fusedet/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fusedet/error.hpp"

namespace fusedet {

void sample_feature_into(const FeatureMap& map, double u, double v, SampleMode mode, float* out) {
  const double fx = std::clamp(u * map.image_scale / map.stride, 0.0, map.width - 1.0);
  const double fy = std::clamp(v * map.image_scale / map.stride, 0.0, map.height - 1.0);
  const std::size_t plane = static_cast<std::size_t>(map.width) * map.height;
  if (mode == SampleMode::Nearest) {
    const std::size_t cell = static_cast<std::size_t>(std::lround(fy)) * map.width + std::lround(fx);
    for (int c = 0; c < map.channels; ++c) out[c] = map.data[c * plane + cell];
    return;
  }
  const int x0 = static_cast<int>(std::floor(fx)), y0 = static_cast<int>(std::floor(fy));
  const int x1 = std::min(x0 + 1, map.width - 1), y1 = std::min(y0 + 1, map.height - 1);
  const double ax = fx - x0, ay = fy - y0;
  const double w00 = (1 - ax) * (1 - ay), w01 = ax * (1 - ay), w10 = (1 - ax) * ay, w11 = ax * ay;
  const std::size_t i00 = static_cast<std::size_t>(y0) * map.width + x0;
  const std::size_t i01 = static_cast<std::size_t>(y0) * map.width + x1;
  const std::size_t i10 = static_cast<std::size_t>(y1) * map.width + x0;
  const std::size_t i11 = static_cast<std::size_t>(y1) * map.width + x1;
  for (int c = 0; c < map.channels; ++c) {
    const float* p = map.data.data() + c * plane;
    out[c] = static_cast<float>(w00 * p[i00] + w01 * p[i01] + w10 * p[i10] + w11 * p[i11]);
  }
}

std::vector<float> sample_feature(const FeatureMap& map, double u, double v, SampleMode mode) {
  std::vector<float> out(static_cast<std::size_t>(map.channels));
  sample_feature_into(map, u, v, mode, out.data());
  return out;
}

std::vector<float> roi_pool(const FeatureMap& map, const Roi& roi, int grid) {
  std::vector<double> acc(static_cast<std::size_t>(map.channels), 0.0);
  std::vector<float> sample(static_cast<std::size_t>(map.channels));
  for (int iy = 0; iy < grid; ++iy) {
    const double v = roi.v_min + (iy + 0.5) / grid * (roi.v_max - roi.v_min);
    for (int ix = 0; ix < grid; ++ix) {
      const double u = roi.u_min + (ix + 0.5) / grid * (roi.u_max - roi.u_min);
      sample_feature_into(map, u, v, SampleMode::Bilinear, sample.data());
      for (std::size_t c = 0; c < acc.size(); ++c) acc[c] += sample[c];
    }
  }
  std::vector<float> out(acc.size());
  for (std::size_t c = 0; c < acc.size(); ++c) out[c] = static_cast<float>(acc[c] / (grid * grid));
  return out;
}

std::vector<float> crop_raw_patch(const Image& image, double u, double v, int k) {
  if (k < 1 || k % 2 == 0) throw Error(Errc::InvalidConfig, "patch size must be odd");
  const int r = k / 2;
  const long cx = std::lround(u), cy = std::lround(v);
  std::vector<float> out(static_cast<std::size_t>(3 * k * k));
  for (int c = 0; c < 3; ++c) {
    for (int dy = -r; dy <= r; ++dy) {
      const int y = static_cast<int>(std::clamp<long>(cy + dy, 0, image.height - 1));
      for (int dx = -r; dx <= r; ++dx) {
        const int x = static_cast<int>(std::clamp<long>(cx + dx, 0, image.width - 1));
        out[static_cast<std::size_t>((c * k + dy + r) * k + dx + r)] = image.value(x, y, c);
      }
    }
  }
  return out;
}

namespace {

std::size_t retained_points(const VoxelGrid& grid) {
  std::size_t n = 0;
  for (const auto& v : grid.voxels) n += v.points.size();
  return n;
}

}  // namespace

nn::Tensor<float> sample_point_features(const VoxelGrid& grid, const Calibration& calib, const FeatureMap& map,
                                        SampleMode mode) {
  const Projector project(calib);
  const auto channels = static_cast<std::size_t>(map.channels);
  nn::Tensor<float> out({retained_points(grid), channels});
  std::size_t row = 0;
  for (const auto& voxel : grid.voxels) {
    for (const auto& p : voxel.points) {
      const auto proj = project(p.x, p.y, p.z);
      sample_feature_into(map, proj.u, proj.v, mode, out.data() + row * channels);
      ++row;
    }
  }
  return out;
}

nn::Tensor<float> sample_point_patches(const VoxelGrid& grid, const Calibration& calib, const Image& image, int k) {
  const Projector project(calib);
  const auto width = static_cast<std::size_t>(3 * k * k);
  nn::Tensor<float> out({retained_points(grid), width});
  std::size_t row = 0;
  for (const auto& voxel : grid.voxels) {
    for (const auto& p : voxel.points) {
      const auto proj = project(p.x, p.y, p.z);
      const auto patch = crop_raw_patch(image, proj.u, proj.v, k);
      std::copy(patch.begin(), patch.end(), out.data() + row * width);
      ++row;
    }
  }
  return out;
}

nn::Tensor<float> pool_voxel_features(const VoxelGrid& grid, const Calibration& calib, const FeatureMap& map) {
  const auto channels = static_cast<std::size_t>(map.channels);
  nn::Tensor<float> out({grid.voxels.size(), channels});
  for (std::size_t k = 0; k < grid.voxels.size(); ++k) {
    const Roi roi = project_voxel_roi(grid.voxels[k].index, grid.cfg, calib);
    if (!roi.valid) continue;
    const auto pooled = roi_pool(map, roi);
    std::copy(pooled.begin(), pooled.end(), out.data() + k * channels);
  }
  return out;
}

FusedPointSet point_fusion(const PointCloud& cloud, const Calibration& calib, const FeatureMap& map,
                           FeatureReducer<float>& reducer, const VoxelGridConfig& cfg, SampleMode mode) {
  if (reducer.dims().input != static_cast<std::size_t>(map.channels)) {
    throw Error(Errc::ShapeMismatch, "reducer input width differs from feature-map channels");
  }
  const PointCloud visible = crop_to_frustum(cloud, calib);
  if (visible.empty()) throw Error(Errc::NoVisiblePoints, "no point projects into the image");

  FusedPointSet fused;
  fused.grid = voxelize(visible, cfg);
  if (fused.grid.voxels.empty()) throw Error(Errc::NoVisiblePoints, "no visible point lies in the crop range");

  const nn::Tensor<float> image_features = sample_point_features(fused.grid, calib, map, mode);
  const nn::Tensor<float> reduced = reducer.forward(image_features, nn::Mode::Eval);
  const std::size_t width = 7 + reduced.dim(1);
  fused.rows.resize({image_features.dim(0), width});
  fused.offsets.push_back(0);
  std::size_t row = 0;
  for (const auto& voxel : fused.grid.voxels) {
    for (const auto& d : decorate(voxel)) {
      float* dst = fused.rows.data() + row * width;
      for (int i = 0; i < 7; ++i) dst[i] = static_cast<float>(d[static_cast<std::size_t>(i)]);
      std::copy_n(reduced.data() + row * reduced.dim(1), reduced.dim(1), dst + 7);
      ++row;
    }
    fused.offsets.push_back(row);
  }
  return fused;
}

FusedVoxelSet voxel_fusion(const nn::Tensor<float>& voxel_features, const VoxelGrid& grid,
                           const Calibration& calib, const FeatureMap& map, FeatureReducer<float>& reducer) {
  if (voxel_features.rank() != 2 || voxel_features.dim(0) != grid.voxels.size()) {
    throw Error(Errc::ShapeMismatch, "one VFE feature row per voxel is required");
  }
  if (reducer.dims().input != static_cast<std::size_t>(map.channels)) {
    throw Error(Errc::ShapeMismatch, "reducer input width differs from feature-map channels");
  }
  const nn::Tensor<float> pooled = pool_voxel_features(grid, calib, map);
  const nn::Tensor<float> reduced = reducer.forward(pooled, nn::Mode::Eval);
  const std::size_t a = voxel_features.dim(1), b = reduced.dim(1);
  FusedVoxelSet fused;
  fused.rows.resize({grid.voxels.size(), a + b});
  for (std::size_t k = 0; k < grid.voxels.size(); ++k) {
    std::copy_n(voxel_features.data() + k * a, a, fused.rows.data() + k * (a + b));
    std::copy_n(reduced.data() + k * b, b, fused.rows.data() + k * (a + b) + a);
  }
  return fused;
}

FeatureMap synthesize_feature_map(const Image& image, std::span<const GroundTruthObject> labels, int channels,
                                  double stride, const std::string& positive_class, double scale) {
  if (channels < 4) throw Error(Errc::InvalidConfig, "synthetic feature maps need at least 4 channels");
  if (!(stride > 0.0)) throw Error(Errc::InvalidConfig, "feature stride must be positive");
  FeatureMap map;
  map.channels = channels;
  map.stride = stride;
  map.width = static_cast<int>(std::ceil(image.width / stride));
  map.height = static_cast<int>(std::ceil(image.height / stride));
  map.data.assign(static_cast<std::size_t>(channels) * map.width * map.height, 0.0f);

  // Far-to-near so nearer boxes overwrite the signature of farther ones.
  std::vector<const GroundTruthObject*> boxes;
  for (const auto& l : labels) {
    if (!l.dont_care()) boxes.push_back(&l);
  }
  std::stable_sort(boxes.begin(), boxes.end(), [](const GroundTruthObject* a, const GroundTruthObject* b) {
    return a->location.z() > b->location.z();
  });

  for (int y = 0; y < map.height; ++y) {
    for (int x = 0; x < map.width; ++x) {
      const double u = x * stride, v = y * stride;
      map.at(0, y, x) = static_cast<float>(scale * u / image.width);
      map.at(1, y, x) = static_cast<float>(scale * v / image.height);
      for (const auto* b : boxes) {
        if (u >= b->bbox2d.left && u <= b->bbox2d.right && v >= b->bbox2d.top && v <= b->bbox2d.bottom) {
          map.at(2, y, x) = static_cast<float>(scale);
          map.at(3, y, x) = static_cast<float>(b->class_name == positive_class ? scale : -scale);
        }
      }
    }
  }
  return map;
}

}  // namespace fusedet
