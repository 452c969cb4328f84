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
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fusedet/types.hpp"

namespace fusedet {

/// Synthetic street scenes: cars and equally many decoy cuboids with the
/// same size, shape and reflectance statistics, seen by a scanning LiDAR
/// and a pinhole camera. Cars and decoys differ only in image colour.
struct SynthConfig {
  int image_width = 320;
  int image_height = 128;
  double focal = 160.0;

  double min_forward = 5.0;
  double max_forward = 14.0;
  double max_lateral = 6.5;
  /// Objects per scene come in car/decoy pairs.
  int min_pairs = 1;
  int max_pairs = 2;

  double sensor_height = 1.73;
  int beams = 24;
  double min_elevation_deg = -16.0;
  double max_elevation_deg = 1.0;
  double azimuth_step_deg = 0.8;
  double max_range = 25.0;
  double ground_keep = 0.2;
  double range_noise = 0.02;

  /// Red-minus-blue offset between car and decoy paint, in [0, 1] units.
  double color_gap = 0.25;
  double color_jitter = 0.05;
  double pixel_noise = 0.12;

  int feature_channels = 512;
  double feature_stride = 8.0;
  /// Activation magnitude of the synthetic feature channels.
  double feature_scale = 10.0;

  std::string positive_class = "Car";
  std::string decoy_class = "Decoy";
};

struct SynthScene {
  PointCloud cloud;
  Calibration calib;
  Image image;
  std::vector<GroundTruthObject> labels;
  FeatureMap features;
};

Calibration synth_calibration(const SynthConfig& cfg);

/// Deterministic in (cfg, seed).
SynthScene generate_scene(const SynthConfig& cfg, std::uint64_t seed);

/// Seed of scene `index` in a dataset generated with `seed`.
std::uint64_t scene_seed(std::uint64_t seed, std::size_t index);

// ---------------------------------------------------------------------------
// KITTI-style directory layout:
//   velodyne/<id>.bin  calib/<id>.txt  label_2/<id>.txt  image_2/<id>.ppm
//   features/<id>.npy (+ .meta)  train.txt  val.txt

std::string scene_id(std::size_t index);

struct DatasetPaths {
  std::filesystem::path root;

  std::filesystem::path velodyne(const std::string& id) const { return root / "velodyne" / (id + ".bin"); }
  std::filesystem::path calib(const std::string& id) const { return root / "calib" / (id + ".txt"); }
  std::filesystem::path label(const std::string& id) const { return root / "label_2" / (id + ".txt"); }
  std::filesystem::path image(const std::string& id) const { return root / "image_2" / (id + ".ppm"); }
  std::filesystem::path features(const std::string& id) const { return root / "features" / (id + ".npy"); }
  std::filesystem::path split(const std::string& name) const { return root / (name + ".txt"); }
};

void write_scene(const DatasetPaths& paths, const std::string& id, const SynthScene& scene);

/// Writes `train` + `val` scenes with ids 000000.. and the two split files.
void write_synth_dataset(const std::filesystem::path& root, const SynthConfig& cfg, std::size_t train,
                         std::size_t val, std::uint64_t seed);

/// Scene ids listed in <root>/<name>.txt; falls back to every velodyne
/// file when the split file is absent and `name` is empty.
std::vector<std::string> read_split(const std::filesystem::path& root, const std::string& name);

/// Loads whatever exists for a scene. Cloud and calibration are required;
/// labels, image and features are optional. A missing image_size in the
/// calibration is filled from the image.
struct SceneFiles {
  PointCloud cloud;
  Calibration calib;
  std::optional<std::vector<GroundTruthObject>> labels;
  std::optional<Image> image;
  std::optional<FeatureMap> features;
};

SceneFiles load_scene(const DatasetPaths& paths, const std::string& id, bool want_image, bool want_features);

}  // namespace fusedet
