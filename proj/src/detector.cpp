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

#include "fusedet/detector.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "fusedet/error.hpp"
#include "fusedet/neural/checkpoint.hpp"
#include "fusedet/neural/sgd.hpp"

namespace fusedet {

std::string to_string(FusionMode mode) {
  switch (mode) {
    case FusionMode::LidarOnly: return "lidar";
    case FusionMode::PointFusion: return "point";
    case FusionMode::VoxelFusion: return "voxel";
    case FusionMode::RawPatch: return "patch";
  }
  return "unknown";
}

std::pair<FusionMode, int> parse_fusion_mode(const std::string& text) {
  if (text == "lidar") return {FusionMode::LidarOnly, 0};
  if (text == "point") return {FusionMode::PointFusion, 0};
  if (text == "voxel") return {FusionMode::VoxelFusion, 0};
  if (text.rfind("patch", 0) == 0 && text.size() > 5) {
    const std::string digits = text.substr(5);
    if (std::all_of(digits.begin(), digits.end(), [](char c) { return c >= '0' && c <= '9'; }) && digits.size() < 3) {
      const int k = std::stoi(digits);
      if (k % 2 == 1) return {FusionMode::RawPatch, k};
    }
  }
  throw Error(Errc::InvalidConfig, "unknown fusion mode '" + text + "' (expected lidar, point, voxel, patch3, patch5)");
}

namespace {

void set_mode_dims(NetworkConfig& cfg, FusionMode mode, int patch_size, std::size_t hidden, std::size_t out) {
  cfg.fusion_mode = mode;
  cfg.patch_size = mode == FusionMode::RawPatch ? patch_size : 0;
  switch (mode) {
    case FusionMode::LidarOnly:
      cfg.vfe = {{7, hidden}, {hidden, out}};
      break;
    case FusionMode::PointFusion:
      cfg.reducer = ReducerDims::for_mode(ReducerMode::PointFusion, cfg.image_channels);
      cfg.vfe = {{7 + cfg.reducer.output, hidden}, {hidden, out}};
      break;
    case FusionMode::VoxelFusion:
      cfg.reducer = ReducerDims::for_mode(ReducerMode::VoxelFusion, cfg.image_channels);
      cfg.vfe = {{7, hidden}, {hidden, out - cfg.reducer.output}};
      break;
    case FusionMode::RawPatch:
      if (patch_size < 1 || patch_size % 2 == 0) throw Error(Errc::InvalidConfig, "patch size must be odd");
      cfg.vfe = {{7 + static_cast<std::size_t>(3 * patch_size * patch_size), hidden}, {hidden, out}};
      break;
  }
}

}  // namespace

NetworkConfig NetworkConfig::kitti(FusionMode mode, int patch_size) {
  NetworkConfig cfg;
  set_mode_dims(cfg, mode, patch_size, 32, 128);
  return cfg;
}

NetworkConfig NetworkConfig::toy(FusionMode mode, int patch_size) {
  NetworkConfig cfg;
  cfg.grid.range_min = {0.0, -8.0, -3.0};
  cfg.grid.range_max = {16.0, 8.0, 1.0};
  cfg.grid.voxel_size = {0.5, 0.5, 1.0};
  cfg.grid.max_points = 35;
  set_mode_dims(cfg, mode, patch_size, 32, 128);
  cfg.middle = {{8, {2, 1, 1}, {1, 1, 1}}, {8, {1, 1, 1}, {1, 1, 1}}, {8, {2, 1, 1}, {1, 1, 1}}};
  cfg.rpn = {{16, 2, 16}, {32, 2, 16}, {32, 2, 16}};
  cfg.reducer_init_gain = 3.0;
  cfg.schedule.epochs = 30;
  cfg.schedule.lr_boundary = 20;
  return cfg;
}

void NetworkConfig::validate() const {
  grid.validate();
  auto fail = [](const std::string& msg) { throw Error(Errc::InvalidConfig, msg); };
  if (vfe.empty()) fail("at least one VFE layer is required");
  for (std::size_t i = 0; i < vfe.size(); ++i) {
    if (vfe[i].second == 0 || vfe[i].second % 2 != 0) fail("VFE output widths must be positive and even");
    if (i > 0 && vfe[i].first != vfe[i - 1].second) fail("VFE layer " + std::to_string(i) + " input does not chain");
  }
  if (vfe.front().first != point_input_dim()) {
    fail("first VFE input is " + std::to_string(vfe.front().first) + ", fusion mode needs " +
         std::to_string(point_input_dim()));
  }
  if (fusion_mode == FusionMode::PointFusion || fusion_mode == FusionMode::VoxelFusion) {
    if (reducer.input != image_channels) fail("reducer input must equal image_channels");
    if (reducer.hidden == 0 || reducer.output == 0) fail("reducer widths must be positive");
    if (!(reducer_init_gain > 0.0) || !std::isfinite(reducer_init_gain)) fail("reducer_init_gain must be positive");
  }
  if (fusion_mode == FusionMode::RawPatch && (patch_size < 1 || patch_size % 2 == 0)) fail("patch size must be odd");
  if (middle.empty()) fail("at least one middle layer is required");
  if (rpn.empty()) fail("at least one RPN block is required");
  for (const auto& b : rpn) {
    if (b.convs < 1 || b.channels == 0 || b.up_channels == 0) fail("RPN blocks need channels and >= 1 conv");
  }
  if (anchors.yaws.empty()) fail("at least one anchor orientation is required");
  if (!(anchors.length > 0 && anchors.width > 0 && anchors.height > 0)) fail("anchor sizes must be positive");
  if (!(anchors.negative_iou <= anchors.positive_iou)) fail("negative IoU threshold exceeds the positive one");
  if (schedule.epochs < 1 || !(schedule.learning_rate > 0)) fail("schedule needs epochs >= 1 and a positive rate");
  const auto dims = grid.grid_dims();
  const int stride = rpn_total_stride();
  if (dims[0] % stride != 0 || dims[1] % stride != 0) {
    throw Error(Errc::IndivisibleGrid, "BEV grid " + std::to_string(dims[0]) + "x" + std::to_string(dims[1]) +
                                           " is not divisible by the RPN stride " + std::to_string(stride));
  }
  const auto m = middle_output_dims();
  if (m[0] < 1 || m[1] != dims[1] || m[2] != dims[0]) fail("middle layers must keep the BEV size and a positive depth");
}

std::size_t NetworkConfig::point_input_dim() const {
  switch (fusion_mode) {
    case FusionMode::PointFusion: return 7 + reducer.output;
    case FusionMode::RawPatch: return 7 + static_cast<std::size_t>(3 * patch_size * patch_size);
    default: return 7;
  }
}

std::size_t NetworkConfig::voxel_feature_dim() const {
  const std::size_t base = vfe.back().second;
  return fusion_mode == FusionMode::VoxelFusion ? base + reducer.output : base;
}

std::array<int, 2> NetworkConfig::output_dims() const {
  const auto dims = grid.grid_dims();
  return {dims[1] / 2, dims[0] / 2};
}

std::array<int, 3> NetworkConfig::middle_output_dims() const {
  const auto g = grid.grid_dims();
  std::array<int, 3> d{g[2], g[1], g[0]};
  for (const auto& m : middle) {
    for (int a = 0; a < 3; ++a) d[a] = nn::conv_out_size(d[a], 3, m.stride[a], m.pad[a]);
  }
  return d;
}

// ---------------------------------------------------------------------------

AnchorGrid generate_anchors(const VoxelGridConfig& grid, const AnchorConfig& cfg, int output_stride,
                            int total_stride) {
  const auto dims = grid.grid_dims();
  if (output_stride < 1 || total_stride < 1 || dims[0] % total_stride != 0 || dims[1] % total_stride != 0 ||
      dims[0] % output_stride != 0 || dims[1] % output_stride != 0) {
    throw Error(Errc::IndivisibleGrid, "BEV grid is not divisible by the RPN stride");
  }
  AnchorGrid out;
  out.rows = dims[1] / output_stride;
  out.cols = dims[0] / output_stride;
  out.orientations = static_cast<int>(cfg.yaws.size());
  const double cell_x = grid.voxel_size[0] * output_stride, cell_y = grid.voxel_size[1] * output_stride;
  out.anchors.reserve(static_cast<std::size_t>(out.rows) * out.cols * cfg.yaws.size());
  for (int r = 0; r < out.rows; ++r) {
    for (int c = 0; c < out.cols; ++c) {
      for (double yaw : cfg.yaws) {
        Box3D a;
        a.center = {grid.range_min[0] + (c + 0.5) * cell_x, grid.range_min[1] + (r + 0.5) * cell_y, cfg.z};
        a.l = cfg.length;
        a.w = cfg.width;
        a.h = cfg.height;
        a.yaw = yaw;
        out.anchors.push_back(a);
      }
    }
  }
  return out;
}

AnchorGrid generate_anchors(const NetworkConfig& cfg) {
  return generate_anchors(cfg.grid, cfg.anchors, 2, cfg.rpn_total_stride());
}

std::size_t TrainingTargets::positives() const {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), AnchorLabel::Positive));
}

std::size_t TrainingTargets::negatives() const {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), AnchorLabel::Negative));
}

TrainingTargets assign_targets(const AnchorGrid& anchors, std::span<const Box3D> gt_boxes, const AnchorConfig& cfg) {
  const std::size_t n = anchors.size();
  TrainingTargets t;
  t.labels.assign(n, AnchorLabel::Negative);
  t.residuals.assign(n, Residual{});
  t.matched.assign(n, -1);
  if (gt_boxes.empty()) return t;

  std::vector<double> best_iou(n, 0.0);
  std::vector<int> best_gt(n, -1);
  std::vector<std::size_t> gt_argmax(gt_boxes.size(), 0);
  std::vector<double> gt_best(gt_boxes.size(), -1.0);
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t g = 0; g < gt_boxes.size(); ++g) {
      const double iou = bev_iou(anchors.anchors[a], gt_boxes[g]);
      if (iou > best_iou[a]) {
        best_iou[a] = iou;
        best_gt[a] = static_cast<int>(g);
      }
      if (iou > gt_best[g]) {
        gt_best[g] = iou;
        gt_argmax[g] = a;
      }
    }
  }
  for (std::size_t a = 0; a < n; ++a) {
    if (best_iou[a] >= cfg.positive_iou) {
      t.labels[a] = AnchorLabel::Positive;
      t.matched[a] = best_gt[a];
    } else if (best_iou[a] >= cfg.negative_iou) {
      t.labels[a] = AnchorLabel::Ignore;
    }
  }
  for (std::size_t g = 0; g < gt_boxes.size(); ++g) {
    const std::size_t a = gt_argmax[g];
    if (t.labels[a] != AnchorLabel::Positive) {
      t.labels[a] = AnchorLabel::Positive;
      t.matched[a] = static_cast<int>(g);
    }
  }
  for (std::size_t a = 0; a < n; ++a) {
    if (t.labels[a] == AnchorLabel::Positive) {
      t.residuals[a] = encode_residuals(anchors.anchors[a], gt_boxes[static_cast<std::size_t>(t.matched[a])]);
    }
  }
  return t;
}

Residual encode_residuals(const Box3D& anchor, const Box3D& gt) {
  if (!(anchor.l > 0 && anchor.w > 0 && anchor.h > 0 && gt.l > 0 && gt.w > 0 && gt.h > 0)) {
    throw Error(Errc::NonPositiveSize, "box sizes must be positive");
  }
  const double d = std::hypot(anchor.l, anchor.w);
  return {(gt.center.x() - anchor.center.x()) / d,
          (gt.center.y() - anchor.center.y()) / d,
          (gt.center.z() - anchor.center.z()) / anchor.h,
          std::log(gt.l / anchor.l),
          std::log(gt.w / anchor.w),
          std::log(gt.h / anchor.h),
          gt.yaw - anchor.yaw};
}

Box3D decode_residuals(const Box3D& anchor, const Residual& p) {
  if (!(anchor.l > 0 && anchor.w > 0 && anchor.h > 0)) throw Error(Errc::NonPositiveSize, "anchor sizes must be positive");
  const double d = std::hypot(anchor.l, anchor.w);
  Box3D box;
  box.center = {anchor.center.x() + p[0] * d, anchor.center.y() + p[1] * d, anchor.center.z() + p[2] * anchor.h};
  box.l = anchor.l * std::exp(p[3]);
  box.w = anchor.w * std::exp(p[4]);
  box.h = anchor.h * std::exp(p[5]);
  box.yaw = normalize_angle(anchor.yaw + p[6]);
  return box;
}

// ---------------------------------------------------------------------------

SceneInput build_scene_input(const PointCloud& cloud, const Calibration& calib, const NetworkConfig& cfg,
                             const FeatureMap* features, const Image* image) {
  const FusionMode mode = cfg.fusion_mode;
  const bool needs_map = mode == FusionMode::PointFusion || mode == FusionMode::VoxelFusion;
  if (needs_map && features == nullptr) throw Error(Errc::InvalidConfig, to_string(mode) + " fusion needs a feature map");
  if (needs_map && static_cast<std::size_t>(features->channels) != cfg.reducer.input) {
    throw Error(Errc::ShapeMismatch, "feature map has " + std::to_string(features->channels) +
                                         " channels, reducer expects " + std::to_string(cfg.reducer.input));
  }
  if (mode == FusionMode::RawPatch && image == nullptr) throw Error(Errc::InvalidConfig, "patch fusion needs an image");

  const VoxelGrid grid = voxelize(cfg.crop_to_frustum ? crop_to_frustum(cloud, calib) : cloud, cfg.grid);
  SceneInput in;
  std::size_t total = 0;
  for (const auto& v : grid.voxels) total += v.points.size();
  in.points.resize({total, 7});
  std::size_t row = 0;
  for (const auto& v : grid.voxels) {
    in.voxels.push_back(v.index);
    for (const auto& d : decorate(v)) {
      for (std::size_t i = 0; i < 7; ++i) in.points.at(row, i) = static_cast<float>(d[i]);
      ++row;
    }
    in.offsets.push_back(row);
  }
  if (mode == FusionMode::PointFusion) in.point_image = sample_point_features(grid, calib, *features, cfg.sample_mode);
  if (mode == FusionMode::RawPatch) in.point_image = sample_point_patches(grid, calib, *image, cfg.patch_size);
  if (mode == FusionMode::VoxelFusion) in.voxel_image = pool_voxel_features(grid, calib, *features);
  return in;
}

std::vector<Box3D> lidar_boxes(std::span<const GroundTruthObject> labels, const Calibration& calib,
                               const std::string& class_name) {
  std::vector<Box3D> out;
  for (const auto& l : labels) {
    if (l.class_name == class_name) out.push_back(camera_label_to_lidar_box(l, calib));
  }
  return out;
}

// ---------------------------------------------------------------------------

TrainResult train(Network<float>& net, std::span<const TrainingSample> dataset, const Schedule& schedule,
                  const TrainOptions& options) {
  if (dataset.empty()) throw Error(Errc::InvalidConfig, "training needs at least one scene");
  const auto params = net.parameters();
  nn::Sgd<float> sgd(schedule.learning_rate, schedule.momentum);
  std::mt19937_64 rng(options.seed);
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainResult result;
  int steps = 0;
  for (int epoch = 0; epoch < schedule.epochs; ++epoch) {
    sgd.learning_rate = schedule.learning_rate_at(epoch);
    if (options.shuffle) std::shuffle(order.begin(), order.end(), rng);
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t idx : order) {
      const TrainingSample& sample = dataset[idx];
      nn::zero_grads<float>(params);
      const auto out = net.forward(sample.input, nn::Mode::Train);
      const auto loss = compute_loss(out, sample.targets, net.config().loss);
      if (!std::isfinite(loss.total)) {
        throw Error(Errc::DivergedLoss, "non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                                            std::to_string(steps) + " (scene " + std::to_string(idx) + ")");
      }
      net.backward(loss.grad_logits, loss.grad_regression);
      sgd.step(params);
      result.step_losses.push_back(loss.total);
      sum += loss.total;
      ++count;
      ++steps;
      if (options.max_steps > 0 && steps >= options.max_steps) break;
    }
    result.epoch_losses.push_back(sum / static_cast<double>(count));
    if (options.on_epoch) options.on_epoch(epoch, result.epoch_losses.back(), sgd.learning_rate);
    if (options.checkpoint_dir && schedule.checkpoint_every > 0 && (epoch + 1) % schedule.checkpoint_every == 0) {
      nn::save_checkpoint<float>(*options.checkpoint_dir / ("epoch_" + std::to_string(epoch + 1)), params,
                                 net.buffers());
    }
    if (options.max_steps > 0 && steps >= options.max_steps) break;
  }
  return result;
}

// ---------------------------------------------------------------------------
// Config files

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

std::string unquote(std::string v) {
  v = trim(v);
  if (v.size() >= 2 && ((v.front() == '"' && v.back() == '"') || (v.front() == '[' && v.back() == ']'))) {
    v = trim(v.substr(1, v.size() - 2));
  }
  return v;
}

double to_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size() || !std::isfinite(out)) {
    throw Error(Errc::InvalidConfig, "key '" + key + "' needs a number, got '" + v + "'");
  }
  return out;
}

long to_integer(const std::string& key, const std::string& v) {
  const double d = to_double(key, v);
  if (d != std::floor(d)) throw Error(Errc::InvalidConfig, "key '" + key + "' needs an integer, got '" + v + "'");
  return static_cast<long>(d);
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw Error(Errc::InvalidConfig, "key '" + key + "' needs true or false, got '" + v + "'");
}

std::vector<std::string> split(const std::string& v, char sep) {
  std::vector<std::string> out;
  std::stringstream in(v);
  std::string item;
  while (std::getline(in, item, sep)) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<double> to_doubles(const std::string& key, const std::string& v) {
  std::vector<double> out;
  for (const auto& s : split(v, ',')) out.push_back(to_double(key, s));
  return out;
}

std::array<double, 3> to_triple(const std::string& key, const std::string& v) {
  const auto d = to_doubles(key, v);
  if (d.size() != 3) throw Error(Errc::InvalidConfig, "key '" + key + "' needs three numbers");
  return {d[0], d[1], d[2]};
}

/// "7x32, 32x128" style lists of x-separated integers.
std::vector<std::vector<std::size_t>> to_shapes(const std::string& key, const std::string& v, std::size_t arity) {
  std::vector<std::vector<std::size_t>> out;
  for (const auto& item : split(v, ',')) {
    std::vector<std::size_t> dims;
    for (const auto& d : split(item, 'x')) {
      const long n = to_integer(key, d);
      if (n < 0) throw Error(Errc::InvalidConfig, "key '" + key + "' has a negative entry");
      dims.push_back(static_cast<std::size_t>(n));
    }
    if (dims.size() != arity) {
      throw Error(Errc::InvalidConfig, "key '" + key + "' entries need " + std::to_string(arity) + " values");
    }
    out.push_back(dims);
  }
  return out;
}

template <typename Field, typename Fn>
void per_layer(std::vector<Field>& layers, const std::string& key, std::size_t count, Fn&& fn) {
  if (count != layers.size()) layers.resize(count);
  for (std::size_t i = 0; i < count; ++i) fn(layers[i], i);
  (void)key;
}

std::string join_triple(const std::array<double, 3>& v) {
  std::ostringstream out;
  out.precision(17);
  out << '[' << v[0] << ", " << v[1] << ", " << v[2] << ']';
  return out.str();
}

std::string mode_name(const NetworkConfig& cfg) {
  return cfg.fusion_mode == FusionMode::RawPatch ? "patch" + std::to_string(cfg.patch_size) : to_string(cfg.fusion_mode);
}

}  // namespace

NetworkConfig parse_network_config(const std::string& text, NetworkConfig cfg) {
  std::vector<std::pair<std::string, std::string>> entries;
  std::stringstream in(text);
  std::string line, section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[' && line.back() == ']') {
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(Errc::InvalidConfig, "line " + std::to_string(line_no) + " is not 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    entries.emplace_back(section.empty() ? key : section + "." + key, unquote(line.substr(eq + 1)));
  }

  // The preset and fusion mode pick layer widths, so apply them first.
  std::string preset, mode;
  for (const auto& [k, v] : entries) {
    if (k == "preset") preset = v;
    if (k == "fusion_mode") mode = v;
  }
  if (!preset.empty() || !mode.empty()) {
    const auto [fm, k] = mode.empty() ? std::pair{cfg.fusion_mode, cfg.patch_size} : parse_fusion_mode(mode);
    if (preset.empty() || preset == "toy") {
      cfg = NetworkConfig::toy(fm, k);
    } else if (preset == "kitti") {
      cfg = NetworkConfig::kitti(fm, k);
    } else {
      throw Error(Errc::InvalidConfig, "unknown preset '" + preset + "' (expected toy or kitti)");
    }
  }

  for (const auto& [key, v] : entries) {
    if (key == "preset" || key == "fusion_mode") continue;
    if (key == "crop_to_frustum") cfg.crop_to_frustum = to_bool(key, v);
    else if (key == "sample_mode") {
      if (v == "bilinear") cfg.sample_mode = SampleMode::Bilinear;
      else if (v == "nearest") cfg.sample_mode = SampleMode::Nearest;
      else throw Error(Errc::InvalidConfig, "sample_mode must be bilinear or nearest");
    }
    else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(to_integer(key, v));
    else if (key == "reducer_init_gain") cfg.reducer_init_gain = to_double(key, v);
    else if (key == "image_channels") cfg.image_channels = static_cast<std::size_t>(to_integer(key, v));
    else if (key == "grid.range_min") cfg.grid.range_min = to_triple(key, v);
    else if (key == "grid.range_max") cfg.grid.range_max = to_triple(key, v);
    else if (key == "grid.voxel_size") cfg.grid.voxel_size = to_triple(key, v);
    else if (key == "grid.max_points") cfg.grid.max_points = static_cast<int>(to_integer(key, v));
    else if (key == "grid.seed") cfg.grid.rng_seed = static_cast<std::uint64_t>(to_integer(key, v));
    else if (key == "vfe") {
      cfg.vfe.clear();
      for (const auto& s : to_shapes(key, v, 2)) cfg.vfe.emplace_back(s[0], s[1]);
    } else if (key == "reducer") {
      const auto s = to_shapes(key, v, 3);
      if (s.size() != 1) throw Error(Errc::InvalidConfig, "reducer takes one in x hidden x out entry");
      cfg.reducer = {s[0][0], s[0][1], s[0][2]};
    } else if (key == "middle.channels") {
      const auto c = to_shapes(key, v, 1);
      per_layer(cfg.middle, key, c.size(), [&](MiddleLayer& m, std::size_t i) { m.channels = c[i][0]; });
    } else if (key == "middle.strides" || key == "middle.pads") {
      const auto s = to_shapes(key, v, 3);
      per_layer(cfg.middle, key, s.size(), [&](MiddleLayer& m, std::size_t i) {
        std::array<int, 3>& dst = key == "middle.strides" ? m.stride : m.pad;
        for (int a = 0; a < 3; ++a) dst[static_cast<std::size_t>(a)] = static_cast<int>(s[i][static_cast<std::size_t>(a)]);
      });
    } else if (key == "rpn.channels" || key == "rpn.convs" || key == "rpn.up_channels") {
      const auto c = to_shapes(key, v, 1);
      per_layer(cfg.rpn, key, c.size(), [&](RpnBlock& b, std::size_t i) {
        if (key == "rpn.channels") b.channels = c[i][0];
        else if (key == "rpn.convs") b.convs = static_cast<int>(c[i][0]);
        else b.up_channels = c[i][0];
      });
    }
    else if (key == "anchor.length") cfg.anchors.length = to_double(key, v);
    else if (key == "anchor.width") cfg.anchors.width = to_double(key, v);
    else if (key == "anchor.height") cfg.anchors.height = to_double(key, v);
    else if (key == "anchor.z") cfg.anchors.z = to_double(key, v);
    else if (key == "anchor.yaws") cfg.anchors.yaws = to_doubles(key, v);
    else if (key == "anchor.positive_iou") cfg.anchors.positive_iou = to_double(key, v);
    else if (key == "anchor.negative_iou") cfg.anchors.negative_iou = to_double(key, v);
    else if (key == "loss.alpha") cfg.loss.alpha = to_double(key, v);
    else if (key == "loss.beta") cfg.loss.beta = to_double(key, v);
    else if (key == "loss.lambda") cfg.loss.lambda = to_double(key, v);
    else if (key == "post.score_threshold") cfg.post.score_threshold = to_double(key, v);
    else if (key == "post.nms_iou") cfg.post.nms_iou = to_double(key, v);
    else if (key == "schedule.epochs") cfg.schedule.epochs = static_cast<int>(to_integer(key, v));
    else if (key == "schedule.lr_boundary") cfg.schedule.lr_boundary = static_cast<int>(to_integer(key, v));
    else if (key == "schedule.learning_rate") cfg.schedule.learning_rate = to_double(key, v);
    else if (key == "schedule.decay") cfg.schedule.decay = to_double(key, v);
    else if (key == "schedule.momentum") cfg.schedule.momentum = to_double(key, v);
    else if (key == "schedule.checkpoint_every") cfg.schedule.checkpoint_every = static_cast<int>(to_integer(key, v));
    else throw Error(Errc::InvalidConfig, "unknown config key '" + key + "'");
  }
  cfg.validate();
  return cfg;
}

NetworkConfig read_network_config(const std::filesystem::path& path, NetworkConfig base) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoFailure, "cannot open config " + path.string());
  std::stringstream text;
  text << in.rdbuf();
  return parse_network_config(text.str(), std::move(base));
}

std::string format_network_config(const NetworkConfig& cfg) {
  std::ostringstream out;
  out.precision(17);
  auto list = [&](auto&& items, auto&& fn) {
    std::string s = "\"";
    for (std::size_t i = 0; i < items.size(); ++i) s += (i ? ", " : "") + fn(items[i]);
    return s + "\"";
  };
  out << "fusion_mode = \"" << mode_name(cfg) << "\"\n";
  out << "crop_to_frustum = " << (cfg.crop_to_frustum ? "true" : "false") << '\n';
  out << "sample_mode = \"" << (cfg.sample_mode == SampleMode::Bilinear ? "bilinear" : "nearest") << "\"\n";
  out << "seed = " << cfg.seed << '\n';
  out << "image_channels = " << cfg.image_channels << '\n';
  out << "vfe = " << list(cfg.vfe, [](const auto& p) { return std::to_string(p.first) + "x" + std::to_string(p.second); })
      << '\n';
  out << "reducer_init_gain = " << cfg.reducer_init_gain << '\n';
  out << "reducer = \"" << cfg.reducer.input << 'x' << cfg.reducer.hidden << 'x' << cfg.reducer.output << "\"\n";
  out << "\n[grid]\n";
  out << "range_min = " << join_triple(cfg.grid.range_min) << '\n';
  out << "range_max = " << join_triple(cfg.grid.range_max) << '\n';
  out << "voxel_size = " << join_triple(cfg.grid.voxel_size) << '\n';
  out << "max_points = " << cfg.grid.max_points << '\n';
  out << "seed = " << cfg.grid.rng_seed << '\n';
  auto triple = [](const std::array<int, 3>& t) {
    return std::to_string(t[0]) + "x" + std::to_string(t[1]) + "x" + std::to_string(t[2]);
  };
  out << "\n[middle]\n";
  out << "channels = " << list(cfg.middle, [](const MiddleLayer& m) { return std::to_string(m.channels); }) << '\n';
  out << "strides = " << list(cfg.middle, [&](const MiddleLayer& m) { return triple(m.stride); }) << '\n';
  out << "pads = " << list(cfg.middle, [&](const MiddleLayer& m) { return triple(m.pad); }) << '\n';
  out << "\n[rpn]\n";
  out << "channels = " << list(cfg.rpn, [](const RpnBlock& b) { return std::to_string(b.channels); }) << '\n';
  out << "convs = " << list(cfg.rpn, [](const RpnBlock& b) { return std::to_string(b.convs); }) << '\n';
  out << "up_channels = " << list(cfg.rpn, [](const RpnBlock& b) { return std::to_string(b.up_channels); }) << '\n';
  out << "\n[anchor]\n";
  out << "length = " << cfg.anchors.length << "\nwidth = " << cfg.anchors.width << "\nheight = " << cfg.anchors.height
      << "\nz = " << cfg.anchors.z << '\n';
  out << "yaws = [";
  for (std::size_t i = 0; i < cfg.anchors.yaws.size(); ++i) out << (i ? ", " : "") << cfg.anchors.yaws[i];
  out << "]\n";
  out << "positive_iou = " << cfg.anchors.positive_iou << "\nnegative_iou = " << cfg.anchors.negative_iou << '\n';
  out << "\n[loss]\nalpha = " << cfg.loss.alpha << "\nbeta = " << cfg.loss.beta << "\nlambda = " << cfg.loss.lambda
      << '\n';
  out << "\n[post]\nscore_threshold = " << cfg.post.score_threshold << "\nnms_iou = " << cfg.post.nms_iou << '\n';
  out << "\n[schedule]\nepochs = " << cfg.schedule.epochs << "\nlr_boundary = " << cfg.schedule.lr_boundary
      << "\nlearning_rate = " << cfg.schedule.learning_rate << "\ndecay = " << cfg.schedule.decay
      << "\nmomentum = " << cfg.schedule.momentum << "\ncheckpoint_every = " << cfg.schedule.checkpoint_every << '\n';
  return out.str();
}

}  // namespace fusedet
