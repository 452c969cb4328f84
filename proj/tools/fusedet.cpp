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


// Command-line front end: inspect, gen-synth, fuse, train, infer, eval, draw.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fusedet/detector.hpp"
#include "fusedet/draw.hpp"
#include "fusedet/error.hpp"
#include "fusedet/eval.hpp"
#include "fusedet/geometry.hpp"
#include "fusedet/kitti_io.hpp"
#include "fusedet/neural/checkpoint.hpp"
#include "fusedet/npy.hpp"
#include "fusedet/synth.hpp"

namespace fs = std::filesystem;
using namespace fusedet;

namespace {

constexpr const char* kModelConfig = "config.txt";
constexpr const char* kModelWeights = "model";

struct ModelFlags {
  std::string config;
  std::string mode;
  std::optional<std::uint64_t> seed;
};

void add_model_flags(CLI::App* cmd, ModelFlags& flags) {
  auto* config = cmd->add_option("--config", flags.config, "Network config file")->check(CLI::ExistingFile);
  cmd->add_option("--mode", flags.mode, "Fusion mode: lidar, point, voxel, patch3, patch5")->excludes(config);
  cmd->add_option("--seed", flags.seed, "Seed for initialization and shuffling");
}

NetworkConfig resolve_config(const ModelFlags& flags) {
  const auto [mode, k] = parse_fusion_mode(flags.mode.empty() ? "lidar" : flags.mode);
  NetworkConfig cfg = NetworkConfig::toy(mode, k);
  if (!flags.config.empty()) cfg = read_network_config(flags.config, cfg);
  if (flags.seed) cfg.seed = *flags.seed;
  cfg.validate();
  return cfg;
}

bool needs_features(const NetworkConfig& cfg) {
  return cfg.fusion_mode == FusionMode::PointFusion || cfg.fusion_mode == FusionMode::VoxelFusion;
}

std::vector<std::string> split_ids(const fs::path& root, const std::string& split) {
  return read_split(root, split == "all" ? "" : split);
}

SceneInput scene_input(const SceneFiles& s, const NetworkConfig& cfg) {
  return build_scene_input(s.cloud, s.calib, cfg, s.features ? &*s.features : nullptr, s.image ? &*s.image : nullptr);
}

SceneFiles load_for(const DatasetPaths& paths, const std::string& id, const NetworkConfig& cfg) {
  return load_scene(paths, id, cfg.fusion_mode == FusionMode::RawPatch, needs_features(cfg));
}

void load_model(const fs::path& dir, std::optional<Network<float>>& net) {
  const NetworkConfig cfg = read_network_config(dir / kModelConfig, NetworkConfig{});
  net.emplace(cfg);
  const auto params = net->parameters();
  const auto buffers = net->buffers();
  nn::load_checkpoint<float>(dir / kModelWeights, params, buffers);
}

std::vector<GroundTruthObject> read_optional_labels(const fs::path& path) {
  return fs::exists(path) ? read_labels(path) : std::vector<GroundTruthObject>{};
}

// ---------------------------------------------------------------------------

int run_inspect(const fs::path& data, const std::string& id, const std::string& split, const ModelFlags& flags) {
  const NetworkConfig cfg = resolve_config(flags);
  const DatasetPaths paths{data};
  const std::vector<std::string> ids = id.empty() ? split_ids(data, split) : std::vector<std::string>{id};
  for (const auto& scene_id : ids) {
    const SceneFiles s = load_scene(paths, scene_id, false, false);
    const PointCloud visible = crop_to_frustum(s.cloud, s.calib);
    const VoxelGrid grid = voxelize(cfg.crop_to_frustum ? visible : s.cloud, cfg.grid);
    std::map<std::string, int> classes;
    if (s.labels) {
      for (const auto& l : *s.labels) ++classes[l.class_name];
    }
    std::printf("scene %s: points %zu in-frustum %zu voxels %zu objects %zu", scene_id.c_str(), s.cloud.size(),
                visible.size(), grid.voxels.size(), s.labels ? s.labels->size() : 0);
    if (!classes.empty()) {
      std::printf(" (");
      bool first = true;
      for (const auto& [name, count] : classes) {
        std::printf("%s%s %d", first ? "" : ", ", name.c_str(), count);
        first = false;
      }
      std::printf(")");
    }
    std::printf("\n");
  }
  return 0;
}

int run_gen_synth(const fs::path& out, std::size_t train, std::size_t val, std::uint64_t seed, int channels) {
  SynthConfig cfg;
  cfg.feature_channels = channels;
  write_synth_dataset(out, cfg, train, val, seed);
  std::printf("wrote %zu train and %zu val scenes to %s\n", train, val, out.string().c_str());
  return 0;
}

int run_fuse(const fs::path& data, const std::string& id, const fs::path& out, const std::string& model,
             const ModelFlags& flags) {
  std::optional<Network<float>> net;
  if (model.empty()) {
    net.emplace(resolve_config(flags));
  } else {
    load_model(model, net);
  }
  const NetworkConfig& cfg = net->config();
  const SceneFiles s = load_for(DatasetPaths{data}, id, cfg);
  const FusedFeatures<float> fused = net->fuse(scene_input(s, cfg), nn::Mode::Eval);

  fs::create_directories(out);
  npy::write(out / "points.npy", std::span<const std::size_t>(fused.point_rows.shape()), fused.point_rows.values());
  npy::write(out / "voxels.npy", std::span<const std::size_t>(fused.voxel_rows.shape()), fused.voxel_rows.values());
  std::vector<std::int64_t> index;
  for (std::size_t k = 0; k < fused.voxels.size(); ++k) {
    const VoxelIndex& v = fused.voxels[k];
    index.insert(index.end(), {v.x, v.y, v.z, static_cast<std::int64_t>(fused.offsets[k + 1] - fused.offsets[k])});
  }
  const std::vector<std::size_t> shape{fused.voxels.size(), 4};
  npy::write(out / "voxel_index.npy", "<i8", shape, index.data(), index.size() * sizeof(std::int64_t));
  std::printf("points %zux%zu voxels %zux%zu\n", fused.point_rows.dim(0), fused.point_rows.dim(1),
              fused.voxel_rows.dim(0), fused.voxel_rows.dim(1));
  return 0;
}

int run_train(const fs::path& data, const std::string& split, const fs::path& out, std::optional<int> epochs,
              int checkpoint_every, const ModelFlags& flags) {
  NetworkConfig cfg = resolve_config(flags);
  if (epochs) {
    if (*epochs <= 0) throw Error(Errc::InvalidConfig, "--epochs must be positive");
    cfg.schedule.lr_boundary = std::min(cfg.schedule.lr_boundary, *epochs);
    cfg.schedule.epochs = *epochs;
  }
  if (checkpoint_every > 0) cfg.schedule.checkpoint_every = checkpoint_every;

  const DatasetPaths paths{data};
  const AnchorGrid anchors = generate_anchors(cfg);
  std::vector<TrainingSample> samples;
  for (const auto& id : split_ids(data, split)) {
    const SceneFiles s = load_for(paths, id, cfg);
    if (!s.labels) throw Error(Errc::IoFailure, "training scene " + id + " has no labels");
    samples.push_back({scene_input(s, cfg), assign_targets(anchors, lidar_boxes(*s.labels, s.calib), cfg.anchors)});
  }
  if (samples.empty()) throw Error(Errc::InvalidConfig, "split '" + split + "' has no scenes");

  fs::create_directories(out);
  Network<float> net(cfg);
  TrainOptions options;
  options.seed = cfg.seed;
  options.checkpoint_dir = out;
  options.on_epoch = [&](int epoch, double loss, double lr) {
    std::printf("epoch %d/%d loss %.6f lr %g\n", epoch + 1, cfg.schedule.epochs, loss, lr);
    std::fflush(stdout);
  };
  const TrainResult result = train(net, samples, cfg.schedule, options);

  std::ofstream(out / kModelConfig) << format_network_config(cfg);
  const auto params = net.parameters();
  const auto buffers = net.buffers();
  nn::save_checkpoint<float>(out / kModelWeights, params, buffers);
  std::ofstream curve(out / "loss.csv");
  curve << "epoch,loss\n";
  char line[64];
  for (std::size_t e = 0; e < result.epoch_losses.size(); ++e) {
    std::snprintf(line, sizeof line, "%zu,%.8f\n", e + 1, result.epoch_losses[e]);
    curve << line;
  }
  if (!curve) throw Error(Errc::IoFailure, "cannot write loss curve in " + out.string());
  return 0;
}

int run_infer(const fs::path& data, const std::string& split, const fs::path& model, const fs::path& out,
              std::optional<double> threshold) {
  std::optional<Network<float>> net;
  load_model(model, net);
  const NetworkConfig& cfg = net->config();
  PostConfig post = cfg.post;
  if (threshold) post.score_threshold = *threshold;
  const AnchorGrid anchors = generate_anchors(cfg);
  const DatasetPaths paths{data};
  fs::create_directories(out);
  std::size_t total = 0, scenes = 0;
  for (const auto& id : split_ids(data, split)) {
    const SceneFiles s = load_for(paths, id, cfg);
    const auto dets = infer(*net, scene_input(s, cfg), anchors, post);
    write_detections(out / (id + ".txt"), dets, s.calib);
    total += dets.size();
    ++scenes;
  }
  std::printf("wrote %zu detections for %zu scenes to %s\n", total, scenes, out.string().c_str());
  return 0;
}

int run_eval(const fs::path& gt_dir, const fs::path& det_dir, const std::string& id_file, std::optional<double> iou,
             bool with_all, int interpolation, const std::string& class_name, const std::string& csv) {
  if (!fs::is_directory(gt_dir)) throw Error(Errc::IoFailure, "no label directory " + gt_dir.string());
  if (!fs::is_directory(det_dir)) throw Error(Errc::IoFailure, "no detection directory " + det_dir.string());
  std::vector<std::string> ids;
  if (id_file.empty()) {
    for (const auto& e : fs::directory_iterator(gt_dir)) {
      if (e.path().extension() == ".txt") ids.push_back(e.path().stem().string());
    }
    std::sort(ids.begin(), ids.end());
  } else {
    std::ifstream in(id_file);
    for (std::string s; in >> s;) ids.push_back(s);
  }
  std::vector<std::vector<GroundTruthObject>> gts, dets;
  for (const auto& id : ids) {
    gts.push_back(read_labels(gt_dir / (id + ".txt")));
    dets.push_back(read_optional_labels(det_dir / (id + ".txt")));
  }

  std::vector<Criterion> criteria;
  std::vector<EvalBucket> buckets{EvalBucket::Easy, EvalBucket::Moderate, EvalBucket::Hard};
  if (with_all) buckets.push_back(EvalBucket::All);
  const std::vector<double> thresholds = iou ? std::vector<double>{*iou} : std::vector<double>{0.7, 0.8};
  for (IouKind kind : {IouKind::Bev, IouKind::ThreeD}) {
    for (double t : thresholds) {
      for (EvalBucket b : buckets) criteria.push_back({kind, t, b});
    }
  }
  EvalOptions options;
  options.class_name = class_name;
  options.interpolation = interpolation == 40 ? EvalOptions::Interpolation::Forty : EvalOptions::Interpolation::Eleven;
  const ApTable table = evaluate(dets, gts, criteria, options);
  std::printf("scenes %zu\n%s", ids.size(), format_table(table).c_str());
  if (!csv.empty()) {
    std::ofstream out(csv);
    out << format_csv(table);
    if (!out) throw Error(Errc::IoFailure, "cannot write " + csv);
  }
  return 0;
}

int run_draw(const fs::path& data, const std::string& id, const std::string& det_dir, const fs::path& out,
             double iou) {
  const SceneFiles s = load_scene(DatasetPaths{data}, id, true, false);
  const std::vector<GroundTruthObject> truth = s.labels ? *s.labels : std::vector<GroundTruthObject>{};
  const std::vector<GroundTruthObject> dets =
      det_dir.empty() ? std::vector<GroundTruthObject>{} : read_optional_labels(fs::path(det_dir) / (id + ".txt"));
  const Image image = render_detections(*s.image, truth, dets, s.calib, {IouKind::ThreeD, iou, EvalBucket::All});
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_image(out, image);
  std::printf("wrote %s\n", out.string().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LiDAR-camera fusion 3D detector"};
  app.require_subcommand(1);

  ModelFlags flags;
  std::string data, id, split, out, model, det, gt, csv, id_file, klass = "Car";
  std::size_t n_train = 200, n_val = 50;
  std::uint64_t seed = 0;
  int channels = 512, interpolation = 11, checkpoint_every = 0;
  std::optional<int> epochs;
  std::optional<double> iou, threshold;
  double draw_iou = 0.7;
  bool with_all = false;

  auto* inspect = app.add_subcommand("inspect", "Print point, voxel and object counts per scene");
  inspect->add_option("--data", data, "Dataset root")->required()->check(CLI::ExistingDirectory);
  inspect->add_option("--id", id, "Single scene id");
  inspect->add_option("--split", split, "Split name, or 'all'")->default_val("all");
  add_model_flags(inspect, flags);

  auto* gen = app.add_subcommand("gen-synth", "Write a seeded synthetic dataset");
  gen->add_option("--out", out, "Output dataset root")->required();
  gen->add_option("--train", n_train, "Training scenes")->default_val(200);
  gen->add_option("--val", n_val, "Validation scenes")->default_val(50);
  gen->add_option("--seed", seed, "Dataset seed")->default_val(0);
  gen->add_option("--channels", channels, "Feature-map channels")->default_val(512)->check(CLI::PositiveNumber);

  auto* fuse = app.add_subcommand("fuse", "Write the fused point and voxel tensors of one scene");
  fuse->add_option("--data", data, "Dataset root")->required()->check(CLI::ExistingDirectory);
  fuse->add_option("--id", id, "Scene id")->required();
  fuse->add_option("--out", out, "Output directory")->required();
  auto* fuse_model = fuse->add_option("--model", model, "Trained model directory")->check(CLI::ExistingDirectory);
  add_model_flags(fuse, flags);
  fuse_model->excludes("--config")->excludes("--mode");

  auto* train_cmd = app.add_subcommand("train", "Train a detector");
  train_cmd->add_option("--data", data, "Dataset root")->required()->check(CLI::ExistingDirectory);
  train_cmd->add_option("--split", split, "Split name, or 'all'")->default_val("train");
  train_cmd->add_option("--out", out, "Model output directory")->required();
  train_cmd->add_option("--epochs", epochs, "Override the epoch count");
  train_cmd->add_option("--checkpoint-every", checkpoint_every, "Epochs between checkpoints");
  add_model_flags(train_cmd, flags);

  auto* infer_cmd = app.add_subcommand("infer", "Write KITTI-format results for a split");
  infer_cmd->add_option("--data", data, "Dataset root")->required()->check(CLI::ExistingDirectory);
  infer_cmd->add_option("--split", split, "Split name, or 'all'")->default_val("val");
  infer_cmd->add_option("--model", model, "Trained model directory")->required()->check(CLI::ExistingDirectory);
  infer_cmd->add_option("--out", out, "Results directory")->required();
  infer_cmd->add_option("--threshold", threshold, "Override the score threshold");

  auto* eval_cmd = app.add_subcommand("eval", "Print the AP table");
  eval_cmd->add_option("--gt", gt, "Label directory")->required();
  eval_cmd->add_option("--det", det, "Results directory")->required();
  eval_cmd->add_option("--ids", id_file, "File listing the scene ids to score")->check(CLI::ExistingFile);
  eval_cmd->add_option("--iou", iou, "Single IoU threshold (default 0.7 and 0.8)")->check(CLI::Range(0.0, 1.0));
  eval_cmd->add_flag("--all", with_all, "Add a bucket with every object");
  eval_cmd->add_option("--interp", interpolation, "Interpolation points")->check(CLI::IsMember({11, 40}));
  eval_cmd->add_option("--class", klass, "Class to evaluate");
  eval_cmd->add_option("--csv", csv, "Also write the table as CSV");

  auto* draw = app.add_subcommand("draw", "Overlay boxes on a scene image");
  draw->add_option("--data", data, "Dataset root")->required()->check(CLI::ExistingDirectory);
  draw->add_option("--id", id, "Scene id")->required();
  draw->add_option("--det", det, "Results directory");
  draw->add_option("--out", out, "Output PPM")->required();
  draw->add_option("--iou", draw_iou, "3D IoU for hit/miss colouring")->check(CLI::Range(0.0, 1.0));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << app.help();
    return 2;
  }

  try {
    if (*inspect) return run_inspect(data, id, split, flags);
    if (*gen) return run_gen_synth(out, n_train, n_val, seed, channels);
    if (*fuse) return run_fuse(data, id, out, model, flags);
    if (*train_cmd) return run_train(data, split, out, epochs, checkpoint_every, flags);
    if (*infer_cmd) return run_infer(data, split, model, out, threshold);
    if (*eval_cmd) return run_eval(gt, det, id_file, iou, with_all, interpolation, klass, csv);
    if (*draw) return run_draw(data, id, det, out, draw_iou);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
