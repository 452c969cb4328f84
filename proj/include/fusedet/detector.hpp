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
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fusedet/fusion.hpp"
#include "fusedet/geometry.hpp"
#include "fusedet/neural/conv.hpp"
#include "fusedet/neural/layers.hpp"
#include "fusedet/types.hpp"

namespace fusedet {

enum class FusionMode { LidarOnly, PointFusion, VoxelFusion, RawPatch };

std::string to_string(FusionMode mode);
/// Accepts lidar, point, voxel, patch3, patch5 (and patch<k> for odd k).
/// Returns the mode and the patch size (0 unless RawPatch).
std::pair<FusionMode, int> parse_fusion_mode(const std::string& text);

struct AnchorConfig {
  double length = 3.9;
  double width = 1.6;
  double height = 1.56;
  double z = -1.0;
  std::vector<double> yaws{0.0, kPi / 2};
  double positive_iou = 0.6;
  double negative_iou = 0.45;
};

struct LossWeights {
  double alpha = 1.5;
  double beta = 1.0;
  double lambda = 2.0;
};

struct PostConfig {
  double score_threshold = 0.3;
  double nms_iou = 0.1;
};

struct Schedule {
  int epochs = 160;
  int lr_boundary = 150;
  double learning_rate = 0.01;
  double decay = 0.1;
  double momentum = 0.9;
  int checkpoint_every = 0;

  double learning_rate_at(int epoch) const { return epoch < lr_boundary ? learning_rate : learning_rate * decay; }
};

struct RpnBlock {
  std::size_t channels = 128;
  /// Convolutions in the block; the first one downsamples by 2.
  int convs = 2;
  std::size_t up_channels = 128;
};

struct MiddleLayer {
  std::size_t channels = 64;
  std::array<int, 3> stride{1, 1, 1};
  std::array<int, 3> pad{1, 1, 1};
};

struct NetworkConfig {
  FusionMode fusion_mode = FusionMode::LidarOnly;
  int patch_size = 0;
  bool crop_to_frustum = true;
  SampleMode sample_mode = SampleMode::Bilinear;
  VoxelGridConfig grid;
  std::size_t image_channels = 512;
  /// (in, out) per VFE layer.
  std::vector<std::pair<std::size_t, std::size_t>> vfe{{7, 32}, {32, 128}};
  ReducerDims reducer = ReducerDims::for_mode(ReducerMode::PointFusion);
  /// Multiplier on the first reducer layer's initial weights. Under batch
  /// norm a larger weight slows that layer's effective learning rate.
  double reducer_init_gain = 1.0;
  std::vector<MiddleLayer> middle{{64, {2, 1, 1}, {1, 1, 1}}, {64, {1, 1, 1}, {0, 1, 1}}, {64, {2, 1, 1}, {1, 1, 1}}};
  std::vector<RpnBlock> rpn{{128, 2, 128}, {128, 2, 128}, {256, 2, 128}};
  AnchorConfig anchors;
  LossWeights loss;
  PostConfig post;
  Schedule schedule;
  std::uint64_t seed = 0;

  /// Car-scale setup: 70.4 x 80 x 4 m range, 0.2 x 0.2 x 0.4 m voxels.
  static NetworkConfig kitti(FusionMode mode, int patch_size = 0);
  /// Desk-scale setup used by the synthetic benchmark.
  static NetworkConfig toy(FusionMode mode, int patch_size = 0);

  /// Throws InvalidConfig on inconsistent dimensions.
  void validate() const;
  /// Width of a decorated point row entering the first VFE layer.
  std::size_t point_input_dim() const;
  /// Width of a voxel feature entering the middle layers.
  std::size_t voxel_feature_dim() const;
  /// Downsampling of the RPN's deepest block relative to the BEV grid.
  int rpn_total_stride() const { return 1 << rpn.size(); }
  /// (rows, cols) of the output maps: BEV grid / 2.
  std::array<int, 2> output_dims() const;
  /// (D, H, W) after the middle layers.
  std::array<int, 3> middle_output_dims() const;
};

// ---------------------------------------------------------------------------
// Anchors and targets

struct AnchorGrid {
  int rows = 0;
  int cols = 0;
  int orientations = 0;
  /// Index (row * cols + col) * orientations + o; row follows y, col follows x.
  std::vector<Box3D> anchors;

  std::size_t size() const { return anchors.size(); }
};

/// Tiles anchors over a lattice of grid / output_stride cells. Throws
/// IndivisibleGrid unless the BEV grid divides by total_stride.
AnchorGrid generate_anchors(const VoxelGridConfig& grid, const AnchorConfig& anchors, int output_stride,
                            int total_stride);
AnchorGrid generate_anchors(const NetworkConfig& cfg);

enum class AnchorLabel : std::int8_t { Negative = 0, Positive = 1, Ignore = -1 };

using Residual = std::array<double, 7>;

struct TrainingTargets {
  std::vector<AnchorLabel> labels;
  /// Residual to the matched ground truth; meaningful only for positives.
  std::vector<Residual> residuals;
  /// Matched ground-truth index for positives, -1 otherwise.
  std::vector<int> matched;

  std::size_t positives() const;
  std::size_t negatives() const;
};

TrainingTargets assign_targets(const AnchorGrid& anchors, std::span<const Box3D> gt_boxes, const AnchorConfig& cfg);

/// (dx, dy, dz, dl, dw, dh, dtheta); throws NonPositiveSize.
Residual encode_residuals(const Box3D& anchor, const Box3D& gt);
Box3D decode_residuals(const Box3D& anchor, const Residual& pred);

double smooth_l1(double x);

// ---------------------------------------------------------------------------
// Scene inputs

/// Everything the network consumes for one scene. Point rows are grouped by
/// voxel: rows [offsets[k], offsets[k+1]) belong to voxels[k].
struct SceneInput {
  std::vector<VoxelIndex> voxels;
  std::vector<std::size_t> offsets{0};
  /// (N, 7) decorated points.
  nn::Tensor<float> points;
  /// (N, C) sampled feature-map rows or (N, 3k^2) raw patches; empty otherwise.
  nn::Tensor<float> point_image;
  /// (K, C) ROI-pooled feature-map rows for VoxelFusion; empty otherwise.
  nn::Tensor<float> voxel_image;

  std::size_t num_points() const { return offsets.back(); }
};

/// Crops (when configured), voxelizes and decorates the cloud, then gathers
/// the image evidence the fusion mode needs. `features` is required for
/// PointFusion and VoxelFusion, `image` for RawPatch.
SceneInput build_scene_input(const PointCloud& cloud, const Calibration& calib, const NetworkConfig& cfg,
                             const FeatureMap* features, const Image* image);

// ---------------------------------------------------------------------------
// Network

template <typename T>
struct NetworkOutput {
  /// (1, A, H, W) raw logits; A = anchor orientations.
  nn::Tensor<T> logits;
  /// sigmoid(logits).
  nn::Tensor<T> scores;
  /// (1, 7A, H, W); channel o * 7 + k is residual k of orientation o.
  nn::Tensor<T> regression;
};

/// Features entering the middle layers, in canonical voxel order.
template <typename T>
struct FusedFeatures {
  /// Decorated point rows with any per-point image evidence appended.
  nn::Tensor<T> point_rows;
  /// Rows [offsets[k], offsets[k+1]) belong to voxels[k].
  std::vector<std::size_t> offsets;
  std::vector<VoxelIndex> voxels;
  /// (K, voxel_feature_dim).
  nn::Tensor<T> voxel_rows;
};

template <typename T>
class Network {
 public:
  explicit Network(const NetworkConfig& cfg);

  const NetworkConfig& config() const { return cfg_; }

  NetworkOutput<T> forward(const SceneInput& input, nn::Mode mode);
  /// Runs the fusion and VFE stages only.
  FusedFeatures<T> fuse(const SceneInput& input, nn::Mode mode);
  /// Accumulates parameter gradients for the last forward.
  void backward(const nn::Tensor<T>& grad_logits, const nn::Tensor<T>& grad_regression);

  std::vector<nn::ParamRef<T>> parameters();
  std::vector<nn::BufferRef<T>> buffers();

 private:
  struct Block {
    std::vector<nn::Conv<T>> convs;
    nn::Deconv<T> up;
  };

  NetworkConfig cfg_;
  std::optional<FeatureReducer<T>> reducer_;
  std::vector<nn::Vfe<T>> vfe_;
  nn::SegmentMax<T> pool_;
  std::vector<nn::Conv<T>> middle_;
  std::vector<Block> rpn_;
  nn::Conv<T> score_head_;
  nn::Conv<T> regression_head_;

  std::vector<std::size_t> offsets_;
  std::size_t vfe_width_ = 0;
  std::vector<std::size_t> middle_shape_;
};

extern template class Network<float>;
extern template class Network<double>;

template <typename T>
struct LossResult {
  double total = 0.0;
  double positive_cls = 0.0;
  double negative_cls = 0.0;
  double regression = 0.0;
  nn::Tensor<T> grad_logits;
  nn::Tensor<T> grad_regression;
};

/// Weighted BCE on logits plus smooth-L1 on positive residuals. Throws
/// NoNegatives when the targets have no negative anchor.
template <typename T>
LossResult<T> compute_loss(const NetworkOutput<T>& out, const TrainingTargets& targets, const LossWeights& weights);

/// Eval-mode forward, decode, threshold, NMS. Scores are non-increasing.
template <typename T>
std::vector<Detection> infer(Network<T>& net, const SceneInput& input, const AnchorGrid& anchors,
                             const PostConfig& post);

/// Decodes already computed outputs; shares the thresholding and NMS of infer.
template <typename T>
std::vector<Detection> decode_detections(const NetworkOutput<T>& out, const AnchorGrid& anchors,
                                         const PostConfig& post);

// ---------------------------------------------------------------------------
// Training

struct TrainingSample {
  SceneInput input;
  TrainingTargets targets;
};

struct TrainOptions {
  std::uint64_t seed = 0;
  /// Checkpoints go to checkpoint_dir/epoch_<n> when set.
  std::optional<std::filesystem::path> checkpoint_dir;
  /// Stops after this many optimizer steps when positive.
  int max_steps = 0;
  /// Shuffle scene order each epoch.
  bool shuffle = true;
  std::function<void(int epoch, double mean_loss, double lr)> on_epoch;
};

struct TrainResult {
  std::vector<double> epoch_losses;
  std::vector<double> step_losses;
};

/// SGD with momentum, one scene per step. Throws DivergedLoss on a
/// non-finite loss.
TrainResult train(Network<float>& net, std::span<const TrainingSample> dataset, const Schedule& schedule,
                  const TrainOptions& options);

/// Ground-truth Car boxes of a scene in the LiDAR frame.
std::vector<Box3D> lidar_boxes(std::span<const GroundTruthObject> labels, const Calibration& calib,
                               const std::string& class_name = "Car");

// ---------------------------------------------------------------------------
// Config files

/// Reads `key = value` lines ('#' comments, optional [section] headers that
/// prefix keys as section.key) over the defaults of `base`. Throws
/// InvalidConfig on unknown keys or malformed values.
NetworkConfig read_network_config(const std::filesystem::path& path, NetworkConfig base);
NetworkConfig parse_network_config(const std::string& text, NetworkConfig base);
std::string format_network_config(const NetworkConfig& cfg);

}  // namespace fusedet
