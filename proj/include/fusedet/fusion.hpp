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
#include <random>
#include <span>
#include <string>
#include <vector>

#include "fusedet/geometry.hpp"
#include "fusedet/neural/layers.hpp"
#include "fusedet/types.hpp"

namespace fusedet {

enum class SampleMode { Bilinear, Nearest };

/// Feature vector at original-image pixel (u, v). Coordinates outside the
/// map clamp to its border.
std::vector<float> sample_feature(const FeatureMap& map, double u, double v,
                                  SampleMode mode = SampleMode::Bilinear);
/// Same as sample_feature, writing map.channels values to `out`.
void sample_feature_into(const FeatureMap& map, double u, double v, SampleMode mode, float* out);

/// Average of a 7x7 grid of bilinear samples spanning the ROI.
std::vector<float> roi_pool(const FeatureMap& map, const Roi& roi, int grid = 7);

/// k x k RGB patch centred on (round(u), round(v)) with border clamping,
/// flattened channel-major into 3*k*k values in [0, 1].
std::vector<float> crop_raw_patch(const Image& image, double u, double v, int k);

// ---------------------------------------------------------------------------
// Feature reducers

enum class ReducerMode { PointFusion, VoxelFusion };

struct ReducerDims {
  std::size_t input = 512;
  std::size_t hidden = 96;
  std::size_t output = 16;

  /// 512 -> 96 -> 16 per point, 512 -> 128 -> 64 per voxel.
  static ReducerDims for_mode(ReducerMode mode, std::size_t input = 512) {
    return mode == ReducerMode::PointFusion ? ReducerDims{input, 96, 16} : ReducerDims{input, 128, 64};
  }
};

/// Two FC+BN+ReLU layers shrinking image features before concatenation.
template <typename T>
class FeatureReducer {
 public:
  FeatureReducer() = default;
  FeatureReducer(const ReducerDims& dims, std::mt19937_64& rng)
      : first(dims.input, dims.hidden, rng), second(dims.hidden, dims.output, rng) {}

  ReducerDims dims() const { return {first.in_features(), first.out_features(), second.out_features()}; }

  nn::Tensor<T> forward(const nn::Tensor<T>& x, nn::Mode mode) {
    return second.forward(first.forward(x, mode), mode);
  }
  /// The reducer sits on fixed image inputs, so no input gradient is needed.
  void backward(const nn::Tensor<T>& grad_out) { first.backward(second.backward(grad_out), false); }

  void collect(std::vector<nn::ParamRef<T>>& params, const std::string& prefix) {
    first.collect(params, prefix + ".fc1");
    second.collect(params, prefix + ".fc2");
  }
  void collect_buffers(std::vector<nn::BufferRef<T>>& buffers, const std::string& prefix) {
    first.collect_buffers(buffers, prefix + ".fc1");
    second.collect_buffers(buffers, prefix + ".fc2");
  }

  nn::Fcn<T> first;
  nn::Fcn<T> second;
};

// ---------------------------------------------------------------------------
// Per-point and per-voxel image evidence

/// Raw image features for every retained point of `grid`, in voxel order
/// then point order: (N, map.channels).
nn::Tensor<float> sample_point_features(const VoxelGrid& grid, const Calibration& calib, const FeatureMap& map,
                                        SampleMode mode = SampleMode::Bilinear);

/// Raw k x k pixel patches for every retained point: (N, 3*k*k).
nn::Tensor<float> sample_point_patches(const VoxelGrid& grid, const Calibration& calib, const Image& image, int k);

/// ROI-pooled image features per voxel: (K, map.channels). Voxels whose ROI
/// is invalid get a zero row.
nn::Tensor<float> pool_voxel_features(const VoxelGrid& grid, const Calibration& calib, const FeatureMap& map);

/// Decorated points grouped by voxel, each followed by its reduced image
/// feature: rows are 7 + reducer output wide (23 with the default reducer).
struct FusedPointSet {
  VoxelGrid grid;
  /// Rows [offsets[k], offsets[k+1]) belong to grid.voxels[k].
  std::vector<std::size_t> offsets;
  nn::Tensor<float> rows;
};

/// Crops to the camera frustum, voxelizes, decorates, samples the feature
/// map at each projected point and reduces it. Throws NoVisiblePoints when
/// nothing survives the crop.
FusedPointSet point_fusion(const PointCloud& cloud, const Calibration& calib, const FeatureMap& map,
                           FeatureReducer<float>& reducer, const VoxelGridConfig& cfg,
                           SampleMode mode = SampleMode::Bilinear);

/// Per-voxel VFE output followed by the reduced ROI feature: (K, 64 + 64).
struct FusedVoxelSet {
  nn::Tensor<float> rows;
};

FusedVoxelSet voxel_fusion(const nn::Tensor<float>& voxel_features, const VoxelGrid& grid,
                           const Calibration& calib, const FeatureMap& map, FeatureReducer<float>& reducer);

// ---------------------------------------------------------------------------
// Synthetic feature maps

/// Stand-in for a 2D detector's conv features, built from an image's 2D
/// labels. Channel 0 is u / width, channel 1 is v / height, channel 2 marks
/// cells inside any labelled box and channel 3 carries the class signature
/// of the nearest box covering the cell (+1 for `positive_class`, -1 for
/// any other class). Remaining channels are zero. Every channel is
/// multiplied by `scale`.
FeatureMap synthesize_feature_map(const Image& image, std::span<const GroundTruthObject> labels, int channels,
                                  double stride, const std::string& positive_class = "Car", double scale = 1.0);

}  // namespace fusedet
