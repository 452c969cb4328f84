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

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fusedet/detector.hpp"
#include "fusedet/error.hpp"

namespace fusedet {

namespace {

template <typename T>
nn::Tensor<T> gather_rows(const nn::Tensor<float>& src, std::span<const std::size_t> rows) {
  const std::size_t width = src.dim(1);
  nn::Tensor<T> out({rows.size(), width});
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const float* s = src.data() + rows[r] * width;
    T* d = out.data() + r * width;
    for (std::size_t c = 0; c < width; ++c) d[c] = static_cast<T>(s[c]);
  }
  return out;
}

template <typename T>
nn::Tensor<T> hconcat(const nn::Tensor<T>& a, const nn::Tensor<T>& b) {
  const std::size_t n = a.dim(0), wa = a.dim(1), wb = b.dim(1);
  nn::Tensor<T> out({n, wa + wb});
  for (std::size_t r = 0; r < n; ++r) {
    std::copy_n(a.data() + r * wa, wa, out.data() + r * (wa + wb));
    std::copy_n(b.data() + r * wb, wb, out.data() + r * (wa + wb) + wa);
  }
  return out;
}

template <typename T>
nn::Tensor<T> column_slice(const nn::Tensor<T>& x, std::size_t begin, std::size_t end) {
  const std::size_t n = x.dim(0), w = x.dim(1);
  nn::Tensor<T> out({n, end - begin});
  for (std::size_t r = 0; r < n; ++r) std::copy(x.data() + r * w + begin, x.data() + r * w + end, out.data() + r * (end - begin));
  return out;
}

}  // namespace

template <typename T>
Network<T>::Network(const NetworkConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  std::mt19937_64 rng(cfg_.seed);
  if (cfg_.fusion_mode == FusionMode::PointFusion || cfg_.fusion_mode == FusionMode::VoxelFusion) {
    reducer_.emplace(cfg_.reducer, rng);
    for (auto& w : reducer_->first.linear.weight.values()) w *= static_cast<T>(cfg_.reducer_init_gain);
  }
  for (const auto& [in, out] : cfg_.vfe) vfe_.emplace_back(in, out, rng);

  std::size_t channels = cfg_.voxel_feature_dim();
  for (const auto& m : cfg_.middle) {
    middle_.emplace_back(nn::ConvSpec::conv3d(channels, m.channels, 3, m.stride, m.pad), rng);
    channels = m.channels;
  }
  channels *= static_cast<std::size_t>(cfg_.middle_output_dims()[0]);

  std::size_t concat = 0;
  for (std::size_t b = 0; b < cfg_.rpn.size(); ++b) {
    const RpnBlock& spec = cfg_.rpn[b];
    Block block;
    block.convs.emplace_back(nn::ConvSpec::conv2d(channels, spec.channels, 3, 2, 1), rng);
    for (int i = 1; i < spec.convs; ++i) {
      block.convs.emplace_back(nn::ConvSpec::conv2d(spec.channels, spec.channels, 3, 1, 1), rng);
    }
    const int up = 1 << b;
    block.up = nn::Deconv<T>(spec.channels, spec.up_channels, up, up, 0, true, rng);
    rpn_.push_back(std::move(block));
    channels = spec.channels;
    concat += spec.up_channels;
  }
  const std::size_t orientations = cfg_.anchors.yaws.size();
  score_head_ = nn::Conv<T>(nn::ConvSpec::conv2d(concat, orientations, 1, 1, 0, false), rng);
  regression_head_ = nn::Conv<T>(nn::ConvSpec::conv2d(concat, 7 * orientations, 1, 1, 0, false), rng);
}

template <typename T>
FusedFeatures<T> Network<T>::fuse(const SceneInput& input, nn::Mode mode) {
  const std::size_t k_count = input.voxels.size();
  const FusionMode fusion = cfg_.fusion_mode;
  if (input.offsets.size() != k_count + 1 || input.points.rank() != 2 || input.points.dim(1) != 7 ||
      input.points.dim(0) != input.offsets.back()) {
    throw Error(Errc::ShapeMismatch, "scene input offsets and point rows disagree");
  }
  const bool needs_point_image = fusion == FusionMode::PointFusion || fusion == FusionMode::RawPatch;
  if (needs_point_image && (input.point_image.rank() != 2 || input.point_image.dim(0) != input.num_points())) {
    throw Error(Errc::ShapeMismatch, "scene input lacks per-point image rows");
  }
  if (fusion == FusionMode::VoxelFusion && (input.voxel_image.rank() != 2 || input.voxel_image.dim(0) != k_count)) {
    throw Error(Errc::ShapeMismatch, "scene input lacks per-voxel image rows");
  }

  // Visit voxels in linear-index order so results do not depend on the
  // order they were listed in.
  const auto dims = cfg_.grid.grid_dims();
  std::vector<std::int64_t> linear(k_count);
  for (std::size_t k = 0; k < k_count; ++k) {
    const VoxelIndex& v = input.voxels[k];
    if (!in_grid(v, cfg_.grid)) throw Error(Errc::ShapeMismatch, "voxel index outside the grid");
    linear[k] = (static_cast<std::int64_t>(v.z) * dims[1] + v.y) * dims[0] + v.x;
  }
  std::vector<std::size_t> order(k_count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return linear[a] < linear[b]; });
  std::vector<std::size_t> point_rows;
  point_rows.reserve(input.num_points());
  offsets_.assign(1, 0);
  for (std::size_t k : order) {
    for (std::size_t n = input.offsets[k]; n < input.offsets[k + 1]; ++n) point_rows.push_back(n);
    offsets_.push_back(point_rows.size());
  }

  FusedFeatures<T> fused;
  fused.offsets = offsets_;
  fused.point_rows = gather_rows<T>(input.points, point_rows);
  if (fusion == FusionMode::PointFusion) {
    fused.point_rows = hconcat(fused.point_rows, reducer_->forward(gather_rows<T>(input.point_image, point_rows), mode));
  } else if (fusion == FusionMode::RawPatch) {
    fused.point_rows = hconcat(fused.point_rows, gather_rows<T>(input.point_image, point_rows));
  }
  nn::Tensor<T> x = fused.point_rows;
  for (auto& layer : vfe_) x = layer.forward(x, offsets_, mode);
  fused.voxel_rows = pool_.forward(x, offsets_);
  vfe_width_ = fused.voxel_rows.dim(1);
  if (fusion == FusionMode::VoxelFusion) {
    fused.voxel_rows = hconcat(fused.voxel_rows, reducer_->forward(gather_rows<T>(input.voxel_image, order), mode));
  }
  fused.voxels.reserve(k_count);
  for (std::size_t k : order) fused.voxels.push_back(input.voxels[k]);
  return fused;
}

template <typename T>
NetworkOutput<T> Network<T>::forward(const SceneInput& input, nn::Mode mode) {
  const FusedFeatures<T> fused = fuse(input, mode);
  const auto dims = cfg_.grid.grid_dims();
  std::vector<std::array<int, 4>> sites;
  sites.reserve(fused.voxels.size());
  for (const VoxelIndex& v : fused.voxels) sites.push_back({0, v.z, v.y, v.x});
  nn::Tensor<T> h = middle_[0].forward_sparse(sites, fused.voxel_rows, {1, dims[2], dims[1], dims[0]}, mode);
  for (std::size_t i = 1; i < middle_.size(); ++i) h = middle_[i].forward(h, mode);
  middle_shape_ = h.shape();
  h.reshape({1, h.dim(1) * h.dim(2), h.dim(3), h.dim(4)});

  std::vector<nn::Tensor<T>> ups;
  for (auto& block : rpn_) {
    for (auto& conv : block.convs) h = conv.forward(h, mode);
    ups.push_back(block.up.forward(h, mode));
  }
  const std::size_t rows = ups[0].dim(2), cols = ups[0].dim(3), plane = rows * cols;
  std::size_t concat = 0;
  for (const auto& u : ups) {
    if (u.dim(2) != rows || u.dim(3) != cols) throw Error(Errc::ShapeMismatch, "RPN upsampled maps differ in size");
    concat += u.dim(1);
  }
  nn::Tensor<T> features({1, concat, rows, cols});
  std::size_t offset = 0;
  for (const auto& u : ups) {
    std::copy(u.values().begin(), u.values().end(), features.data() + offset * plane);
    offset += u.dim(1);
  }

  NetworkOutput<T> out;
  out.logits = score_head_.forward(features, mode);
  out.regression = regression_head_.forward(features, mode);
  out.scores = nn::Tensor<T>(out.logits.shape());
  for (std::size_t i = 0; i < out.logits.size(); ++i) out.scores[i] = T(1) / (T(1) + std::exp(-out.logits[i]));
  return out;
}

template <typename T>
void Network<T>::backward(const nn::Tensor<T>& grad_logits, const nn::Tensor<T>& grad_regression) {
  nn::Tensor<T> grad_features = score_head_.backward(grad_logits);
  const nn::Tensor<T> grad_from_regression = regression_head_.backward(grad_regression);
  for (std::size_t i = 0; i < grad_features.size(); ++i) grad_features[i] += grad_from_regression[i];

  const std::size_t rows = grad_features.dim(2), cols = grad_features.dim(3), plane = rows * cols;
  std::size_t offset = grad_features.dim(1);
  nn::Tensor<T> grad_next;
  for (std::size_t b = rpn_.size(); b-- > 0;) {
    Block& block = rpn_[b];
    const std::size_t channels = block.up.out_channels();
    offset -= channels;
    nn::Tensor<T> grad_up({1, channels, rows, cols});
    std::copy_n(grad_features.data() + offset * plane, channels * plane, grad_up.data());
    nn::Tensor<T> g = block.up.backward(grad_up);
    if (!grad_next.empty()) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += grad_next[i];
    }
    for (std::size_t i = block.convs.size(); i-- > 0;) g = block.convs[i].backward(std::move(g));
    grad_next = std::move(g);
  }

  grad_next.reshape(middle_shape_);
  for (std::size_t i = middle_.size(); i-- > 1;) grad_next = middle_[i].backward(std::move(grad_next));
  nn::Tensor<T> grad_voxels = middle_[0].backward(std::move(grad_next));

  const FusionMode fusion = cfg_.fusion_mode;
  if (fusion == FusionMode::VoxelFusion) {
    reducer_->backward(column_slice(grad_voxels, vfe_width_, grad_voxels.dim(1)));
    grad_voxels = column_slice(grad_voxels, 0, vfe_width_);
  }
  nn::Tensor<T> g = pool_.backward(grad_voxels);
  for (std::size_t i = vfe_.size(); i-- > 0;) {
    g = vfe_[i].backward(g, i > 0 || fusion == FusionMode::PointFusion);
  }
  if (fusion == FusionMode::PointFusion) reducer_->backward(column_slice(g, 7, g.dim(1)));
}

template <typename T>
std::vector<nn::ParamRef<T>> Network<T>::parameters() {
  std::vector<nn::ParamRef<T>> params;
  if (reducer_) reducer_->collect(params, "reducer");
  for (std::size_t i = 0; i < vfe_.size(); ++i) vfe_[i].collect(params, "vfe" + std::to_string(i));
  for (std::size_t i = 0; i < middle_.size(); ++i) middle_[i].collect(params, "middle" + std::to_string(i));
  for (std::size_t b = 0; b < rpn_.size(); ++b) {
    const std::string prefix = "rpn" + std::to_string(b);
    for (std::size_t i = 0; i < rpn_[b].convs.size(); ++i) rpn_[b].convs[i].collect(params, prefix + ".conv" + std::to_string(i));
    rpn_[b].up.collect(params, prefix + ".up");
  }
  score_head_.collect(params, "score_head");
  regression_head_.collect(params, "regression_head");
  return params;
}

template <typename T>
std::vector<nn::BufferRef<T>> Network<T>::buffers() {
  std::vector<nn::BufferRef<T>> buffers;
  if (reducer_) reducer_->collect_buffers(buffers, "reducer");
  for (std::size_t i = 0; i < vfe_.size(); ++i) vfe_[i].collect_buffers(buffers, "vfe" + std::to_string(i));
  for (std::size_t i = 0; i < middle_.size(); ++i) middle_[i].collect_buffers(buffers, "middle" + std::to_string(i));
  for (std::size_t b = 0; b < rpn_.size(); ++b) {
    const std::string prefix = "rpn" + std::to_string(b);
    for (std::size_t i = 0; i < rpn_[b].convs.size(); ++i) {
      rpn_[b].convs[i].collect_buffers(buffers, prefix + ".conv" + std::to_string(i));
    }
    rpn_[b].up.collect_buffers(buffers, prefix + ".up");
  }
  return buffers;
}

template class Network<float>;
template class Network<double>;

// ---------------------------------------------------------------------------

namespace {

double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }
double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

double smooth_l1(double x) {
  const double a = std::abs(x);
  return a < 1.0 ? 0.5 * x * x : a - 0.5;
}

template <typename T>
LossResult<T> compute_loss(const NetworkOutput<T>& out, const TrainingTargets& targets, const LossWeights& weights) {
  const std::size_t orientations = out.logits.dim(1), rows = out.logits.dim(2), cols = out.logits.dim(3);
  const std::size_t count = orientations * rows * cols;
  if (targets.labels.size() != count || targets.residuals.size() != count ||
      out.regression.size() != 7 * count) {
    throw Error(Errc::ShapeMismatch, "targets do not match the output maps");
  }
  const std::size_t n_pos = targets.positives(), n_neg = targets.negatives();
  if (n_neg == 0) throw Error(Errc::NoNegatives, "scene has no negative anchors");

  LossResult<T> loss;
  loss.grad_logits = nn::Tensor<T>(out.logits.shape());
  loss.grad_regression = nn::Tensor<T>(out.regression.shape());
  const double pos_scale = n_pos ? 1.0 / static_cast<double>(n_pos) : 0.0;
  const double neg_scale = 1.0 / static_cast<double>(n_neg);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      for (std::size_t o = 0; o < orientations; ++o) {
        const std::size_t a = (r * cols + c) * orientations + o;
        const std::size_t li = (o * rows + r) * cols + c;
        const double z = out.logits[li];
        if (targets.labels[a] == AnchorLabel::Positive) {
          loss.positive_cls += softplus(-z);
          loss.grad_logits[li] = static_cast<T>(weights.alpha * pos_scale * (sigmoid(z) - 1.0));
          for (std::size_t k = 0; k < 7; ++k) {
            const std::size_t ri = ((o * 7 + k) * rows + r) * cols + c;
            const double d = out.regression[ri] - targets.residuals[a][k];
            loss.regression += smooth_l1(d);
            loss.grad_regression[ri] = static_cast<T>(weights.lambda * pos_scale * std::clamp(d, -1.0, 1.0));
          }
        } else if (targets.labels[a] == AnchorLabel::Negative) {
          loss.negative_cls += softplus(z);
          loss.grad_logits[li] = static_cast<T>(weights.beta * neg_scale * sigmoid(z));
        }
      }
    }
  }
  loss.positive_cls *= pos_scale;
  loss.negative_cls *= neg_scale;
  loss.regression *= pos_scale;
  loss.total = weights.alpha * loss.positive_cls + weights.beta * loss.negative_cls + weights.lambda * loss.regression;
  return loss;
}

template <typename T>
std::vector<Detection> decode_detections(const NetworkOutput<T>& out, const AnchorGrid& anchors,
                                         const PostConfig& post) {
  const std::size_t orientations = out.scores.dim(1), rows = out.scores.dim(2), cols = out.scores.dim(3);
  if (anchors.size() != orientations * rows * cols) throw Error(Errc::ShapeMismatch, "anchor grid does not match outputs");
  std::vector<Box3D> boxes;
  std::vector<double> scores;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      for (std::size_t o = 0; o < orientations; ++o) {
        const double score = out.scores[(o * rows + r) * cols + c];
        if (!(score >= post.score_threshold)) continue;
        Residual pred;
        for (std::size_t k = 0; k < 7; ++k) pred[k] = out.regression[((o * 7 + k) * rows + r) * cols + c];
        boxes.push_back(decode_residuals(anchors.anchors[(r * cols + c) * orientations + o], pred));
        scores.push_back(score);
      }
    }
  }
  std::vector<Detection> dets;
  for (std::size_t i : nms_bev(boxes, scores, post.nms_iou)) dets.push_back({boxes[i], scores[i], "Car"});
  std::stable_sort(dets.begin(), dets.end(), [](const Detection& a, const Detection& b) { return a.score > b.score; });
  return dets;
}

template <typename T>
std::vector<Detection> infer(Network<T>& net, const SceneInput& input, const AnchorGrid& anchors,
                             const PostConfig& post) {
  return decode_detections(net.forward(input, nn::Mode::Eval), anchors, post);
}

template LossResult<float> compute_loss(const NetworkOutput<float>&, const TrainingTargets&, const LossWeights&);
template LossResult<double> compute_loss(const NetworkOutput<double>&, const TrainingTargets&, const LossWeights&);
template std::vector<Detection> decode_detections(const NetworkOutput<float>&, const AnchorGrid&, const PostConfig&);
template std::vector<Detection> decode_detections(const NetworkOutput<double>&, const AnchorGrid&, const PostConfig&);
template std::vector<Detection> infer(Network<float>&, const SceneInput&, const AnchorGrid&, const PostConfig&);
template std::vector<Detection> infer(Network<double>&, const SceneInput&, const AnchorGrid&, const PostConfig&);

}  // namespace fusedet
