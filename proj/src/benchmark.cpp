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

#include "fusedet/benchmark.hpp"

#include <chrono>

#include "fusedet/kitti_io.hpp"

namespace fusedet {

BenchmarkData make_benchmark_data(const SynthConfig& cfg, std::size_t train, std::size_t val, std::uint64_t seed) {
  BenchmarkData data;
  for (std::size_t i = 0; i < train + val; ++i) {
    (i < train ? data.train : data.val).push_back(generate_scene(cfg, scene_seed(seed, i)));
  }
  return data;
}

std::vector<TrainingSample> prepare_samples(std::span<const SynthScene> scenes, const NetworkConfig& cfg,
                                            const AnchorGrid& anchors) {
  std::vector<TrainingSample> samples;
  samples.reserve(scenes.size());
  for (const auto& s : scenes) {
    TrainingSample sample;
    sample.input = build_scene_input(s.cloud, s.calib, cfg, &s.features, &s.image);
    sample.targets = assign_targets(anchors, lidar_boxes(s.labels, s.calib), cfg.anchors);
    samples.push_back(std::move(sample));
  }
  return samples;
}

BenchmarkRun run_benchmark(const BenchmarkData& data, NetworkConfig cfg, std::uint64_t seed,
                           const Criterion& criterion, const std::function<void(int, double, double)>& on_epoch) {
  const auto start = std::chrono::steady_clock::now();
  cfg.seed = seed;
  Network<float> net(cfg);
  const AnchorGrid anchors = generate_anchors(cfg);

  BenchmarkRun run;
  {
    const auto samples = prepare_samples(data.train, cfg, anchors);
    TrainOptions options;
    options.seed = seed;
    options.on_epoch = on_epoch;
    run.curve = train(net, samples, cfg.schedule, options);
  }

  std::vector<std::vector<GroundTruthObject>> dets, gts;
  for (const auto& s : data.val) {
    const SceneInput input = build_scene_input(s.cloud, s.calib, cfg, &s.features, &s.image);
    std::vector<GroundTruthObject> scene_dets;
    for (const auto& d : infer(net, input, anchors, cfg.post)) scene_dets.push_back(detection_to_object(d, s.calib));
    dets.push_back(std::move(scene_dets));
    gts.push_back(s.labels);
  }
  const Criterion criteria[] = {criterion};
  run.ap = evaluate(dets, gts, criteria).cells.front().ap;
  run.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return run;
}

}  // namespace fusedet
