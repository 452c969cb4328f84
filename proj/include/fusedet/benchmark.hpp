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
#include <functional>
#include <vector>

#include "fusedet/detector.hpp"
#include "fusedet/eval.hpp"
#include "fusedet/synth.hpp"

namespace fusedet {

/// In-memory synthetic train/validation splits.
struct BenchmarkData {
  std::vector<SynthScene> train;
  std::vector<SynthScene> val;
};

BenchmarkData make_benchmark_data(const SynthConfig& cfg, std::size_t train, std::size_t val, std::uint64_t seed);

/// Network inputs and anchor targets for every scene.
std::vector<TrainingSample> prepare_samples(std::span<const SynthScene> scenes, const NetworkConfig& cfg,
                                            const AnchorGrid& anchors);

struct BenchmarkRun {
  double ap = 0.0;
  double seconds = 0.0;
  TrainResult curve;
};

/// Trains `cfg` with `seed` on the training split and reports AP of the
/// Car class on the validation split under `criterion`.
BenchmarkRun run_benchmark(const BenchmarkData& data, NetworkConfig cfg, std::uint64_t seed,
                           const Criterion& criterion = {IouKind::ThreeD, 0.5, EvalBucket::All},
                           const std::function<void(int, double, double)>& on_epoch = {});

}  // namespace fusedet
