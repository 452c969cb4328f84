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

#include <filesystem>
#include <fstream>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <type_traits>

#include "fusedet/npy.hpp"
#include "fusedet/neural/tensor.hpp"

namespace fusedet::nn {

/// Writes one NPY file per tensor into `dir` plus `manifest.txt` with lines
/// `<name> <file> <d0>x<d1>...`.
template <typename T>
void save_checkpoint(const std::filesystem::path& dir, std::span<const ParamRef<T>> params,
                     std::span<const BufferRef<T>> buffers) {
  std::filesystem::create_directories(dir);
  std::ofstream manifest(dir / "manifest.txt");
  if (!manifest) throw Error(Errc::IoFailure, "cannot write manifest in " + dir.string());
  std::size_t counter = 0;
  auto emit = [&](const std::string& name, const Tensor<T>& t) {
    const std::string file = std::to_string(counter++) + ".npy";
    npy::write(dir / file, std::span<const std::size_t>(t.shape()), t.values());
    manifest << name << ' ' << file << ' ';
    for (std::size_t i = 0; i < t.rank(); ++i) manifest << (i ? "x" : "") << t.dim(i);
    manifest << '\n';
  };
  for (const auto& p : params) emit(p.name, *p.value);
  for (const auto& b : buffers) emit(b.name, *b.value);
  if (!manifest) throw Error(Errc::IoFailure, "short write to manifest in " + dir.string());
}

template <typename T>
void load_checkpoint(const std::filesystem::path& dir, std::span<const ParamRef<T>> params,
                     std::span<const BufferRef<T>> buffers) {
  std::ifstream manifest(dir / "manifest.txt");
  if (!manifest) throw Error(Errc::IoFailure, "no manifest in " + dir.string());
  std::map<std::string, std::string> files;
  std::string line;
  while (std::getline(manifest, line)) {
    std::istringstream in(line);
    std::string name, file, shape;
    if (in >> name >> file >> shape) files[name] = file;
  }
  auto restore = [&](const std::string& name, Tensor<T>& t) {
    auto it = files.find(name);
    if (it == files.end()) throw Error(Errc::MissingKey, "checkpoint lacks " + name);
    const auto array = npy::read(dir / it->second);
    if (array.shape != t.shape()) throw Error(Errc::ShapeMismatch, "checkpoint shape differs for " + name);
    const auto values = npy::values_as<T>(array);
    std::copy(values.begin(), values.end(), t.data());
  };
  for (const auto& p : params) restore(p.name, *p.value);
  for (const auto& b : buffers) restore(b.name, *b.value);
}

}  // namespace fusedet::nn
