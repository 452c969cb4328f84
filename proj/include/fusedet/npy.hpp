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

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace fusedet::npy {

/// Raw contents of an NPY v1.0 file: dtype descriptor, shape, and payload.
struct Array {
  std::string descr;
  bool fortran_order = false;
  std::vector<std::size_t> shape;
  std::vector<char> payload;

  std::size_t count() const noexcept;
};

/// Parses header and payload. Throws BadMagic on a missing magic string or
/// malformed header and TruncatedFile when the payload is short.
Array read(const std::filesystem::path& path);

void write(const std::filesystem::path& path, const std::string& descr,
           std::span<const std::size_t> shape, const void* data, std::size_t bytes);

inline void write(const std::filesystem::path& path, std::span<const std::size_t> shape,
                  std::span<const float> values) {
  write(path, "<f4", shape, values.data(), values.size_bytes());
}

inline void write(const std::filesystem::path& path, std::span<const std::size_t> shape,
                  std::span<const double> values) {
  write(path, "<f8", shape, values.data(), values.size_bytes());
}

/// Copies the payload out as `T`, converting from "<f4" or "<f8".
template <typename T>
std::vector<T> values_as(const Array& array);

}  // namespace fusedet::npy
