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

#include "fusedet/npy.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>

#include "fusedet/error.hpp"

namespace fusedet::npy {
namespace {

constexpr char kMagic[] = "\x93NUMPY";
constexpr std::size_t kMagicLen = 6;

std::string dict_value(const std::string& header, const std::string& key) {
  const std::string quoted = "'" + key + "'";
  auto pos = header.find(quoted);
  if (pos == std::string::npos) {
    throw Error(Errc::BadMagic, "NPY header lacks key " + key);
  }
  pos = header.find(':', pos + quoted.size());
  if (pos == std::string::npos) {
    throw Error(Errc::BadMagic, "NPY header malformed near " + key);
  }
  ++pos;
  while (pos < header.size() && header[pos] == ' ') ++pos;
  if (pos >= header.size()) throw Error(Errc::BadMagic, "NPY header truncated");
  char open = header[pos];
  if (open == '\'') {
    auto end = header.find('\'', pos + 1);
    if (end == std::string::npos) throw Error(Errc::BadMagic, "unterminated string in NPY header");
    return header.substr(pos + 1, end - pos - 1);
  }
  if (open == '(') {
    auto end = header.find(')', pos);
    if (end == std::string::npos) throw Error(Errc::BadMagic, "unterminated shape in NPY header");
    return header.substr(pos + 1, end - pos - 1);
  }
  auto end = header.find_first_of(",}", pos);
  return header.substr(pos, end - pos);
}

std::vector<std::size_t> parse_shape(const std::string& text) {
  std::vector<std::size_t> shape;
  std::string token;
  std::istringstream in(text);
  while (std::getline(in, token, ',')) {
    auto first = token.find_first_not_of(" \t");
    if (first == std::string::npos) continue;
    auto last = token.find_last_not_of(" \tL");
    token = token.substr(first, last - first + 1);
    try {
      std::size_t used = 0;
      auto value = std::stoull(token, &used);
      if (used != token.size()) throw std::invalid_argument(token);
      shape.push_back(static_cast<std::size_t>(value));
    } catch (const std::exception&) {
      throw Error(Errc::BadMagic, "bad NPY shape entry '" + token + "'");
    }
  }
  return shape;
}

std::size_t item_size(const std::string& descr) {
  if (descr.size() < 3) return 0;
  try {
    return static_cast<std::size_t>(std::stoul(descr.substr(2)));
  } catch (const std::exception&) {
    return 0;
  }
}

}  // namespace

std::size_t Array::count() const noexcept {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

Array read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::IoFailure, "cannot open " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  if (bytes.size() < kMagicLen + 4 || std::memcmp(bytes.data(), kMagic, kMagicLen) != 0) {
    throw Error(Errc::BadMagic, path.string() + " is not an NPY file");
  }
  const auto major = static_cast<std::uint8_t>(bytes[6]);
  std::size_t header_len = 0;
  std::size_t offset = 0;
  if (major == 1) {
    header_len = static_cast<std::uint8_t>(bytes[8]) | (static_cast<std::uint8_t>(bytes[9]) << 8);
    offset = 10;
  } else if (major == 2 || major == 3) {
    if (bytes.size() < 12) throw Error(Errc::BadMagic, "NPY header truncated");
    for (int i = 0; i < 4; ++i) {
      header_len |= static_cast<std::size_t>(static_cast<std::uint8_t>(bytes[8 + i])) << (8 * i);
    }
    offset = 12;
  } else {
    throw Error(Errc::BadMagic, "unsupported NPY version " + std::to_string(major));
  }
  if (bytes.size() < offset + header_len) throw Error(Errc::BadMagic, "NPY header truncated");
  const std::string header(bytes.data() + offset, header_len);

  Array array;
  array.descr = dict_value(header, "descr");
  array.fortran_order = dict_value(header, "fortran_order").find("True") != std::string::npos;
  array.shape = parse_shape(dict_value(header, "shape"));

  const std::size_t data_begin = offset + header_len;
  const std::size_t isize = item_size(array.descr);
  const std::size_t expected = array.count() * isize;
  if (isize == 0) throw Error(Errc::UnsupportedDtype, "unrecognized dtype " + array.descr);
  if (bytes.size() - data_begin < expected) {
    throw Error(Errc::TruncatedFile, path.string() + ": payload shorter than shape implies");
  }
  array.payload.assign(bytes.begin() + static_cast<std::ptrdiff_t>(data_begin),
                       bytes.begin() + static_cast<std::ptrdiff_t>(data_begin + expected));
  return array;
}

void write(const std::filesystem::path& path, const std::string& descr,
           std::span<const std::size_t> shape, const void* data, std::size_t bytes) {
  std::string shape_text = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    shape_text += std::to_string(shape[i]);
    if (shape.size() == 1 || i + 1 < shape.size()) shape_text += shape.size() == 1 ? "," : ", ";
  }
  shape_text += ")";
  std::string header =
      "{'descr': '" + descr + "', 'fortran_order': False, 'shape': " + shape_text + ", }";
  // Pad so magic + version + length + header + newline is a multiple of 64.
  const std::size_t total = kMagicLen + 2 + 2 + header.size() + 1;
  header.append((64 - total % 64) % 64, ' ');
  header.push_back('\n');

  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::IoFailure, "cannot write " + path.string());
  out.write(kMagic, kMagicLen);
  const char version[2] = {1, 0};
  out.write(version, 2);
  const auto len = static_cast<std::uint16_t>(header.size());
  const char len_bytes[2] = {static_cast<char>(len & 0xff), static_cast<char>(len >> 8)};
  out.write(len_bytes, 2);
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(bytes));
  if (!out) throw Error(Errc::IoFailure, "short write to " + path.string());
}

template <typename T>
std::vector<T> values_as(const Array& array) {
  const std::size_t n = array.count();
  std::vector<T> out(n);
  if (array.descr == "<f4") {
    for (std::size_t i = 0; i < n; ++i) {
      float v;
      std::memcpy(&v, array.payload.data() + i * sizeof(float), sizeof(float));
      out[i] = static_cast<T>(v);
    }
  } else if (array.descr == "<f8") {
    for (std::size_t i = 0; i < n; ++i) {
      double v;
      std::memcpy(&v, array.payload.data() + i * sizeof(double), sizeof(double));
      out[i] = static_cast<T>(v);
    }
  } else {
    throw Error(Errc::UnsupportedDtype, "expected <f4 or <f8, got " + array.descr);
  }
  return out;
}

template std::vector<float> values_as<float>(const Array&);
template std::vector<double> values_as<double>(const Array&);

}  // namespace fusedet::npy
