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

#include "fusedet/kitti_io.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "fusedet/error.hpp"
#include "fusedet/geometry.hpp"
#include "fusedet/npy.hpp"

namespace fusedet {
namespace {

std::vector<char> slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::IoFailure, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> tokens;
  std::istringstream in(line);
  std::string token;
  while (in >> token) tokens.push_back(token);
  return tokens;
}

double parse_double(const std::string& token, Errc code) {
  const char* begin = token.c_str();
  char* end = nullptr;
  const double value = std::strtod(begin, &end);
  if (end == begin || *end != '\0') throw Error(code, "cannot parse number '" + token + "'");
  return value;
}

std::string fixed4(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

template <int Rows, int Cols>
Eigen::Matrix<double, Rows, Cols> matrix_from(const std::vector<double>& values, const std::string& key) {
  if (values.size() != static_cast<std::size_t>(Rows * Cols)) {
    throw Error(Errc::MalformedMatrix, key + " has " + std::to_string(values.size()) +
                                           " values, expected " + std::to_string(Rows * Cols));
  }
  Eigen::Matrix<double, Rows, Cols> m;
  for (int r = 0; r < Rows; ++r) {
    for (int c = 0; c < Cols; ++c) m(r, c) = values[static_cast<std::size_t>(r * Cols + c)];
  }
  return m;
}

template <typename Derived>
std::string row_major(const Eigen::MatrixBase<Derived>& m) {
  std::ostringstream out;
  out.precision(17);
  for (int r = 0; r < m.rows(); ++r) {
    for (int c = 0; c < m.cols(); ++c) {
      if (r || c) out << ' ';
      out << m(r, c);
    }
  }
  return out.str();
}

}  // namespace

PointCloud read_point_cloud(const fs::path& path) {
  const auto bytes = slurp(path);
  if (bytes.size() % 16 != 0) {
    throw Error(Errc::TruncatedFile,
                path.string() + " has " + std::to_string(bytes.size()) + " bytes, not a multiple of 16");
  }
  PointCloud cloud;
  cloud.points.resize(bytes.size() / 16);
  for (std::size_t i = 0; i < cloud.points.size(); ++i) {
    float v[4];
    std::memcpy(v, bytes.data() + i * 16, 16);
    for (float f : v) {
      if (!std::isfinite(f)) {
        throw Error(Errc::NonFiniteValue, path.string() + ": point " + std::to_string(i));
      }
    }
    cloud.points[i] = {v[0], v[1], v[2], v[3]};
  }
  return cloud;
}

void write_point_cloud(const fs::path& path, const PointCloud& cloud) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::IoFailure, "cannot write " + path.string());
  for (const auto& p : cloud.points) {
    const float v[4] = {p.x, p.y, p.z, p.r};
    out.write(reinterpret_cast<const char*>(v), sizeof(v));
  }
  if (!out) throw Error(Errc::IoFailure, "short write to " + path.string());
}

Calibration read_calibration(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoFailure, "cannot open " + path.string());
  std::map<std::string, std::vector<double>> entries;
  std::string line;
  while (std::getline(in, line)) {
    const auto colon = line.find(':');
    if (colon == std::string::npos) continue;
    const std::string key = line.substr(0, colon);
    std::vector<double> values;
    for (const auto& tok : split_ws(line.substr(colon + 1))) {
      values.push_back(parse_double(tok, Errc::MalformedMatrix));
    }
    entries[key] = std::move(values);
  }
  auto require = [&](const std::string& key) -> const std::vector<double>& {
    auto it = entries.find(key);
    if (it == entries.end()) throw Error(Errc::MissingKey, path.string() + " lacks " + key);
    return it->second;
  };

  Calibration calib;
  calib.P = matrix_from<3, 4>(require("P2"), "P2");
  calib.R0 = matrix_from<3, 3>(require("R0_rect"), "R0_rect");
  calib.velo_to_cam = matrix_from<3, 4>(require("Tr_velo_to_cam"), "Tr_velo_to_cam");
  if (auto it = entries.find("image_size"); it != entries.end()) {
    if (it->second.size() != 2) throw Error(Errc::MalformedMatrix, "image_size needs 2 values");
    calib.image_width = static_cast<int>(it->second[0]);
    calib.image_height = static_cast<int>(it->second[1]);
  }
  calib.validate();
  return calib;
}

void write_calibration(const fs::path& path, const Calibration& calib) {
  std::ofstream out(path);
  if (!out) throw Error(Errc::IoFailure, "cannot write " + path.string());
  for (int i = 0; i < 4; ++i) out << 'P' << i << ": " << row_major(calib.P) << '\n';
  out << "R0_rect: " << row_major(calib.R0) << '\n';
  out << "Tr_velo_to_cam: " << row_major(calib.velo_to_cam) << '\n';
  out << "Tr_imu_to_velo: " << row_major(Matrix34::Identity().eval()) << '\n';
  if (calib.image_width > 0) {
    out << "image_size: " << calib.image_width << ' ' << calib.image_height << '\n';
  }
  if (!out) throw Error(Errc::IoFailure, "short write to " + path.string());
}

GroundTruthObject parse_label_line(const std::string& line) {
  const auto f = split_ws(line);
  if (f.size() != 15 && f.size() != 16) {
    throw Error(Errc::FieldCount, "label line has " + std::to_string(f.size()) + " fields: " + line);
  }
  auto num = [&](std::size_t i) { return parse_double(f[i], Errc::NumericParse); };
  GroundTruthObject obj;
  obj.class_name = f[0];
  obj.truncation = num(1);
  const double occl = num(2);
  if (occl != std::floor(occl)) throw Error(Errc::NumericParse, "occlusion must be an integer: " + f[2]);
  obj.occlusion = static_cast<int>(occl);
  obj.alpha = num(3);
  obj.bbox2d = {num(4), num(5), num(6), num(7)};
  obj.h = num(8);
  obj.w = num(9);
  obj.l = num(10);
  obj.location = {num(11), num(12), num(13)};
  obj.rotation_y = num(14);
  if (f.size() == 16) obj.score = num(15);
  return obj;
}

std::vector<GroundTruthObject> read_labels(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoFailure, "cannot open " + path.string());
  std::vector<GroundTruthObject> objects;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    objects.push_back(parse_label_line(line));
  }
  return objects;
}

void write_labels(const fs::path& path, std::span<const GroundTruthObject> objects) {
  std::ofstream out(path);
  if (!out) throw Error(Errc::IoFailure, "cannot write " + path.string());
  for (const auto& o : objects) {
    out << o.class_name << ' ' << fixed4(o.truncation) << ' ' << o.occlusion << ' ' << fixed4(o.alpha)
        << ' ' << fixed4(o.bbox2d.left) << ' ' << fixed4(o.bbox2d.top) << ' ' << fixed4(o.bbox2d.right)
        << ' ' << fixed4(o.bbox2d.bottom) << ' ' << fixed4(o.h) << ' ' << fixed4(o.w) << ' '
        << fixed4(o.l) << ' ' << fixed4(o.location.x()) << ' ' << fixed4(o.location.y()) << ' '
        << fixed4(o.location.z()) << ' ' << fixed4(o.rotation_y);
    if (o.score) out << ' ' << fixed4(*o.score);
    out << '\n';
  }
  if (!out) throw Error(Errc::IoFailure, "short write to " + path.string());
}

FeatureMap read_tensor(const fs::path& path, std::optional<double> stride) {
  const auto array = npy::read(path);
  if (array.descr != "<f4") throw Error(Errc::UnsupportedDtype, path.string() + " has dtype " + array.descr);
  if (array.shape.size() != 3) {
    throw Error(Errc::UnsupportedRank, path.string() + " has rank " + std::to_string(array.shape.size()));
  }
  if (array.fortran_order) throw Error(Errc::UnsupportedDtype, path.string() + " is Fortran-ordered");

  FeatureMap map;
  map.channels = static_cast<int>(array.shape[0]);
  map.height = static_cast<int>(array.shape[1]);
  map.width = static_cast<int>(array.shape[2]);
  map.data.resize(array.count());
  std::memcpy(map.data.data(), array.payload.data(), array.payload.size());

  fs::path meta = path;
  meta += ".meta";
  if (fs::exists(meta)) {
    std::ifstream in(meta);
    std::string key;
    double value = 0.0;
    while (in >> key >> value) {
      if (key == "stride") map.stride = value;
      if (key == "image_scale") map.image_scale = value;
    }
  } else if (!stride) {
    throw Error(Errc::MissingKey, "no stride given and no sidecar " + meta.string());
  }
  if (stride) map.stride = *stride;
  if (!(map.stride > 0.0)) throw Error(Errc::InvalidConfig, "feature stride must be positive");
  return map;
}

void write_tensor(const fs::path& path, const FeatureMap& map) {
  const std::size_t shape[3] = {static_cast<std::size_t>(map.channels),
                                static_cast<std::size_t>(map.height),
                                static_cast<std::size_t>(map.width)};
  npy::write(path, shape, std::span<const float>(map.data));
  fs::path meta = path;
  meta += ".meta";
  std::ofstream out(meta);
  out.precision(17);
  out << "stride " << map.stride << "\nimage_scale " << map.image_scale << '\n';
  if (!out) throw Error(Errc::IoFailure, "cannot write " + meta.string());
}

Image read_image(const fs::path& path) {
  const auto bytes = slurp(path);
  std::size_t pos = 0;
  auto next_token = [&]() {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
    std::string token;
    while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
      token.push_back(bytes[pos++]);
    }
    return token;
  };
  if (next_token() != "P6") throw Error(Errc::BadMagic, path.string() + " is not a binary PPM");
  int width = 0, height = 0, maxval = 0;
  try {
    width = std::stoi(next_token());
    height = std::stoi(next_token());
    maxval = std::stoi(next_token());
  } catch (const std::exception&) {
    throw Error(Errc::BadMagic, path.string() + ": malformed PPM header");
  }
  if (maxval != 255 || width <= 0 || height <= 0) {
    throw Error(Errc::BadMagic, path.string() + ": only 8-bit PPM with positive size is supported");
  }
  ++pos;  // single whitespace before the raster
  Image image(width, height);
  if (bytes.size() < pos || bytes.size() - pos < image.rgb.size()) {
    throw Error(Errc::TruncatedPixelData, path.string() + ": raster shorter than header claims");
  }
  std::memcpy(image.rgb.data(), bytes.data() + pos, image.rgb.size());
  return image;
}

void write_image(const fs::path& path, const Image& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::IoFailure, "cannot write " + path.string());
  out << "P6\n" << image.width << ' ' << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.rgb.data()), static_cast<std::streamsize>(image.rgb.size()));
  if (!out) throw Error(Errc::IoFailure, "short write to " + path.string());
}

BBox2D project_box_2d(const Box3D& box, const Calibration& calib) {
  const Projector project(calib);
  BBox2D out{1e300, 1e300, -1e300, -1e300};
  bool any = false;
  for (const auto& c : box_corners(box)) {
    const auto p = project(c);
    if (p.depth <= 0.0) continue;
    any = true;
    out.left = std::min(out.left, p.u);
    out.top = std::min(out.top, p.v);
    out.right = std::max(out.right, p.u);
    out.bottom = std::max(out.bottom, p.v);
  }
  if (!any) return {};
  const double w = calib.image_width > 0 ? calib.image_width - 1.0 : out.right;
  const double h = calib.image_height > 0 ? calib.image_height - 1.0 : out.bottom;
  out.left = std::clamp(out.left, 0.0, w);
  out.right = std::clamp(out.right, 0.0, w);
  out.top = std::clamp(out.top, 0.0, h);
  out.bottom = std::clamp(out.bottom, 0.0, h);
  return out;
}

GroundTruthObject detection_to_object(const Detection& det, const Calibration& calib) {
  const auto cam = lidar_box_to_camera(det.box, calib);
  GroundTruthObject o;
  o.class_name = det.class_name;
  o.truncation = -1.0;
  o.occlusion = -1;
  o.alpha = normalize_angle(cam.rotation_y - std::atan2(cam.location.x(), cam.location.z()));
  o.bbox2d = project_box_2d(det.box, calib);
  o.h = cam.h;
  o.w = cam.w;
  o.l = cam.l;
  o.location = cam.location;
  o.rotation_y = cam.rotation_y;
  o.score = det.score;
  return o;
}

std::string format_detection(const Detection& det, const Calibration& calib) {
  const GroundTruthObject o = detection_to_object(det, calib);
  std::string line = o.class_name + " -1 -1";
  for (double v : {o.alpha, o.bbox2d.left, o.bbox2d.top, o.bbox2d.right, o.bbox2d.bottom, o.h, o.w, o.l,
                   o.location.x(), o.location.y(), o.location.z(), o.rotation_y, *o.score}) {
    line += ' ';
    line += fixed4(v);
  }
  return line;
}

void write_detections(const fs::path& path, std::span<const Detection> detections,
                      const Calibration& calib) {
  for (const auto& d : detections) {
    if (!std::isfinite(d.score)) throw Error(Errc::NonFiniteValue, "detection score is not finite");
  }
  std::ofstream out(path);
  if (!out) throw Error(Errc::IoFailure, "cannot write " + path.string());
  for (const auto& d : detections) out << format_detection(d, calib) << '\n';
  if (!out) throw Error(Errc::IoFailure, "short write to " + path.string());
}

}  // namespace fusedet
