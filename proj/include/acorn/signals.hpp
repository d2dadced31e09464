// Copyright 2026 The Acorn Authors
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

#include <png.h>

#include <Eigen/Dense>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>
#include <string>
#include <vector>

#include "acorn/common.hpp"
#include "acorn/rng.hpp"

namespace acorn {

// Ground-truth signals. All samplers are pure: the same coordinate always
// returns the same value, so training targets can be regenerated on the fly
// instead of being stored.

// ---------------------------------------------------------------------------
// Images

// Row-major, channel-interleaved, values in [0,1]. Axis 0 of the model
// domain runs along columns (width), axis 1 along rows (height), both
// align-corners over pixel centers: x = -1 is the center of the first
// pixel, x = +1 the center of the last.
struct ImageSignal {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<double> values;

  double at(int row, int col, int c) const {
    return values[(static_cast<std::size_t>(row) * width + col) * channels + c];
  }
  double& at(int row, int col, int c) {
    return values[(static_cast<std::size_t>(row) * width + col) * channels + c];
  }

  int dims() const { return 2; }
  Eigen::VectorXd operator()(const std::array<double, 3>& x) const;
};

template <typename In>
inline Eigen::VectorXd sample_image(const ImageSignal& sig, const In& x) {
  for (int a = 0; a < 2; ++a) {
    if (!(x[a] >= -1.0 && x[a] <= 1.0)) {
      throw ConfigError("image sample coordinate outside [-1,1]^2");
    }
  }
  const auto axis = [](double v, int n, int* lo, double* frac) {
    if (n == 1) {
      *lo = 0;
      *frac = 0.0;
      return;
    }
    const double t = (v + 1.0) * 0.5 * (n - 1);
    int i = static_cast<int>(std::floor(t));
    if (i > n - 2) i = n - 2;
    if (i < 0) i = 0;
    *lo = i;
    *frac = t - i;
  };
  int c0, r0;
  double fc, fr;
  axis(x[0], sig.width, &c0, &fc);
  axis(x[1], sig.height, &r0, &fr);
  const int c1 = sig.width == 1 ? 0 : c0 + 1;
  const int r1 = sig.height == 1 ? 0 : r0 + 1;
  Eigen::VectorXd out(sig.channels);
  for (int c = 0; c < sig.channels; ++c) {
    const double top = (1.0 - fc) * sig.at(r0, c0, c) + fc * sig.at(r0, c1, c);
    const double bot = (1.0 - fc) * sig.at(r1, c0, c) + fc * sig.at(r1, c1, c);
    out[c] = (1.0 - fr) * top + fr * bot;
  }
  return out;
}

inline Eigen::VectorXd ImageSignal::operator()(
    const std::array<double, 3>& x) const {
  return sample_image(*this, x);
}

// ---------------------------------------------------------------------------
// PNM (binary PGM/PPM) and PNG I/O

namespace detail {

inline std::vector<unsigned char> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  return bytes;
}

// PNM headers are whitespace-separated tokens with '#' comments.
inline long pnm_token(const std::vector<unsigned char>& b, std::size_t* pos) {
  while (*pos < b.size()) {
    if (std::isspace(b[*pos])) {
      ++*pos;
    } else if (b[*pos] == '#') {
      while (*pos < b.size() && b[*pos] != '\n') ++*pos;
    } else {
      break;
    }
  }
  long v = 0;
  bool any = false;
  while (*pos < b.size() && std::isdigit(b[*pos])) {
    v = v * 10 + (b[*pos] - '0');
    any = true;
    ++*pos;
  }
  if (!any) throw IoError("malformed PNM header");
  return v;
}

inline ImageSignal load_pnm(const std::vector<unsigned char>& bytes,
                            const std::string& path) {
  if (bytes.size() < 2) throw IoError("truncated PNM: " + path);
  const int channels = bytes[1] == '5' ? 1 : 3;
  std::size_t pos = 2;
  const long w = pnm_token(bytes, &pos);
  const long h = pnm_token(bytes, &pos);
  const long maxval = pnm_token(bytes, &pos);
  if (w < 1 || h < 1) throw IoError("bad PNM dimensions: " + path);
  if (maxval != 255) {
    throw IoError("only 8-bit PNM supported (maxval 255): " + path);
  }
  ++pos;  // single whitespace byte after maxval
  const std::size_t need = static_cast<std::size_t>(w) * h * channels;
  if (bytes.size() - pos < need) throw IoError("truncated PNM: " + path);
  ImageSignal img;
  img.width = static_cast<int>(w);
  img.height = static_cast<int>(h);
  img.channels = channels;
  img.values.resize(need);
  for (std::size_t i = 0; i < need; ++i) {
    img.values[i] = bytes[pos + i] / 255.0;
  }
  return img;
}

struct PngReader {
  FILE* f = nullptr;
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~PngReader() {
    if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
    if (f) std::fclose(f);
  }
};

struct PngWriter {
  FILE* f = nullptr;
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~PngWriter() {
    if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
    if (f) std::fclose(f);
  }
};

inline ImageSignal load_png(const std::string& path) {
  PngReader r;
  r.f = std::fopen(path.c_str(), "rb");
  if (!r.f) throw IoError("cannot open " + path);
  r.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr,
                                 nullptr);
  if (!r.png) throw IoError("libpng init failed");
  r.info = png_create_info_struct(r.png);
  if (!r.info) throw IoError("libpng init failed");
  if (setjmp(png_jmpbuf(r.png))) {
    throw IoError("corrupt or truncated PNG: " + path);
  }
  png_init_io(r.png, r.f);
  png_read_info(r.png, r.info);
  // Normalize to 8-bit gray or RGB: expand palettes, strip 16-bit depth
  // and alpha.
  png_set_palette_to_rgb(r.png);
  png_set_expand_gray_1_2_4_to_8(r.png);
  png_set_strip_16(r.png);
  png_set_strip_alpha(r.png);
  png_read_update_info(r.png, r.info);
  const png_uint_32 w = png_get_image_width(r.png, r.info);
  const png_uint_32 h = png_get_image_height(r.png, r.info);
  const int color = png_get_color_type(r.png, r.info);
  const int channels = color == PNG_COLOR_TYPE_GRAY ? 1 : 3;
  if (png_get_bit_depth(r.png, r.info) != 8 ||
      (color != PNG_COLOR_TYPE_GRAY && color != PNG_COLOR_TYPE_RGB)) {
    throw IoError("unsupported PNG layout: " + path);
  }
  std::vector<unsigned char> row(static_cast<std::size_t>(w) * channels);
  ImageSignal img;
  img.width = static_cast<int>(w);
  img.height = static_cast<int>(h);
  img.channels = channels;
  img.values.resize(static_cast<std::size_t>(w) * h * channels);
  const int passes = png_set_interlace_handling(r.png);
  for (int p = 0; p < passes; ++p) {
    for (png_uint_32 y = 0; y < h; ++y) {
      png_read_row(r.png, row.data(), nullptr);
      if (p + 1 < passes) continue;
      for (std::size_t i = 0; i < row.size(); ++i) {
        img.values[static_cast<std::size_t>(y) * row.size() + i] =
            row[i] / 255.0;
      }
    }
  }
  png_read_end(r.png, nullptr);
  return img;
}

inline void save_png(const ImageSignal& img, const std::string& path) {
  PngWriter w;
  w.f = std::fopen(path.c_str(), "wb");
  if (!w.f) throw IoError("cannot write " + path);
  w.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr,
                                  nullptr);
  if (!w.png) throw IoError("libpng init failed");
  w.info = png_create_info_struct(w.png);
  if (!w.info) throw IoError("libpng init failed");
  if (setjmp(png_jmpbuf(w.png))) throw IoError("PNG write failed: " + path);
  png_init_io(w.png, w.f);
  png_set_IHDR(w.png, w.info, img.width, img.height, 8,
               img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(w.png, w.info);
  std::vector<unsigned char> row(static_cast<std::size_t>(img.width) *
                                 img.channels);
  for (int y = 0; y < img.height; ++y) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      double v = img.values[static_cast<std::size_t>(y) * row.size() + i];
      v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
      row[i] = static_cast<unsigned char>(std::lround(v * 255.0));
    }
    png_write_row(w.png, row.data());
  }
  png_write_end(w.png, nullptr);
}

}  // namespace detail

inline bool has_suffix(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() &&
         s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

inline ImageSignal load_image(const std::string& path) {
  const std::vector<unsigned char> bytes = detail::read_file_bytes(path);
  if (bytes.size() >= 8 && bytes[0] == 0x89 && bytes[1] == 'P' &&
      bytes[2] == 'N' && bytes[3] == 'G') {
    return detail::load_png(path);
  }
  if (bytes.size() >= 2 && bytes[0] == 'P' &&
      (bytes[1] == '5' || bytes[1] == '6')) {
    return detail::load_pnm(bytes, path);
  }
  throw IoError("unsupported image format (need 8-bit PNG, P5, or P6): " +
                path);
}

// Format picked by extension: .png, or binary PGM/PPM otherwise.
inline void save_image(const ImageSignal& img, const std::string& path) {
  if (img.width < 1 || img.height < 1 ||
      (img.channels != 1 && img.channels != 3)) {
    throw ConfigError("image must be 1- or 3-channel and non-empty");
  }
  if (has_suffix(path, ".png")) {
    detail::save_png(img, path);
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << (img.channels == 1 ? "P5" : "P6") << "\n"
      << img.width << " " << img.height << "\n255\n";
  std::vector<unsigned char> bytes(img.values.size());
  for (std::size_t i = 0; i < img.values.size(); ++i) {
    double v = img.values[i];
    v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
    bytes[i] = static_cast<unsigned char>(std::lround(v * 255.0));
  }
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write: " + path);
}

// ---------------------------------------------------------------------------
// Analytic occupancy (CSG over sphere / box / torus)

struct CsgNode {
  enum class Kind : std::uint8_t {
    kSphere,
    kBox,
    kTorus,
    kUnion,
    kIntersection,
    kDifference,
  };
  Kind kind = Kind::kSphere;
  std::array<double, 3> center{0, 0, 0};
  std::array<double, 3> extent{0, 0, 0};  // radius / half-extents / (R, r)
  std::vector<CsgNode> args;

  bool contains(const std::array<double, 3>& x) const {
    switch (kind) {
      case Kind::kSphere: {
        const double dx = x[0] - center[0];
        const double dy = x[1] - center[1];
        const double dz = x[2] - center[2];
        return dx * dx + dy * dy + dz * dz <= extent[0] * extent[0];
      }
      case Kind::kBox:
        return std::abs(x[0] - center[0]) <= extent[0] &&
               std::abs(x[1] - center[1]) <= extent[1] &&
               std::abs(x[2] - center[2]) <= extent[2];
      case Kind::kTorus: {
        // Ring in the xy-plane around the center; extent = (major, minor).
        const double dx = x[0] - center[0];
        const double dy = x[1] - center[1];
        const double dz = x[2] - center[2];
        const double ring = std::sqrt(dx * dx + dy * dy) - extent[0];
        return ring * ring + dz * dz <= extent[1] * extent[1];
      }
      case Kind::kUnion:
        for (const auto& a : args) {
          if (a.contains(x)) return true;
        }
        return false;
      case Kind::kIntersection:
        for (const auto& a : args) {
          if (!a.contains(x)) return false;
        }
        return true;
      case Kind::kDifference:
        if (!args.front().contains(x)) return false;
        for (std::size_t i = 1; i < args.size(); ++i) {
          if (args[i].contains(x)) return false;
        }
        return true;
    }
    return false;
  }
};

namespace detail {

inline std::array<double, 3> json_vec3(const nlohmann::json& j,
                                       const char* key) {
  if (!j.contains(key) || !j[key].is_array() || j[key].size() != 3) {
    throw ConfigError(std::string("CSG node needs 3-vector '") + key + "'");
  }
  return {j[key][0].get<double>(), j[key][1].get<double>(),
          j[key][2].get<double>()};
}

inline CsgNode parse_csg(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("CSG node must be an object");
  CsgNode n;
  if (j.contains("prim")) {
    const std::string p = j["prim"].get<std::string>();
    if (p == "sphere") {
      n.kind = CsgNode::Kind::kSphere;
      n.center = json_vec3(j, "center");
      n.extent[0] = j.at("radius").get<double>();
      if (!(n.extent[0] > 0.0)) throw ConfigError("sphere radius must be > 0");
    } else if (p == "box") {
      n.kind = CsgNode::Kind::kBox;
      n.center = json_vec3(j, "center");
      n.extent = json_vec3(j, "half_extents");
      for (double e : n.extent) {
        if (!(e > 0.0)) throw ConfigError("box half-extents must be > 0");
      }
    } else if (p == "torus") {
      n.kind = CsgNode::Kind::kTorus;
      n.center = json_vec3(j, "center");
      if (!j.contains("radii") || j["radii"].size() != 2) {
        throw ConfigError("torus needs radii [major, minor]");
      }
      n.extent[0] = j["radii"][0].get<double>();
      n.extent[1] = j["radii"][1].get<double>();
      if (!(n.extent[0] > 0.0) || !(n.extent[1] > 0.0)) {
        throw ConfigError("torus radii must be > 0");
      }
    } else {
      throw ConfigError("unknown CSG primitive: " + p);
    }
    return n;
  }
  if (!j.contains("op")) throw ConfigError("CSG node needs 'prim' or 'op'");
  const std::string op = j["op"].get<std::string>();
  if (op == "union") {
    n.kind = CsgNode::Kind::kUnion;
  } else if (op == "intersection") {
    n.kind = CsgNode::Kind::kIntersection;
  } else if (op == "difference") {
    n.kind = CsgNode::Kind::kDifference;
  } else {
    throw ConfigError("unknown CSG op: " + op);
  }
  if (!j.contains("args") || !j["args"].is_array() || j["args"].empty()) {
    throw ConfigError("CSG op needs non-empty 'args'");
  }
  for (const auto& a : j["args"]) n.args.push_back(parse_csg(a));
  return n;
}

}  // namespace detail

struct AnalyticOccupancy {
  CsgNode root;

  int dims() const { return 3; }
  Eigen::VectorXd operator()(const std::array<double, 3>& x) const {
    Eigen::VectorXd out(1);
    out[0] = root.contains(x) ? 1.0 : 0.0;
    return out;
  }
};

inline AnalyticOccupancy parse_analytic_occupancy(const nlohmann::json& j) {
  return AnalyticOccupancy{detail::parse_csg(j)};
}

inline AnalyticOccupancy load_analytic_occupancy(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("bad CSG JSON in " + path + ": " + e.what());
  }
  return parse_analytic_occupancy(j);
}

// ---------------------------------------------------------------------------
// Voxel occupancy

// Binary grid over [-1,1]^3, x fastest in storage; sampling returns the
// containing voxel's value (nearest lookup).
struct VoxelOccupancy {
  int nx = 0, ny = 0, nz = 0;
  std::vector<std::uint8_t> values;

  std::uint8_t at(int x, int y, int z) const {
    return values[static_cast<std::size_t>(z) * ny * nx +
                  static_cast<std::size_t>(y) * nx + x];
  }
  int dims() const { return 3; }
  Eigen::VectorXd operator()(const std::array<double, 3>& x) const;
};

template <typename Sig, typename In>
inline double sample_occupancy(const Sig& sig, const In& x) {
  for (int a = 0; a < 3; ++a) {
    if (!(x[a] >= -1.0 && x[a] <= 1.0)) {
      throw ConfigError("occupancy sample coordinate outside [-1,1]^3");
    }
  }
  if constexpr (std::is_same_v<Sig, AnalyticOccupancy>) {
    return sig.root.contains({x[0], x[1], x[2]}) ? 1.0 : 0.0;
  } else {
    const auto cell = [](double v, int n) {
      int i = static_cast<int>(std::floor((v + 1.0) * 0.5 * n));
      if (i > n - 1) i = n - 1;
      if (i < 0) i = 0;
      return i;
    };
    return sig.at(cell(x[0], sig.nx), cell(x[1], sig.ny), cell(x[2], sig.nz));
  }
}

inline Eigen::VectorXd VoxelOccupancy::operator()(
    const std::array<double, 3>& x) const {
  Eigen::VectorXd out(1);
  out[0] = sample_occupancy(*this, x);
  return out;
}

inline VoxelOccupancy load_voxels(const std::string& path) {
  const std::vector<unsigned char> bytes = detail::read_file_bytes(path);
  if (bytes.size() < 5 || std::memcmp(bytes.data(), "VOX1", 4) != 0) {
    throw IoError("not a VOX1 file: " + path);
  }
  std::size_t pos = 4;
  long dims[3];
  for (long& d : dims) d = detail::pnm_token(bytes, &pos);
  if (dims[0] < 1 || dims[1] < 1 || dims[2] < 1) {
    throw IoError("bad VOX1 dimensions: " + path);
  }
  ++pos;  // single whitespace byte ends the header
  const std::size_t need =
      static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
  if (bytes.size() - pos < need) throw IoError("truncated VOX1: " + path);
  VoxelOccupancy v;
  v.nx = static_cast<int>(dims[0]);
  v.ny = static_cast<int>(dims[1]);
  v.nz = static_cast<int>(dims[2]);
  v.values.assign(bytes.begin() + pos, bytes.begin() + pos + need);
  for (std::uint8_t b : v.values) {
    if (b > 1) throw IoError("VOX1 values must be 0 or 1: " + path);
  }
  return v;
}

inline void save_voxels(const VoxelOccupancy& v, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << "VOX1 " << v.nx << " " << v.ny << " " << v.nz << "\n";
  out.write(reinterpret_cast<const char*>(v.values.data()),
            static_cast<std::streamsize>(v.values.size()));
  if (!out) throw IoError("short write: " + path);
}

// ---------------------------------------------------------------------------
// Procedural test image

// Grayscale image with detail deliberately concentrated: the top-left
// quadrant is a smooth low-frequency ramp, the rest carries band-limited
// noise plus hard-edged disks, and one tile holds strictly finer texture
// than the surrounding field. Wavelengths are fixed in pixels so each
// noise band saturates a known feature-grid density: a partition must
// keep refining to resolve the next band, and only budget reclaimed from
// the smooth quadrant pays for resolving the fine tile.
inline ImageSignal make_multiscale_test_image(int size, std::uint64_t seed) {
  if (size < 16 || (size & (size - 1)) != 0) {
    throw ConfigError("test image size must be a power of two >= 16");
  }
  constexpr int kDisks = 20;
  // The fine tile spans [lo,hi) in both axes: one quadtree cell at every
  // level >= 2, so refining it never drags neighbours along.
  constexpr double kTileLo = 0.5;
  constexpr double kTileHi = 0.75;

  struct Wave {
    double fx, fy, phase, amp;
  };
  struct Band {
    double lambda_lo_px, lambda_hi_px;  // wavelength range in pixels
    double sigma;                       // target standard deviation
    int count;
    std::uint64_t lane;  // rng substream base
    std::vector<Wave> waves;
  };
  // Coarse and mid bands cover the textured region; the fine band exists
  // only inside the tile and carries detail past the mid band's scale.
  std::array<Band, 3> bands{{{5.0, 8.0, 0.12, 16, 0, {}},
                             {2.6, 4.0, 0.12, 16, 3, {}},
                             {1.4, 2.2, 0.16, 20, 6, {}}}};
  for (Band& band : bands) {
    band.waves.resize(band.count);
    const double amp = band.sigma * std::sqrt(2.0 / band.count);
    for (int k = 0; k < band.count; ++k) {
      const double lambda =
          band.lambda_lo_px +
          (band.lambda_hi_px - band.lambda_lo_px) *
              unit_double(seed, Stream::kTestImage, band.lane, k);
      const double f = size / lambda;  // cycles per unit coordinate
      const double theta =
          2.0 * M_PI * unit_double(seed, Stream::kTestImage, band.lane + 1, k);
      band.waves[k] = {f * std::cos(theta), f * std::sin(theta),
                       2.0 * M_PI *
                           unit_double(seed, Stream::kTestImage,
                                       band.lane + 2, k),
                       amp};
    }
  }
  const auto band_value = [](const Band& band, double u, double v) {
    double acc = 0.0;
    for (const Wave& w : band.waves) {
      acc += w.amp * std::sin(2.0 * M_PI * (w.fx * u + w.fy * v) + w.phase);
    }
    return acc;
  };

  struct Disk {
    double cx, cy, r2, amp;
  };
  std::vector<Disk> disks(kDisks);
  for (int k = 0; k < kDisks; ++k) {
    // Rejection-sample centers into the textured region but away from the
    // fine tile, so the tile stays a pure single-band probe.
    double cx = 0.875, cy = 0.875;
    for (int attempt = 0; attempt < 64; ++attempt) {
      const std::uint64_t key = static_cast<std::uint64_t>(k) * 64 + attempt;
      cx = unit_double(seed, Stream::kTestImage, 9, key);
      cy = unit_double(seed, Stream::kTestImage, 10, key);
      const bool in_quadrant = cx < 0.52 && cy < 0.52;
      const bool near_tile = cx >= kTileLo - 0.04 && cx < kTileHi + 0.04 &&
                             cy >= kTileLo - 0.04 && cy < kTileHi + 0.04;
      if (!in_quadrant && !near_tile) break;
    }
    const double r =
        0.006 + 0.024 * unit_double(seed, Stream::kTestImage, 11, k);
    const double mag =
        0.12 + 0.13 * unit_double(seed, Stream::kTestImage, 12, k);
    disks[k] = {cx, cy, r * r, (k % 2 == 0) ? mag : -mag};
  }

  ImageSignal img;
  img.width = size;
  img.height = size;
  img.channels = 1;
  img.values.resize(static_cast<std::size_t>(size) * size);
  const int half = size / 2;
  const double ramp_px = 8.0;
  const double tile_fade = 6.0 / size;
  const auto smoothstep01 = [](double t) {
    t = t < 0.0 ? 0.0 : (t > 1.0 ? 1.0 : t);
    return t * t * (3.0 - 2.0 * t);
  };
  for (int row = 0; row < size; ++row) {
    for (int col = 0; col < size; ++col) {
      const double u = (col + 0.5) / size;
      const double v = (row + 0.5) / size;
      double val = 0.5 + 0.17 * std::sin(2.1 * u + 0.4) *
                             std::cos(1.7 * v - 0.3) +
                   0.06 * (u - v);
      if (row >= half || col >= half) {
        // Fade detail in over a few pixels so the quadrant edge itself
        // stays benign.
        const double d = std::max(
            0.0, std::min(row >= half ? row - half + 1.0 : ramp_px,
                          col >= half ? col - half + 1.0 : ramp_px));
        const double t = smoothstep01(d / ramp_px);
        // Distance into the fine tile, cross-faded so the tile carries
        // only the fine band and the rest only the coarse/mid bands.
        const double tile_d = std::min(
            std::min(u - kTileLo, kTileHi - u),
            std::min(v - kTileLo, kTileHi - v));
        const double p = smoothstep01(tile_d / tile_fade);
        double detail = (1.0 - p) * (band_value(bands[0], u, v) +
                                     band_value(bands[1], u, v)) +
                        p * band_value(bands[2], u, v);
        for (const auto& dk : disks) {
          const double dx = u - dk.cx;
          const double dy = v - dk.cy;
          if (dx * dx + dy * dy <= dk.r2) detail += dk.amp;
        }
        val += t * detail;
      }
      val = val < 0.0 ? 0.0 : (val > 1.0 ? 1.0 : val);
      img.at(row, col, 0) = val;
    }
  }
  return img;
}

}  // namespace acorn
