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

#include "acorn/signals.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <random>
#include <string>

namespace acorn {
namespace {

std::string temp_path(const std::string& name) {
  return ::testing::TempDir() + name;
}

void write_bytes(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

// ---------------------------------------------------------------------------
// sample_image

TEST(SampleImage, ConstantImageIsConstantEverywhere) {
  ImageSignal img;
  img.width = 5;
  img.height = 3;
  img.channels = 1;
  img.values.assign(15, 0.625);
  std::mt19937_64 gen(1);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < 100; ++i) {
    const Eigen::VectorXd v = sample_image(img, std::array<double, 2>{u(gen), u(gen)});
    EXPECT_DOUBLE_EQ(v[0], 0.625);
  }
}

TEST(SampleImage, ExactAtPixelCenters) {
  ImageSignal img;
  img.width = 4;
  img.height = 3;
  img.channels = 3;
  img.values.resize(36);
  for (std::size_t i = 0; i < img.values.size(); ++i) {
    img.values[i] = (i % 256) / 255.0;
  }
  for (int row = 0; row < 3; ++row) {
    for (int col = 0; col < 4; ++col) {
      const std::array<double, 2> x{-1.0 + 2.0 * col / 3.0,
                                    -1.0 + 2.0 * row / 2.0};
      const Eigen::VectorXd v = sample_image(img, x);
      for (int c = 0; c < 3; ++c) {
        EXPECT_DOUBLE_EQ(v[c], img.at(row, col, c));
      }
    }
  }
}

TEST(SampleImage, CenterOfTwoByTwoIsMean) {
  ImageSignal img;
  img.width = 2;
  img.height = 2;
  img.channels = 1;
  img.values = {0.1, 0.3, 0.5, 0.9};
  const Eigen::VectorXd v = sample_image(img, std::array<double, 2>{0.0, 0.0});
  EXPECT_DOUBLE_EQ(v[0], 0.45);
}

TEST(SampleImage, OutsideDomainThrows) {
  ImageSignal img;
  img.width = 2;
  img.height = 2;
  img.channels = 1;
  img.values.assign(4, 0.0);
  EXPECT_THROW(sample_image(img, std::array<double, 2>{1.01, 0.0}),
               ConfigError);
  EXPECT_THROW(sample_image(img, std::array<double, 2>{0.0, -2.0}),
               ConfigError);
}

// ---------------------------------------------------------------------------
// PNM / PNG I/O

TEST(LoadImage, OneByOneWhitePgm) {
  const std::string path = temp_path("white.pgm");
  write_bytes(path, std::string("P5\n1 1\n255\n") + char(255));
  const ImageSignal img = load_image(path);
  EXPECT_EQ(img.width, 1);
  EXPECT_EQ(img.height, 1);
  EXPECT_EQ(img.channels, 1);
  EXPECT_DOUBLE_EQ(img.values[0], 1.0);
}

TEST(LoadImage, PpmFirstPixelMatchesBytes) {
  const std::string path = temp_path("tiny.ppm");
  std::string data = "P6\n# comment line\n2 1\n255\n";
  const unsigned char px[6] = {10, 20, 30, 255, 0, 128};
  data.append(reinterpret_cast<const char*>(px), 6);
  write_bytes(path, data);
  const ImageSignal img = load_image(path);
  EXPECT_EQ(img.channels, 3);
  EXPECT_DOUBLE_EQ(img.at(0, 0, 0), 10.0 / 255.0);
  EXPECT_DOUBLE_EQ(img.at(0, 0, 1), 20.0 / 255.0);
  EXPECT_DOUBLE_EQ(img.at(0, 0, 2), 30.0 / 255.0);
  EXPECT_DOUBLE_EQ(img.at(0, 1, 2), 128.0 / 255.0);
}

TEST(LoadImage, RoundTripIsLossless) {
  ImageSignal img;
  img.width = 7;
  img.height = 5;
  img.channels = 3;
  img.values.resize(7 * 5 * 3);
  for (std::size_t i = 0; i < img.values.size(); ++i) {
    img.values[i] = ((i * 37) % 256) / 255.0;
  }
  for (const char* name : {"rt.ppm", "rt.png"}) {
    const std::string path = temp_path(name);
    save_image(img, path);
    const ImageSignal back = load_image(path);
    ASSERT_EQ(back.width, img.width);
    ASSERT_EQ(back.height, img.height);
    ASSERT_EQ(back.channels, img.channels);
    for (std::size_t i = 0; i < img.values.size(); ++i) {
      EXPECT_DOUBLE_EQ(back.values[i], img.values[i]) << name << " @" << i;
    }
  }
}

TEST(LoadImage, GrayPngRoundTrip) {
  ImageSignal img;
  img.width = 3;
  img.height = 2;
  img.channels = 1;
  img.values = {0.0, 0.2, 0.4, 0.6, 0.8, 1.0};
  const std::string path = temp_path("gray.png");
  save_image(img, path);
  const ImageSignal back = load_image(path);
  ASSERT_EQ(back.channels, 1);
  for (std::size_t i = 0; i < img.values.size(); ++i) {
    EXPECT_NEAR(back.values[i], img.values[i], 0.5 / 255.0);
  }
}

TEST(LoadImage, RejectsUnsupportedAndTruncated) {
  const std::string bad = temp_path("bad.img");
  write_bytes(bad, "BM not an image");
  EXPECT_THROW(load_image(bad), IoError);

  const std::string trunc = temp_path("trunc.pgm");
  write_bytes(trunc, "P5\n4 4\n255\nxy");  // 2 of 16 payload bytes
  EXPECT_THROW(load_image(trunc), IoError);

  const std::string sixteen = temp_path("deep.pgm");
  write_bytes(sixteen, std::string("P5\n1 1\n65535\n") + "ab");
  EXPECT_THROW(load_image(sixteen), IoError);

  EXPECT_THROW(load_image(temp_path("missing.pgm")), IoError);
}

// ---------------------------------------------------------------------------
// Analytic occupancy

AnalyticOccupancy sphere_half() {
  nlohmann::json j = {{"prim", "sphere"},
                      {"center", {0.0, 0.0, 0.0}},
                      {"radius", 0.5}};
  return parse_analytic_occupancy(j);
}

TEST(SampleOccupancy, SphereMembership) {
  const AnalyticOccupancy s = sphere_half();
  EXPECT_EQ(sample_occupancy(s, std::array<double, 3>{0, 0, 0}), 1.0);
  EXPECT_EQ(sample_occupancy(s, std::array<double, 3>{0.99, 0.99, 0.99}), 0.0);
  // Boundary is inside (closed membership).
  EXPECT_EQ(sample_occupancy(s, std::array<double, 3>{0.5, 0.0, 0.0}), 1.0);
}

TEST(SampleOccupancy, OutsideDomainThrows) {
  const AnalyticOccupancy s = sphere_half();
  EXPECT_THROW(sample_occupancy(s, std::array<double, 3>{1.5, 0, 0}),
               ConfigError);
}

TEST(SampleOccupancy, SphereVolumeByMonteCarlo) {
  const AnalyticOccupancy s = sphere_half();
  std::mt19937_64 gen(12345);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const int n = 1000000;
  std::int64_t inside = 0;
  for (int i = 0; i < n; ++i) {
    const std::array<double, 3> x{u(gen), u(gen), u(gen)};
    inside += sample_occupancy(s, x) == 1.0 ? 1 : 0;
  }
  const double volume = 8.0 * inside / n;
  const double expected = 4.0 / 3.0 * M_PI * 0.125;
  EXPECT_NEAR(volume, expected, 0.01 * expected);
}

TEST(Csg, DifferenceAndTorus) {
  nlohmann::json j = {
      {"op", "difference"},
      {"args",
       {{{"prim", "sphere"}, {"center", {0.0, 0.0, 0.0}}, {"radius", 0.5}},
        {{"prim", "box"},
         {"center", {0.3, 0.0, 0.0}},
         {"half_extents", {0.2, 0.2, 0.2}}}}}};
  const AnalyticOccupancy diff = parse_analytic_occupancy(j);
  EXPECT_EQ(sample_occupancy(diff, std::array<double, 3>{-0.3, 0, 0}), 1.0);
  EXPECT_EQ(sample_occupancy(diff, std::array<double, 3>{0.3, 0, 0}), 0.0);
  EXPECT_EQ(sample_occupancy(diff, std::array<double, 3>{0.9, 0, 0}), 0.0);

  nlohmann::json t = {{"prim", "torus"},
                      {"center", {0.0, 0.0, 0.0}},
                      {"radii", {0.5, 0.1}}};
  const AnalyticOccupancy torus = parse_analytic_occupancy(t);
  EXPECT_EQ(sample_occupancy(torus, std::array<double, 3>{0.5, 0, 0}), 1.0);
  EXPECT_EQ(sample_occupancy(torus, std::array<double, 3>{0, 0, 0}), 0.0);
  EXPECT_EQ(sample_occupancy(torus, std::array<double, 3>{0.5, 0, 0.2}), 0.0);
}

TEST(Csg, RejectsMalformedTrees) {
  EXPECT_THROW(parse_analytic_occupancy({{"prim", "cone"}}), ConfigError);
  EXPECT_THROW(parse_analytic_occupancy({{"op", "xor"}}), ConfigError);
  nlohmann::json no_args = {{"op", "union"}, {"args", nlohmann::json::array()}};
  EXPECT_THROW(parse_analytic_occupancy(no_args), ConfigError);
  nlohmann::json bad_r = {
      {"prim", "sphere"}, {"center", {0.0, 0.0, 0.0}}, {"radius", -1.0}};
  EXPECT_THROW(parse_analytic_occupancy(bad_r), ConfigError);
}

// ---------------------------------------------------------------------------
// Voxels

TEST(Voxels, RoundTripAndLookup) {
  VoxelOccupancy v;
  v.nx = 2;
  v.ny = 3;
  v.nz = 2;
  v.values = {1, 0, 0, 1, 1, 0, 0, 1, 1, 0, 0, 1};
  const std::string path = temp_path("grid.vox");
  save_voxels(v, path);
  const VoxelOccupancy back = load_voxels(path);
  EXPECT_EQ(back.nx, 2);
  EXPECT_EQ(back.ny, 3);
  EXPECT_EQ(back.nz, 2);
  EXPECT_EQ(back.values, v.values);

  // (-1,-1,-1) falls in voxel (0,0,0); x fastest means value index 0.
  EXPECT_EQ(sample_occupancy(back, std::array<double, 3>{-1, -1, -1}), 1.0);
  EXPECT_EQ(sample_occupancy(back, std::array<double, 3>{0.9, -1, -1}), 0.0);
  // +1 clamps into the last voxel.
  EXPECT_EQ(sample_occupancy(back, std::array<double, 3>{1, 1, 1}), 1.0);
}

TEST(Voxels, RejectsBadFiles) {
  const std::string trunc = temp_path("trunc.vox");
  write_bytes(trunc, "VOX1 2 2 2\n\x01\x00");
  EXPECT_THROW(load_voxels(trunc), IoError);

  const std::string vals = temp_path("vals.vox");
  write_bytes(vals, std::string("VOX1 1 1 1\n") + char(7));
  EXPECT_THROW(load_voxels(vals), IoError);

  const std::string magic = temp_path("magic.vox");
  write_bytes(magic, "VOXX 1 1 1\n\x01");
  EXPECT_THROW(load_voxels(magic), IoError);
}

// ---------------------------------------------------------------------------
// Procedural test image

TEST(TestImage, DeterministicInRangeAndSizeChecked) {
  const ImageSignal a = make_multiscale_test_image(64, 7);
  const ImageSignal b = make_multiscale_test_image(64, 7);
  ASSERT_EQ(a.values.size(), b.values.size());
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    EXPECT_EQ(a.values[i], b.values[i]);
    EXPECT_GE(a.values[i], 0.0);
    EXPECT_LE(a.values[i], 1.0);
  }
  const ImageSignal c = make_multiscale_test_image(64, 8);
  bool any_diff = false;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    any_diff |= a.values[i] != c.values[i];
  }
  EXPECT_TRUE(any_diff);

  EXPECT_THROW(make_multiscale_test_image(100, 7), ConfigError);
  EXPECT_THROW(make_multiscale_test_image(8, 7), ConfigError);
}

TEST(TestImage, SmoothQuadrantHasLowerGradient) {
  const int size = 256;
  const ImageSignal img = make_multiscale_test_image(size, 7);
  const int half = size / 2;
  auto grad = [&](int r, int c) {
    const double gx = img.at(r, c + 1, 0) - img.at(r, c, 0);
    const double gy = img.at(r + 1, c, 0) - img.at(r, c, 0);
    return std::hypot(gx, gy);
  };
  double smooth_sum = 0.0, textured_sum = 0.0;
  std::int64_t smooth_n = 0, textured_n = 0;
  for (int r = 0; r + 1 < size; ++r) {
    for (int c = 0; c + 1 < size; ++c) {
      if (r < half - 1 && c < half - 1) {
        smooth_sum += grad(r, c);
        ++smooth_n;
      } else if (r >= half && c >= half) {
        textured_sum += grad(r, c);
        ++textured_n;
      }
    }
  }
  const double smooth_mean = smooth_sum / smooth_n;
  const double textured_mean = textured_sum / textured_n;
  EXPECT_LT(smooth_mean, textured_mean);
  // The gap should be decisive, not marginal.
  EXPECT_LT(smooth_mean * 5.0, textured_mean);
}

}  // namespace
}  // namespace acorn
