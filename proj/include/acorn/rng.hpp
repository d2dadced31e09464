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

#include <cstdint>

namespace acorn {

// Counter-based randomness: every draw is a pure function of
// (seed, stream, k1, k2). Nothing is stateful, so results are identical
// regardless of thread count, evaluation order, or how many draws other
// parts of the program made. Checkpoints only need to store the seed.

// SplitMix64 finalizer; bijective on uint64.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebULL;
  x ^= x >> 31;
  return x;
}

// Independent draw domains. Keeping them disjoint means e.g. weight
// initialization never collides with sample positions under the same seed.
enum class Stream : std::uint64_t {
  kWeightInit = 1,
  kSamples = 2,
  kTestImage = 3,
};

constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

constexpr std::uint64_t hash_u64(std::uint64_t seed, Stream stream,
                                 std::uint64_t k1, std::uint64_t k2) {
  std::uint64_t h = mix64(seed + kGolden);
  h = mix64(h ^ (static_cast<std::uint64_t>(stream) + kGolden));
  h = mix64(h ^ (k1 + kGolden));
  h = mix64(h ^ (k2 + kGolden));
  return h;
}

// Uniform in [0,1), 53-bit resolution.
constexpr double unit_double(std::uint64_t seed, Stream stream,
                             std::uint64_t k1, std::uint64_t k2) {
  return static_cast<double>(hash_u64(seed, stream, k1, k2) >> 11) *
         0x1.0p-53;
}

// Uniform in [lo, hi).
constexpr double uniform_double(std::uint64_t seed, Stream stream,
                                std::uint64_t k1, std::uint64_t k2, double lo,
                                double hi) {
  return lo + (hi - lo) * unit_double(seed, stream, k1, k2);
}

}  // namespace acorn
