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

#include <array>
#include <cmath>
#include <compare>
#include <cstdint>
#include <optional>
#include <vector>

#include "acorn/common.hpp"
#include "acorn/rng.hpp"

namespace acorn {

// Dyadic cell address in the quadtree/octree over [-1,1]^d_in.
// Components at axes >= d_in stay zero so the same struct serves both
// dimensionalities. Ordering is (level, lexicographic idx).
struct BlockId {
  std::uint8_t level = 0;
  std::array<std::uint32_t, 3> idx{0, 0, 0};

  friend auto operator<=>(const BlockId&, const BlockId&) = default;
};

// Deepest representable tree. Bounded so that block volumes and their sums
// stay exact in double precision and packed 64-bit keys stay collision-free.
inline constexpr int kMaxTreeDepth = 16;

inline std::uint64_t pack_block(const BlockId& b) {
  return (static_cast<std::uint64_t>(b.level) << 54) |
         (static_cast<std::uint64_t>(b.idx[0]) << 36) |
         (static_cast<std::uint64_t>(b.idx[1]) << 18) |
         static_cast<std::uint64_t>(b.idx[2]);
}

struct BlockIdHash {
  std::size_t operator()(const BlockId& b) const {
    return static_cast<std::size_t>(mix64(pack_block(b)));
  }
};

inline int sibling_count(int d_in) { return 1 << d_in; }

inline double block_half_width(const BlockId& b) {
  return std::ldexp(1.0, -static_cast<int>(b.level));
}

inline double block_center(const BlockId& b, int axis) {
  return std::ldexp(1.0, 1 - static_cast<int>(b.level)) *
             (static_cast<double>(b.idx[axis]) + 0.5) -
         1.0;
}

inline double block_volume(const BlockId& b, int d_in) {
  return std::ldexp(1.0, (1 - static_cast<int>(b.level)) * d_in);
}

// Geometry bundle: center, half_width, volume.
struct BlockExtent {
  std::array<double, 3> center{0, 0, 0};
  double half_width = 1.0;
  double volume = 0.0;
};

inline BlockExtent block_extent(const BlockId& b, int d_in) {
  BlockExtent e;
  e.half_width = block_half_width(b);
  e.volume = block_volume(b, d_in);
  for (int a = 0; a < d_in; ++a) e.center[a] = block_center(b, a);
  return e;
}

// Block identity as the network sees it: center plus the level mapped
// linearly onto [-1,1] by max_depth.
struct GlobalBlockCoord {
  std::array<double, 3> center{0, 0, 0};
  double scale = -1.0;
};

inline GlobalBlockCoord global_coordinate(const BlockId& b, int d_in,
                                          int max_depth) {
  if (b.level > max_depth) {
    throw ConfigError("block level exceeds max_depth");
  }
  GlobalBlockCoord g;
  for (int a = 0; a < d_in; ++a) g.center[a] = block_center(b, a);
  g.scale = 2.0 * static_cast<double>(b.level) / max_depth - 1.0;
  return g;
}

inline std::optional<BlockId> parent(const BlockId& b) {
  if (b.level == 0) return std::nullopt;
  BlockId p;
  p.level = static_cast<std::uint8_t>(b.level - 1);
  for (int a = 0; a < 3; ++a) p.idx[a] = b.idx[a] >> 1;
  return p;
}

// Children in (level, lexicographic idx) order: the child counter's low bit
// drives the last axis, so axis d_in-1 varies fastest.
inline std::vector<BlockId> children(const BlockId& b, int d_in,
                                     int max_depth) {
  if (b.level >= max_depth) {
    throw ConfigError("children() called on a block at max_depth");
  }
  const int n = sibling_count(d_in);
  std::vector<BlockId> out(n);
  for (int k = 0; k < n; ++k) {
    BlockId c;
    c.level = static_cast<std::uint8_t>(b.level + 1);
    for (int a = 0; a < d_in; ++a) {
      c.idx[a] = (b.idx[a] << 1) | ((k >> (d_in - 1 - a)) & 1u);
    }
    out[k] = c;
  }
  return out;
}

// The other children of parent(b), in the same deterministic order.
inline std::vector<BlockId> siblings(const BlockId& b, int d_in) {
  auto p = parent(b);
  if (!p) throw ConfigError("root block has no siblings");
  // The parent is below max depth by construction; pass level+1 as bound.
  auto kids = children(*p, d_in, b.level);
  std::vector<BlockId> out;
  out.reserve(kids.size() - 1);
  for (const auto& k : kids) {
    if (k != b) out.push_back(k);
  }
  return out;
}

// Local [-1,1]^d coordinates within b of a global point x.
template <typename In, typename Out>
void to_local(const BlockId& b, int d_in, const In& x, Out&& x_local) {
  const double hw = block_half_width(b);
  for (int a = 0; a < d_in; ++a) {
    x_local[a] = (x[a] - block_center(b, a)) / hw;
  }
}

template <typename In, typename Out>
void to_global(const BlockId& b, int d_in, const In& x_local, Out&& x) {
  const double hw = block_half_width(b);
  for (int a = 0; a < d_in; ++a) {
    x[a] = block_center(b, a) + hw * x_local[a];
  }
}

}  // namespace acorn
