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

#include "acorn/partition.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "acorn/block.hpp"

namespace acorn {
namespace {

TEST(BlockId, OrderingIsLevelThenLexicographicIdx) {
  BlockId a{1, {0, 1, 0}};
  BlockId b{1, {1, 0, 0}};
  BlockId c{2, {0, 0, 0}};
  EXPECT_LT(a, b);
  EXPECT_LT(b, c);
  EXPECT_EQ(a, (BlockId{1, {0, 1, 0}}));
}

TEST(Block, ChildrenOfRoot2D) {
  const auto kids = children(BlockId{}, 2, 8);
  ASSERT_EQ(kids.size(), 4u);
  EXPECT_EQ(kids[0], (BlockId{1, {0, 0, 0}}));
  EXPECT_EQ(kids[1], (BlockId{1, {0, 1, 0}}));
  EXPECT_EQ(kids[2], (BlockId{1, {1, 0, 0}}));
  EXPECT_EQ(kids[3], (BlockId{1, {1, 1, 0}}));
}

TEST(Block, ChildrenOfRoot3DHasEight) {
  EXPECT_EQ(children(BlockId{}, 3, 6).size(), 8u);
}

TEST(Block, ChildrenAtMaxDepthThrows) {
  BlockId b{3, {1, 2, 0}};
  EXPECT_THROW(children(b, 2, 3), ConfigError);
}

TEST(Block, ParentInvertsChildren) {
  BlockId b{2, {3, 1, 0}};
  for (const auto& c : children(b, 2, 8)) {
    ASSERT_TRUE(parent(c).has_value());
    EXPECT_EQ(*parent(c), b);
  }
  EXPECT_EQ(*parent(BlockId{1, {1, 0, 0}}), (BlockId{}));
  EXPECT_FALSE(parent(BlockId{}).has_value());
}

TEST(Block, SiblingsAreTheOtherChildren) {
  const auto sibs = siblings(BlockId{1, {0, 0, 0}}, 2);
  ASSERT_EQ(sibs.size(), 3u);
  EXPECT_EQ(sibs[0], (BlockId{1, {0, 1, 0}}));
  EXPECT_EQ(sibs[1], (BlockId{1, {1, 0, 0}}));
  EXPECT_EQ(sibs[2], (BlockId{1, {1, 1, 0}}));
  EXPECT_EQ(siblings(BlockId{1, {0, 0, 0}}, 3).size(), 7u);
  EXPECT_THROW(siblings(BlockId{}, 2), ConfigError);
}

TEST(Block, SiblingRelationIsSymmetric) {
  BlockId b{3, {5, 2, 7}};
  for (const auto& s : siblings(b, 3)) {
    const auto back = siblings(s, 3);
    EXPECT_NE(std::find(back.begin(), back.end(), b), back.end());
  }
}

TEST(Block, ExtentOfRootAndQuadrant) {
  const auto root = block_extent(BlockId{}, 2);
  EXPECT_EQ(root.center[0], 0.0);
  EXPECT_EQ(root.center[1], 0.0);
  EXPECT_EQ(root.half_width, 1.0);
  EXPECT_EQ(root.volume, 4.0);

  const auto q = block_extent(BlockId{1, {0, 0, 0}}, 2);
  EXPECT_EQ(q.center[0], -0.5);
  EXPECT_EQ(q.center[1], -0.5);
  EXPECT_EQ(q.volume, 1.0);
}

TEST(Block, GlobalCoordinateScaleEndpoints) {
  EXPECT_EQ(global_coordinate(BlockId{}, 2, 8).scale, -1.0);
  BlockId deep{8, {0, 0, 0}};
  EXPECT_EQ(global_coordinate(deep, 2, 8).scale, 1.0);
  BlockId mid{4, {0, 0, 0}};
  EXPECT_EQ(global_coordinate(mid, 2, 8).scale, 0.0);
}

TEST(Partition, RootPartitionBlockCounts) {
  EXPECT_EQ(Partition(2, 0, 8).active().size(), 1u);
  EXPECT_EQ(Partition(2, 3, 8).active().size(), 64u);
  const Partition p3(3, 2, 6);
  EXPECT_EQ(p3.active().size(), 64u);
  for (const auto& b : p3.active()) {
    EXPECT_EQ(block_volume(b, 3), 0.125);
  }
  p3.validate();
}

TEST(Partition, RootPartitionRejectsBadArguments) {
  EXPECT_THROW(Partition(1, 0, 8), ConfigError);
  EXPECT_THROW(Partition(4, 0, 8), ConfigError);
  EXPECT_THROW(Partition(2, 9, 8), ConfigError);
  EXPECT_THROW(Partition(2, 0, 0), ConfigError);
  EXPECT_THROW(Partition(2, 0, kMaxTreeDepth + 1), ConfigError);
}

TEST(Partition, LocateAtRootIsIdentity) {
  Partition p(2, 0, 8);
  const double x[2] = {0.5, -0.25};
  const auto r = p.locate(x);
  EXPECT_EQ(r.id, BlockId{});
  EXPECT_FALSE(r.is_pruned);
  EXPECT_EQ(r.x_local[0], 0.5);
  EXPECT_EQ(r.x_local[1], -0.25);
}

TEST(Partition, LocateChildCenter) {
  Partition p(2, 1, 8);
  const double x[2] = {-0.5, -0.5};
  const auto r = p.locate(x);
  EXPECT_EQ(r.id, (BlockId{1, {0, 0, 0}}));
  EXPECT_EQ(r.x_local[0], 0.0);
  EXPECT_EQ(r.x_local[1], 0.0);
}

TEST(Partition, LocateBoundariesAreHalfOpen) {
  Partition p(2, 1, 8);
  // The shared face belongs to the upper-index block.
  const double mid[2] = {0.0, -0.5};
  EXPECT_EQ(p.locate(mid).id, (BlockId{1, {1, 0, 0}}));
  // The domain's +1 face belongs to the last block, -1 to the first.
  const double hi[2] = {1.0, 1.0};
  EXPECT_EQ(p.locate(hi).id, (BlockId{1, {1, 1, 0}}));
  EXPECT_EQ(p.locate(hi).x_local[0], 1.0);
  const double lo[2] = {-1.0, -1.0};
  EXPECT_EQ(p.locate(lo).id, (BlockId{1, {0, 0, 0}}));
  EXPECT_EQ(p.locate(lo).x_local[0], -1.0);
}

TEST(Partition, LocateRejectsOutOfDomain) {
  Partition p(2, 0, 8);
  const double x[2] = {1.0000001, 0.0};
  EXPECT_THROW(p.locate(x), ConfigError);
  const double nan_x[2] = {std::nan(""), 0.0};
  EXPECT_THROW(p.locate(nan_x), ConfigError);
}

TEST(Partition, LocateRoundTripsThroughLocalCoordinates) {
  Partition p(2, 3, 8);
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int k = 0; k < 10000; ++k) {
    const double x[2] = {u(gen), u(gen)};
    const auto r = p.locate(x);
    double back[2];
    to_global(r.id, 2, r.x_local, back);
    EXPECT_NEAR(back[0], x[0], 1e-14);
    EXPECT_NEAR(back[1], x[1], 1e-14);
    EXPECT_GE(r.x_local[0], -1.0);
    EXPECT_LE(r.x_local[0], 1.0);
  }
}

TEST(Partition, ApplyAllStayIsIdentity) {
  Partition p(2, 2, 8);
  const auto before = p.active();
  std::map<BlockId, Decision> d;
  for (const auto& b : p.active()) d[b] = Decision::Stay;
  p.apply_decisions(d);
  EXPECT_EQ(p.active(), before);
}

TEST(Partition, SplitRaisesCountByThree) {
  Partition p(2, 1, 8);
  std::map<BlockId, Decision> d;
  for (const auto& b : p.active()) d[b] = Decision::Stay;
  d[BlockId{1, {0, 0, 0}}] = Decision::Split;
  p.apply_decisions(d);
  EXPECT_EQ(p.active().size(), 7u);
  p.validate();
}

TEST(Partition, MergeDropsCountByThree) {
  Partition p(2, 1, 8);
  std::map<BlockId, Decision> d;
  for (const auto& b : p.active()) d[b] = Decision::Merge;
  p.apply_decisions(d);
  EXPECT_EQ(p.active().size(), 1u);
  EXPECT_TRUE(p.is_active(BlockId{}));
  p.validate();
}

TEST(Partition, MergeAfterSplitRestoresThePartition) {
  Partition p(2, 2, 8);
  const auto before = p.active();
  std::map<BlockId, Decision> d;
  for (const auto& b : p.active()) d[b] = Decision::Stay;
  const BlockId target{2, {1, 2, 0}};
  d[target] = Decision::Split;
  p.apply_decisions(d);
  EXPECT_EQ(p.active().size(), before.size() + 3);

  std::map<BlockId, Decision> d2;
  for (const auto& b : p.active()) d2[b] = Decision::Stay;
  for (const auto& c : children(target, 2, 8)) d2[c] = Decision::Merge;
  p.apply_decisions(d2);
  EXPECT_EQ(p.active(), before);
}

TEST(Partition, ApplyDecisionsValidatesItsInput) {
  Partition p(2, 1, 2);
  {
    std::map<BlockId, Decision> d;
    for (const auto& b : p.active()) d[b] = Decision::Stay;
    d.erase(BlockId{1, {0, 0, 0}});
    EXPECT_THROW(p.apply_decisions(d), ConfigError);
  }
  {
    // Partial merge group.
    std::map<BlockId, Decision> d;
    for (const auto& b : p.active()) d[b] = Decision::Stay;
    d[BlockId{1, {0, 0, 0}}] = Decision::Merge;
    EXPECT_THROW(p.apply_decisions(d), ConfigError);
  }
  {
    // Split at max depth: depth 2 partition, split to level 3 forbidden.
    Partition q(2, 2, 2);
    std::map<BlockId, Decision> d;
    for (const auto& b : q.active()) d[b] = Decision::Stay;
    d[BlockId{2, {0, 0, 0}}] = Decision::Split;
    EXPECT_THROW(q.apply_decisions(d), ConfigError);
  }
  {
    // Root cannot merge.
    Partition q(2, 0, 2);
    std::map<BlockId, Decision> d;
    d[BlockId{}] = Decision::Merge;
    EXPECT_THROW(q.apply_decisions(d), ConfigError);
  }
}

TEST(Partition, PruneFreezesABlock) {
  Partition p(2, 1, 8);
  const BlockId b{1, {0, 1, 0}};
  p.prune_block(b, {0.25});
  EXPECT_FALSE(p.is_active(b));
  ASSERT_TRUE(p.is_pruned(b));
  EXPECT_EQ(p.pruned_value(b), std::vector<double>{0.25});
  const double x[2] = {-0.5, 0.5};
  const auto r = p.locate(x);
  EXPECT_EQ(r.id, b);
  EXPECT_TRUE(r.is_pruned);
  p.validate();
  EXPECT_THROW(p.prune_block(b, {0.0}), ConfigError);
}

// Randomized mutation storm: split/merge/prune for many rounds, checking
// the tiling invariant and point coverage throughout.
TEST(Partition, CoverageSurvivesRandomMutations) {
  for (int d_in : {2, 3}) {
    Partition p(d_in, 1, 5);
    std::mt19937_64 gen(37 + d_in);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int round = 0; round < 40; ++round) {
      std::map<BlockId, Decision> d;
      // Group active blocks by parent to find mergeable families.
      std::map<BlockId, int> family;
      for (const auto& b : p.active()) {
        if (b.level > 0) family[*parent(b)]++;
      }
      for (const auto& b : p.active()) {
        const double r = std::uniform_real_distribution<double>(0, 1)(gen);
        if (r < 0.25 && b.level < p.max_depth()) {
          d[b] = Decision::Split;
        } else if (r < 0.35 && b.level > 0 &&
                   family[*parent(b)] == p.n_sibling()) {
          // Merge the whole family; overwrite any prior choices.
          d[b] = Decision::Merge;
          for (const auto& s : siblings(b, d_in)) d[s] = Decision::Merge;
        } else if (!d.count(b)) {
          d[b] = Decision::Stay;
        }
      }
      // Overwriting may have left inconsistent groups; make merges whole.
      for (auto& [b, dec] : d) {
        if (dec != Decision::Merge) continue;
        for (const auto& s : siblings(b, d_in)) {
          if (d.at(s) != Decision::Merge) dec = Decision::Stay;
        }
      }
      p.apply_decisions(d);
      if (round % 7 == 3 && !p.active().empty()) {
        auto it = p.active().begin();
        std::advance(it, gen() % p.active().size());
        p.prune_block(*it, std::vector<double>(1, 0.0));
      }
      p.validate();
      double vol = 0;
      for (const auto& b : p.active()) vol += block_volume(b, d_in);
      for (const auto& [b, v] : p.pruned()) vol += block_volume(b, d_in);
      EXPECT_EQ(vol, std::ldexp(1.0, d_in));
    }
    for (int k = 0; k < 100000 / 10; ++k) {
      double x[3] = {u(gen), u(gen), u(gen)};
      EXPECT_NO_THROW(p.locate(x));
    }
  }
}

TEST(Partition, JsonRoundTrip) {
  Partition p(2, 2, 8);
  std::map<BlockId, Decision> d;
  for (const auto& b : p.active()) d[b] = Decision::Stay;
  d[BlockId{2, {3, 3, 0}}] = Decision::Split;
  p.apply_decisions(d);
  p.prune_block(BlockId{2, {0, 0, 0}}, {0.5});

  const auto j = p.to_json();
  EXPECT_EQ(j["d_in"], 2);
  EXPECT_EQ(j["max_depth"], 8);
  const Partition q = Partition::from_json(j);
  EXPECT_EQ(q.active(), p.active());
  EXPECT_EQ(q.pruned(), p.pruned());
  EXPECT_EQ(q.to_json(), j);
}

TEST(Partition, JsonRejectsMalformedDocuments) {
  auto j = Partition(2, 1, 8).to_json();
  j["active"].push_back(nlohmann::json::array({1}));
  EXPECT_THROW(Partition::from_json(j), IoError);

  auto overlapping = Partition(2, 1, 8).to_json();
  overlapping["active"].push_back(nlohmann::json::array({0, 0, 0}));
  EXPECT_THROW(Partition::from_json(overlapping), NumericError);
}

TEST(Partition, SvgOverlayListsEveryBlock) {
  Partition p(2, 1, 8);
  p.prune_block(BlockId{1, {0, 0, 0}}, {0.0});
  const std::string svg = p.to_svg();
  std::size_t rects = 0;
  for (std::size_t pos = svg.find("<rect"); pos != std::string::npos;
       pos = svg.find("<rect", pos + 1)) {
    ++rects;
  }
  EXPECT_EQ(rects, 4u);
  EXPECT_NE(svg.find("stroke-dasharray"), std::string::npos);
  EXPECT_THROW(Partition(3, 0, 6).to_svg(), ConfigError);
}

}  // namespace
}  // namespace acorn
