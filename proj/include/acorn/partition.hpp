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

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "acorn/block.hpp"
#include "acorn/common.hpp"

namespace acorn {

enum class Decision : std::uint8_t { Stay = 0, Merge = 1, Split = 2 };

struct LocateResult {
  BlockId id;
  bool is_pruned = false;
  std::array<double, 3> x_local{0, 0, 0};
};

// Adaptive dyadic decomposition of [-1,1]^d_in. Active and pruned blocks
// together tile the domain exactly: no block is an ancestor or descendant
// of another, and volumes sum to 2^d_in. Mutations preserve this.
//
// Pruned blocks are frozen leaves carrying one constant output value; they
// take no samples, never re-enter allocation, and do not count against the
// block budget.
class Partition {
 public:
  // Uniform grid of 2^(d_in*initial_level) active blocks.
  Partition(int d_in, int initial_level, int max_depth)
      : d_in_(d_in), max_depth_(max_depth) {
    if (d_in != 2 && d_in != 3) {
      throw ConfigError("d_in must be 2 or 3");
    }
    if (max_depth < 1 || max_depth > kMaxTreeDepth) {
      throw ConfigError("max_depth must be in [1, " +
                        std::to_string(kMaxTreeDepth) + "]");
    }
    if (initial_level < 0 || initial_level > max_depth) {
      throw ConfigError("initial_level must be in [0, max_depth]");
    }
    const std::uint32_t n = 1u << initial_level;
    BlockId b;
    b.level = static_cast<std::uint8_t>(initial_level);
    for (std::uint32_t i0 = 0; i0 < n; ++i0) {
      for (std::uint32_t i1 = 0; i1 < n; ++i1) {
        b.idx[0] = i0;
        b.idx[1] = i1;
        if (d_in == 2) {
          active_.insert(b);
        } else {
          for (std::uint32_t i2 = 0; i2 < n; ++i2) {
            b.idx[2] = i2;
            active_.insert(b);
          }
        }
      }
    }
  }

  int d_in() const { return d_in_; }
  int max_depth() const { return max_depth_; }
  int n_sibling() const { return sibling_count(d_in_); }

  const std::set<BlockId>& active() const { return active_; }
  const std::map<BlockId, std::vector<double>>& pruned() const {
    return pruned_;
  }

  bool is_active(const BlockId& b) const { return active_.count(b) != 0; }
  bool is_pruned(const BlockId& b) const { return pruned_.count(b) != 0; }

  const std::vector<double>& pruned_value(const BlockId& b) const {
    auto it = pruned_.find(b);
    if (it == pruned_.end()) throw ConfigError("block is not pruned");
    return it->second;
  }

  // Walks from the root to the unique covering leaf. Shared faces belong to
  // the upper-index block (half-open cells); the domain's +1 face belongs to
  // the last block, which the descent rule (x >= center goes up) yields
  // naturally.
  template <typename Vec>
  LocateResult locate(const Vec& x) const {
    for (int a = 0; a < d_in_; ++a) {
      if (!(x[a] >= -1.0 && x[a] <= 1.0)) {
        throw ConfigError("locate: point outside [-1,1]^d");
      }
    }
    BlockId b;
    while (true) {
      if (is_active(b)) break;
      auto it = pruned_.find(b);
      if (it != pruned_.end()) {
        LocateResult r;
        r.id = b;
        r.is_pruned = true;
        to_local(b, d_in_, x, r.x_local);
        return r;
      }
      if (b.level >= max_depth_) {
        throw NumericError("locate: partition does not cover the point");
      }
      BlockId c;
      c.level = static_cast<std::uint8_t>(b.level + 1);
      for (int a = 0; a < d_in_; ++a) {
        const double mid = block_center(b, a);
        c.idx[a] = (b.idx[a] << 1) | (x[a] >= mid ? 1u : 0u);
      }
      b = c;
    }
    LocateResult r;
    r.id = b;
    to_local(b, d_in_, x, r.x_local);
    return r;
  }

  // Applies one decision per active block. Merge requires the full sibling
  // group active and unanimous; Split requires room below max_depth.
  void apply_decisions(const std::map<BlockId, Decision>& decisions) {
    for (const auto& b : active_) {
      if (!decisions.count(b)) {
        throw ConfigError("apply_decisions: missing decision for a block");
      }
    }
    std::set<BlockId> next;
    std::set<BlockId> merged_parents;
    for (const auto& [b, d] : decisions) {
      if (!is_active(b)) {
        throw ConfigError("apply_decisions: decision for non-active block");
      }
      switch (d) {
        case Decision::Stay:
          next.insert(b);
          break;
        case Decision::Split: {
          if (b.level >= max_depth_) {
            throw ConfigError("apply_decisions: split at max_depth");
          }
          for (const auto& c : children(b, d_in_, max_depth_)) next.insert(c);
          break;
        }
        case Decision::Merge: {
          auto p = parent(b);
          if (!p) throw ConfigError("apply_decisions: merge of the root");
          for (const auto& s : siblings(b, d_in_)) {
            auto it = decisions.find(s);
            if (it == decisions.end() || it->second != Decision::Merge ||
                !is_active(s)) {
              throw ConfigError("apply_decisions: partial merge group");
            }
          }
          merged_parents.insert(*p);
          break;
        }
      }
    }
    for (const auto& p : merged_parents) next.insert(p);
    active_ = std::move(next);
  }

  // Freezes an active block at a constant value.
  void prune_block(const BlockId& b, std::vector<double> value) {
    if (!is_active(b)) {
      throw ConfigError("prune_block: block is not active");
    }
    active_.erase(b);
    pruned_.emplace(b, std::move(value));
  }

  // Exact tiling check: no ancestor/descendant pairs and volumes summing to
  // 2^d_in (all terms are dyadic, so the double sum is exact).
  void validate() const {
    double vol = 0.0;
    auto visit = [&](const BlockId& b) {
      if (b.level > max_depth_) {
        throw NumericError("partition: block below max_depth");
      }
      for (int a = 0; a < d_in_; ++a) {
        if (b.idx[a] >= (1u << b.level)) {
          throw NumericError("partition: idx out of range for level");
        }
      }
      for (auto p = parent(b); p; p = parent(*p)) {
        if (is_active(*p) || is_pruned(*p)) {
          throw NumericError("partition: nested blocks");
        }
      }
      vol += block_volume(b, d_in_);
    };
    for (const auto& b : active_) visit(b);
    for (const auto& [b, v] : pruned_) visit(b);
    if (vol != std::ldexp(1.0, d_in_)) {
      throw NumericError("partition: volumes do not tile the domain");
    }
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["d_in"] = d_in_;
    j["max_depth"] = max_depth_;
    auto ids = nlohmann::json::array();
    for (const auto& b : active_) {
      auto e = nlohmann::json::array();
      e.push_back(static_cast<int>(b.level));
      for (int a = 0; a < d_in_; ++a) e.push_back(b.idx[a]);
      ids.push_back(std::move(e));
    }
    j["active"] = std::move(ids);
    auto pr = nlohmann::json::array();
    for (const auto& [b, v] : pruned_) {
      auto e = nlohmann::json::array();
      e.push_back(static_cast<int>(b.level));
      for (int a = 0; a < d_in_; ++a) e.push_back(b.idx[a]);
      for (double x : v) e.push_back(x);
      pr.push_back(std::move(e));
    }
    j["pruned"] = std::move(pr);
    return j;
  }

  static Partition from_json(const nlohmann::json& j) {
    Partition p(j.at("d_in").get<int>(), 0, j.at("max_depth").get<int>());
    p.active_.clear();
    const int d = p.d_in_;
    for (const auto& e : j.at("active")) {
      p.active_.insert(parse_id(e, d));
    }
    for (const auto& e : j.at("pruned")) {
      BlockId b = parse_id(e, d);
      std::vector<double> v;
      for (std::size_t k = 1 + d; k < e.size(); ++k) {
        v.push_back(e[k].get<double>());
      }
      p.pruned_.emplace(b, std::move(v));
    }
    p.validate();
    return p;
  }

  // Block outlines over [-1,1]^2 mapped to a square canvas, y flipped to
  // image convention. Stroke width grows with level; pruned blocks dashed.
  std::string to_svg(int canvas = 1024) const {
    if (d_in_ != 2) throw ConfigError("SVG overlay requires d_in=2");
    std::ostringstream out;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << canvas
        << "\" height=\"" << canvas << "\" viewBox=\"0 0 " << canvas << " "
        << canvas << "\">\n";
    auto rect = [&](const BlockId& b, bool dashed) {
      const double hw = block_half_width(b);
      const double side = canvas * hw;
      const double x = (block_center(b, 0) - hw + 1.0) * 0.5 * canvas;
      const double y = (1.0 - (block_center(b, 1) + hw)) * 0.5 * canvas;
      out << "  <rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << side
          << "\" height=\"" << side << "\" fill=\"none\" stroke=\"black\""
          << " stroke-width=\"" << std::max(0.25, 0.25 * b.level) << "\"";
      if (dashed) out << " stroke-dasharray=\"4 3\"";
      out << "/>\n";
    };
    for (const auto& b : active_) rect(b, false);
    for (const auto& [b, v] : pruned_) rect(b, true);
    out << "</svg>\n";
    return out.str();
  }

 private:
  static BlockId parse_id(const nlohmann::json& e, int d) {
    if (!e.is_array() || e.size() < static_cast<std::size_t>(1 + d)) {
      throw IoError("partition JSON: malformed block entry");
    }
    BlockId b;
    const int lv = e[0].get<int>();
    if (lv < 0 || lv > kMaxTreeDepth) {
      throw IoError("partition JSON: invalid level");
    }
    b.level = static_cast<std::uint8_t>(lv);
    for (int a = 0; a < d; ++a) {
      b.idx[a] = e[1 + a].get<std::uint32_t>();
    }
    return b;
  }

  int d_in_;
  int max_depth_;
  std::set<BlockId> active_;
  std::map<BlockId, std::vector<double>> pruned_;
};

}  // namespace acorn
