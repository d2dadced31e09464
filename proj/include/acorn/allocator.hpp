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

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "acorn/block.hpp"
#include "acorn/common.hpp"
#include "acorn/partition.hpp"

namespace acorn {

// Estimated volume-weighted losses for the three choices a block has:
// coarsen into the parent (up), keep its scale (eq), refine into children
// (down).
struct WeightTriple {
  double w_up = 0.0;
  double w_eq = 0.0;
  double w_down = 0.0;
};

struct ErrorHistoryEntry {
  double w_eq = 0.0;
  std::int64_t iteration = 0;
};

// Latest volume-weighted error recorded for every block ever fitted.
// Estimates from any past iteration are used verbatim.
using ErrorHistory = std::map<BlockId, ErrorHistoryEntry>;

// One block-allocation instance: decide merge/stay/split per active block,
// minimizing total estimated error, with the resulting partition capped at
// `budget` blocks. A merging block counts 1/N_S, staying 1, splitting N_S;
// the implementation scales all counts by N_S to stay in integers.
struct AllocationProblem {
  int d_in = 2;
  int n_sibling = 4;
  std::int64_t budget = 0;
  std::vector<BlockId> blocks;  // sorted (level, lexicographic idx)
  std::vector<WeightTriple> weights;
  std::vector<std::uint8_t> can_split;
  std::vector<std::uint8_t> can_merge;
  // Complete active sibling groups as sorted index lists into `blocks`.
  std::vector<std::vector<int>> merge_groups;
};

using DecisionVector = std::vector<Decision>;

struct FeasibilityResult {
  bool ok = false;
  std::int64_t projected_blocks = 0;
};

inline double compute_stay_weight(double volume, double mean_error) {
  if (!(volume > 0.0) || !(mean_error >= 0.0) || !std::isfinite(mean_error)) {
    throw NumericError("stay weight needs volume > 0 and finite error >= 0");
  }
  return volume * mean_error;
}

// Coarsening estimate: the parent's recorded error split evenly across the
// group if the parent was ever fitted, otherwise a pessimistic (N_S+alpha)
// multiple of the block's own weighted error.
inline double compute_merge_weight(const BlockId& block, double w_eq,
                                   const ErrorHistory& history, int n_sibling,
                                   double alpha) {
  if (!(alpha > 0.0)) throw ConfigError("alpha must be positive");
  if (auto p = parent(block)) {
    auto it = history.find(*p);
    if (it != history.end()) {
      return it->second.w_eq / n_sibling;
    }
  }
  return (n_sibling + alpha) * w_eq;
}

// Refinement estimate: the children's recorded errors summed if all of them
// were fitted before, otherwise an optimistic (1/N_S - beta) fraction of the
// block's own weighted error.
inline double compute_split_weight(const BlockId& block, double w_eq,
                                   const ErrorHistory& history, int d_in,
                                   double beta) {
  const int n_sibling = sibling_count(d_in);
  if (!(beta > 0.0) || !(beta < 1.0 / n_sibling)) {
    throw ConfigError("beta must be in (0, 1/N_S)");
  }
  // Child addresses are valid regardless of any depth cap; a block that
  // cannot split never has its w_down read.
  const auto kids = children(block, d_in, block.level + 1);
  double sum = 0.0;
  for (const auto& c : kids) {
    auto it = history.find(c);
    if (it == history.end()) {
      return (1.0 / n_sibling - beta) * w_eq;
    }
    sum += it->second.w_eq;
  }
  return sum;
}

// Assembles the allocation instance for the current active set.
inline AllocationProblem build_problem(
    const Partition& p, const std::map<BlockId, double>& errors,
    const ErrorHistory& history, std::int64_t budget, double alpha,
    double beta) {
  if (budget <= 0) throw ConfigError("block budget must be positive");
  AllocationProblem prob;
  prob.d_in = p.d_in();
  prob.n_sibling = p.n_sibling();
  prob.budget = budget;
  prob.blocks.assign(p.active().begin(), p.active().end());
  const int n = static_cast<int>(prob.blocks.size());
  prob.weights.resize(n);
  prob.can_split.resize(n);
  prob.can_merge.resize(n);
  std::map<BlockId, std::vector<int>> by_parent;
  for (int i = 0; i < n; ++i) {
    const BlockId& b = prob.blocks[i];
    auto it = errors.find(b);
    if (it == errors.end()) {
      throw ConfigError("build_problem: missing error for an active block");
    }
    const double w_eq = compute_stay_weight(block_volume(b, prob.d_in),
                                            it->second);
    WeightTriple w;
    w.w_eq = w_eq;
    w.w_up = compute_merge_weight(b, w_eq, history, prob.n_sibling, alpha);
    w.w_down = compute_split_weight(b, w_eq, history, prob.d_in, beta);
    prob.weights[i] = w;
    prob.can_split[i] = b.level < p.max_depth() ? 1 : 0;
    bool mergeable = b.level >= 1;
    if (mergeable) {
      for (const auto& s : siblings(b, prob.d_in)) {
        if (!p.is_active(s)) {
          mergeable = false;
          break;
        }
      }
    }
    prob.can_merge[i] = mergeable ? 1 : 0;
    if (mergeable) by_parent[*parent(b)].push_back(i);
  }
  for (auto& [pid, members] : by_parent) {
    if (static_cast<int>(members.size()) == prob.n_sibling) {
      prob.merge_groups.push_back(std::move(members));
    }
  }
  return prob;
}

namespace detail {

// The solver and its brute-force oracle share this decomposition: items are
// complete sibling groups plus singletons, ordered by first member; each
// item's candidate options are ordered by per-block preference rank
// (stay=0 < merge=1 < split=2, compared lexicographically over members).
// Both solvers therefore return the identical decision vector, not just the
// same objective value.
struct ItemOption {
  std::vector<Decision> member_decisions;
  double cost = 0.0;
  std::int64_t units = 0;  // block count scaled by N_S
};

struct Item {
  std::vector<int> members;  // indices into prob.blocks, ascending
  std::vector<ItemOption> options;
};

inline std::vector<std::uint8_t> option_ranks(const ItemOption& o) {
  std::vector<std::uint8_t> r(o.member_decisions.size());
  for (std::size_t j = 0; j < r.size(); ++j) {
    r[j] = static_cast<std::uint8_t>(o.member_decisions[j]);
  }
  return r;
}

inline std::vector<Item> build_items(const AllocationProblem& prob) {
  const int n = static_cast<int>(prob.blocks.size());
  const int ns = prob.n_sibling;
  std::vector<int> group_of(n, -1);
  for (std::size_t g = 0; g < prob.merge_groups.size(); ++g) {
    for (int i : prob.merge_groups[g]) group_of[i] = static_cast<int>(g);
  }
  std::vector<Item> items;
  std::vector<std::uint8_t> emitted(prob.merge_groups.size(), 0);
  for (int i = 0; i < n; ++i) {
    const int g = group_of[i];
    if (g < 0) {
      Item it;
      it.members = {i};
      ItemOption stay;
      stay.member_decisions = {Decision::Stay};
      stay.cost = prob.weights[i].w_eq;
      stay.units = ns;
      it.options.push_back(std::move(stay));
      if (prob.can_split[i]) {
        ItemOption split;
        split.member_decisions = {Decision::Split};
        split.cost = prob.weights[i].w_down;
        split.units = static_cast<std::int64_t>(ns) * ns;
        it.options.push_back(std::move(split));
      }
      items.push_back(std::move(it));
      continue;
    }
    if (emitted[g]) continue;
    emitted[g] = 1;
    Item it;
    it.members = prob.merge_groups[g];
    const int m = static_cast<int>(it.members.size());
    // Stay/split combos in rank-vector order: combo bit (m-1-j) splits
    // member j, so ascending combo value is lexicographic preference order.
    // The all-merge option slots in after every combo whose first member
    // stays and before every combo that splits it.
    for (int v = 0; v < (1 << m); ++v) {
      if (v == (1 << (m - 1))) {
        ItemOption merge;
        merge.member_decisions.assign(m, Decision::Merge);
        double cost = 0.0;
        for (int j = 0; j < m; ++j) cost += prob.weights[it.members[j]].w_up;
        merge.cost = cost;
        merge.units = ns;
        it.options.push_back(std::move(merge));
      }
      ItemOption o;
      o.member_decisions.resize(m);
      double cost = 0.0;
      std::int64_t units = 0;
      bool valid = true;
      for (int j = 0; j < m; ++j) {
        const int bi = it.members[j];
        const bool split = (v >> (m - 1 - j)) & 1;
        if (split && !prob.can_split[bi]) {
          valid = false;
          break;
        }
        o.member_decisions[j] = split ? Decision::Split : Decision::Stay;
        cost += split ? prob.weights[bi].w_down : prob.weights[bi].w_eq;
        units += split ? static_cast<std::int64_t>(ns) * ns : ns;
      }
      if (!valid) continue;
      o.cost = cost;
      o.units = units;
      it.options.push_back(std::move(o));
    }
    items.push_back(std::move(it));
  }
  return items;
}

// Collapses a group item's combo options per distinct unit count, keeping
// the preference-first minimum-cost representative of each bucket. The
// representative set preserves both optimality and the lexicographic
// tie-break: any optimal option is cost-tied with its bucket's
// representative, which is preference-first within the bucket.
inline std::vector<int> candidate_options(const Item& item) {
  std::vector<int> reps;
  std::map<std::int64_t, int> best_by_units;  // units -> option index
  for (int oi = 0; oi < static_cast<int>(item.options.size()); ++oi) {
    const auto& o = item.options[oi];
    auto [it, inserted] = best_by_units.try_emplace(o.units, oi);
    if (!inserted && o.cost < item.options[it->second].cost) {
      it->second = oi;
    }
  }
  for (int oi = 0; oi < static_cast<int>(item.options.size()); ++oi) {
    for (const auto& [u, best] : best_by_units) {
      if (best == oi) {
        reps.push_back(oi);
        break;
      }
    }
  }
  return reps;
}

}  // namespace detail

// Total estimated error of a decision assignment, summed in block order.
// Both solvers report objectives through this one function so comparisons
// see identical floating-point associations.
inline double objective_value(const AllocationProblem& prob,
                              const DecisionVector& d) {
  if (d.size() != prob.blocks.size()) {
    throw ConfigError("objective_value: size mismatch");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    switch (d[i]) {
      case Decision::Stay:
        sum += prob.weights[i].w_eq;
        break;
      case Decision::Merge:
        sum += prob.weights[i].w_up;
        break;
      case Decision::Split:
        sum += prob.weights[i].w_down;
        break;
    }
  }
  return sum;
}

// Validates an assignment and projects the resulting block count.
inline FeasibilityResult feasible(const DecisionVector& d,
                                  const AllocationProblem& prob) {
  FeasibilityResult r;
  if (d.size() != prob.blocks.size()) return r;
  const int ns = prob.n_sibling;
  bool ok = true;
  std::int64_t units = 0;
  std::vector<int> group_of(prob.blocks.size(), -1);
  for (std::size_t g = 0; g < prob.merge_groups.size(); ++g) {
    for (int i : prob.merge_groups[g]) group_of[i] = static_cast<int>(g);
  }
  for (std::size_t i = 0; i < d.size(); ++i) {
    switch (d[i]) {
      case Decision::Stay:
        units += ns;
        break;
      case Decision::Split:
        units += static_cast<std::int64_t>(ns) * ns;
        if (!prob.can_split[i]) ok = false;
        break;
      case Decision::Merge: {
        units += 1;
        if (!prob.can_merge[i] || group_of[i] < 0) {
          ok = false;
          break;
        }
        for (int j : prob.merge_groups[group_of[i]]) {
          if (d[j] != Decision::Merge) ok = false;
        }
        break;
      }
    }
  }
  r.projected_blocks = (units + ns - 1) / ns;
  r.ok = ok && units <= static_cast<std::int64_t>(ns) * prob.budget;
  return r;
}

// Exact solve by dynamic programming over the scaled block budget.
// Returns the optimal assignment that is lexicographically first by
// per-item preference (stay > merge > split, items in block order).
inline DecisionVector solve_exact(const AllocationProblem& prob) {
  const auto items = detail::build_items(prob);
  const int ni = static_cast<int>(items.size());
  const std::int64_t ns = prob.n_sibling;
  std::int64_t capacity = ns * prob.budget;
  // Capacity beyond what every item splitting could use is dead weight.
  std::int64_t max_use = 0;
  for (const auto& it : items) {
    std::int64_t mx = 0;
    for (const auto& o : it.options) mx = std::max(mx, o.units);
    max_use += mx;
  }
  capacity = std::min(capacity, max_use);

  std::vector<std::vector<int>> cands(ni);
  for (int i = 0; i < ni; ++i) cands[i] = detail::candidate_options(items[i]);

  const double inf = std::numeric_limits<double>::infinity();
  const std::int64_t width = capacity + 1;
  // choice[i*width + c]: preference-first optimal option for item i with c
  // scaled units left, or -1 if no option fits.
  std::vector<std::int16_t> choice(
      static_cast<std::size_t>(ni) * static_cast<std::size_t>(width), -1);
  std::vector<double> next(static_cast<std::size_t>(width), 0.0);
  std::vector<double> cur(static_cast<std::size_t>(width), 0.0);
  for (int i = ni - 1; i >= 0; --i) {
    const auto& item = items[i];
    std::int16_t* row = choice.data() + static_cast<std::size_t>(i) * width;
    for (std::int64_t c = 0; c <= capacity; ++c) {
      double best = inf;
      std::int16_t arg = -1;
      for (int oi : cands[i]) {
        const auto& o = item.options[oi];
        if (o.units > c) continue;
        const double v = o.cost + next[c - o.units];
        if (v < best) {
          best = v;
          arg = static_cast<std::int16_t>(oi);
        }
      }
      cur[c] = best;
      row[c] = arg;
    }
    std::swap(cur, next);
  }
  if (ni > 0 && !std::isfinite(next[capacity])) {
    std::int64_t min_units = 0;
    for (const auto& it : items) {
      std::int64_t mn = std::numeric_limits<std::int64_t>::max();
      for (const auto& o : it.options) mn = std::min(mn, o.units);
      min_units += mn;
    }
    throw InfeasibleError("block budget infeasible", (min_units + ns - 1) / ns);
  }

  DecisionVector out(prob.blocks.size(), Decision::Stay);
  std::int64_t c = capacity;
  for (int i = 0; i < ni; ++i) {
    const std::int16_t oi = choice[static_cast<std::size_t>(i) * width + c];
    if (oi < 0) throw NumericError("solver reconstruction lost feasibility");
    const auto& o = items[i].options[oi];
    for (std::size_t j = 0; j < items[i].members.size(); ++j) {
      out[items[i].members[j]] = o.member_decisions[j];
    }
    c -= o.units;
  }
  return out;
}

// Exhaustive oracle over the same item/option decomposition. First-found
// strict improvement in depth-first preference order reproduces
// solve_exact's tie-break exactly.
inline DecisionVector brute_force_solve(const AllocationProblem& prob) {
  if (prob.blocks.size() > 16) {
    throw ConfigError("brute_force_solve: instance too large");
  }
  const auto items = detail::build_items(prob);
  const int ni = static_cast<int>(items.size());
  const std::int64_t capacity =
      static_cast<std::int64_t>(prob.n_sibling) * prob.budget;

  std::vector<int> pick(ni, -1);
  std::vector<int> best_pick;
  double best_cost = std::numeric_limits<double>::infinity();
  bool found = false;

  auto rec = [&](auto&& self, int i, double cost, std::int64_t units) -> void {
    if (units > capacity) return;
    if (i == ni) {
      if (cost < best_cost) {
        best_cost = cost;
        best_pick = pick;
        found = true;
      }
      return;
    }
    for (int oi = 0; oi < static_cast<int>(items[i].options.size()); ++oi) {
      const auto& o = items[i].options[oi];
      pick[i] = oi;
      self(self, i + 1, cost + o.cost, units + o.units);
    }
    pick[i] = -1;
  };
  rec(rec, 0, 0.0, 0);

  if (!found) {
    std::int64_t min_units = 0;
    for (const auto& it : items) {
      std::int64_t mn = std::numeric_limits<std::int64_t>::max();
      for (const auto& o : it.options) mn = std::min(mn, o.units);
      min_units += mn;
    }
    throw InfeasibleError("block budget infeasible",
                          (min_units + prob.n_sibling - 1) / prob.n_sibling);
  }
  DecisionVector out(prob.blocks.size(), Decision::Stay);
  for (int i = 0; i < ni; ++i) {
    const auto& o = items[i].options[best_pick[i]];
    for (std::size_t j = 0; j < items[i].members.size(); ++j) {
      out[items[i].members[j]] = o.member_decisions[j];
    }
  }
  return out;
}

inline std::string decision_name(Decision d) {
  switch (d) {
    case Decision::Stay:
      return "stay";
    case Decision::Merge:
      return "merge";
    case Decision::Split:
      return "split";
  }
  return "stay";
}

inline nlohmann::json problem_to_json(const AllocationProblem& prob) {
  nlohmann::json j;
  j["d_in"] = prob.d_in;
  j["n_sibling"] = prob.n_sibling;
  j["budget"] = prob.budget;
  auto blocks = nlohmann::json::array();
  for (std::size_t i = 0; i < prob.blocks.size(); ++i) {
    nlohmann::json e;
    const BlockId& b = prob.blocks[i];
    auto id = nlohmann::json::array();
    id.push_back(static_cast<int>(b.level));
    for (int a = 0; a < prob.d_in; ++a) id.push_back(b.idx[a]);
    e["id"] = std::move(id);
    e["w_up"] = prob.weights[i].w_up;
    e["w_eq"] = prob.weights[i].w_eq;
    e["w_down"] = prob.weights[i].w_down;
    e["can_split"] = prob.can_split[i] != 0;
    e["can_merge"] = prob.can_merge[i] != 0;
    blocks.push_back(std::move(e));
  }
  j["blocks"] = std::move(blocks);
  j["merge_groups"] = prob.merge_groups;
  return j;
}

inline AllocationProblem problem_from_json(const nlohmann::json& j) {
  AllocationProblem prob;
  prob.d_in = j.at("d_in").get<int>();
  prob.n_sibling = j.at("n_sibling").get<int>();
  prob.budget = j.at("budget").get<std::int64_t>();
  for (const auto& e : j.at("blocks")) {
    const auto& id = e.at("id");
    BlockId b;
    b.level = static_cast<std::uint8_t>(id.at(0).get<int>());
    for (int a = 0; a < prob.d_in; ++a) {
      b.idx[a] = id.at(1 + a).get<std::uint32_t>();
    }
    prob.blocks.push_back(b);
    WeightTriple w;
    w.w_up = e.at("w_up").get<double>();
    w.w_eq = e.at("w_eq").get<double>();
    w.w_down = e.at("w_down").get<double>();
    prob.weights.push_back(w);
    prob.can_split.push_back(e.at("can_split").get<bool>() ? 1 : 0);
    prob.can_merge.push_back(e.at("can_merge").get<bool>() ? 1 : 0);
  }
  prob.merge_groups =
      j.at("merge_groups").get<std::vector<std::vector<int>>>();
  return prob;
}

inline nlohmann::json decisions_to_json(const DecisionVector& d) {
  auto j = nlohmann::json::array();
  for (Decision x : d) j.push_back(decision_name(x));
  return j;
}

inline DecisionVector decisions_from_json(const nlohmann::json& j) {
  DecisionVector d;
  for (const auto& e : j) {
    const std::string s = e.get<std::string>();
    if (s == "stay") {
      d.push_back(Decision::Stay);
    } else if (s == "merge") {
      d.push_back(Decision::Merge);
    } else if (s == "split") {
      d.push_back(Decision::Split);
    } else {
      throw IoError("unknown decision name: " + s);
    }
  }
  return d;
}

}  // namespace acorn
