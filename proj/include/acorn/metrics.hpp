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
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <vector>

#include "acorn/net.hpp"
#include "acorn/partition.hpp"
#include "acorn/signals.hpp"
#include "acorn/threading.hpp"

namespace acorn {

// Regular sample grid over [-1,1]^d, align-corners per axis. 2D layout
// matches ImageSignal (axis 1 = rows, axis 0 = columns, channels
// interleaved); 3D layout matches VOX1 (axis 0 fastest), one channel.
struct EvalGrid {
  int d = 2;
  std::array<int, 3> res{0, 0, 1};
  int channels = 1;
  std::vector<double> values;

  std::int64_t points() const {
    std::int64_t n = 1;
    for (int a = 0; a < d; ++a) n *= res[a];
    return n;
  }
  // Grid index along each axis of one flat point index.
  std::array<int, 3> coords(std::int64_t flat) const {
    std::array<int, 3> c{0, 0, 0};
    if (d == 2) {
      c[0] = static_cast<int>(flat % res[0]);
      c[1] = static_cast<int>(flat / res[0]);
    } else {
      c[0] = static_cast<int>(flat % res[0]);
      c[1] = static_cast<int>((flat / res[0]) % res[1]);
      c[2] = static_cast<int>(flat / (static_cast<std::int64_t>(res[0]) * res[1]));
    }
    return c;
  }
  std::array<double, 3> point(std::int64_t flat) const {
    const std::array<int, 3> c = coords(flat);
    std::array<double, 3> x{0, 0, 0};
    for (int a = 0; a < d; ++a) {
      x[a] = -1.0 + 2.0 * c[a] / (res[a] - 1);
    }
    return x;
  }
};

inline EvalGrid make_eval_grid(int d, const std::array<int, 3>& res,
                               int channels) {
  for (int a = 0; a < d; ++a) {
    if (res[a] < 2) throw ConfigError("eval resolution must be >= 2 per axis");
  }
  EvalGrid g;
  g.d = d;
  g.res = res;
  g.res[2] = d == 2 ? 1 : res[2];
  g.channels = channels;
  g.values.assign(static_cast<std::size_t>(g.points()) * channels, 0.0);
  return g;
}

// Evaluate the model over a regular grid. Each point is decoded through its
// covering block: pruned blocks emit their stored constant, active blocks
// run the encoder exactly once and then decode per point, so the result is
// identical to evaluating every point through the naive single-point
// pipeline.
inline EvalGrid render_full(const AcornModel& model, const Partition& part,
                            const std::array<int, 3>& res, ThreadPool* pool) {
  if (part.d_in() != model.cfg.d_in) {
    throw ConfigError("render_full: partition and model dimensionality differ");
  }
  EvalGrid grid = make_eval_grid(model.cfg.d_in, res, model.cfg.d_out);

  std::map<BlockId, std::vector<std::int64_t>> grouped;
  for (std::int64_t i = 0; i < grid.points(); ++i) {
    const std::array<double, 3> x = grid.point(i);
    const LocateResult loc = part.locate(x);
    if (loc.is_pruned) {
      const std::vector<double>& v = part.pruned_value(loc.id);
      for (int c = 0; c < grid.channels; ++c) {
        grid.values[i * grid.channels + c] = v.size() == 1 ? v[0] : v[c];
      }
    } else {
      grouped[loc.id].push_back(i);
    }
  }

  std::vector<const std::pair<const BlockId, std::vector<std::int64_t>>*> jobs;
  jobs.reserve(grouped.size());
  for (const auto& kv : grouped) jobs.push_back(&kv);

  const auto render_block = [&](int j) {
    const BlockId& b = jobs[j]->first;
    const std::vector<std::int64_t>& idx = jobs[j]->second;
    const FeatureGrid feats = encoder_forward(
        model, global_coordinate(b, part.d_in(), part.max_depth()));
    MlpCache scratch;
    std::array<double, 3> xl{0, 0, 0};
    for (const std::int64_t i : idx) {
      const std::array<double, 3> x = grid.point(i);
      to_local(b, part.d_in(), x, xl);
      const Eigen::VectorXd gamma = lin_interp(feats, xl);
      const Eigen::VectorXd y =
          decoder_forward_batch(model, gamma.transpose(), scratch)
              .row(0)
              .transpose();
      for (int c = 0; c < grid.channels; ++c) {
        grid.values[i * grid.channels + c] = y[c];
      }
    }
  };
  if (pool != nullptr) {
    pool->run(static_cast<int>(jobs.size()), render_block);
  } else {
    for (int j = 0; j < static_cast<int>(jobs.size()); ++j) render_block(j);
  }
  return grid;
}

// Evaluate an oracle over the same grid layout.
template <typename Signal>
inline EvalGrid render_oracle(const Signal& sig, int d,
                              const std::array<int, 3>& res, int channels) {
  EvalGrid grid = make_eval_grid(d, res, channels);
  for (std::int64_t i = 0; i < grid.points(); ++i) {
    const Eigen::VectorXd v = sig(grid.point(i));
    for (int c = 0; c < channels; ++c) {
      grid.values[i * channels + c] = v[c];
    }
  }
  return grid;
}

inline ImageSignal grid_to_image(const EvalGrid& g) {
  if (g.d != 2) throw ConfigError("only 2D grids convert to images");
  ImageSignal img;
  img.width = g.res[0];
  img.height = g.res[1];
  img.channels = g.channels;
  img.values = g.values;
  return img;
}

inline VoxelOccupancy grid_to_voxels(const EvalGrid& g, double threshold) {
  if (g.d != 3 || g.channels != 1) {
    throw ConfigError("only scalar 3D grids convert to voxels");
  }
  VoxelOccupancy v;
  v.nx = g.res[0];
  v.ny = g.res[1];
  v.nz = g.res[2];
  v.values.resize(g.values.size());
  for (std::size_t i = 0; i < g.values.size(); ++i) {
    v.values[i] = g.values[i] > threshold ? 1 : 0;
  }
  return v;
}

// ---------------------------------------------------------------------------
// Scores

inline constexpr double kPsnrCapDb = 200.0;

// Peak 1.0 (normalized signals). Identical inputs give +infinity; use
// capped_db for logging.
inline double psnr(const EvalGrid& a, const EvalGrid& b) {
  if (a.d != b.d || a.res != b.res || a.channels != b.channels) {
    throw ConfigError("psnr: shape mismatch");
  }
  double se = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    const double r = a.values[i] - b.values[i];
    se += r * r;
  }
  const double mse = se / static_cast<double>(a.values.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

inline double capped_db(double db) { return std::min(db, kPsnrCapDb); }

struct OccupancyScores {
  double iou = 1.0;
  double precision = 1.0;
  double recall = 1.0;
  double f_score = 1.0;
};

// Threshold the prediction, then plain set arithmetic. Empty union and
// empty denominators count as perfect (score 1): an empty prediction of an
// empty target is not an error.
inline OccupancyScores occupancy_scores(const EvalGrid& pred,
                                        const EvalGrid& gt,
                                        double threshold = 0.5) {
  if (pred.d != gt.d || pred.res != gt.res || pred.channels != gt.channels) {
    throw ConfigError("occupancy_scores: shape mismatch");
  }
  std::int64_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < pred.values.size(); ++i) {
    const double g = gt.values[i];
    if (g != 0.0 && g != 1.0) {
      throw ConfigError("occupancy_scores: ground truth must be binary");
    }
    const bool p = pred.values[i] > threshold;
    const bool t = g == 1.0;
    tp += p && t;
    fp += p && !t;
    fn += !p && t;
  }
  OccupancyScores s;
  const std::int64_t uni = tp + fp + fn;
  s.iou = uni == 0 ? 1.0 : static_cast<double>(tp) / uni;
  s.precision = tp + fp == 0 ? 1.0 : static_cast<double>(tp) / (tp + fp);
  s.recall = tp + fn == 0 ? 1.0 : static_cast<double>(tp) / (tp + fn);
  s.f_score = s.precision + s.recall == 0.0
                  ? 0.0
                  : 2.0 * s.precision * s.recall / (s.precision + s.recall);
  return s;
}

// Per-value absolute difference, for error-map exports.
inline ImageSignal error_map(const ImageSignal& a, const ImageSignal& b) {
  if (a.width != b.width || a.height != b.height ||
      a.channels != b.channels) {
    throw ConfigError("error_map: shape mismatch");
  }
  ImageSignal out = a;
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    out.values[i] = std::min(1.0, std::abs(a.values[i] - b.values[i]));
  }
  return out;
}

}  // namespace acorn
