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
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <map>
#include <ostream>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "acorn/allocator.hpp"
#include "acorn/checkpoint.hpp"
#include "acorn/metrics.hpp"
#include "acorn/net.hpp"
#include "acorn/partition.hpp"
#include "acorn/rng.hpp"
#include "acorn/threading.hpp"

namespace acorn {

enum class Task : std::uint8_t { kImage = 0, kOccupancy = 1 };

struct TrainConfig {
  std::int64_t iters = 0;       // T
  std::int64_t t_optim = 500;   // partition optimization interval
  std::int64_t t_pruning = 0;   // pruning interval, 0 disables
  std::int64_t budget = 1024;   // N_B
  std::array<int, 3> sample_cells{32, 32, 1};
  double lr = 1e-3;
  double alpha = 0.2;  // merge-weight pessimism for unfitted parents
  double beta = 0.02;  // split-weight optimism for unfitted children
  std::uint64_t seed = 0;
  Task task = Task::kImage;
  double error_thresh = 1e-3;  // pruning: block mean error below this
  double value_thresh = 5e-5;  // pruning: max predicted value below this
  int initial_level = 2;
  int max_depth = 8;
  bool fixed_partition = false;
  std::int64_t checkpoint_interval = 0;  // 0 = final checkpoint only

  std::int64_t samples_per_block(int d_in) const {
    std::int64_t n = 1;
    for (int a = 0; a < d_in; ++a) n *= sample_cells[a];
    return n;
  }
};

// ---------------------------------------------------------------------------
// Config serialization

inline nlohmann::json model_config_to_json(const ModelConfig& c) {
  return {{"d_in", c.d_in},
          {"d_out", c.d_out},
          {"pe_frequencies", c.pe_frequencies},
          {"enc_hidden_layers", c.enc_hidden_layers},
          {"enc_hidden_width", c.enc_hidden_width},
          {"channels", c.channels},
          {"grid", c.grid},
          {"dec_hidden_width", c.dec_hidden_width},
          {"head", c.head == OutputHead::kSigmoid ? "sigmoid" : "identity"}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.d_in = j.at("d_in").get<int>();
  c.d_out = j.at("d_out").get<int>();
  c.pe_frequencies = j.at("pe_frequencies").get<int>();
  c.enc_hidden_layers = j.at("enc_hidden_layers").get<int>();
  c.enc_hidden_width = j.at("enc_hidden_width").get<int>();
  c.channels = j.at("channels").get<int>();
  c.grid = j.at("grid").get<std::array<int, 3>>();
  c.dec_hidden_width = j.at("dec_hidden_width").get<int>();
  const std::string head = j.at("head").get<std::string>();
  if (head == "sigmoid") {
    c.head = OutputHead::kSigmoid;
  } else if (head == "identity") {
    c.head = OutputHead::kIdentity;
  } else {
    throw ConfigError("unknown output head: " + head);
  }
  return c;
}

inline nlohmann::json train_config_to_json(const TrainConfig& c) {
  return {{"iters", c.iters},
          {"t_optim", c.t_optim},
          {"t_pruning", c.t_pruning},
          {"budget", c.budget},
          {"sample_cells", c.sample_cells},
          {"lr", c.lr},
          {"alpha", c.alpha},
          {"beta", c.beta},
          {"seed", c.seed},
          {"task", c.task == Task::kOccupancy ? "occupancy" : "image"},
          {"error_thresh", c.error_thresh},
          {"value_thresh", c.value_thresh},
          {"initial_level", c.initial_level},
          {"max_depth", c.max_depth},
          {"fixed_partition", c.fixed_partition},
          {"checkpoint_interval", c.checkpoint_interval}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.iters = j.at("iters").get<std::int64_t>();
  c.t_optim = j.at("t_optim").get<std::int64_t>();
  c.t_pruning = j.at("t_pruning").get<std::int64_t>();
  c.budget = j.at("budget").get<std::int64_t>();
  c.sample_cells = j.at("sample_cells").get<std::array<int, 3>>();
  c.lr = j.at("lr").get<double>();
  c.alpha = j.at("alpha").get<double>();
  c.beta = j.at("beta").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  const std::string task = j.at("task").get<std::string>();
  if (task == "occupancy") {
    c.task = Task::kOccupancy;
  } else if (task == "image") {
    c.task = Task::kImage;
  } else {
    throw ConfigError("unknown task: " + task);
  }
  c.error_thresh = j.at("error_thresh").get<double>();
  c.value_thresh = j.at("value_thresh").get<double>();
  c.initial_level = j.at("initial_level").get<int>();
  c.max_depth = j.at("max_depth").get<int>();
  c.fixed_partition = j.at("fixed_partition").get<bool>();
  c.checkpoint_interval = j.at("checkpoint_interval").get<std::int64_t>();
  return c;
}

// ---------------------------------------------------------------------------
// Stratified sampling

// One uniform sample per cell of a regular subdivision of [-1,1]^d_in.
// Every draw is a pure function of (seed, iteration, block, cell, axis), so
// samples are independent of evaluation order, thread count, and resume.
struct SampleKey {
  std::uint64_t seed = 0;
  std::int64_t iteration = 0;
  BlockId block;
};

inline std::vector<std::array<double, 3>> stratified_samples(
    const SampleKey& key, int d_in, const std::array<int, 3>& cells) {
  std::int64_t total = 1;
  for (int a = 0; a < d_in; ++a) {
    if (cells[a] < 1) throw ConfigError("sample cells must be >= 1 per axis");
    total *= cells[a];
  }
  const std::uint64_t packed = pack_block(key.block);
  std::vector<std::array<double, 3>> out(total);
  std::array<int, 3> c{0, 0, 0};
  for (std::int64_t flat = 0; flat < total; ++flat) {
    for (int a = 0; a < d_in; ++a) {
      const std::uint64_t k1 =
          (static_cast<std::uint64_t>(key.iteration) * 8192 +
           static_cast<std::uint64_t>(flat)) *
              4 +
          static_cast<std::uint64_t>(a);
      const double u = unit_double(key.seed, Stream::kSamples, k1, packed);
      out[flat][a] = -1.0 + (c[a] + u) * 2.0 / cells[a];
    }
    // Advance the cell counter, last axis fastest.
    for (int a = d_in - 1; a >= 0; --a) {
      if (++c[a] < cells[a]) break;
      c[a] = 0;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Losses over one block's samples

// Mean per-sample loss and its gradient w.r.t. each prediction row.
// Rows are samples. Image: squared L2; occupancy: clamped BCE.
inline std::pair<double, Eigen::MatrixXd> block_loss(
    const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target, Task task) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols()) {
    throw ConfigError("block_loss: prediction/target shape mismatch");
  }
  if (pred.rows() == 0) throw ConfigError("block_loss: empty batch");
  const Eigen::Index n = pred.rows();
  const int d_out = static_cast<int>(pred.cols());
  Eigen::MatrixXd d_pred(n, d_out);
  Eigen::VectorXd y(d_out), t(d_out), dy(d_out);
  double sum = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    y = pred.row(i).transpose();
    t = target.row(i).transpose();
    sum += task == Task::kOccupancy
               ? bce_sample_loss(y.data(), t.data(), d_out, dy.data())
               : mse_sample_loss(y.data(), t.data(), d_out, dy.data());
    d_pred.row(i) = dy.transpose() / static_cast<double>(n);
  }
  return {sum / static_cast<double>(n), std::move(d_pred)};
}

// ---------------------------------------------------------------------------
// Training state

struct BlockError {
  double mean_error = 0.0;
  double max_pred = 0.0;
};
using BlockErrorReport = std::map<BlockId, BlockError>;

struct IterationStats {
  double loss = 0.0;
  double metric = 0.0;  // sample-estimated PSNR (image) or IoU (occupancy)
  BlockErrorReport report;
};

struct TrainState {
  TrainConfig cfg;
  AcornModel model;
  Partition partition;
  ModelOptimizer opt;
  ErrorHistory history;
  std::int64_t iteration = 0;
  double elapsed_s = 0.0;

  // Scratch; rebuilt lazily when the partition changes.
  bool blocks_dirty = true;
  std::vector<BlockId> actives;
  Eigen::MatrixXd pe_rows;
  MlpCache enc_cache;
  ModelGrads grads;
};

inline TrainState make_train_state(const TrainConfig& cfg,
                                   const ModelConfig& model_cfg) {
  if (cfg.t_optim < 1) throw ConfigError("t_optim must be >= 1");
  if (cfg.iters < 0) throw ConfigError("iteration count must be >= 0");
  if (cfg.t_pruning < 0) throw ConfigError("t_pruning must be >= 0");
  if (cfg.t_pruning > 0 && cfg.task != Task::kOccupancy) {
    throw ConfigError("pruning applies to the occupancy task only");
  }
  if (cfg.task == Task::kOccupancy) {
    if (model_cfg.head != OutputHead::kSigmoid || model_cfg.d_out != 1) {
      throw ConfigError("occupancy needs a scalar sigmoid head");
    }
  } else if (model_cfg.head != OutputHead::kIdentity) {
    throw ConfigError("image fitting uses the identity head");
  }
  if (cfg.samples_per_block(model_cfg.d_in) < 1) {
    throw ConfigError("need at least one sample cell");
  }
  TrainState st{cfg,
                make_model(model_cfg, cfg.seed),
                Partition(model_cfg.d_in, cfg.initial_level, cfg.max_depth),
                {},
                {},
                0,
                0.0};
  st.opt = make_optimizer(st.model, cfg.lr);
  st.grads = zero_grads(st.model);
  const std::int64_t initial =
      static_cast<std::int64_t>(st.partition.active().size());
  if (initial > cfg.budget) {
    throw ConfigError("block budget " + std::to_string(cfg.budget) +
                      " is below the initial block count " +
                      std::to_string(initial));
  }
  return st;
}

namespace detail {

inline std::string block_label(const BlockId& b, int d_in) {
  std::string s = "level " + std::to_string(b.level) + " index (";
  for (int a = 0; a < d_in; ++a) {
    if (a) s += ",";
    s += std::to_string(b.idx[a]);
  }
  return s + ")";
}

inline void refresh_block_cache(TrainState& st) {
  if (!st.blocks_dirty) return;
  st.actives.assign(st.partition.active().begin(),
                    st.partition.active().end());
  std::vector<GlobalBlockCoord> coords;
  coords.reserve(st.actives.size());
  for (const BlockId& b : st.actives) {
    coords.push_back(
        global_coordinate(b, st.partition.d_in(), st.partition.max_depth()));
  }
  st.pe_rows = pe_rows_for(st.model, coords);
  st.blocks_dirty = false;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// One optimization step over all active blocks

// Forward, per-block loss, backward, and one Adam step over the aggregate
// gradient. Per-block work runs in fixed-size chunks so results do not
// depend on the worker count; the gradient reduction is ordered by block.
template <typename Signal>
IterationStats train_iteration(TrainState& st, const Signal& signal,
                               ThreadPool& pool) {
  static_assert(std::is_invocable_r_v<Eigen::VectorXd, Signal,
                                      const std::array<double, 3>&>);
  detail::refresh_block_cache(st);
  const int d_in = st.model.cfg.d_in;
  const int d_out = st.model.cfg.d_out;
  const int channels = st.model.cfg.channels;
  const std::int64_t nodes = st.model.cfg.nodes();
  const Eigen::Index n = static_cast<Eigen::Index>(st.actives.size());
  IterationStats stats;
  if (n == 0) {
    stats.metric = st.cfg.task == Task::kImage ? kPsnrCapDb : 1.0;
    return stats;
  }

  const Eigen::MatrixXd& features =
      encoder_forward_batch(st.model, st.pe_rows, st.enc_cache);
  // Column-major copies: one contiguous column of grid values per block, so
  // the per-sample gather/scatter below walks dense memory instead of
  // striding across the batch.
  const Eigen::MatrixXd features_t = features.transpose();
  Eigen::MatrixXd d_features_t =
      Eigen::MatrixXd::Zero(features.cols(), n);

  const std::int64_t n_l = st.cfg.samples_per_block(d_in);
  constexpr int kBlocksPerChunk = 4;
  const int chunks =
      static_cast<int>((n + kBlocksPerChunk - 1) / kBlocksPerChunk);

  struct ChunkOut {
    MlpParams dec_grads;
    std::int64_t tp = 0, fp = 0, fn = 0;
  };
  std::vector<ChunkOut> chunk_out(chunks);
  std::vector<BlockError> errors(n);

  pool.run(chunks, [&](int chunk) {
    ChunkOut& out = chunk_out[chunk];
    out.dec_grads = zeros_like(st.model.decoder);
    Eigen::MatrixXd gammas(n_l, channels), targets(n_l, d_out);
    Eigen::VectorXd gamma(channels), d_gamma(channels);
    std::vector<InterpStencil> stencils(n_l);
    std::array<double, 3> xg{0, 0, 0};
    MlpCache dec_cache;
    const Eigen::Index lo = static_cast<Eigen::Index>(chunk) * kBlocksPerChunk;
    const Eigen::Index hi = std::min(n, lo + kBlocksPerChunk);
    for (Eigen::Index i = lo; i < hi; ++i) {
      const BlockId& b = st.actives[i];
      const auto samples = stratified_samples(
          SampleKey{st.cfg.seed, st.iteration, b}, d_in, st.cfg.sample_cells);
      const double* feat_col = features_t.col(i).data();
      for (std::int64_t s = 0; s < n_l; ++s) {
        stencils[s] = interp_stencil(st.model.cfg.grid, d_in, samples[s]);
        interp_gather(feat_col, nodes, channels, stencils[s], gamma.data());
        gammas.row(s) = gamma.transpose();
        to_global(b, d_in, samples[s], xg);
        targets.row(s) = signal(xg).transpose();
      }
      const Eigen::MatrixXd pred =
          decoder_forward_batch(st.model, gammas, dec_cache);
      auto [mean_error, d_pred] = block_loss(pred, targets, st.cfg.task);
      if (!std::isfinite(mean_error)) {
        throw NumericError("non-finite loss at iteration " +
                           std::to_string(st.iteration) + " in block " +
                           detail::block_label(b, d_in));
      }
      errors[i].mean_error = mean_error;
      errors[i].max_pred = pred.maxCoeff();
      if (st.cfg.task == Task::kOccupancy) {
        for (std::int64_t s = 0; s < n_l; ++s) {
          const bool p = pred(s, 0) > 0.5;
          const bool t = targets(s, 0) == 1.0;
          out.tp += p && t;
          out.fp += p && !t;
          out.fn += !p && t;
        }
      }
      // d(total loss)/d(pred): blocks contribute 1/|B| of the mean each.
      d_pred *= 1.0 / static_cast<double>(n);
      head_backward_inplace(st.model.cfg.head, pred, d_pred);
      Eigen::MatrixXd d_gammas;
      mlp_backward(st.model.decoder, dec_cache, d_pred, out.dec_grads,
                   &d_gammas);
      double* d_feat_col = d_features_t.col(i).data();
      for (std::int64_t s = 0; s < n_l; ++s) {
        d_gamma = d_gammas.row(s).transpose();
        interp_scatter(d_feat_col, nodes, channels, stencils[s],
                       d_gamma.data());
      }
    }
  });

  st.grads.set_zero();
  for (ChunkOut& out : chunk_out) {
    accumulate(st.grads.decoder, out.dec_grads);
  }
  Eigen::MatrixXd d_features = d_features_t.transpose();
  mlp_backward(st.model.encoder, st.enc_cache, d_features, st.grads.encoder);
  optimizer_step(st.model, st.grads, st.opt);

  // Bookkeeping in block order: loss, history, and the sample-estimated
  // quality metric (volume-weighted PSNR for images, sample IoU for
  // occupancy; full-grid evaluation happens outside the training loop).
  double sum_error = 0.0;
  double vol_total = 0.0, vol_weighted = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const BlockId& b = st.actives[i];
    sum_error += errors[i].mean_error;
    const double vol = block_volume(b, d_in);
    vol_total += vol;
    vol_weighted += vol * errors[i].mean_error;
    st.history[b] = ErrorHistoryEntry{vol * errors[i].mean_error,
                                      st.iteration};
    stats.report[b] = errors[i];
  }
  stats.loss = sum_error / static_cast<double>(n);
  double recheck = 0.0;
  for (const auto& [b, e] : stats.report) recheck += e.mean_error;
  if (std::abs(recheck / static_cast<double>(n) - stats.loss) > 1e-12) {
    throw NumericError("loss does not match the mean block error");
  }
  if (st.cfg.task == Task::kImage) {
    const double mse = vol_weighted / (vol_total * d_out);
    stats.metric =
        mse == 0.0 ? kPsnrCapDb : capped_db(10.0 * std::log10(1.0 / mse));
  } else {
    std::int64_t tp = 0, fp = 0, fn = 0;
    for (const ChunkOut& out : chunk_out) {
      tp += out.tp;
      fp += out.fp;
      fn += out.fn;
    }
    stats.metric =
        tp + fp + fn == 0 ? 1.0 : static_cast<double>(tp) / (tp + fp + fn);
  }
  return stats;
}

// ---------------------------------------------------------------------------
// Structural updates between iterations

// Called after each partition optimization has been applied, with the solved
// allocation instance. Used for exports and audits.
using IlpObserver = std::function<void(
    std::int64_t iteration, const AllocationProblem&, const DecisionVector&)>;

inline void optimize_partition(TrainState& st, const BlockErrorReport& report,
                               const IlpObserver& observe = {}) {
  std::map<BlockId, double> errors;
  for (const auto& [b, e] : report) errors[b] = e.mean_error;
  const AllocationProblem prob =
      build_problem(st.partition, errors, st.history, st.cfg.budget,
                    st.cfg.alpha, st.cfg.beta);
  const DecisionVector decisions = solve_exact(prob);
  std::map<BlockId, Decision> by_block;
  for (std::size_t i = 0; i < prob.blocks.size(); ++i) {
    by_block[prob.blocks[i]] = decisions[i];
  }
  st.partition.apply_decisions(by_block);
  st.blocks_dirty = true;
  if (static_cast<std::int64_t>(st.partition.active().size()) >
      st.cfg.budget) {
    throw NumericError("partition optimization exceeded the block budget");
  }
  if (observe) observe(st.iteration, prob, decisions);
}

// Prune blocks whose latest fit shows both low error and a near-zero
// maximum prediction; their output becomes the constant 0.
inline int maybe_prune(TrainState& st, const BlockErrorReport& report) {
  int pruned = 0;
  for (const auto& [b, e] : report) {
    if (e.mean_error < st.cfg.error_thresh &&
        e.max_pred < st.cfg.value_thresh) {
      st.partition.prune_block(b, {0.0});
      st.history.erase(b);
      ++pruned;
    }
  }
  if (pruned > 0) st.blocks_dirty = true;
  return pruned;
}

// ---------------------------------------------------------------------------
// Checkpoint plumbing

inline Checkpoint make_train_checkpoint(const TrainState& st) {
  Checkpoint c;
  c.metadata = {{"model_config", model_config_to_json(st.model.cfg)},
                {"train_config", train_config_to_json(st.cfg)},
                {"iteration", st.iteration},
                {"seed", st.cfg.seed},
                {"elapsed_s", st.elapsed_s},
                {"adam_step_enc", st.opt.encoder.step},
                {"adam_step_dec", st.opt.decoder.step},
                {"partition", st.partition.to_json()},
                {"history", history_to_json(st.history)}};
  c.tensors = model_tensors(st.model, st.opt);
  return c;
}

inline TrainState restore_train_state(const Checkpoint& c) {
  TrainConfig cfg;
  ModelConfig model_cfg;
  try {
    cfg = train_config_from_json(c.metadata.at("train_config"));
    model_cfg = model_config_from_json(c.metadata.at("model_config"));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("bad checkpoint config: ") + e.what());
  }
  TrainState st = make_train_state(cfg, model_cfg);
  try {
    st.partition = Partition::from_json(c.metadata.at("partition"));
    st.history = history_from_json(c.metadata.at("history"));
    st.iteration = c.metadata.at("iteration").get<std::int64_t>();
    st.elapsed_s = c.metadata.at("elapsed_s").get<double>();
    st.opt.encoder.step = c.metadata.at("adam_step_enc").get<std::int64_t>();
    st.opt.decoder.step = c.metadata.at("adam_step_dec").get<std::int64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("bad checkpoint metadata: ") + e.what());
  }
  apply_model_tensors(c.tensors, st.model, st.opt);
  st.blocks_dirty = true;
  return st;
}

// ---------------------------------------------------------------------------
// Full runs

inline constexpr char kLogHeader[] =
    "iter,loss,psnr_or_iou,active_blocks,pruned_blocks,elapsed_s";

// Runs from st.iteration to cfg.iters. Partition optimization fires every
// t_optim iterations and pruning every t_pruning; when both coincide,
// pruning runs and optimization is skipped for that round. The CSV log gets
// one row per iteration; elapsed_s is wall time and is the only
// nondeterministic column.
template <typename Signal>
void train(TrainState& st, const Signal& signal, ThreadPool& pool,
           std::ostream* log,
           const std::function<void(const TrainState&)>& on_checkpoint = {},
           const IlpObserver& on_ilp = {}) {
  if (log && st.iteration == 0) *log << kLogHeader << "\n";
  while (st.iteration < st.cfg.iters) {
    const auto tick = std::chrono::steady_clock::now();
    st.iteration += 1;
    const IterationStats stats = train_iteration(st, signal, pool);

    const bool prune_due = st.cfg.t_pruning > 0 &&
                           st.iteration % st.cfg.t_pruning == 0;
    if (prune_due) {
      maybe_prune(st, stats.report);
    } else if (!st.cfg.fixed_partition &&
               st.iteration % st.cfg.t_optim == 0 &&
               !st.partition.active().empty()) {
      optimize_partition(st, stats.report, on_ilp);
    }

    st.elapsed_s += std::chrono::duration<double>(
                        std::chrono::steady_clock::now() - tick)
                        .count();
    if (log) {
      char line[192];
      std::snprintf(line, sizeof line, "%lld,%.12g,%.6f,%zu,%zu,%.3f\n",
                    static_cast<long long>(st.iteration), stats.loss,
                    stats.metric, st.partition.active().size(),
                    st.partition.pruned().size(), st.elapsed_s);
      *log << line;
    }
    if (on_checkpoint && st.cfg.checkpoint_interval > 0 &&
        st.iteration % st.cfg.checkpoint_interval == 0 &&
        st.iteration < st.cfg.iters) {
      on_checkpoint(st);
    }
  }
  if (log) log->flush();
}

}  // namespace acorn
