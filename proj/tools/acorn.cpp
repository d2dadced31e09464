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

// Command-line front end: fits images and occupancy fields, evaluates
// checkpoints, and exports partitions. Every run directory is
// self-describing: config.json holds the fully resolved configuration.
//
// Exit codes: 0 success, 1 configuration, 2 I/O, 3 numeric, 4 checkpoint.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <variant>

#include <CLI11.hpp>

#include "acorn/checkpoint.hpp"
#include "acorn/metrics.hpp"
#include "acorn/signals.hpp"
#include "acorn/threading.hpp"
#include "acorn/trainer.hpp"

namespace acorn {
namespace {

namespace fs = std::filesystem;

constexpr int kOccEvalResolution = 128;

struct RunConfig {
  TrainConfig train;
  ModelConfig model;
  std::string input;
  std::string out_dir = "run";
  bool export_ilp = false;
};

nlohmann::json run_config_to_json(const RunConfig& r) {
  return {{"input", r.input},
          {"out_dir", r.out_dir},
          {"export_ilp", r.export_ilp},
          {"train", train_config_to_json(r.train)},
          {"model", model_config_to_json(r.model)}};
}

// Desk-scale defaults; --paper-defaults selects the large preset instead.
RunConfig image_defaults() {
  RunConfig r;
  r.train.iters = 20000;
  r.train.t_optim = 500;
  r.train.t_pruning = 0;
  r.train.budget = 1024;
  r.train.sample_cells = {32, 32, 1};
  r.train.task = Task::kImage;
  r.train.initial_level = -1;  // resolved from the budget below
  r.train.max_depth = 8;
  r.model.d_in = 2;
  r.model.d_out = 1;  // resolved from the input image
  r.model.pe_frequencies = 6;
  r.model.enc_hidden_layers = 4;
  r.model.enc_hidden_width = 256;
  r.model.channels = 16;
  r.model.grid = {32, 32, 1};
  r.model.dec_hidden_width = 64;
  r.model.head = OutputHead::kIdentity;
  return r;
}

RunConfig occupancy_defaults() {
  RunConfig r;
  r.train.iters = 15000;
  r.train.t_optim = 1000;
  r.train.t_pruning = 4000;
  r.train.budget = 1024;
  r.train.sample_cells = {4, 4, 4};
  r.train.task = Task::kOccupancy;
  r.train.initial_level = -1;
  r.train.max_depth = 8;
  r.model.d_in = 3;
  r.model.d_out = 1;
  r.model.pe_frequencies = 6;
  r.model.enc_hidden_layers = 4;
  r.model.enc_hidden_width = 256;
  r.model.channels = 18;
  r.model.grid = {12, 12, 12};
  r.model.dec_hidden_width = 64;
  r.model.head = OutputHead::kSigmoid;
  return r;
}

// Initial uniform level: fixed partitions use the deepest level that fits
// the budget outright; adaptive image runs leave split headroom (a quarter
// of the budget, at most level 3); occupancy starts at level 2.
int auto_initial_level(const TrainConfig& t, int d_in) {
  const auto count_fits = [&](int level, std::int64_t cap) {
    return (std::int64_t{1} << (d_in * level)) <= cap;
  };
  int level = 0;
  if (t.fixed_partition) {
    while (level + 1 <= t.max_depth && count_fits(level + 1, t.budget)) {
      ++level;
    }
    return level;
  }
  if (t.task == Task::kOccupancy) {
    level = std::min(2, t.max_depth);
    while (level > 0 && !count_fits(level, t.budget)) --level;
    return level;
  }
  const int deepest = std::min(3, t.max_depth);
  while (level + 1 <= deepest && count_fits(level + 1, t.budget / 4)) {
    ++level;
  }
  return level;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

// ---------------------------------------------------------------------------
// Config file handling: JSON with the same two-level shape as config.json;
// any subset of keys may be present, and flags override the file.

void merge_config_file(nlohmann::json& resolved, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path);
  nlohmann::json file;
  try {
    file = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config file " + path + ": " + e.what());
  }
  if (!file.is_object()) throw ConfigError("config file must be an object");
  for (const auto& [key, value] : file.items()) {
    if (key == "train" || key == "model") {
      if (!value.is_object()) throw ConfigError(key + " must be an object");
      for (const auto& [sub, sval] : value.items()) {
        if (!resolved[key].contains(sub)) {
          throw ConfigError("unknown config key " + key + "." + sub);
        }
        resolved[key][sub] = sval;
      }
    } else if (resolved.contains(key)) {
      resolved[key] = value;
    } else {
      throw ConfigError("unknown config key " + key);
    }
  }
}

RunConfig run_config_from_json(const nlohmann::json& j) {
  RunConfig r;
  r.input = j.at("input").get<std::string>();
  r.out_dir = j.at("out_dir").get<std::string>();
  r.export_ilp = j.at("export_ilp").get<bool>();
  r.train = train_config_from_json(j.at("train"));
  r.model = model_config_from_json(j.at("model"));
  return r;
}

// ---------------------------------------------------------------------------
// Flags shared by the fit commands

struct FitFlags {
  std::string config_file;
  std::string input;
  std::string out_dir;
  std::string resume;
  std::int64_t iters = 0;
  std::int64_t budget = 0;
  std::uint64_t seed = 0;
  double lr = 0.0;
  std::int64_t t_optim = 0;
  std::int64_t t_pruning = 0;
  std::int64_t checkpoint_interval = 0;
  int enc_layers = 0;
  int enc_width = 0;
  int channels = 0;
  int grid = 0;
  int pe = 0;
  int initial_level = 0;
  int max_depth = 0;
  bool fixed_partition = false;
  bool no_prune = false;
  bool paper_defaults = false;
  bool export_ilp = false;

  CLI::App* cmd = nullptr;

  bool given(const std::string& flag) const {
    return cmd->count(flag) > 0;
  }
};

void add_fit_flags(CLI::App* cmd, FitFlags& f) {
  f.cmd = cmd;
  cmd->add_option("--config", f.config_file, "JSON config file");
  cmd->add_option("--input", f.input, "signal to fit");
  cmd->add_option("--out", f.out_dir, "run directory");
  cmd->add_option("--resume", f.resume, "checkpoint to continue from");
  cmd->add_option("--iters", f.iters, "total training iterations");
  cmd->add_option("--nb", f.budget, "active block budget N_B");
  cmd->add_option("--seed", f.seed, "RNG seed");
  cmd->add_option("--lr", f.lr, "Adam learning rate");
  cmd->add_option("--t-optim", f.t_optim, "partition optimization interval");
  cmd->add_option("--t-pruning", f.t_pruning, "pruning interval");
  cmd->add_option("--checkpoint-interval", f.checkpoint_interval,
                  "write latest.ckpt every K iterations");
  cmd->add_option("--enc-layers", f.enc_layers, "encoder hidden layers");
  cmd->add_option("--enc-width", f.enc_width, "encoder hidden width");
  cmd->add_option("--channels", f.channels, "feature grid channels");
  cmd->add_option("--grid", f.grid, "feature grid nodes per axis");
  cmd->add_option("--pe", f.pe, "positional encoding frequencies");
  cmd->add_option("--initial-level", f.initial_level,
                  "starting uniform subdivision level");
  cmd->add_option("--max-depth", f.max_depth, "deepest allowed level");
  cmd->add_flag("--fixed-partition", f.fixed_partition,
                "keep the initial uniform partition (ablation)");
  cmd->add_flag("--no-prune", f.no_prune, "disable pruning (ablation)");
  cmd->add_flag("--paper-defaults", f.paper_defaults,
                "large preset (4x512 encoder, N_B=1024)");
  cmd->add_flag("--export-ilp", f.export_ilp,
                "write each allocation problem and its solution");
}

RunConfig resolve_run_config(const FitFlags& f, RunConfig defaults) {
  nlohmann::json j = run_config_to_json(defaults);
  if (!f.config_file.empty()) merge_config_file(j, f.config_file);
  RunConfig r = run_config_from_json(j);
  if (f.paper_defaults) {
    r.model.enc_hidden_width = 512;
    r.train.budget = 1024;
  }
  if (f.given("--input")) r.input = f.input;
  if (f.given("--out")) r.out_dir = f.out_dir;
  if (f.given("--iters")) r.train.iters = f.iters;
  if (f.given("--nb")) r.train.budget = f.budget;
  if (f.given("--seed")) r.train.seed = f.seed;
  if (f.given("--lr")) r.train.lr = f.lr;
  if (f.given("--t-optim")) r.train.t_optim = f.t_optim;
  if (f.given("--t-pruning")) r.train.t_pruning = f.t_pruning;
  if (f.given("--checkpoint-interval")) {
    r.train.checkpoint_interval = f.checkpoint_interval;
  }
  if (f.given("--enc-layers")) r.model.enc_hidden_layers = f.enc_layers;
  if (f.given("--enc-width")) r.model.enc_hidden_width = f.enc_width;
  if (f.given("--channels")) r.model.channels = f.channels;
  if (f.given("--pe")) r.model.pe_frequencies = f.pe;
  if (f.given("--grid")) {
    r.model.grid = {f.grid, f.grid, r.model.d_in == 3 ? f.grid : 1};
  }
  if (f.given("--max-depth")) r.train.max_depth = f.max_depth;
  if (f.given("--fixed-partition")) r.train.fixed_partition = true;
  if (f.given("--no-prune")) r.train.t_pruning = 0;
  if (f.given("--export-ilp")) r.export_ilp = true;
  if (r.input.empty()) throw ConfigError("no input given (--input)");
  if (f.given("--initial-level")) {
    r.train.initial_level = f.initial_level;
  } else if (r.train.initial_level < 0) {
    r.train.initial_level = auto_initial_level(r.train, r.model.d_in);
  }
  return r;
}

// ---------------------------------------------------------------------------
// Evaluation helpers, shared verbatim between the end of a fit run and
// cmd_eval so the reported numbers are the same computation.

nlohmann::json image_metrics(const AcornModel& model, const Partition& part,
                             const ImageSignal& gt, ThreadPool& pool,
                             EvalGrid* pred_out = nullptr) {
  const std::array<int, 3> res{gt.width, gt.height, 1};
  EvalGrid pred = render_full(model, part, res, &pool);
  const EvalGrid oracle = render_oracle(gt, 2, res, gt.channels);
  const double db = capped_db(psnr(pred, oracle));
  nlohmann::json m{{"task", "image"},
                   {"psnr_db", db},
                   {"width", gt.width},
                   {"height", gt.height}};
  if (pred_out) *pred_out = std::move(pred);
  return m;
}

template <typename Signal>
nlohmann::json occupancy_metrics(const AcornModel& model,
                                 const Partition& part, const Signal& gt,
                                 int resolution, ThreadPool& pool,
                                 EvalGrid* pred_out = nullptr) {
  const std::array<int, 3> res{resolution, resolution, resolution};
  EvalGrid pred = render_full(model, part, res, &pool);
  const EvalGrid oracle = render_oracle(gt, 3, res, 1);
  const OccupancyScores s = occupancy_scores(pred, oracle, 0.5);
  nlohmann::json m{{"task", "occupancy"}, {"resolution", resolution},
                   {"iou", s.iou},        {"precision", s.precision},
                   {"recall", s.recall},  {"f_score", s.f_score}};
  if (pred_out) *pred_out = std::move(pred);
  return m;
}

void print_metrics(const nlohmann::json& m) {
  if (m.at("task") == "image") {
    std::printf("psnr_db %.9f\n", m.at("psnr_db").get<double>());
  } else {
    std::printf("iou %.9f\nprecision %.9f\nrecall %.9f\nf_score %.9f\n",
                m.at("iou").get<double>(), m.at("precision").get<double>(),
                m.at("recall").get<double>(), m.at("f_score").get<double>());
  }
}

// ---------------------------------------------------------------------------
// Fit orchestration

std::string image_suffix(const std::string& input, int channels) {
  if (input.size() >= 4 && input.substr(input.size() - 4) == ".png") {
    return ".png";
  }
  return channels == 3 ? ".ppm" : ".pgm";
}

void write_partition_files(const Partition& part, const fs::path& dir) {
  write_text(dir / "partition.json", part.to_json().dump(2));
  if (part.d_in() == 2) {
    write_text(dir / "partition.svg", part.to_svg());
  } else {
    std::puts("partition.svg skipped: SVG overlay is 2D only");
  }
}

template <typename Signal>
void run_fit(TrainState& st, const Signal& signal, const RunConfig& run,
             bool resumed) {
  const fs::path dir(run.out_dir);
  fs::create_directories(dir);
  write_text(dir / "config.json", run_config_to_json(run).dump(2) + "\n");

  ThreadPool pool(resolve_thread_count());
  std::ofstream log(dir / "log.csv",
                    resumed ? std::ios::app : std::ios::trunc);
  if (!log) throw IoError("cannot write " + (dir / "log.csv").string());

  const auto on_checkpoint = [&](const TrainState& s) {
    save_checkpoint(make_train_checkpoint(s), (dir / "latest.ckpt").string());
  };
  IlpObserver on_ilp;
  if (run.export_ilp) {
    on_ilp = [&dir](std::int64_t iteration, const AllocationProblem& prob,
                    const DecisionVector& decisions) {
      char name[32];
      std::snprintf(name, sizeof name, "ilp_%06lld.json",
                    static_cast<long long>(iteration));
      const nlohmann::json j{{"iteration", iteration},
                             {"problem", problem_to_json(prob)},
                             {"decisions", decisions_to_json(decisions)}};
      write_text(dir / name, j.dump(2) + "\n");
    };
  }

  std::printf("training: %lld -> %lld iterations, %zu active blocks, "
              "budget %lld, %d threads\n",
              static_cast<long long>(st.iteration),
              static_cast<long long>(st.cfg.iters),
              st.partition.active().size(),
              static_cast<long long>(st.cfg.budget), resolve_thread_count());
  train(st, signal, pool, &log, on_checkpoint, on_ilp);
  save_checkpoint(make_train_checkpoint(st), (dir / "final.ckpt").string());
  write_partition_files(st.partition, dir);

  nlohmann::json metrics;
  EvalGrid pred;
  if constexpr (std::is_same_v<Signal, ImageSignal>) {
    metrics = image_metrics(st.model, st.partition, signal, pool, &pred);
    const ImageSignal recon = grid_to_image(pred);
    const std::string ext = image_suffix(run.input, recon.channels);
    save_image(recon, (dir / ("recon" + ext)).string());
    const EvalGrid oracle = render_oracle(
        signal, 2, {signal.width, signal.height, 1}, signal.channels);
    save_image(error_map(recon, grid_to_image(oracle)),
               (dir / ("error_map" + ext)).string());
  } else {
    metrics = occupancy_metrics(st.model, st.partition, signal,
                                kOccEvalResolution, pool, &pred);
    save_voxels(grid_to_voxels(pred, 0.5),
                (dir / "occupancy.vox").string());
  }
  metrics["iteration"] = st.iteration;
  metrics["elapsed_s"] = st.elapsed_s;
  write_text(dir / "metrics.json", metrics.dump(2) + "\n");
  print_metrics(metrics);
}

// A fresh state from the resolved config, or a restored one when resuming.
// On resume the checkpoint's configuration wins except for the iteration
// target and artifact settings, which follow the current invocation.
TrainState fit_state(const RunConfig& run, const FitFlags& flags) {
  if (flags.resume.empty()) {
    return make_train_state(run.train, run.model);
  }
  TrainState st = restore_train_state(load_checkpoint(flags.resume));
  if (st.cfg.task != run.train.task) {
    throw ConfigError("checkpoint task does not match this command");
  }
  if (flags.given("--iters")) st.cfg.iters = flags.iters;
  if (flags.given("--checkpoint-interval")) {
    st.cfg.checkpoint_interval = flags.checkpoint_interval;
  }
  if (st.iteration > st.cfg.iters) {
    throw ConfigError("checkpoint is already past the requested iterations");
  }
  return st;
}

int cmd_fit_image(const FitFlags& flags) {
  RunConfig run = resolve_run_config(flags, image_defaults());
  const ImageSignal image = load_image(run.input);
  run.model.d_out = image.channels;
  TrainState st = fit_state(run, flags);
  if (!flags.resume.empty()) {
    if (st.model.cfg.d_out != image.channels) {
      throw ConfigError("checkpoint channel count does not match the input");
    }
    run.train = st.cfg;  // config.json reflects what actually runs
    run.model = st.model.cfg;
  }
  std::printf("input: %s (%dx%d, %d channel%s)\n", run.input.c_str(),
              image.width, image.height, image.channels,
              image.channels == 1 ? "" : "s");
  run_fit(st, image, run, !flags.resume.empty());
  return 0;
}

// Occupancy inputs: VOX1 voxel grids (sniffed by magic) or CSG JSON.
std::variant<AnalyticOccupancy, VoxelOccupancy> load_occupancy(
    const std::string& path) {
  std::ifstream probe(path, std::ios::binary);
  if (!probe) throw IoError("cannot open " + path);
  char magic[4] = {0, 0, 0, 0};
  probe.read(magic, 4);
  probe.close();
  if (std::string_view(magic, 4) == "VOX1") return load_voxels(path);
  return load_analytic_occupancy(path);
}

int cmd_fit_occ(const FitFlags& flags) {
  RunConfig run = resolve_run_config(flags, occupancy_defaults());
  const auto occupancy = load_occupancy(run.input);
  TrainState st = fit_state(run, flags);
  if (!flags.resume.empty()) {
    run.train = st.cfg;
    run.model = st.model.cfg;
  }
  std::visit([&](const auto& sig) {
    run_fit(st, sig, run, !flags.resume.empty());
  }, occupancy);
  return 0;
}

// ---------------------------------------------------------------------------
// eval / export-partition / info

int cmd_eval(const std::string& ckpt_path, const std::string& image_path,
             const std::string& occ_path, int resolution,
             const std::string& out_path) {
  const TrainState st = restore_train_state(load_checkpoint(ckpt_path));
  ThreadPool pool(resolve_thread_count());
  nlohmann::json metrics;
  if (!image_path.empty()) {
    if (st.cfg.task != Task::kImage) {
      throw ConfigError("checkpoint does not hold an image fit");
    }
    const ImageSignal gt = load_image(image_path);
    if (gt.channels != st.model.cfg.d_out) {
      throw ConfigError("ground truth channel count does not match model");
    }
    metrics = image_metrics(st.model, st.partition, gt, pool);
  } else {
    if (st.cfg.task != Task::kOccupancy) {
      throw ConfigError("checkpoint does not hold an occupancy fit");
    }
    const auto gt = load_occupancy(occ_path);
    metrics = std::visit([&](const auto& sig) {
      return occupancy_metrics(st.model, st.partition, sig, resolution, pool);
    }, gt);
  }
  metrics["iteration"] = st.iteration;
  print_metrics(metrics);
  if (!out_path.empty()) write_text(out_path, metrics.dump(2) + "\n");
  return 0;
}

int cmd_export_partition(const std::string& ckpt_path,
                         const std::string& out_dir) {
  const Checkpoint c = load_checkpoint(ckpt_path);
  Partition part = [&] {
    try {
      return Partition::from_json(c.metadata.at("partition"));
    } catch (const nlohmann::json::exception& e) {
      throw CheckpointError(std::string("bad partition metadata: ") +
                            e.what());
    }
  }();
  const fs::path dir(out_dir);
  fs::create_directories(dir);
  write_partition_files(part, dir);
  std::printf("exported %zu active and %zu pruned blocks\n",
              part.active().size(), part.pruned().size());
  return 0;
}

int cmd_info(const std::string& ckpt_path) {
  const Checkpoint c = load_checkpoint(ckpt_path);
  const TrainState st = restore_train_state(c);
  const auto& m = st.model.cfg;
  std::printf("task: %s\n",
              st.cfg.task == Task::kOccupancy ? "occupancy" : "image");
  std::printf("iteration: %lld of %lld\n",
              static_cast<long long>(st.iteration),
              static_cast<long long>(st.cfg.iters));
  std::printf("seed: %llu\n",
              static_cast<unsigned long long>(st.cfg.seed));
  std::printf("blocks: %zu active, %zu pruned (budget %lld)\n",
              st.partition.active().size(), st.partition.pruned().size(),
              static_cast<long long>(st.cfg.budget));
  std::printf("encoder: %d x %d hidden, %d PE frequencies\n",
              m.enc_hidden_layers, m.enc_hidden_width, m.pe_frequencies);
  std::printf("feature grid: %d channels, %d x %d x %d nodes\n", m.channels,
              m.grid[0], m.grid[1], m.grid[2]);
  std::printf("tensors: %zu\n", c.tensors.size());
  std::printf("elapsed: %.1f s\n", st.elapsed_s);
  return 0;
}

int dispatch(int argc, char** argv) {
  CLI::App app{"Adaptive block-partitioned coordinate network fitter"};
  app.require_subcommand(1);

  FitFlags image_flags, occ_flags;
  add_fit_flags(app.add_subcommand("fit-image", "fit a 2D image"),
                image_flags);
  add_fit_flags(app.add_subcommand("fit-occ", "fit a 3D occupancy field"),
                occ_flags);

  std::string eval_ckpt, eval_image, eval_occ, eval_out;
  int eval_res = kOccEvalResolution;
  CLI::App* eval = app.add_subcommand("eval", "score a checkpoint");
  eval->add_option("--checkpoint", eval_ckpt)->required();
  eval->add_option("--image", eval_image, "ground-truth image");
  eval->add_option("--occ", eval_occ, "ground-truth CSG JSON or VOX1");
  eval->add_option("--res", eval_res, "occupancy grid resolution");
  eval->add_option("--out", eval_out, "write metrics JSON here");

  std::string export_ckpt, export_out = ".";
  CLI::App* exp = app.add_subcommand("export-partition",
                                     "write partition JSON and SVG");
  exp->add_option("--checkpoint", export_ckpt)->required();
  exp->add_option("--out", export_out, "output directory");

  std::string info_ckpt;
  CLI::App* info = app.add_subcommand("info", "describe a checkpoint");
  info->add_option("--checkpoint", info_ckpt)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // Usage problems are configuration errors; --help and friends exit 0.
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  if (app.got_subcommand("fit-image")) return cmd_fit_image(image_flags);
  if (app.got_subcommand("fit-occ")) return cmd_fit_occ(occ_flags);
  if (app.got_subcommand("eval")) {
    if (eval_image.empty() == eval_occ.empty()) {
      throw ConfigError("eval needs exactly one of --image or --occ");
    }
    if (eval_res < 2) throw ConfigError("--res must be at least 2");
    return cmd_eval(eval_ckpt, eval_image, eval_occ, eval_res, eval_out);
  }
  if (app.got_subcommand("export-partition")) {
    return cmd_export_partition(export_ckpt, export_out);
  }
  return cmd_info(info_ckpt);
}

}  // namespace
}  // namespace acorn

int main(int argc, char** argv) {
  try {
    return acorn::dispatch(argc, argv);
  } catch (const acorn::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const acorn::IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 2;
  } catch (const acorn::CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << "\n";
    return 4;
  } catch (const acorn::InfeasibleError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const acorn::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
