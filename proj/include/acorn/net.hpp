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

#include <Eigen/Dense>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "acorn/block.hpp"
#include "acorn/common.hpp"
#include "acorn/rng.hpp"

namespace acorn {

// Everything here is 64-bit: gradients are checked against central
// differences to 1e-5 relative error and training must be bit-reproducible.

// ---------------------------------------------------------------------------
// Configuration

enum class OutputHead : std::uint8_t { kIdentity = 0, kSigmoid = 1 };

struct PositionalEncodingConfig {
  int num_frequencies = 6;
  int input_dim = 3;  // d_in + 1

  int output_dim() const { return 2 * num_frequencies * input_dim; }
};

struct ModelConfig {
  int d_in = 2;
  int d_out = 1;
  int pe_frequencies = 6;
  int enc_hidden_layers = 4;
  int enc_hidden_width = 256;
  int channels = 16;
  std::array<int, 3> grid{32, 32, 1};
  int dec_hidden_width = 64;
  OutputHead head = OutputHead::kIdentity;

  PositionalEncodingConfig pe() const {
    return {pe_frequencies, d_in + 1};
  }
  // Spatial nodes per block.
  std::int64_t nodes() const {
    std::int64_t n = 1;
    for (int a = 0; a < d_in; ++a) n *= grid[a];
    return n;
  }
  // Encoder output width: C features per node.
  std::int64_t grid_values() const { return channels * nodes(); }

  void validate() const {
    if (d_in != 2 && d_in != 3) throw ConfigError("d_in must be 2 or 3");
    if (d_out < 1) throw ConfigError("d_out must be >= 1");
    if (pe_frequencies < 1) throw ConfigError("pe_frequencies must be >= 1");
    if (enc_hidden_layers < 1 || enc_hidden_width < 1) {
      throw ConfigError("encoder needs >= 1 hidden layer of width >= 1");
    }
    if (channels < 1) throw ConfigError("channels must be >= 1");
    for (int a = 0; a < d_in; ++a) {
      if (grid[a] < 2) {
        throw ConfigError("feature grid needs >= 2 nodes per axis");
      }
    }
    if (dec_hidden_width < 1) throw ConfigError("decoder width must be >= 1");
  }
};

// ---------------------------------------------------------------------------
// MLP parameters, forward, backward

// weights[l] is (out x in); hidden layers ReLU, final layer linear.
struct MlpParams {
  std::vector<Eigen::MatrixXd> w;
  std::vector<Eigen::VectorXd> b;

  void set_zero() {
    for (auto& m : w) m.setZero();
    for (auto& v : b) v.setZero();
  }
  bool same_shape(const MlpParams& o) const {
    if (w.size() != o.w.size()) return false;
    for (std::size_t l = 0; l < w.size(); ++l) {
      if (w[l].rows() != o.w[l].rows() || w[l].cols() != o.w[l].cols()) {
        return false;
      }
    }
    return true;
  }
};

inline MlpParams zeros_like(const MlpParams& p) {
  MlpParams z;
  z.w.reserve(p.w.size());
  z.b.reserve(p.b.size());
  for (const auto& m : p.w) z.w.push_back(Eigen::MatrixXd::Zero(m.rows(), m.cols()));
  for (const auto& v : p.b) z.b.push_back(Eigen::VectorXd::Zero(v.size()));
  return z;
}

inline void accumulate(MlpParams& into, const MlpParams& from) {
  for (std::size_t l = 0; l < into.w.size(); ++l) {
    into.w[l] += from.w[l];
    into.b[l] += from.b[l];
  }
}

// Fan-in scaled uniform init, biases zero. Every weight is a pure function
// of (seed, tensor_id, flat_index), so initialization order is irrelevant.
inline MlpParams init_mlp(const std::vector<int>& widths, std::uint64_t seed,
                          std::uint64_t tensor_base) {
  if (widths.size() < 2) throw ConfigError("MLP needs >= 2 layer widths");
  MlpParams p;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const int in = widths[l];
    const int out = widths[l + 1];
    const double bound = std::sqrt(6.0 / in);
    Eigen::MatrixXd w(out, in);
    const std::uint64_t tensor_id = tensor_base + 2 * l;
    for (int r = 0; r < out; ++r) {
      for (int c = 0; c < in; ++c) {
        const std::uint64_t flat =
            static_cast<std::uint64_t>(r) * static_cast<std::uint64_t>(in) + c;
        w(r, c) = uniform_double(seed, Stream::kWeightInit, tensor_id, flat,
                                 -bound, bound);
      }
    }
    p.w.push_back(std::move(w));
    p.b.push_back(Eigen::VectorXd::Zero(out));
  }
  return p;
}

// Batched activations: acts[0] is the input, acts[l+1] the output of layer
// l (post-ReLU on hidden layers, linear on the last). Rows are batch
// entries.
struct MlpCache {
  std::vector<Eigen::MatrixXd> acts;
};

inline const Eigen::MatrixXd& mlp_forward(const MlpParams& p,
                                          const Eigen::MatrixXd& x,
                                          MlpCache& cache) {
  const std::size_t layers = p.w.size();
  cache.acts.resize(layers + 1);
  cache.acts[0] = x;
  for (std::size_t l = 0; l < layers; ++l) {
    Eigen::MatrixXd& out = cache.acts[l + 1];
    out.noalias() = cache.acts[l] * p.w[l].transpose();
    out.rowwise() += p.b[l].transpose();
    if (l + 1 < layers) out = out.cwiseMax(0.0);
  }
  return cache.acts[layers];
}

// Reverse pass. d_out is consumed as scratch. Gradients accumulate into
// `grads` (which must already have the right shapes); if d_input is given
// it receives d(loss)/d(input rows). The ReLU subgradient at exactly zero
// is zero.
inline void mlp_backward(const MlpParams& p, const MlpCache& cache,
                         Eigen::MatrixXd& d_out, MlpParams& grads,
                         Eigen::MatrixXd* d_input = nullptr) {
  for (int l = static_cast<int>(p.w.size()) - 1; l >= 0; --l) {
    grads.w[l].noalias() += d_out.transpose() * cache.acts[l];
    grads.b[l].noalias() += d_out.colwise().sum().transpose();
    if (l > 0) {
      Eigen::MatrixXd d_in(d_out.rows(), p.w[l].cols());
      d_in.noalias() = d_out * p.w[l];
      d_in.array() *= (cache.acts[l].array() > 0.0).cast<double>();
      d_out = std::move(d_in);
    } else if (d_input != nullptr) {
      d_input->noalias() = d_out * p.w[0];
    }
  }
}

// ---------------------------------------------------------------------------
// Positional encoding

// Per component p, frequencies k = 0..L-1: sin(2^k pi p), cos(2^k pi p).
// Component-major, frequency-minor, sin before cos; the raw input is not
// included.
template <typename In>
inline void positional_encoding_into(const In& x,
                                     const PositionalEncodingConfig& cfg,
                                     double* out) {
  int o = 0;
  for (int c = 0; c < cfg.input_dim; ++c) {
    double arg = M_PI * x[c];
    for (int k = 0; k < cfg.num_frequencies; ++k) {
      out[o++] = std::sin(arg);
      out[o++] = std::cos(arg);
      arg *= 2.0;
    }
  }
}

template <typename In>
inline Eigen::VectorXd positional_encoding(
    const In& x, const PositionalEncodingConfig& cfg) {
  Eigen::VectorXd out(cfg.output_dim());
  positional_encoding_into(x, cfg, out.data());
  return out;
}

// ---------------------------------------------------------------------------
// Feature grid and multilinear interpolation

// Feature grid of one block: flat storage, channel-major, spatial axes in
// order with the last axis fastest.
struct FeatureGrid {
  int channels = 0;
  int d = 0;
  std::array<int, 3> dims{1, 1, 1};
  Eigen::VectorXd values;  // channels * prod(dims)

  std::int64_t nodes() const {
    std::int64_t n = 1;
    for (int a = 0; a < d; ++a) n *= dims[a];
    return n;
  }
};

// Interpolation stencil of one local coordinate: 2^d corner node offsets
// (within one channel slab) and their multilinear weights.
struct InterpStencil {
  int corners = 0;
  std::array<std::int32_t, 8> offset{};
  std::array<double, 8> weight{};
};

// Align-corners: x = -1 maps to node 0, x = +1 to node N-1. Points exactly
// on a node take that node's value exactly.
template <typename In>
inline InterpStencil interp_stencil(const std::array<int, 3>& dims, int d,
                                    const In& x_local) {
  InterpStencil s;
  s.corners = 1 << d;
  std::array<std::int64_t, 3> stride{1, 1, 1};
  for (int a = d - 2; a >= 0; --a) stride[a] = stride[a + 1] * dims[a + 1];
  std::array<int, 3> i0{0, 0, 0};
  std::array<double, 3> frac{0, 0, 0};
  for (int a = 0; a < d; ++a) {
    const double x = x_local[a];
    if (!(x >= -1.0 && x <= 1.0)) {
      throw ConfigError("interpolation coordinate outside [-1,1]");
    }
    const double t = (x + 1.0) * 0.5 * (dims[a] - 1);
    int lo = static_cast<int>(std::floor(t));
    if (lo > dims[a] - 2) lo = dims[a] - 2;
    if (lo < 0) lo = 0;
    i0[a] = lo;
    frac[a] = t - lo;
  }
  for (int k = 0; k < s.corners; ++k) {
    std::int64_t off = 0;
    double w = 1.0;
    for (int a = 0; a < d; ++a) {
      const int hi = (k >> (d - 1 - a)) & 1;
      off += stride[a] * (i0[a] + hi);
      w *= hi ? frac[a] : 1.0 - frac[a];
    }
    s.offset[k] = static_cast<std::int32_t>(off);
    s.weight[k] = w;
  }
  return s;
}

// gamma_c = sum_k w_k * grid[c, corner_k]; grid values laid out with the
// channel slab outermost, so value index = c * nodes + offset.
inline void interp_gather(const double* grid_values, std::int64_t nodes,
                          int channels, const InterpStencil& s, double* gamma) {
  for (int c = 0; c < channels; ++c) {
    const double* slab = grid_values + c * nodes;
    double acc = 0.0;
    for (int k = 0; k < s.corners; ++k) {
      acc += s.weight[k] * slab[s.offset[k]];
    }
    gamma[c] = acc;
  }
}

inline void interp_scatter(double* d_grid, std::int64_t nodes, int channels,
                           const InterpStencil& s, const double* d_gamma) {
  for (int c = 0; c < channels; ++c) {
    double* slab = d_grid + c * nodes;
    const double g = d_gamma[c];
    for (int k = 0; k < s.corners; ++k) {
      slab[s.offset[k]] += s.weight[k] * g;
    }
  }
}

template <typename In>
inline Eigen::VectorXd lin_interp(const FeatureGrid& grid, const In& x_local) {
  const auto s = interp_stencil(grid.dims, grid.d, x_local);
  Eigen::VectorXd gamma(grid.channels);
  interp_gather(grid.values.data(), grid.nodes(), grid.channels, s,
                gamma.data());
  return gamma;
}

// ---------------------------------------------------------------------------
// Model

struct AcornModel {
  ModelConfig cfg;
  MlpParams encoder;
  MlpParams decoder;
};

// Gradients mirror the parameter layout.
struct ModelGrads {
  MlpParams encoder;
  MlpParams decoder;

  void set_zero() {
    encoder.set_zero();
    decoder.set_zero();
  }
};

inline std::vector<int> encoder_widths(const ModelConfig& cfg) {
  std::vector<int> w;
  w.push_back(cfg.pe().output_dim());
  for (int l = 0; l < cfg.enc_hidden_layers; ++l) {
    w.push_back(cfg.enc_hidden_width);
  }
  w.push_back(static_cast<int>(cfg.grid_values()));
  return w;
}

inline std::vector<int> decoder_widths(const ModelConfig& cfg) {
  return {cfg.channels, cfg.dec_hidden_width, cfg.d_out};
}

// Tensor id bases keep encoder and decoder initialization streams apart.
inline constexpr std::uint64_t kEncoderTensorBase = 0;
inline constexpr std::uint64_t kDecoderTensorBase = 64;

inline AcornModel make_model(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  if (cfg.grid_values() > (std::int64_t(1) << 31)) {
    throw ConfigError("feature grid too large");
  }
  AcornModel m;
  m.cfg = cfg;
  m.encoder = init_mlp(encoder_widths(cfg), seed, kEncoderTensorBase);
  m.decoder = init_mlp(decoder_widths(cfg), seed, kDecoderTensorBase);
  return m;
}

inline ModelGrads zero_grads(const AcornModel& m) {
  return {zeros_like(m.encoder), zeros_like(m.decoder)};
}

// Number of per-block encoder evaluations performed so far (batched calls
// count one per row). Tests use this to pin down encoder-call economy.
inline std::atomic<std::uint64_t>& encoder_forward_count() {
  static std::atomic<std::uint64_t> count{0};
  return count;
}

// Batched encoder pass: one row of x_g per block. Returns the final linear
// activations (n x grid_values) inside `cache`.
inline const Eigen::MatrixXd& encoder_forward_batch(
    const AcornModel& m, const Eigen::MatrixXd& pe_rows, MlpCache& cache) {
  const Eigen::MatrixXd& g = mlp_forward(m.encoder, pe_rows, cache);
  encoder_forward_count().fetch_add(static_cast<std::uint64_t>(pe_rows.rows()),
                                    std::memory_order_relaxed);
  if (!g.allFinite()) {
    throw NumericError("encoder produced non-finite features");
  }
  return g;
}

inline Eigen::MatrixXd pe_rows_for(const AcornModel& m,
                                   const std::vector<GlobalBlockCoord>& xgs) {
  const auto pe = m.cfg.pe();
  Eigen::MatrixXd rows(static_cast<Eigen::Index>(xgs.size()),
                       pe.output_dim());
  std::array<double, 4> in{};
  for (std::size_t i = 0; i < xgs.size(); ++i) {
    for (int a = 0; a < m.cfg.d_in; ++a) in[a] = xgs[i].center[a];
    in[m.cfg.d_in] = xgs[i].scale;
    Eigen::VectorXd row(pe.output_dim());
    positional_encoding_into(in, pe, row.data());
    rows.row(static_cast<Eigen::Index>(i)) = row.transpose();
  }
  return rows;
}

inline FeatureGrid encoder_forward(const AcornModel& m,
                                   const GlobalBlockCoord& x_g) {
  MlpCache cache;
  const auto& g = encoder_forward_batch(m, pe_rows_for(m, {x_g}), cache);
  FeatureGrid grid;
  grid.channels = m.cfg.channels;
  grid.d = m.cfg.d_in;
  grid.dims = m.cfg.grid;
  grid.values = g.row(0).transpose();
  return grid;
}

inline double apply_head(OutputHead head, double z) {
  return head == OutputHead::kSigmoid ? 1.0 / (1.0 + std::exp(-z)) : z;
}

// Batched decoder: gammas (n x C) to outputs (n x d_out), head applied.
// The cache keeps pre-head hidden activations for the backward pass.
inline Eigen::MatrixXd decoder_forward_batch(const AcornModel& m,
                                             const Eigen::MatrixXd& gammas,
                                             MlpCache& cache) {
  Eigen::MatrixXd out = mlp_forward(m.decoder, gammas, cache);
  if (m.cfg.head == OutputHead::kSigmoid) {
    out = (1.0 + (-out.array()).exp()).inverse();
  }
  return out;
}

inline Eigen::VectorXd decoder_forward(const AcornModel& m,
                                       const Eigen::VectorXd& gamma) {
  MlpCache cache;
  return decoder_forward_batch(m, gamma.transpose(), cache).row(0).transpose();
}

// Gradient of the head output w.r.t. its pre-activation, given the output y.
inline void head_backward_inplace(OutputHead head, const Eigen::MatrixXd& y,
                                  Eigen::MatrixXd& d_y) {
  if (head == OutputHead::kSigmoid) {
    d_y.array() *= y.array() * (1.0 - y.array());
  }
}

// ---------------------------------------------------------------------------
// Whole-pipeline single-block operations

// One encoder pass, then interp + decode per local coordinate. Numerically
// identical to evaluating each coordinate on its own.
inline std::vector<Eigen::VectorXd> forward_block(
    const AcornModel& m, const GlobalBlockCoord& x_g,
    const std::vector<std::array<double, 3>>& locals) {
  if (locals.empty()) throw ConfigError("forward_block: no coordinates");
  const FeatureGrid grid = encoder_forward(m, x_g);
  std::vector<Eigen::VectorXd> out;
  out.reserve(locals.size());
  MlpCache scratch;
  for (const auto& xl : locals) {
    const Eigen::VectorXd gamma = lin_interp(grid, xl);
    out.push_back(
        decoder_forward_batch(m, gamma.transpose(), scratch).row(0).transpose());
  }
  return out;
}

// Reverse pass of forward_block: upstream holds d(loss)/d(output) per local
// coordinate; gradients for both networks accumulate over the whole list.
inline ModelGrads backward(const AcornModel& m, const GlobalBlockCoord& x_g,
                           const std::vector<std::array<double, 3>>& locals,
                           const std::vector<Eigen::VectorXd>& upstream) {
  if (locals.size() != upstream.size()) {
    throw ConfigError("backward: one upstream gradient per coordinate");
  }
  if (locals.empty()) throw ConfigError("backward: no coordinates");
  const std::int64_t nodes = m.cfg.nodes();
  const int C = m.cfg.channels;

  MlpCache enc_cache;
  const Eigen::MatrixXd& g =
      encoder_forward_batch(m, pe_rows_for(m, {x_g}), enc_cache);

  // Decode all locals as one batch.
  const Eigen::Index n = static_cast<Eigen::Index>(locals.size());
  std::vector<InterpStencil> stencils(locals.size());
  Eigen::MatrixXd gammas(n, C);
  for (Eigen::Index i = 0; i < n; ++i) {
    stencils[i] = interp_stencil(m.cfg.grid, m.cfg.d_in, locals[i]);
    Eigen::VectorXd gamma(C);
    interp_gather(g.row(0).data(), nodes, C, stencils[i], gamma.data());
    gammas.row(i) = gamma.transpose();
  }
  MlpCache dec_cache;
  const Eigen::MatrixXd y = decoder_forward_batch(m, gammas, dec_cache);

  ModelGrads grads = zero_grads(m);
  Eigen::MatrixXd d_y(n, m.cfg.d_out);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (upstream[i].size() != m.cfg.d_out) {
      throw ConfigError("backward: upstream gradient has wrong width");
    }
    d_y.row(i) = upstream[i].transpose();
  }
  head_backward_inplace(m.cfg.head, y, d_y);
  Eigen::MatrixXd d_gammas;
  mlp_backward(m.decoder, dec_cache, d_y, grads.decoder, &d_gammas);
  Eigen::MatrixXd d_grid = Eigen::MatrixXd::Zero(1, m.cfg.grid_values());
  Eigen::VectorXd d_gamma(C);
  for (Eigen::Index i = 0; i < n; ++i) {
    d_gamma = d_gammas.row(i).transpose();
    interp_scatter(d_grid.row(0).data(), nodes, C, stencils[i],
                   d_gamma.data());
  }
  mlp_backward(m.encoder, enc_cache, d_grid, grads.encoder);
  return grads;
}

// ---------------------------------------------------------------------------
// Losses (per sample; derivative w.r.t. the post-head output)

// Squared L2 over channels.
inline double mse_sample_loss(const double* y, const double* target, int d_out,
                              double* d_y) {
  double loss = 0.0;
  for (int c = 0; c < d_out; ++c) {
    const double r = y[c] - target[c];
    loss += r * r;
    d_y[c] = 2.0 * r;
  }
  return loss;
}

inline constexpr double kBceClamp = 1e-12;

// Binary cross-entropy with the prediction clamped into
// [kBceClamp, 1 - kBceClamp]; outside the clamp range the gradient is zero.
inline double bce_sample_loss(const double* y, const double* target, int d_out,
                              double* d_y) {
  double loss = 0.0;
  for (int c = 0; c < d_out; ++c) {
    double p = y[c];
    const bool clamped = p < kBceClamp || p > 1.0 - kBceClamp;
    if (p < kBceClamp) p = kBceClamp;
    if (p > 1.0 - kBceClamp) p = 1.0 - kBceClamp;
    const double t = target[c];
    loss += -(t * std::log(p) + (1.0 - t) * std::log1p(-p));
    d_y[c] = clamped ? 0.0 : (p - t) / (p * (1.0 - p));
  }
  return loss;
}

// ---------------------------------------------------------------------------
// Adam

struct AdamState {
  MlpParams m;
  MlpParams v;
  std::int64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

inline AdamState make_adam(const MlpParams& params) {
  AdamState s;
  s.m = zeros_like(params);
  s.v = zeros_like(params);
  return s;
}

// One bias-corrected Adam update. The step counter advances first, so the
// first call uses t = 1.
inline void adam_step(MlpParams& params, const MlpParams& grads, AdamState& s,
                      double lr) {
  if (!params.same_shape(grads) || !params.same_shape(s.m)) {
    throw ConfigError("adam_step: shape mismatch");
  }
  s.step += 1;
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
  auto update = [&](Eigen::Ref<Eigen::MatrixXd> p,
                    const Eigen::Ref<const Eigen::MatrixXd>& g,
                    Eigen::Ref<Eigen::MatrixXd> m,
                    Eigen::Ref<Eigen::MatrixXd> v) {
    m.array() = s.beta1 * m.array() + (1.0 - s.beta1) * g.array();
    v.array() = s.beta2 * v.array() + (1.0 - s.beta2) * g.array().square();
    p.array() -=
        lr * (m.array() / c1) / ((v.array() / c2).sqrt() + s.eps);
  };
  for (std::size_t l = 0; l < params.w.size(); ++l) {
    update(params.w[l], grads.w[l], s.m.w[l], s.v.w[l]);
    update(params.b[l], grads.b[l], s.m.b[l], s.v.b[l]);
  }
}

struct ModelOptimizer {
  AdamState encoder;
  AdamState decoder;
  double lr = 1e-3;
};

inline ModelOptimizer make_optimizer(const AcornModel& m, double lr) {
  ModelOptimizer o;
  o.encoder = make_adam(m.encoder);
  o.decoder = make_adam(m.decoder);
  o.lr = lr;
  return o;
}

inline void optimizer_step(AcornModel& m, const ModelGrads& grads,
                           ModelOptimizer& opt) {
  adam_step(m.encoder, grads.encoder, opt.encoder, opt.lr);
  adam_step(m.decoder, grads.decoder, opt.decoder, opt.lr);
}

}  // namespace acorn
