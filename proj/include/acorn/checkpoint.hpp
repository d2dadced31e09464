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

#include <bit>
#include <cstdint>
#include <fstream>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "acorn/allocator.hpp"
#include "acorn/common.hpp"
#include "acorn/net.hpp"

namespace acorn {

// Run container: magic, format version, one JSON metadata blob, then raw
// tensors. Everything needed to continue a run bit-identically lives here:
// parameters, Adam moments and step counts, partition, error history,
// iteration, and seed (the RNG is counter-based, so seed + iteration is the
// complete RNG state).
//
// Layout (all integers little-endian):
//   "ACRN" | u32 version | u64 json_len | json | u64 tensor_count |
//   per tensor: u32 name_len | name | u32 rank | u64 dims[rank] |
//               f64 values[prod(dims)] (row-major)
inline constexpr char kCheckpointMagic[4] = {'A', 'C', 'R', 'N'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "checkpoint serialization assumes a little-endian host");

struct NamedTensor {
  std::string name;
  std::vector<std::uint64_t> dims;
  std::vector<double> data;
};

struct Checkpoint {
  nlohmann::json metadata;
  std::vector<NamedTensor> tensors;
};

namespace detail {

template <typename T>
void put(std::string& out, T v) {
  out.append(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T take(const std::string& in, std::size_t* pos) {
  if (in.size() - *pos < sizeof(T)) {
    throw CheckpointError("truncated checkpoint");
  }
  T v;
  std::memcpy(&v, in.data() + *pos, sizeof(T));
  *pos += sizeof(T);
  return v;
}

}  // namespace detail

inline std::string serialize_checkpoint(const Checkpoint& c) {
  std::string out;
  out.append(kCheckpointMagic, 4);
  detail::put<std::uint32_t>(out, kCheckpointVersion);
  const std::string meta = c.metadata.dump();
  detail::put<std::uint64_t>(out, meta.size());
  out += meta;
  detail::put<std::uint64_t>(out, c.tensors.size());
  for (const NamedTensor& t : c.tensors) {
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
    out += t.name;
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(t.dims.size()));
    std::uint64_t n = 1;
    for (std::uint64_t d : t.dims) {
      detail::put<std::uint64_t>(out, d);
      n *= d;
    }
    if (n != t.data.size()) {
      throw CheckpointError("tensor '" + t.name + "' dims do not match data");
    }
    out.append(reinterpret_cast<const char*>(t.data.data()),
               t.data.size() * sizeof(double));
  }
  return out;
}

inline Checkpoint deserialize_checkpoint(const std::string& in) {
  std::size_t pos = 0;
  if (in.size() < 8 || std::memcmp(in.data(), kCheckpointMagic, 4) != 0) {
    throw CheckpointError("bad checkpoint magic");
  }
  pos = 4;
  const auto version = detail::take<std::uint32_t>(in, &pos);
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " +
                          std::to_string(version));
  }
  const auto meta_len = detail::take<std::uint64_t>(in, &pos);
  if (in.size() - pos < meta_len) throw CheckpointError("truncated checkpoint");
  Checkpoint c;
  try {
    c.metadata = nlohmann::json::parse(in.substr(pos, meta_len));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("bad checkpoint metadata: ") + e.what());
  }
  pos += meta_len;
  const auto count = detail::take<std::uint64_t>(in, &pos);
  for (std::uint64_t i = 0; i < count; ++i) {
    NamedTensor t;
    const auto name_len = detail::take<std::uint32_t>(in, &pos);
    if (in.size() - pos < name_len) throw CheckpointError("truncated checkpoint");
    t.name = in.substr(pos, name_len);
    pos += name_len;
    const auto rank = detail::take<std::uint32_t>(in, &pos);
    if (rank > 8) throw CheckpointError("implausible tensor rank");
    std::uint64_t n = 1;
    for (std::uint32_t r = 0; r < rank; ++r) {
      t.dims.push_back(detail::take<std::uint64_t>(in, &pos));
      n *= t.dims.back();
    }
    if ((in.size() - pos) / sizeof(double) < n) {
      throw CheckpointError("truncated checkpoint");
    }
    t.data.resize(n);
    std::memcpy(t.data.data(), in.data() + pos, n * sizeof(double));
    pos += n * sizeof(double);
    c.tensors.push_back(std::move(t));
  }
  if (pos != in.size()) {
    throw CheckpointError("trailing bytes after checkpoint payload");
  }
  return c;
}

inline void save_checkpoint(const Checkpoint& c, const std::string& path) {
  const std::string bytes = serialize_checkpoint(c);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

// ---------------------------------------------------------------------------
// Model / optimizer <-> tensor records

namespace detail {

inline NamedTensor matrix_tensor(const std::string& name,
                                 const Eigen::MatrixXd& m) {
  NamedTensor t;
  t.name = name;
  t.dims = {static_cast<std::uint64_t>(m.rows()),
            static_cast<std::uint64_t>(m.cols())};
  t.data.reserve(m.size());
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) t.data.push_back(m(r, c));
  }
  return t;
}

inline NamedTensor vector_tensor(const std::string& name,
                                 const Eigen::VectorXd& v) {
  NamedTensor t;
  t.name = name;
  t.dims = {static_cast<std::uint64_t>(v.size())};
  t.data.assign(v.data(), v.data() + v.size());
  return t;
}

inline void append_mlp_tensors(std::vector<NamedTensor>& out,
                               const std::string& prefix, const MlpParams& p) {
  for (std::size_t l = 0; l < p.w.size(); ++l) {
    out.push_back(matrix_tensor(prefix + ".w" + std::to_string(l), p.w[l]));
    out.push_back(vector_tensor(prefix + ".b" + std::to_string(l), p.b[l]));
  }
}

inline void read_mlp_tensors(const std::map<std::string, const NamedTensor*>&
                                 by_name,
                             const std::string& prefix, MlpParams& p) {
  for (std::size_t l = 0; l < p.w.size(); ++l) {
    for (int which = 0; which < 2; ++which) {
      const std::string name =
          prefix + (which == 0 ? ".w" : ".b") + std::to_string(l);
      auto it = by_name.find(name);
      if (it == by_name.end()) {
        throw CheckpointError("checkpoint misses tensor '" + name + "'");
      }
      const NamedTensor& t = *it->second;
      if (which == 0) {
        if (t.dims.size() != 2 ||
            t.dims[0] != static_cast<std::uint64_t>(p.w[l].rows()) ||
            t.dims[1] != static_cast<std::uint64_t>(p.w[l].cols())) {
          throw CheckpointError("tensor '" + name + "' has unexpected shape");
        }
        std::size_t i = 0;
        for (Eigen::Index r = 0; r < p.w[l].rows(); ++r) {
          for (Eigen::Index c = 0; c < p.w[l].cols(); ++c) {
            p.w[l](r, c) = t.data[i++];
          }
        }
      } else {
        if (t.dims.size() != 1 ||
            t.dims[0] != static_cast<std::uint64_t>(p.b[l].size())) {
          throw CheckpointError("tensor '" + name + "' has unexpected shape");
        }
        for (Eigen::Index r = 0; r < p.b[l].size(); ++r) {
          p.b[l][r] = t.data[r];
        }
      }
    }
  }
}

}  // namespace detail

inline std::vector<NamedTensor> model_tensors(const AcornModel& m,
                                              const ModelOptimizer& opt) {
  std::vector<NamedTensor> out;
  detail::append_mlp_tensors(out, "enc", m.encoder);
  detail::append_mlp_tensors(out, "dec", m.decoder);
  detail::append_mlp_tensors(out, "adam.enc.m", opt.encoder.m);
  detail::append_mlp_tensors(out, "adam.enc.v", opt.encoder.v);
  detail::append_mlp_tensors(out, "adam.dec.m", opt.decoder.m);
  detail::append_mlp_tensors(out, "adam.dec.v", opt.decoder.v);
  return out;
}

// Shapes come from the freshly constructed model; every tensor must be
// present with a matching shape.
inline void apply_model_tensors(const std::vector<NamedTensor>& tensors,
                                AcornModel& m, ModelOptimizer& opt) {
  std::map<std::string, const NamedTensor*> by_name;
  for (const NamedTensor& t : tensors) by_name[t.name] = &t;
  detail::read_mlp_tensors(by_name, "enc", m.encoder);
  detail::read_mlp_tensors(by_name, "dec", m.decoder);
  detail::read_mlp_tensors(by_name, "adam.enc.m", opt.encoder.m);
  detail::read_mlp_tensors(by_name, "adam.enc.v", opt.encoder.v);
  detail::read_mlp_tensors(by_name, "adam.dec.m", opt.decoder.m);
  detail::read_mlp_tensors(by_name, "adam.dec.v", opt.decoder.v);
}

// ---------------------------------------------------------------------------
// History serialization (block key plus its last fitted weighted error)

inline nlohmann::json history_to_json(const ErrorHistory& h) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& [b, e] : h) {
    out.push_back({b.level, b.idx[0], b.idx[1], b.idx[2], e.w_eq, e.iteration});
  }
  return out;
}

inline ErrorHistory history_from_json(const nlohmann::json& j) {
  ErrorHistory h;
  for (const auto& row : j) {
    if (!row.is_array() || row.size() != 6) {
      throw CheckpointError("malformed history entry");
    }
    BlockId b;
    b.level = row[0].get<std::uint8_t>();
    b.idx = {row[1].get<std::uint32_t>(), row[2].get<std::uint32_t>(),
             row[3].get<std::uint32_t>()};
    h[b] = ErrorHistoryEntry{row[4].get<double>(), row[5].get<std::int64_t>()};
  }
  return h;
}

}  // namespace acorn
