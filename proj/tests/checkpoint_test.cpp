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

#include "acorn/checkpoint.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <string>

#include "acorn/partition.hpp"

namespace acorn {
namespace {

ModelConfig small_config() {
  ModelConfig cfg;
  cfg.d_in = 2;
  cfg.d_out = 1;
  cfg.pe_frequencies = 2;
  cfg.enc_hidden_layers = 2;
  cfg.enc_hidden_width = 12;
  cfg.channels = 3;
  cfg.grid = {4, 4, 1};
  cfg.dec_hidden_width = 6;
  return cfg;
}

Checkpoint sample_checkpoint() {
  AcornModel m = make_model(small_config(), 11);
  ModelOptimizer opt = make_optimizer(m, 1e-3);
  // Step once so the moments are nonzero.
  ModelGrads g = zero_grads(m);
  g.encoder.w[0].setConstant(0.25);
  g.decoder.b[1].setConstant(-1.0);
  optimizer_step(m, g, opt);

  Partition p(2, 1, 8);
  ErrorHistory h;
  h[BlockId{1, {0, 1, 0}}] = ErrorHistoryEntry{0.125, 500};

  Checkpoint c;
  c.metadata = {{"iteration", 500},
                {"seed", 11},
                {"adam_step_enc", opt.encoder.step},
                {"adam_step_dec", opt.decoder.step},
                {"partition", p.to_json()},
                {"history", history_to_json(h)}};
  c.tensors = model_tensors(m, opt);
  return c;
}

TEST(Checkpoint, SaveLoadSaveIsByteIdentical) {
  const Checkpoint c = sample_checkpoint();
  const std::string once = serialize_checkpoint(c);
  const Checkpoint back = deserialize_checkpoint(once);
  const std::string twice = serialize_checkpoint(back);
  EXPECT_EQ(once, twice);
  EXPECT_EQ(back.metadata, c.metadata);
  ASSERT_EQ(back.tensors.size(), c.tensors.size());
  for (std::size_t i = 0; i < c.tensors.size(); ++i) {
    EXPECT_EQ(back.tensors[i].name, c.tensors[i].name);
    EXPECT_EQ(back.tensors[i].dims, c.tensors[i].dims);
    EXPECT_EQ(back.tensors[i].data, c.tensors[i].data);
  }
}

TEST(Checkpoint, FileRoundTrip) {
  const std::string path = ::testing::TempDir() + "roundtrip.ckpt";
  const Checkpoint c = sample_checkpoint();
  save_checkpoint(c, path);
  const Checkpoint back = load_checkpoint(path);
  EXPECT_EQ(serialize_checkpoint(back), serialize_checkpoint(c));
}

TEST(Checkpoint, RejectsBadMagicVersionAndTruncation) {
  const std::string good = serialize_checkpoint(sample_checkpoint());

  std::string bad_magic = good;
  bad_magic[0] = 'X';
  EXPECT_THROW(deserialize_checkpoint(bad_magic), CheckpointError);

  std::string bad_version = good;
  bad_version[4] = 9;
  EXPECT_THROW(deserialize_checkpoint(bad_version), CheckpointError);

  for (std::size_t cut : {std::size_t(3), std::size_t(10), good.size() / 2,
                          good.size() - 1}) {
    EXPECT_THROW(deserialize_checkpoint(good.substr(0, cut)), CheckpointError)
        << "cut at " << cut;
  }

  std::string trailing = good + "junk";
  EXPECT_THROW(deserialize_checkpoint(trailing), CheckpointError);
}

TEST(Checkpoint, ModelTensorsRestoreBitExact) {
  AcornModel m = make_model(small_config(), 11);
  ModelOptimizer opt = make_optimizer(m, 1e-3);
  ModelGrads g = zero_grads(m);
  g.encoder.w[1].setConstant(0.5);
  optimizer_step(m, g, opt);

  const std::vector<NamedTensor> tensors = model_tensors(m, opt);
  AcornModel fresh = make_model(small_config(), 999);  // different weights
  ModelOptimizer fresh_opt = make_optimizer(fresh, 1e-3);
  apply_model_tensors(tensors, fresh, fresh_opt);

  for (std::size_t l = 0; l < m.encoder.w.size(); ++l) {
    EXPECT_TRUE((fresh.encoder.w[l].array() == m.encoder.w[l].array()).all());
    EXPECT_TRUE((fresh.encoder.b[l].array() == m.encoder.b[l].array()).all());
    EXPECT_TRUE(
        (fresh_opt.encoder.m.w[l].array() == opt.encoder.m.w[l].array()).all());
    EXPECT_TRUE(
        (fresh_opt.encoder.v.w[l].array() == opt.encoder.v.w[l].array()).all());
  }
  for (std::size_t l = 0; l < m.decoder.w.size(); ++l) {
    EXPECT_TRUE((fresh.decoder.w[l].array() == m.decoder.w[l].array()).all());
  }
}

TEST(Checkpoint, MissingOrMisshapenTensorRejected) {
  AcornModel m = make_model(small_config(), 11);
  ModelOptimizer opt = make_optimizer(m, 1e-3);
  std::vector<NamedTensor> tensors = model_tensors(m, opt);

  std::vector<NamedTensor> missing(tensors.begin(), tensors.end() - 1);
  AcornModel fresh = make_model(small_config(), 1);
  ModelOptimizer fresh_opt = make_optimizer(fresh, 1e-3);
  EXPECT_THROW(apply_model_tensors(missing, fresh, fresh_opt),
               CheckpointError);

  std::vector<NamedTensor> misshapen = tensors;
  misshapen[0].dims = {1, 1};
  misshapen[0].data = {0.0};
  EXPECT_THROW(apply_model_tensors(misshapen, fresh, fresh_opt),
               CheckpointError);
}

TEST(Checkpoint, HistoryRoundTrip) {
  ErrorHistory h;
  h[BlockId{2, {3, 1, 0}}] = ErrorHistoryEntry{0.75, 1000};
  h[BlockId{5, {31, 7, 12}}] = ErrorHistoryEntry{1e-9, 42};
  const ErrorHistory back = history_from_json(history_to_json(h));
  ASSERT_EQ(back.size(), h.size());
  for (const auto& [b, e] : h) {
    auto it = back.find(b);
    ASSERT_NE(it, back.end());
    EXPECT_EQ(it->second.w_eq, e.w_eq);
    EXPECT_EQ(it->second.iteration, e.iteration);
  }
  EXPECT_THROW(history_from_json(nlohmann::json::array({{1, 2}})),
               CheckpointError);
}

}  // namespace
}  // namespace acorn
