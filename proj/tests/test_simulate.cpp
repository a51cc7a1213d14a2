// Copyright 2026 The ese-sim Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "ese/pipeline.hpp"
#include "ese/simulate.hpp"
#include "ese/synthetic.hpp"
#include "test_util.hpp"

namespace ese {
namespace {

using testing::random_layer;
using testing::random_matrix;

using Loads = std::vector<std::vector<std::uint32_t>>;

EncodedSparseMatrix encode_mask(const PruneMask& mask, std::size_t n_pe) {
  QuantizedTensor q{{mask.rows, mask.cols}, std::vector<std::int32_t>(mask.rows * mask.cols, 1), {12, 4}};
  return encode_csc(q, mask, n_pe).first;
}

TEST(PeBalanceBound, Examples) {
  SimConfig c;
  EXPECT_EQ(pe_balance_bound(c), 32u);
  c.mem_width_bits = 256;
  EXPECT_EQ(pe_balance_bound(c), 16u);
  c.mem_width_bits = 512;
  c.freq_mem = 100e6;
  EXPECT_EQ(pe_balance_bound(c), 16u);
  c.freq_pe = 0;
  EXPECT_THROW(pe_balance_bound(c), ValidationError);
}

TEST(SimulateLoads, FourPeColumnTimes) {
  const Loads conventional = {{5}, {3}, {3}, {1}};
  const Loads balanced = {{3}, {3}, {3}, {3}};
  EXPECT_EQ(simulate_loads(conventional, 1).cycles, 5u);
  EXPECT_EQ(simulate_loads(balanced, 1).cycles, 3u);
  EXPECT_DOUBLE_EQ(simulate_loads(conventional, 1).utilization, 12.0 / 20.0);
  EXPECT_DOUBLE_EQ(simulate_loads(balanced, 1).utilization, 1.0);
}

TEST(SimulateLoads, FifoDecouplesAlternatingImbalance) {
  // Two PEs trading runs of four 3-word and four 1-word columns.
  Loads w(2, std::vector<std::uint32_t>(16));
  for (std::size_t j = 0; j < 16; ++j) {
    w[0][j] = (j / 4) % 2 ? 1 : 3;
    w[1][j] = (j / 4) % 2 ? 3 : 1;
  }
  const auto d1 = simulate_loads(w, 1);
  const auto d4 = simulate_loads(w, 4);
  EXPECT_LT(d4.cycles, d1.cycles);
  EXPECT_GE(d4.cycles, 32u);
}

TEST(SimulateLoads, EmptyMatrixCostsNothing) {
  const auto r = simulate_loads(Loads(4, std::vector<std::uint32_t>(10, 0)), 8);
  EXPECT_EQ(r.cycles, 0u);
  EXPECT_EQ(r.utilization, 1.0);
  EXPECT_THROW(simulate_loads(Loads(1, {1}), 0), ValidationError);
}

TEST(SimulateSpmv, PerfectlyBalancedIsFullyUtilized) {
  std::mt19937_64 rng(1);
  for (std::size_t depth : {1u, 2u, 8u}) {
    PruneMask m = PruneMask::all(64, 20, false);
    for (std::size_t j = 0; j < 20; ++j) {
      const std::size_t k = 1 + rng() % 4;  // same count on every PE
      for (std::size_t pe = 0; pe < 8; ++pe)
        for (std::size_t lr = 0; lr < k; ++lr) m.kept[(pe + lr * 8) * 20 + j] = 1;
    }
    const auto r = simulate_spmv(encode_mask(m, 8), depth);
    EXPECT_DOUBLE_EQ(r.utilization, 1.0);
    EXPECT_DOUBLE_EQ(r.useful_utilization, 1.0);
  }
}

TEST(SimulateSpmv, ComputeBoundOfReferenceInputMatrix) {
  PruneMask m = PruneMask::all(1024, 143, false);
  for (std::size_t r = 0; r < 128; ++r)
    for (std::size_t c = 0; c < 143; ++c) m.kept[r * 143 + c] = 1;
  const auto e = encode_mask(m, 32);
  ASSERT_EQ(e.total_words(), 18304u);
  const auto r = simulate_spmv(e, 8);
  EXPECT_EQ(r.cycles, 572u);
  EXPECT_EQ(r.compute_lower_bound, 572u);
  EXPECT_DOUBLE_EQ(static_cast<double>(r.cycles) / 200e6, 2.86e-6);
}

TEST(SimulateSpmv, ConservationAndMonotoneDepthProperty) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t n_pe = 1 + rng() % 16;
    const auto m = random_matrix(n_pe * (1 + rng() % 40), 1 + rng() % 60, rng);
    const auto mask = prune_magnitude(m, std::uniform_real_distribution<double>(0.02, 0.5)(rng));
    const auto e = encode_mask(mask, n_pe);
    double prev = 0.0;
    for (std::size_t d : {1u, 2u, 3u, 4u, 8u, 16u, 64u}) {
      const auto r = simulate_spmv(e, d);
      EXPECT_EQ(std::accumulate(r.busy.begin(), r.busy.end(), std::uint64_t{0}), e.total_words());
      EXPECT_GE(r.cycles, r.compute_lower_bound);
      EXPECT_LE(r.utilization, 1.0);
      EXPECT_LE(r.useful_utilization, r.utilization);
      EXPECT_GE(r.utilization, prev - 1e-12) << "depth " << d;
      prev = r.utilization;
    }
  }
}

TEST(SimulateSpmv, IndependentPushIsNoSlower) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const auto m = random_matrix(64, 40, rng);
    const auto e = encode_mask(prune_magnitude(m, 0.15), 8);
    for (std::size_t d : {1u, 4u}) EXPECT_LE(simulate_spmv(e, d, true).cycles, simulate_spmv(e, d).cycles);
  }
}

TEST(SimulateSpmv, UnbalancedRecurrentMatrixFifoCurve) {
  std::vector<double> u1, u8;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(seed);
    const auto m = random_matrix(1024, 512, rng);
    const auto e = encode_mask(prune_magnitude(m, 0.11), 32);
    u1.push_back(simulate_spmv(e, 1).utilization);
    u8.push_back(simulate_spmv(e, 8).utilization);
    EXPECT_LT(u1.back(), u8.back());
  }
  std::sort(u1.begin(), u1.end());
  std::sort(u8.begin(), u8.end());
  const double med1 = (u1[4] + u1[5]) / 2, med8 = (u8[4] + u8[5]) / 2;
  RecordProperty("median_depth1", std::to_string(med1));
  RecordProperty("median_depth8", std::to_string(med8));
  EXPECT_GE(med8, 0.90);
  EXPECT_NEAR(med1, 0.80, 0.08);
}

class ReferenceModel : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    compressed_ = new CompressedModel(compress_model({reference_layer(42)}, 0.1, true, 12, 32));
  }
  static void TearDownTestSuite() {
    delete compressed_;
    compressed_ = nullptr;
  }
  static CompressedModel* compressed_;
};
CompressedModel* ReferenceModel::compressed_ = nullptr;

TEST_F(ReferenceModel, LatencyRespectsLowerBounds) {
  const SimConfig cfg;
  const auto rep = simulate_lstm(compressed_->encoded, cfg);
  std::uint64_t fetch_total = 0;
  ASSERT_EQ(rep.matrices.size(), 9u);
  for (const auto& m : rep.matrices) {
    EXPECT_GE(m.compute_cycles, m.compute_lower_bound) << m.name;
    EXPECT_GE(m.spmv_start, m.fetch_end) << m.name;
    EXPECT_GE(rep.total_cycles, m.compute_cycles);
    EXPECT_GE(rep.total_cycles, m.fetch_cycles);
    fetch_total += m.fetch_cycles;
  }
  EXPECT_GE(rep.total_cycles, fetch_total);
  EXPECT_DOUBLE_EQ(rep.latency_s, static_cast<double>(rep.total_cycles) / cfg.freq_pe);
  EXPECT_GT(rep.utilization, 0.0);
  EXPECT_LE(rep.utilization, 1.0);
  EXPECT_EQ(std::accumulate(rep.per_pe_busy.begin(), rep.per_pe_busy.end(), std::uint64_t{0}),
            std::accumulate(rep.matrices.begin(), rep.matrices.end(), std::uint64_t{0},
                            [](std::uint64_t a, const MatrixReport& m) { return a + m.words; }));
  EXPECT_TRUE(std::any_of(rep.states.begin(), rep.states.end(), [](const StateRecord& s) { return s.fetch_bound; }));
}

TEST_F(ReferenceModel, DeterministicReport) {
  const SimConfig cfg;
  EXPECT_EQ(sim_report_to_json(simulate_lstm(compressed_->encoded, cfg)).dump(),
            sim_report_to_json(simulate_lstm(compressed_->encoded, cfg)).dump());
}

TEST_F(ReferenceModel, LatencyNonIncreasingInMemoryWidth) {
  SimConfig cfg;
  std::uint64_t prev = UINT64_MAX;
  for (std::size_t w : {64u, 128u, 256u, 512u, 1024u, 2048u}) {
    cfg.mem_width_bits = w;
    const auto cycles = simulate_lstm(compressed_->encoded, cfg).total_cycles;
    EXPECT_LE(cycles, prev) << w;
    prev = cycles;
  }
}

TEST_F(ReferenceModel, PerChannelRefetchIsSlower) {
  SimConfig cfg;
  const auto shared = simulate_lstm(compressed_->encoded, cfg).total_cycles;
  cfg.per_channel_refetch = true;
  EXPECT_GT(simulate_lstm(compressed_->encoded, cfg).total_cycles, 10 * shared);
}

TEST_F(ReferenceModel, DenseEquivalentOps) {
  const SimConfig cfg;
  const auto t = throughput_report(compressed_->encoded, cfg, 82.7e-6);
  EXPECT_DOUBLE_EQ(t.dense_ops, 2.0 * 3248128 * 32);
  EXPECT_NEAR(t.equivalent_gops / 1000.0, 2.51, 0.01);
}

TEST_F(ReferenceModel, TimelineCsvHasOneRowPerPhase) {
  const auto rep = simulate_lstm(compressed_->encoded, SimConfig{});
  const auto csv = timeline_csv(rep);
  EXPECT_EQ(static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n')), rep.phases.size() + 1);
  EXPECT_EQ(rep.phases.size(), build_schedule(reference_config()).phases().size());
}

TEST(SimulateLstm, ZeroModelCostsOnlyElementWisePipeline) {
  const auto cfg = reference_config();
  const auto p = LstmParams::zeros(cfg);
  const std::vector<QuantizedLayer> q = {quantize_layer(p, make_plan(p, 12))};
  const auto enc = encode_model(q, nullptr, 32);
  const SimConfig sc;
  const auto rep = simulate_lstm(enc, sc);
  const auto sched = build_schedule(cfg);
  std::uint64_t expect = 0;
  for (const Phase* ph : sched.phases()) {
    auto it = ph->lanes.find(Lane::kElemAccum);
    if (it != ph->lanes.end() && !it->second.empty()) expect += (it->second[0].length + 15) / 16 + 16;
  }
  EXPECT_EQ(expect, 12u * 80u);
  EXPECT_EQ(rep.total_cycles, expect);
  EXPECT_EQ(rep.utilization, 1.0);
  EXPECT_EQ(rep.throughput.sparse_ops, 0.0);
}

TEST(SimulateLstm, RejectsMismatchedInputs) {
  const LayerConfig cfg{8, 16, 8, true, true};
  const auto p = random_layer(cfg, 1);
  const std::vector<QuantizedLayer> q = {quantize_layer(p, make_plan(p, 12))};
  const auto enc = encode_model(q, nullptr, 8);
  SimConfig sc;
  EXPECT_THROW(simulate_lstm(enc, sc), ValidationError);  // encoded for 8 PEs, config says 32
  sc.n_pe = 8;
  EXPECT_NO_THROW(simulate_lstm(enc, sc));
  auto bad = build_schedule(cfg);
  for (auto& ph : bad.states[1].phases) ph.lanes.erase(Lane::kSpMV);
  EXPECT_THROW(simulate_lstm(enc, bad, sc), ValidationError);
  EXPECT_THROW(simulate_lstm(enc, build_schedule({8, 32, 8, true, true}), sc), ValidationError);
  sc.fifo_depth = 0;
  EXPECT_THROW(simulate_lstm(enc, sc), ValidationError);
}

}  // namespace
}  // namespace ese
