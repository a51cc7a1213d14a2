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

#include <random>
#include <regex>

#include "ese/schedule.hpp"
#include "test_util.hpp"

namespace ese {
namespace {

using testing::random_layer;

const LayerConfig kConfigs[] = {
    {153, 1024, 512, true, true},
    {8, 16, 8, true, true},
    {8, 16, 16, true, false},
    {8, 16, 8, false, true},
    {8, 16, 16, false, false},
};

// Flattened phase index of the op producing `name`.
std::size_t phase_of(const Schedule& s, const std::string& name) {
  const auto phases = s.phases();
  for (std::size_t p = 0; p < phases.size(); ++p)
    for (const auto& [lane, ops] : phases[p]->lanes)
      for (const auto& op : ops)
        for (const auto& o : op.outputs)
          if (o == name) return p;
  ADD_FAILURE() << "no producer for " << name;
  return 0;
}

LstmOp take_op(Schedule& s, const std::string& id) {
  for (auto& st : s.states)
    for (auto& ph : st.phases)
      for (auto& [lane, ops] : ph.lanes)
        for (auto it = ops.begin(); it != ops.end(); ++it)
          if (it->id == id) {
            LstmOp op = *it;
            ops.erase(it);
            return op;
          }
  ADD_FAILURE() << "no op " << id;
  return {};
}

Phase& phase_producing(Schedule& s, const std::string& name) {
  const auto p = phase_of(s, name);
  std::size_t k = 0;
  for (auto& st : s.states)
    for (auto& ph : st.phases)
      if (k++ == p) return ph;
  throw std::logic_error("unreachable");
}

bool has_kind(const std::vector<Violation>& v, Violation::Kind k) {
  return std::any_of(v.begin(), v.end(), [k](const Violation& x) { return x.kind == k; });
}

TEST(BuildSchedule, CanonicalSchedulesValidate) {
  for (const auto& cfg : kConfigs) {
    const auto s = build_schedule(cfg);
    const auto v = validate_schedule(s);
    EXPECT_TRUE(v.empty()) << (v.empty() ? "" : v.front().message);
    ASSERT_EQ(s.states.size(), 7u);
    EXPECT_EQ(s.states.front().name, "INITIAL");
    EXPECT_EQ(s.states.back().name, "STATE_6");
  }
}

TEST(BuildSchedule, OperationCounts) {
  const auto full = build_schedule(kConfigs[0]);
  EXPECT_EQ(full.count(OpKind::kSpMV), 9u);
  EXPECT_EQ(full.count(OpKind::kElemMul), 6u);
  EXPECT_EQ(full.count(OpKind::kActivation), 5u);
  EXPECT_EQ(full.count(OpKind::kAdderTree), 1u);
  EXPECT_EQ(full.count(OpKind::kFetch), 18u);

  EXPECT_EQ(build_schedule(kConfigs[2]).count(OpKind::kSpMV), 8u);
  EXPECT_EQ(build_schedule(kConfigs[3]).count(OpKind::kElemMul), 3u);
}

TEST(BuildSchedule, CellStateOrdering) {
  const auto s = build_schedule(kConfigs[0]);
  const auto c = phase_of(s, "c_t");
  EXPECT_GT(c, phase_of(s, "f_t"));
  EXPECT_GT(c, phase_of(s, "i_t"));
  EXPECT_GT(c, phase_of(s, "g_t"));
  EXPECT_LT(c, phase_of(s, "Woc_c"));
  EXPECT_LT(phase_of(s, "Woc_c"), phase_of(s, "o_t"));
  EXPECT_LT(phase_of(s, "m_t"), phase_of(s, "y_t"));
}

TEST(BuildSchedule, WeightsFetchedOnePhaseAhead) {
  const auto s = build_schedule(kConfigs[0]);
  for (const std::string m : {"W_ix", "W_ir", "W_fx", "W_fr", "W_cx", "W_cr", "W_ox", "W_or"}) {
    const auto fetch = phase_of(s, m);
    const std::string out = "W" + m.substr(2, 2) + (m[3] == 'x' ? "_x" : "_y");
    EXPECT_EQ(phase_of(s, out), fetch + 1) << m;
  }
}

TEST(ValidateSchedule, ActivationBeforeItsOperandIsADependencyViolation) {
  auto s = build_schedule(kConfigs[0]);
  LstmOp act = take_op(s, "activation:i_t");
  phase_producing(s, "Wir_y").lanes[Lane::kElemAccum] = {act};
  const auto v = validate_schedule(s);
  EXPECT_TRUE(has_kind(v, Violation::Kind::kDependency));
}

TEST(ValidateSchedule, TwoSpmvInOnePhaseIsAResourceViolation) {
  auto s = build_schedule(kConfigs[0]);
  LstmOp op = take_op(s, "spmv:Wfr_y");
  phase_producing(s, "Wfx_x").lanes[Lane::kSpMV].push_back(op);
  EXPECT_TRUE(has_kind(validate_schedule(s), Violation::Kind::kResource));
}

TEST(ValidateSchedule, FetchInSamePhaseAsSpmvIsAFetchViolation) {
  auto s = build_schedule(kConfigs[0]);
  LstmOp f = take_op(s, "fetch:W_fr");
  phase_producing(s, "Wfr_y").lanes[Lane::kWeightFetch] = {f};
  EXPECT_TRUE(has_kind(validate_schedule(s), Violation::Kind::kFetchOrder));
}

TEST(ValidateSchedule, UndefinedAndDuplicateValues) {
  auto s = build_schedule(kConfigs[0]);
  take_op(s, "fetch:W_ym");
  EXPECT_TRUE(has_kind(validate_schedule(s), Violation::Kind::kUndefined));

  s = build_schedule(kConfigs[0]);
  auto& ph = phase_producing(s, "c_t");
  LstmOp dup = ph.lanes[Lane::kElemAccum].front();
  phase_producing(s, "h_t").lanes[Lane::kElemAccum].push_back(dup);
  const auto v = validate_schedule(s);
  EXPECT_TRUE(has_kind(v, Violation::Kind::kDuplicate));
  EXPECT_TRUE(has_kind(v, Violation::Kind::kResource));
}

TEST(ValidateSchedule, ThreeResidentWeightMatricesExceedBuffers) {
  auto s = build_schedule(kConfigs[0]);
  LstmOp f = take_op(s, "fetch:W_fx");
  s.states[0].phases[0].lanes[Lane::kVectorFetch].push_back(f);  // wrong lane and too early
  const auto v = validate_schedule(s);
  EXPECT_TRUE(has_kind(v, Violation::Kind::kFetchOrder));
  EXPECT_TRUE(has_kind(v, Violation::Kind::kResource));
}

TEST(ScheduleDot, EmptyCanonicalAndStable) {
  EXPECT_EQ(schedule_to_dot(Schedule{}), "digraph schedule {\n}\n");
  const auto s = build_schedule(kConfigs[0]);
  const auto dot = schedule_to_dot(s);
  EXPECT_EQ(dot, schedule_to_dot(s));
  const std::regex node(R"(\n    n\d+ \[label=)");
  const auto nodes = std::distance(std::sregex_iterator(dot.begin(), dot.end(), node), std::sregex_iterator());
  EXPECT_EQ(static_cast<std::size_t>(nodes), s.op_count());
  EXPECT_NE(dot.find("cluster_6"), std::string::npos);
}

TEST(ScheduleJson, RoundTrip) {
  for (const auto& cfg : kConfigs) {
    const auto s = build_schedule(cfg);
    EXPECT_EQ(schedule_from_json(schedule_to_json(s)), s);
  }
  EXPECT_THROW(schedule_from_json(json{{"format", "nope"}}), ValidationError);
  EXPECT_THROW(schedule_from_json(json{{"format", "ese-schedule"}}), ValidationError);
}

// Any interleaving of the ops inside a phase gives the direct step's result.
TEST(ExecuteSchedule, MatchesQuantizedStepUnderPermutation) {
  const ActLuts luts;
  std::mt19937_64 rng(7);
  for (const auto& cfg : {kConfigs[1], kConfigs[2], kConfigs[3], kConfigs[4]}) {
    const auto p = random_layer(cfg, rng(), 2.0);
    const auto q = quantize_layer(p, make_plan(p, 12));
    const auto s = build_schedule(cfg);
    QLstmState a = QLstmState::zeros(cfg), b = a;
    for (int t = 0; t < 20; ++t) {
      QVector x(cfg.input_dim);
      for (auto& v : x) v = static_cast<std::int32_t>(rng() % 8192) - 4096;
      const auto acts = t % 3 ? ActivationChoice::kTanhCellInput : ActivationChoice::kSigmoidCellInput;
      const auto ye = quantized_lstm_step(q, luts, x, a, acts);
      const auto y = execute_schedule(s, q, luts, x, b, acts, &rng);
      ASSERT_EQ(y, ye) << "t=" << t;
      ASSERT_EQ(b, a);
    }
  }
}

TEST(ExecuteSchedule, RefusesInvalidSchedule) {
  const LayerConfig cfg = kConfigs[1];
  const auto p = random_layer(cfg, 1);
  const auto q = quantize_layer(p, make_plan(p, 12));
  auto s = build_schedule(cfg);
  take_op(s, "fetch:W_ix");
  QLstmState st = QLstmState::zeros(cfg);
  EXPECT_THROW(execute_schedule(s, q, ActLuts{}, QVector(cfg.input_dim, 0), st), ValidationError);
}

}  // namespace
}  // namespace ese
