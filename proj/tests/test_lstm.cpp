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

#include <cmath>
#include <random>

#include "ese/lstm.hpp"
#include "test_util.hpp"

namespace ese {
namespace {

using testing::random_layer;
using testing::random_vector;

// Reference step written with raw loops over the row-major buffers.
struct ScalarOracle {
  const LstmParams& p;

  static double sig(double v) { return 1.0 / (1.0 + std::exp(-v)); }

  double dot_row(const DenseMatrix& m, std::size_t r, const Vector& v) const {
    double s = 0.0;
    const double* row = m.values().data() + r * m.cols();
    for (std::size_t c = 0; c < m.cols(); ++c) s += row[c] * v[c];
    return s;
  }

  Vector step(const Vector& x, Vector& c, Vector& y) const {
    const std::size_t h = p.config.hidden_dim;
    Vector c_new(h), m(h);
    for (std::size_t k = 0; k < h; ++k) {
      auto pre = [&](Gate g) { return dot_row(p.wx(g), k, x) + dot_row(p.wr(g), k, y) + p.b(g)[k]; };
      const double ig = sig(pre(Gate::kInput) + p.wc(Gate::kInput)[k] * c[k]);
      const double fg = sig(pre(Gate::kForget) + p.wc(Gate::kForget)[k] * c[k]);
      const double gg = std::tanh(pre(Gate::kCell));
      c_new[k] = fg * c[k] + gg * ig;
      const double og = sig(pre(Gate::kOutput) + p.wc(Gate::kOutput)[k] * c_new[k]);
      m[k] = og * std::tanh(c_new[k]);
    }
    Vector out(p.config.proj_dim);
    for (std::size_t r = 0; r < out.size(); ++r) out[r] = dot_row(p.w_ym, r, m);
    c = c_new;
    y = out;
    return out;
  }
};

TEST(LstmStep, ZeroModelHalvesCellState) {
  const LayerConfig cfg{3, 4, 2, true, true};
  const LstmParams p = LstmParams::zeros(cfg);
  LstmState s = LstmState::zeros(cfg);
  s.c = {1.0, -2.0, 0.5, 8.0};
  const Vector x = {0.3, -0.1, 2.0};
  const auto t = lstm_step_trace(p, x, s);
  for (std::size_t k = 0; k < 4; ++k) {
    EXPECT_EQ(t.i[k], 0.5);
    EXPECT_EQ(t.f[k], 0.5);
    EXPECT_EQ(t.o[k], 0.5);
    EXPECT_EQ(t.g[k], 0.0);
    EXPECT_EQ(t.c[k], 0.5 * s.c[k]);
  }
  EXPECT_EQ(t.y, Vector(2, 0.0));
}

TEST(LstmStep, MatchesScalarLoopOracle) {
  const LayerConfig cfg{3, 4, 2, true, true};
  const LstmParams p = random_layer(cfg, 7);
  std::mt19937_64 rng(11);
  LstmState s = LstmState::zeros(cfg);
  Vector oc(4, 0.0), oy(2, 0.0);
  const ScalarOracle oracle{p};
  for (int t = 0; t < 10; ++t) {
    const Vector x = random_vector(3, rng);
    const Vector y = lstm_step(p, x, s);
    const Vector ye = oracle.step(x, oc, oy);
    for (std::size_t k = 0; k < y.size(); ++k) {
      EXPECT_NEAR(y[k], ye[k], 1e-12 * std::max(1.0, std::abs(ye[k]))) << "t=" << t << " k=" << k;
    }
  }
}

TEST(LstmStep, ReferenceShapes) {
  const LayerConfig cfg{153, 1024, 512, true, true};
  const LstmParams p = random_layer(cfg, 3, 0.05);
  const auto t = lstm_step_trace(p, Vector(153, 0.1), LstmState::zeros(cfg));
  for (const Vector* v : {&t.i, &t.f, &t.g, &t.c, &t.o, &t.m}) EXPECT_EQ(v->size(), 1024u);
  EXPECT_EQ(t.y.size(), 512u);
}

TEST(LstmStep, SigmoidCellInputChoice) {
  const LayerConfig cfg{2, 3, 3, false, false};
  const LstmParams p = LstmParams::zeros(cfg);
  const auto t = lstm_step_trace(p, Vector(2, 0.0), LstmState::zeros(cfg), ActivationChoice::kSigmoidCellInput);
  for (double g : t.g) EXPECT_EQ(g, 0.5);
  for (double c : t.c) EXPECT_EQ(c, 0.25);
}

TEST(LstmStep, WithoutProjectionOutputIsM) {
  const LayerConfig cfg{3, 5, 5, true, false};
  const LstmParams p = random_layer(cfg, 5);
  const auto t = lstm_step_trace(p, Vector{0.1, 0.2, 0.3}, LstmState::zeros(cfg));
  EXPECT_EQ(t.y, t.m);
}

TEST(LstmStep, RejectsBadShapesAndNonFinite) {
  const LayerConfig cfg{3, 4, 2, true, true};
  const LstmParams p = LstmParams::zeros(cfg);
  LstmState s = LstmState::zeros(cfg);
  EXPECT_THROW(lstm_step(p, Vector(2, 0.0), s), ShapeError);
  EXPECT_THROW(lstm_step(p, Vector{0.0, NAN, 0.0}, s), NumericError);
  s.c.pop_back();
  EXPECT_THROW(lstm_step(p, Vector(3, 0.0), s), ShapeError);
}

// Gates are bounded: c grows by at most one per step and |m| < 1.
TEST(LstmStep, SaturationBoundsProperty) {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 50; ++trial) {
    const LayerConfig cfg{1 + rng() % 6, 1 + rng() % 8, 0, rng() % 2 == 0, false};
    LayerConfig c = cfg;
    c.proj_dim = c.hidden_dim;
    const LstmParams p = random_layer(c, rng(), 3.0);
    LstmState s = LstmState::zeros(c);
    for (int t = 0; t < 5; ++t) {
      const Vector prev_c = s.c;
      const auto tr = lstm_step_trace(p, random_vector(c.input_dim, rng, 10.0), s);
      for (std::size_t k = 0; k < c.hidden_dim; ++k) {
        EXPECT_GT(tr.i[k], 0.0);
        EXPECT_LT(tr.i[k], 1.0 + 1e-15);
        EXPECT_LE(std::abs(tr.c[k]), std::abs(prev_c[k]) + 1.0 + 1e-12);
        EXPECT_LE(std::abs(tr.m[k]), 1.0);
      }
      s.c = tr.c;
      s.y = tr.y;
    }
  }
}

TEST(LstmSequence, FoldSemantics) {
  const LayerConfig cfg{3, 4, 2, true, true};
  const LstmParams p = random_layer(cfg, 21);
  std::mt19937_64 rng(4);
  std::vector<Vector> xs;
  for (int t = 0; t < 5; ++t) xs.push_back(random_vector(3, rng));

  EXPECT_TRUE(lstm_sequence(p, std::span<const Vector>(), LstmState::zeros(cfg)).empty());

  LstmState one = LstmState::zeros(cfg);
  const auto first = lstm_sequence(p, std::span<const Vector>(xs.data(), 1), LstmState::zeros(cfg));
  ASSERT_EQ(first.size(), 1u);
  EXPECT_EQ(first[0], lstm_step(p, xs[0], one));

  LstmState manual = LstmState::zeros(cfg);
  const auto ys = lstm_sequence(p, xs, LstmState::zeros(cfg));
  for (int t = 0; t < 5; ++t) EXPECT_EQ(ys[t], lstm_step(p, xs[t], manual));
}

TEST(LstmStack, SecondLayerConsumesFirst) {
  const LayerConfig c1{3, 4, 2, true, true};
  const LayerConfig c2{2, 3, 3, false, false};
  const std::vector<LstmParams> layers = {random_layer(c1, 1), random_layer(c2, 2)};
  std::vector<Vector> xs = {{0.1, 0.2, 0.3}, {-0.3, 0.0, 0.4}};
  const auto out = lstm_stack(layers, xs);
  const auto mid = lstm_sequence(layers[0], xs, LstmState::zeros(c1));
  EXPECT_EQ(out, lstm_sequence(layers[1], mid, LstmState::zeros(c2)));
}

TEST(LayerConfig, Validation) {
  EXPECT_THROW((LayerConfig{0, 4, 2, true, true}.validate()), ValidationError);
  EXPECT_THROW((LayerConfig{3, 4, 8, true, true}.validate()), ValidationError);
  EXPECT_THROW((LayerConfig{3, 4, 2, true, false}.validate()), ValidationError);
  EXPECT_NO_THROW((LayerConfig{3, 4, 4, true, false}.validate()));
}

}  // namespace
}  // namespace ese
