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

#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ese/error.hpp"
#include "ese/matrix.hpp"

namespace ese {

struct LayerConfig {
  std::size_t input_dim = 153;
  std::size_t hidden_dim = 1024;
  std::size_t proj_dim = 512;
  bool has_peephole = true;
  bool has_projection = true;

  /// Recurrent width: proj_dim with a projection, hidden_dim without.
  std::size_t output_dim() const noexcept { return has_projection ? proj_dim : hidden_dim; }

  void validate() const {
    if (input_dim == 0 || hidden_dim == 0 || proj_dim == 0) throw ValidationError("layer dims must be >= 1");
    if (has_projection && proj_dim > hidden_dim) throw ValidationError("proj_dim must not exceed hidden_dim");
    if (!has_projection && proj_dim != hidden_dim)
      throw ValidationError("without projection proj_dim must equal hidden_dim");
  }

  friend bool operator==(const LayerConfig&, const LayerConfig&) = default;
};

/// Which nonlinearity feeds the cell input g. Gates always use the logistic
/// sigmoid and the cell output h is always tanh.
enum class ActivationChoice {
  kTanhCellInput,     ///< g = tanh (standard LSTM, default)
  kSigmoidCellInput,  ///< g = sigmoid
};

/// The four gate groups, in the order the hardware processes them.
enum class Gate { kInput = 0, kForget = 1, kCell = 2, kOutput = 3 };
inline constexpr std::array<Gate, 4> kGates = {Gate::kInput, Gate::kForget, Gate::kCell, Gate::kOutput};

inline constexpr std::string_view gate_letter(Gate g) {
  constexpr std::string_view letters[] = {"i", "f", "c", "o"};
  return letters[static_cast<int>(g)];
}

struct TensorShape {
  std::string name;
  std::size_t rows;
  std::size_t cols;  ///< 1 for vectors
};

/// Matrices of a layer in processing order: W_ix..W_ox, W_ir..W_or, W_ym.
inline std::vector<TensorShape> matrix_shapes(const LayerConfig& cfg) {
  std::vector<TensorShape> out;
  for (Gate g : kGates) out.push_back({"W_" + std::string(gate_letter(g)) + "x", cfg.hidden_dim, cfg.input_dim});
  for (Gate g : kGates) out.push_back({"W_" + std::string(gate_letter(g)) + "r", cfg.hidden_dim, cfg.output_dim()});
  if (cfg.has_projection) out.push_back({"W_ym", cfg.proj_dim, cfg.hidden_dim});
  return out;
}

/// Peephole and bias vectors of a layer.
inline std::vector<TensorShape> vector_shapes(const LayerConfig& cfg) {
  std::vector<TensorShape> out;
  if (cfg.has_peephole) {
    for (Gate g : kGates) {
      if (g != Gate::kCell) out.push_back({"W_" + std::string(gate_letter(g)) + "c", cfg.hidden_dim, 1});
    }
  }
  for (Gate g : kGates) out.push_back({"b_" + std::string(gate_letter(g)), cfg.hidden_dim, 1});
  return out;
}

/// Parameters of one LSTM layer with projection and diagonal peepholes.
/// Peepholes are stored as vectors; the cell-input gate (c) has none.
struct LstmParams {
  LayerConfig config;
  std::array<DenseMatrix, 4> w_x;  ///< hidden x input, indexed by Gate
  std::array<DenseMatrix, 4> w_r;  ///< hidden x output_dim
  std::array<Vector, 4> peephole;  ///< hidden each for i, f, o; empty for c
  std::array<Vector, 4> bias;      ///< hidden
  DenseMatrix w_ym;                ///< proj x hidden, empty without projection

  static LstmParams zeros(const LayerConfig& cfg) {
    cfg.validate();
    LstmParams p;
    p.config = cfg;
    for (Gate g : kGates) {
      const auto k = static_cast<std::size_t>(g);
      p.w_x[k] = DenseMatrix(cfg.hidden_dim, cfg.input_dim);
      p.w_r[k] = DenseMatrix(cfg.hidden_dim, cfg.output_dim());
      p.bias[k] = Vector(cfg.hidden_dim, 0.0);
      if (cfg.has_peephole && g != Gate::kCell) p.peephole[k] = Vector(cfg.hidden_dim, 0.0);
    }
    if (cfg.has_projection) p.w_ym = DenseMatrix(cfg.proj_dim, cfg.hidden_dim);
    return p;
  }

  DenseMatrix& wx(Gate g) { return w_x[static_cast<std::size_t>(g)]; }
  const DenseMatrix& wx(Gate g) const { return w_x[static_cast<std::size_t>(g)]; }
  DenseMatrix& wr(Gate g) { return w_r[static_cast<std::size_t>(g)]; }
  const DenseMatrix& wr(Gate g) const { return w_r[static_cast<std::size_t>(g)]; }
  Vector& b(Gate g) { return bias[static_cast<std::size_t>(g)]; }
  const Vector& b(Gate g) const { return bias[static_cast<std::size_t>(g)]; }
  Vector& wc(Gate g) { return peephole[static_cast<std::size_t>(g)]; }
  const Vector& wc(Gate g) const { return peephole[static_cast<std::size_t>(g)]; }

  /// Throws ShapeError when any tensor disagrees with `config`.
  void validate() const {
    config.validate();
    auto check_m = [](const DenseMatrix& m, std::size_t r, std::size_t c, std::string_view name) {
      if (m.rows() != r || m.cols() != c) {
        throw ShapeError(std::string(name) + " is " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                         ", expected " + std::to_string(r) + "x" + std::to_string(c));
      }
    };
    auto check_v = [](const Vector& v, std::size_t n, std::string_view name) {
      if (v.size() != n) {
        throw ShapeError(std::string(name) + " has length " + std::to_string(v.size()) + ", expected " +
                         std::to_string(n));
      }
    };
    const auto h = config.hidden_dim;
    for (Gate g : kGates) {
      const std::string s(gate_letter(g));
      check_m(wx(g), h, config.input_dim, "W_" + s + "x");
      check_m(wr(g), h, config.output_dim(), "W_" + s + "r");
      check_v(b(g), h, "b_" + s);
      const bool want_peep = config.has_peephole && g != Gate::kCell;
      check_v(wc(g), want_peep ? h : 0, "W_" + s + "c");
    }
    if (config.has_projection) {
      check_m(w_ym, config.proj_dim, h, "W_ym");
    } else {
      check_m(w_ym, 0, 0, "W_ym");
    }
  }

  /// Visits every matrix with its canonical tensor name (W_ix ... W_or, W_ym).
  template <typename Self, typename F>
  static void for_each_matrix(Self& self, F&& fn) {
    for (Gate g : kGates) fn("W_" + std::string(gate_letter(g)) + "x", self.w_x[static_cast<std::size_t>(g)]);
    for (Gate g : kGates) fn("W_" + std::string(gate_letter(g)) + "r", self.w_r[static_cast<std::size_t>(g)]);
    if (self.config.has_projection) fn(std::string("W_ym"), self.w_ym);
  }

  /// Visits every vector tensor (peepholes, biases) that is present.
  template <typename Self, typename F>
  static void for_each_vector(Self& self, F&& fn) {
    for (Gate g : kGates) {
      auto& p = self.peephole[static_cast<std::size_t>(g)];
      if (self.config.has_peephole && g != Gate::kCell) fn("W_" + std::string(gate_letter(g)) + "c", p);
    }
    for (Gate g : kGates) fn("b_" + std::string(gate_letter(g)), self.bias[static_cast<std::size_t>(g)]);
  }

  friend bool operator==(const LstmParams&, const LstmParams&) = default;
};

/// Recurrent state carried between timesteps.
struct LstmState {
  Vector c;  ///< cell state, hidden_dim
  Vector y;  ///< recurrent output, output_dim

  static LstmState zeros(const LayerConfig& cfg) {
    return {Vector(cfg.hidden_dim, 0.0), Vector(cfg.output_dim(), 0.0)};
  }
};

/// All intermediates of one step, exposed for inspection.
struct LstmStepTrace {
  Vector i, f, g, c, o, m, y;
};

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

namespace detail {

inline void require_finite(std::span<const double> v, std::string_view what) {
  for (double x : v) {
    if (!std::isfinite(x)) throw NumericError(std::string(what) + " contains a non-finite value");
  }
}

inline void require_len(std::span<const double> v, std::size_t n, std::string_view what) {
  if (v.size() != n) {
    throw ShapeError(std::string(what) + " has length " + std::to_string(v.size()) + ", expected " +
                     std::to_string(n));
  }
}

}  // namespace detail

/// One timestep of the projected, peepholed LSTM:
///   i = sig(Wix x + Wir y' + Wic (.) c' + bi)
///   f = sig(Wfx x + Wfr y' + Wfc (.) c' + bf)
///   g = act(Wcx x + Wcr y' + bc)
///   c = f (.) c' + g (.) i
///   o = sig(Wox x + Wor y' + Woc (.) c + bo)
///   m = o (.) tanh(c)
///   y = Wym m
inline LstmStepTrace lstm_step_trace(const LstmParams& p, std::span<const double> x, const LstmState& state,
                                     ActivationChoice acts = ActivationChoice::kTanhCellInput) {
  const auto& cfg = p.config;
  detail::require_len(x, cfg.input_dim, "x_t");
  detail::require_len(state.c, cfg.hidden_dim, "c_{t-1}");
  detail::require_len(state.y, cfg.output_dim(), "y_{t-1}");
  detail::require_finite(x, "x_t");
  detail::require_finite(state.c, "c_{t-1}");
  detail::require_finite(state.y, "y_{t-1}");

  const std::size_t h = cfg.hidden_dim;
  auto preact = [&](Gate g) {
    Vector a = matvec(p.wx(g), x);
    const Vector ar = matvec(p.wr(g), state.y);
    for (std::size_t k = 0; k < h; ++k) a[k] += ar[k] + p.b(g)[k];
    return a;
  };

  LstmStepTrace t;
  t.i = preact(Gate::kInput);
  t.f = preact(Gate::kForget);
  t.g = preact(Gate::kCell);
  t.o = preact(Gate::kOutput);
  t.c.resize(h);
  t.m.resize(h);
  for (std::size_t k = 0; k < h; ++k) {
    if (cfg.has_peephole) {
      t.i[k] += p.wc(Gate::kInput)[k] * state.c[k];
      t.f[k] += p.wc(Gate::kForget)[k] * state.c[k];
    }
    t.i[k] = sigmoid(t.i[k]);
    t.f[k] = sigmoid(t.f[k]);
    t.g[k] = acts == ActivationChoice::kTanhCellInput ? std::tanh(t.g[k]) : sigmoid(t.g[k]);
    t.c[k] = t.f[k] * state.c[k] + t.g[k] * t.i[k];
    if (cfg.has_peephole) t.o[k] += p.wc(Gate::kOutput)[k] * t.c[k];
    t.o[k] = sigmoid(t.o[k]);
    t.m[k] = t.o[k] * std::tanh(t.c[k]);
  }
  t.y = cfg.has_projection ? matvec(p.w_ym, t.m) : t.m;
  detail::require_finite(t.y, "y_t");
  return t;
}

/// Advances `state` by one timestep and returns y_t.
inline Vector lstm_step(const LstmParams& p, std::span<const double> x, LstmState& state,
                        ActivationChoice acts = ActivationChoice::kTanhCellInput) {
  auto t = lstm_step_trace(p, x, state, acts);
  state.c = std::move(t.c);
  state.y = t.y;
  return std::move(t.y);
}

/// Folds lstm_step over a sequence. An empty sequence yields no outputs.
inline std::vector<Vector> lstm_sequence(const LstmParams& p, std::span<const Vector> xs, LstmState initial,
                                         ActivationChoice acts = ActivationChoice::kTanhCellInput) {
  std::vector<Vector> ys;
  ys.reserve(xs.size());
  for (const auto& x : xs) ys.push_back(lstm_step(p, x, initial, acts));
  return ys;
}

/// Runs a stack of layers; layer k+1 consumes layer k's outputs.
inline std::vector<Vector> lstm_stack(std::span<const LstmParams> layers, std::vector<Vector> xs,
                                      ActivationChoice acts = ActivationChoice::kTanhCellInput) {
  for (const auto& layer : layers) xs = lstm_sequence(layer, xs, LstmState::zeros(layer.config), acts);
  return xs;
}

}  // namespace ese
