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
#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "ese/container.hpp"
#include "ese/fixed_point.hpp"
#include "ese/lstm.hpp"
#include "ese/lut.hpp"
#include "ese/model_io.hpp"

namespace ese {

struct TensorFormat {
  FixedFormat format;
  bool carries_index = false;

  friend bool operator==(const TensorFormat&, const TensorFormat&) = default;
};

/// Per-tensor weight formats plus the activation formats of the datapath.
struct QuantizationPlan {
  std::map<std::string, TensorFormat> tensors;
  FixedFormat input = kInputFormat;
  FixedFormat intermediate = kIntermediateFormat;

  const TensorFormat& at(const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw ValidationError("quantization plan has no format for " + name);
    return it->second;
  }

  friend bool operator==(const QuantizationPlan&, const QuantizationPlan&) = default;
};

/// Tensor groups whose formats are chosen together. The gate matrices follow
/// the Kaldi convention of storing the four gates as one W_gifo_x / W_gifo_r
/// block, and the four biases as one vector.
struct QuantGroup {
  std::string name;
  std::vector<std::string> members;
  bool carries_index;
};

inline std::vector<QuantGroup> quant_groups(const LayerConfig& cfg) {
  std::vector<QuantGroup> g = {
      {"W_gifo_x", {"W_ix", "W_fx", "W_cx", "W_ox"}, true},
      {"W_gifo_r", {"W_ir", "W_fr", "W_cr", "W_or"}, true},
      {"bias", {"b_i", "b_f", "b_c", "b_o"}, false},
  };
  if (cfg.has_peephole) {
    g.push_back({"W_ic", {"W_ic"}, false});
    g.push_back({"W_fc", {"W_fc"}, false});
    g.push_back({"W_oc", {"W_oc"}, false});
  }
  if (cfg.has_projection) g.push_back({"W_ym", {"W_ym"}, true});
  return g;
}

/// Looks up a float tensor's values by canonical name.
inline std::span<const double> tensor_values(const LstmParams& p, const std::string& name) {
  std::span<const double> out;
  bool found = false;
  LstmParams::for_each_matrix(p, [&](const std::string& n, const DenseMatrix& m) {
    if (n == name) out = m.values(), found = true;
  });
  LstmParams::for_each_vector(p, [&](const std::string& n, const Vector& v) {
    if (n == name) out = v, found = true;
  });
  if (!found) throw ValidationError("no tensor named " + name);
  return out;
}

struct GroupRange {
  double min = 0.0;
  double max = 0.0;
  double max_abs() const noexcept { return std::max(-min, max); }
};

inline GroupRange group_range(const LstmParams& p, const QuantGroup& g) {
  GroupRange r{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  for (const auto& m : g.members) {
    auto [lo, hi] = analyze_range(tensor_values(p, m));
    r.min = std::min(r.min, lo);
    r.max = std::max(r.max, hi);
  }
  return r;
}

/// Dynamic-precision plan: each group gets the widest fraction that still
/// covers its observed range at `width` bits. An all-zero group is treated as
/// needing one integer bit.
inline QuantizationPlan make_plan(const LstmParams& p, int width) {
  QuantizationPlan plan;
  for (const auto& g : quant_groups(p.config)) {
    const double max_abs = group_range(p, g).max_abs();
    const auto fmt = derive_format(max_abs > 0.0 ? max_abs : std::numeric_limits<double>::min(), width,
                                   g.carries_index);
    for (const auto& m : g.members) plan.tensors[m] = {fmt, g.carries_index};
  }
  return plan;
}

/// A layer with every tensor quantized to its planned format.
struct QuantizedLayer {
  LayerConfig config;
  QuantizationPlan plan;
  std::map<std::string, QuantizedTensor> tensors;

  const QuantizedTensor& at(const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw ValidationError("quantized layer has no tensor " + name);
    return it->second;
  }
  const QuantizedTensor& wx(Gate g) const { return at("W_" + std::string(gate_letter(g)) + "x"); }
  const QuantizedTensor& wr(Gate g) const { return at("W_" + std::string(gate_letter(g)) + "r"); }
  const QuantizedTensor& b(Gate g) const { return at("b_" + std::string(gate_letter(g))); }
  const QuantizedTensor& wc(Gate g) const { return at("W_" + std::string(gate_letter(g)) + "c"); }

  friend bool operator==(const QuantizedLayer&, const QuantizedLayer&) = default;
};

inline QuantizedLayer quantize_layer(const LstmParams& p, const QuantizationPlan& plan) {
  p.validate();
  QuantizedLayer q{p.config, plan, {}};
  LstmParams::for_each_matrix(p, [&](const std::string& name, const DenseMatrix& m) {
    q.tensors[name] = quantize_tensor(m, plan.at(name).format);
  });
  LstmParams::for_each_vector(p, [&](const std::string& name, const Vector& v) {
    q.tensors[name] = quantize_tensor(v, {v.size()}, plan.at(name).format);
  });
  return q;
}

/// Sigmoid and tanh tables used by the fixed-point step.
struct ActLuts {
  ActLut sigmoid = build_lut(ActFn::kSigmoid);
  ActLut tanh = build_lut(ActFn::kTanh);
};

using QVector = std::vector<std::int32_t>;

/// Fixed-point recurrent state: c in the intermediate format, y in the input
/// format (it is fed back as an activation).
struct QLstmState {
  QVector c;
  QVector y;

  static QLstmState zeros(const LayerConfig& cfg) {
    return {QVector(cfg.hidden_dim, 0), QVector(cfg.output_dim(), 0)};
  }

  friend bool operator==(const QLstmState&, const QLstmState&) = default;
};

/// Datapath primitives shared by the direct step and the schedule executor.
namespace qops {

/// 16-bit activations times 12-bit weights, accumulated wide, then rounded
/// into `out`.
inline QVector spmv(const QuantizedTensor& w, std::span<const std::int32_t> x, int x_frac, const FixedFormat& out) {
  if (w.cols() != x.size()) throw ShapeError("spmv: operand lengths differ");
  QVector y(w.rows());
  const int frac = w.format.frac_bits + x_frac;
  for (std::size_t r = 0; r < w.rows(); ++r) {
    std::int64_t acc = 0;
    const std::int32_t* row = w.values.data() + r * w.cols();
    for (std::size_t c = 0; c < x.size(); ++c) acc += static_cast<std::int64_t>(row[c]) * x[c];
    y[r] = rescale(acc, frac, out);
  }
  return y;
}

inline QVector elemmul(std::span<const std::int32_t> a, int a_frac, std::span<const std::int32_t> b, int b_frac,
                       const FixedFormat& out) {
  if (a.size() != b.size()) throw ShapeError("elemmul: operand lengths differ");
  QVector y(a.size());
  for (std::size_t k = 0; k < a.size(); ++k) {
    y[k] = rescale(static_cast<std::int64_t>(a[k]) * b[k], a_frac + b_frac, out);
  }
  return y;
}

inline QVector convert(std::span<const std::int32_t> a, int a_frac, const FixedFormat& out) {
  QVector y(a.size());
  for (std::size_t k = 0; k < a.size(); ++k) y[k] = rescale(a[k], a_frac, out);
  return y;
}

/// Adder tree: terms share one fixed-point scale; the exact sum is saturated once.
inline QVector add(std::span<const QVector> terms, const FixedFormat& out) {
  if (terms.empty()) throw ValidationError("adder tree needs at least one term");
  QVector y(terms[0].size());
  for (std::size_t k = 0; k < y.size(); ++k) {
    std::int64_t s = 0;
    for (const auto& t : terms) {
      if (t.size() != y.size()) throw ShapeError("adder tree: operand lengths differ");
      s += t[k];
    }
    y[k] = out.saturate(s);
  }
  return y;
}

inline QVector activate(const ActLut& lut, std::span<const std::int32_t> x, int x_frac) {
  QVector y(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) y[k] = lut_eval(lut, x[k], x_frac);
  return y;
}

}  // namespace qops

struct QLstmTrace {
  QVector i, f, g, c, o, h, m, y;
};

/// One fixed-point timestep. `x` is in the plan's input format.
inline QLstmTrace quantized_lstm_step_trace(const QuantizedLayer& q, const ActLuts& luts,
                                            std::span<const std::int32_t> x, const QLstmState& state,
                                            ActivationChoice acts = ActivationChoice::kTanhCellInput) {
  const auto& cfg = q.config;
  const auto& inter = q.plan.intermediate;
  const int in_frac = q.plan.input.frac_bits;
  if (x.size() != cfg.input_dim) throw ShapeError("x_t length differs from input_dim");
  if (state.c.size() != cfg.hidden_dim || state.y.size() != cfg.output_dim()) {
    throw ShapeError("fixed-point state dims differ from layer config");
  }

  auto preact = [&](Gate g, const QVector* peep) {
    std::vector<QVector> terms;
    terms.push_back(qops::spmv(q.wx(g), x, in_frac, inter));
    terms.push_back(qops::spmv(q.wr(g), state.y, in_frac, inter));
    if (peep) terms.push_back(*peep);
    terms.push_back(qops::convert(q.b(g).values, q.b(g).format.frac_bits, inter));
    return qops::add(terms, inter);
  };
  auto peephole = [&](Gate g, const QVector& c) {
    return qops::elemmul(q.wc(g).values, q.wc(g).format.frac_bits, c, inter.frac_bits, inter);
  };

  QLstmTrace t;
  const int act_frac = kActivationFormat.frac_bits;
  QVector pi, pf;
  if (cfg.has_peephole) {
    pi = peephole(Gate::kInput, state.c);
    pf = peephole(Gate::kForget, state.c);
  }
  t.i = qops::activate(luts.sigmoid, preact(Gate::kInput, cfg.has_peephole ? &pi : nullptr), inter.frac_bits);
  t.f = qops::activate(luts.sigmoid, preact(Gate::kForget, cfg.has_peephole ? &pf : nullptr), inter.frac_bits);
  const ActLut& g_lut = acts == ActivationChoice::kTanhCellInput ? luts.tanh : luts.sigmoid;
  t.g = qops::activate(g_lut, preact(Gate::kCell, nullptr), inter.frac_bits);
  const std::vector<QVector> cell_terms = {qops::elemmul(t.f, act_frac, state.c, inter.frac_bits, inter),
                                           qops::elemmul(t.i, act_frac, t.g, act_frac, inter)};
  t.c = qops::add(cell_terms, inter);
  QVector po;
  if (cfg.has_peephole) po = peephole(Gate::kOutput, t.c);
  t.o = qops::activate(luts.sigmoid, preact(Gate::kOutput, cfg.has_peephole ? &po : nullptr), inter.frac_bits);
  t.h = qops::activate(luts.tanh, t.c, inter.frac_bits);
  t.m = qops::elemmul(t.o, act_frac, t.h, act_frac, kActivationFormat);
  t.y = cfg.has_projection ? qops::spmv(q.at("W_ym"), t.m, act_frac, q.plan.input)
                           : qops::convert(t.m, act_frac, q.plan.input);
  return t;
}

inline QVector quantized_lstm_step(const QuantizedLayer& q, const ActLuts& luts, std::span<const std::int32_t> x,
                                   QLstmState& state, ActivationChoice acts = ActivationChoice::kTanhCellInput) {
  auto t = quantized_lstm_step_trace(q, luts, x, state, acts);
  state.c = std::move(t.c);
  state.y = t.y;
  return std::move(t.y);
}

inline QVector quantize_input(std::span<const double> x, const FixedFormat& fmt = kInputFormat) {
  QVector out;
  out.reserve(x.size());
  for (double v : x) out.push_back(quantize_value(v, fmt));
  return out;
}

// Quantized model container: i32 tensors tagged with their format.

inline json format_to_json(const FixedFormat& f) { return {{"width", f.width_bits}, {"frac", f.frac_bits}}; }

inline FixedFormat format_from_json(const json& j) {
  FixedFormat f{j.at("width").get<int>(), j.at("frac").get<int>()};
  f.validate();
  return f;
}

inline void save_quantized(std::span<const QuantizedLayer> layers, const std::filesystem::path& manifest_path) {
  BlobWriter blob;
  json jl = json::array();
  for (const auto& q : layers) {
    json tensors = json::array();
    for (const auto& [name, t] : q.tensors) {
      std::vector<std::uint64_t> dims(t.shape.begin(), t.shape.end());
      json rec = blob.add(name, dims, "i32", encode_le<std::int32_t>(t.values));
      const auto& tf = q.plan.at(name);
      rec["width"] = tf.format.width_bits;
      rec["frac"] = tf.format.frac_bits;
      rec["carries_index"] = tf.carries_index;
      tensors.push_back(rec);
    }
    jl.push_back({{"config", config_to_json(q.config)},
                  {"input_format", format_to_json(q.plan.input)},
                  {"intermediate_format", format_to_json(q.plan.intermediate)},
                  {"tensors", tensors}});
  }
  write_container(manifest_path, {{"format", "ese-quantized"}, {"version", 1}, {"layers", jl}}, blob.blob());
}

inline std::vector<QuantizedLayer> load_quantized(const std::filesystem::path& manifest_path) {
  if (!std::filesystem::exists(manifest_path)) throw IoError("no such model: " + manifest_path.string());
  ContainerReader reader(manifest_path);
  const json& man = reader.manifest();
  if (man.value("format", "") != "ese-quantized") {
    throw ValidationError(manifest_path.string() + " is not an ese-quantized model");
  }
  std::vector<QuantizedLayer> out;
  for (const auto& jl : man.at("layers")) {
    QuantizedLayer q;
    q.config = config_from_json(jl.at("config"));
    q.plan.input = format_from_json(jl.at("input_format"));
    q.plan.intermediate = format_from_json(jl.at("intermediate_format"));
    for (const auto& rec : jl.at("tensors")) {
      const auto name = rec.at("name").get<std::string>();
      const auto fmt = format_from_json(rec);
      q.plan.tensors[name] = {fmt, rec.at("carries_index").get<bool>()};
      const auto dims = dims_of(rec);
      QuantizedTensor t{std::vector<std::size_t>(dims.begin(), dims.end()),
                        decode_le<std::int32_t>(reader.bytes(rec)), fmt};
      for (auto v : t.values) {
        if (v < fmt.min_int() || v > fmt.max_int()) throw CorruptionError("tensor " + name + " exceeds its width");
      }
      q.tensors[name] = std::move(t);
    }
    // Every tensor the step reads must be present.
    for (const auto& s : matrix_shapes(q.config)) {
      const auto& t = q.at(s.name);
      if (t.rows() != s.rows || t.cols() != s.cols) throw ShapeError("tensor " + s.name + " has wrong dims");
    }
    for (const auto& s : vector_shapes(q.config)) {
      if (q.at(s.name).values.size() != s.rows) throw ShapeError("tensor " + s.name + " has wrong length");
    }
    out.push_back(std::move(q));
  }
  return out;
}

}  // namespace ese
