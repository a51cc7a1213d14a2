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

// LSTM dataflow schedule: an ordered list of states, each split into phases.
// Within a phase the lanes run concurrently; phases run one after another.
// Values produced in a phase become visible at the start of the next phase.

#include <algorithm>
#include <array>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "ese/container.hpp"
#include "ese/lstm.hpp"
#include "ese/model_io.hpp"
#include "ese/quantized_lstm.hpp"

namespace ese {

enum class OpKind { kSpMV, kElemMul, kAdderTree, kActivation, kFetch };

/// Hardware lanes. Adder-tree sums and the sigmoid/tanh units share the
/// element-wise lane.
enum class Lane { kWeightFetch, kVectorFetch, kSpMV, kElemAccum };

inline constexpr std::array<Lane, 4> kLanes = {Lane::kWeightFetch, Lane::kVectorFetch, Lane::kSpMV, Lane::kElemAccum};

inline std::string to_string(OpKind k) {
  switch (k) {
    case OpKind::kSpMV: return "spmv";
    case OpKind::kElemMul: return "elemmul";
    case OpKind::kAdderTree: return "adder_tree";
    case OpKind::kActivation: return "activation";
    case OpKind::kFetch: return "fetch";
  }
  return "?";
}

inline std::string to_string(Lane l) {
  switch (l) {
    case Lane::kWeightFetch: return "weight_fetch";
    case Lane::kVectorFetch: return "vector_fetch";
    case Lane::kSpMV: return "spmv";
    case Lane::kElemAccum: return "elem_accum";
  }
  return "?";
}

inline OpKind op_kind_from_string(const std::string& s) {
  for (auto k : {OpKind::kSpMV, OpKind::kElemMul, OpKind::kAdderTree, OpKind::kActivation, OpKind::kFetch}) {
    if (to_string(k) == s) return k;
  }
  throw ValidationError("unknown op kind '" + s + "'");
}

inline Lane lane_from_string(const std::string& s) {
  for (auto l : kLanes) {
    if (to_string(l) == s) return l;
  }
  throw ValidationError("unknown lane '" + s + "'");
}

/// Result domain of a value-producing op.
enum class ValueFormat { kNone, kIntermediate, kActivation, kInput };

inline std::string to_string(ValueFormat f) {
  switch (f) {
    case ValueFormat::kNone: return "none";
    case ValueFormat::kIntermediate: return "intermediate";
    case ValueFormat::kActivation: return "activation";
    case ValueFormat::kInput: return "input";
  }
  return "?";
}

inline ValueFormat value_format_from_string(const std::string& s) {
  for (auto f : {ValueFormat::kNone, ValueFormat::kIntermediate, ValueFormat::kActivation, ValueFormat::kInput}) {
    if (to_string(f) == s) return f;
  }
  throw ValidationError("unknown value format '" + s + "'");
}

struct LstmOp {
  std::string id;
  OpKind kind = OpKind::kFetch;
  std::vector<std::string> inputs;   ///< SpMV: {matrix, pointers, vector}; ElemMul: {a, b}
  std::vector<std::string> outputs;  ///< one value, or the fetched names
  std::string fn;                    ///< activation: "sigmoid", "tanh", or "cell_input"
  ValueFormat format = ValueFormat::kNone;
  std::size_t length = 0;            ///< element count of the produced vector

  friend bool operator==(const LstmOp&, const LstmOp&) = default;
};

struct Phase {
  std::map<Lane, std::vector<LstmOp>> lanes;

  bool empty() const {
    return std::all_of(lanes.begin(), lanes.end(), [](const auto& kv) { return kv.second.empty(); });
  }
  friend bool operator==(const Phase&, const Phase&) = default;
};

struct State {
  std::string name;
  std::vector<Phase> phases;
  friend bool operator==(const State&, const State&) = default;
};

struct Schedule {
  LayerConfig config;
  std::vector<State> states;

  /// Values that exist before the first phase (on-chip recurrent state).
  static const std::vector<std::string>& external_inputs() {
    static const std::vector<std::string> names = {"y_prev", "c_prev"};
    return names;
  }

  std::size_t op_count() const {
    std::size_t n = 0;
    for (const auto& s : states)
      for (const auto& p : s.phases)
        for (const auto& [lane, ops] : p.lanes) n += ops.size();
    return n;
  }

  std::size_t count(OpKind k) const {
    std::size_t n = 0;
    for (const auto& s : states)
      for (const auto& p : s.phases)
        for (const auto& [lane, ops] : p.lanes) n += std::count_if(ops.begin(), ops.end(), [k](const LstmOp& o) {
          return o.kind == k;
        });
    return n;
  }

  /// Phases flattened in execution order.
  std::vector<const Phase*> phases() const {
    std::vector<const Phase*> out;
    for (const auto& s : states)
      for (const auto& p : s.phases) out.push_back(&p);
    return out;
  }

  friend bool operator==(const Schedule&, const Schedule&) = default;
};

namespace detail {

inline bool is_weight_matrix(const std::string& name) {
  return name.size() == 4 && name[0] == 'W' && name[1] == '_' && (name[3] == 'x' || name[3] == 'r' || name == "W_ym");
}

class ScheduleBuilder {
 public:
  explicit ScheduleBuilder(const LayerConfig& cfg) : cfg_(cfg) {}

  ScheduleBuilder& state(std::string name) {
    sched_.states.push_back({std::move(name), {}});
    return *this;
  }
  ScheduleBuilder& phase() {
    sched_.states.back().phases.emplace_back();
    return *this;
  }
  ScheduleBuilder& fetch_weights(const std::string& m) {
    return add(Lane::kWeightFetch, {"fetch:" + m, OpKind::kFetch, {}, {m}, "", ValueFormat::kNone, 0});
  }
  ScheduleBuilder& fetch_vectors(std::vector<std::string> names) {
    names.erase(std::remove_if(names.begin(), names.end(), [&](const std::string& n) { return !present(n); }),
                names.end());
    if (names.empty()) return *this;
    std::string id = "fetch:";
    for (std::size_t k = 0; k < names.size(); ++k) id += (k ? "," : "") + names[k];
    return add(Lane::kVectorFetch, {id, OpKind::kFetch, {}, names, "", ValueFormat::kNone, 0});
  }
  ScheduleBuilder& spmv(const std::string& m, const std::string& vec, const std::string& out, ValueFormat f,
                        std::size_t len) {
    return add(Lane::kSpMV, {"spmv:" + out, OpKind::kSpMV, {m, "P" + m.substr(1), vec}, {out}, "", f, len});
  }
  ScheduleBuilder& elemmul(const std::string& a, const std::string& b, const std::string& out, ValueFormat f) {
    if (!present(a) || !present(b)) return *this;
    return add(Lane::kElemAccum, {"elemmul:" + out, OpKind::kElemMul, {a, b}, {out}, "", f, cfg_.hidden_dim});
  }
  ScheduleBuilder& activation(const std::string& fn, std::vector<std::string> terms, const std::string& out) {
    terms.erase(std::remove_if(terms.begin(), terms.end(), [&](const std::string& n) { return !present(n); }),
                terms.end());
    return add(Lane::kElemAccum, {"activation:" + out, OpKind::kActivation, std::move(terms), {out}, fn,
                                  ValueFormat::kActivation, cfg_.hidden_dim});
  }
  ScheduleBuilder& adder(std::vector<std::string> terms, const std::string& out, ValueFormat f, std::size_t len) {
    return add(Lane::kElemAccum, {"adder_tree:" + out, OpKind::kAdderTree, std::move(terms), {out}, "", f, len});
  }

  Schedule build() {
    // Phases emptied by a disabled feature (no peepholes) are dropped.
    for (auto& s : sched_.states) {
      s.phases.erase(std::remove_if(s.phases.begin(), s.phases.end(), [](const Phase& p) { return p.empty(); }),
                     s.phases.end());
    }
    sched_.config = cfg_;
    return std::move(sched_);
  }

 private:
  /// Peephole names vanish without peepholes; their products with them.
  bool present(const std::string& name) const {
    if (!cfg_.has_peephole) {
      static const std::set<std::string> peep = {"W_ic", "W_fc", "W_oc", "Wic_c", "Wfc_c", "Woc_c"};
      if (peep.count(name)) return false;
    }
    if (!cfg_.has_projection && (name == "W_ym" || name == "P_ym")) return false;
    return true;
  }

  ScheduleBuilder& add(Lane lane, LstmOp op) {
    sched_.states.back().phases.back().lanes[lane].push_back(std::move(op));
    return *this;
  }

  LayerConfig cfg_;
  Schedule sched_;
};

}  // namespace detail

/// Canonical per-timestep schedule. The SpMV unit walks the gate matrices in
/// pairs (W_?x then W_?r) and finishes with W_ym; each weight fetch is issued
/// one phase before its SpMV so the transfer overlaps the previous product.
/// Gate activations run on the element-wise lane while the SpMV unit works on
/// the next gate (i_t overlaps W_fr y_{t-1}).
inline Schedule build_schedule(const LayerConfig& cfg) {
  cfg.validate();
  const auto H = cfg.hidden_dim;
  const auto I = ValueFormat::kIntermediate;
  detail::ScheduleBuilder b(cfg);
  b.state("INITIAL").phase().fetch_weights("W_ix").fetch_vectors({"x_t", "P_ix"});

  b.state("STATE_1");
  b.phase().spmv("W_ix", "x_t", "Wix_x", I, H).fetch_weights("W_ir").fetch_vectors({"P_ir", "W_ic", "b_i"});
  b.phase()
      .spmv("W_ir", "y_prev", "Wir_y", I, H)
      .elemmul("W_ic", "c_prev", "Wic_c", I)
      .fetch_weights("W_fx")
      .fetch_vectors({"P_fx", "W_fc", "b_f"});

  b.state("STATE_2");
  b.phase().spmv("W_fx", "x_t", "Wfx_x", I, H).elemmul("W_fc", "c_prev", "Wfc_c", I).fetch_weights("W_fr").fetch_vectors(
      {"P_fr"});
  b.phase()
      .spmv("W_fr", "y_prev", "Wfr_y", I, H)
      .activation("sigmoid", {"Wix_x", "Wir_y", "Wic_c", "b_i"}, "i_t")
      .fetch_weights("W_cx")
      .fetch_vectors({"P_cx", "b_c"});

  b.state("STATE_3");
  b.phase()
      .spmv("W_cx", "x_t", "Wcx_x", I, H)
      .activation("sigmoid", {"Wfx_x", "Wfr_y", "Wfc_c", "b_f"}, "f_t")
      .fetch_weights("W_cr")
      .fetch_vectors({"P_cr"});
  b.phase()
      .spmv("W_cr", "y_prev", "Wcr_y", I, H)
      .elemmul("f_t", "c_prev", "fc", I)
      .fetch_weights("W_ox")
      .fetch_vectors({"P_ox", "W_oc", "b_o"});

  b.state("STATE_4");
  b.phase()
      .spmv("W_ox", "x_t", "Wox_x", I, H)
      .activation("cell_input", {"Wcx_x", "Wcr_y", "b_c"}, "g_t")
      .fetch_weights("W_or")
      .fetch_vectors({"P_or"});
  b.phase().spmv("W_or", "y_prev", "Wor_y", I, H).elemmul("i_t", "g_t", "ig", I);
  if (cfg.has_projection) b.fetch_weights("W_ym").fetch_vectors({"P_ym"});

  b.state("STATE_5");
  b.phase().adder({"fc", "ig"}, "c_t", I, H);
  b.phase().elemmul("W_oc", "c_t", "Woc_c", I);
  b.phase().activation("sigmoid", {"Wox_x", "Wor_y", "Woc_c", "b_o"}, "o_t");

  b.state("STATE_6");
  b.phase().activation("tanh", {"c_t"}, "h_t");
  b.phase().elemmul("o_t", "h_t", "m_t", ValueFormat::kActivation);
  if (cfg.has_projection) {
    b.phase().spmv("W_ym", "m_t", "y_t", ValueFormat::kInput, cfg.proj_dim);
  } else {
    b.phase().adder({"m_t"}, "y_t", ValueFormat::kInput, H);
  }
  return b.build();
}

struct Violation {
  enum class Kind { kDependency, kResource, kFetchOrder, kUndefined, kDuplicate };
  Kind kind;
  std::size_t phase;  ///< flattened phase index
  std::string op;
  std::string message;
};

inline std::string to_string(Violation::Kind k) {
  switch (k) {
    case Violation::Kind::kDependency: return "dependency";
    case Violation::Kind::kResource: return "resource";
    case Violation::Kind::kFetchOrder: return "fetch_order";
    case Violation::Kind::kUndefined: return "undefined";
    case Violation::Kind::kDuplicate: return "duplicate";
  }
  return "?";
}

/// Checks data dependencies, lane exclusivity, weight-fetch ordering and
/// double-buffer capacity, and that every consumed value has a producer.
/// Never throws; an empty result means the schedule is valid.
inline std::vector<Violation> validate_schedule(const Schedule& s) {
  using K = Violation::Kind;
  std::vector<Violation> out;
  const auto phases = s.phases();

  // Producer phase of every name.
  std::map<std::string, std::size_t> produced_at;
  for (std::size_t p = 0; p < phases.size(); ++p) {
    for (const auto& [lane, ops] : phases[p]->lanes) {
      for (const auto& op : ops) {
        for (const auto& o : op.outputs) {
          if (!produced_at.emplace(o, p).second) {
            out.push_back({K::kDuplicate, p, op.id, "'" + o + "' has more than one producer"});
          }
        }
      }
    }
  }
  std::set<std::string> external(Schedule::external_inputs().begin(), Schedule::external_inputs().end());

  std::map<std::string, std::size_t> weight_fetched_at;  // matrix -> fetch phase
  std::map<std::string, std::size_t> weight_used_at;      // matrix -> spmv phase
  for (std::size_t p = 0; p < phases.size(); ++p) {
    for (const auto& [lane, ops] : phases[p]->lanes) {
      const bool exclusive = lane != Lane::kVectorFetch;
      if (exclusive && ops.size() > 1) {
        out.push_back({K::kResource, p, ops[1].id,
                       std::to_string(ops.size()) + " ops share the " + to_string(lane) + " lane in one phase"});
      }
      for (const auto& op : ops) {
        const bool lane_ok = (op.kind == OpKind::kSpMV && lane == Lane::kSpMV) ||
                             ((op.kind == OpKind::kElemMul || op.kind == OpKind::kAdderTree ||
                               op.kind == OpKind::kActivation) &&
                              lane == Lane::kElemAccum) ||
                             (op.kind == OpKind::kFetch && (lane == Lane::kWeightFetch || lane == Lane::kVectorFetch));
        if (!lane_ok) out.push_back({K::kResource, p, op.id, to_string(op.kind) + " op on the " + to_string(lane) + " lane"});
        if (op.kind == OpKind::kFetch) {
          for (const auto& o : op.outputs) {
            if (detail::is_weight_matrix(o)) {
              if (lane != Lane::kWeightFetch) {
                out.push_back({K::kFetchOrder, p, op.id, "weights " + o + " fetched off the weight lane"});
              }
              weight_fetched_at[o] = p;
            }
          }
        }
        if (op.kind == OpKind::kSpMV) {
          if (op.inputs.empty() || !detail::is_weight_matrix(op.inputs[0])) {
            out.push_back({K::kUndefined, p, op.id, "spmv has no weight matrix operand"});
          } else {
            weight_used_at[op.inputs[0]] = p;
          }
        }
        for (const auto& in : op.inputs) {
          if (external.count(in)) continue;
          auto it = produced_at.find(in);
          if (it == produced_at.end()) {
            out.push_back({K::kUndefined, p, op.id, "'" + in + "' is never produced"});
          } else if (it->second >= p) {
            const auto kind = detail::is_weight_matrix(in) ? K::kFetchOrder : K::kDependency;
            out.push_back({kind, p, op.id,
                           "'" + in + "' is produced in phase " + std::to_string(it->second) +
                               ", not before phase " + std::to_string(p)});
          }
        }
      }
    }
  }

  for (const std::string result : {"c_t", "y_t"}) {
    if (!produced_at.count(result)) out.push_back({K::kUndefined, phases.size(), "", "'" + result + "' is never produced"});
  }

  // Ping-pong weight buffers: at most two matrices resident at any phase.
  for (std::size_t p = 0; p < phases.size(); ++p) {
    std::size_t resident = 0;
    for (const auto& [m, fp] : weight_fetched_at) {
      auto u = weight_used_at.find(m);
      const std::size_t last = u == weight_used_at.end() ? fp : u->second;
      if (fp <= p && p <= last) ++resident;
    }
    if (resident > 2) {
      out.push_back({K::kResource, p, "", std::to_string(resident) + " weight matrices resident; buffers hold 2"});
    }
  }
  return out;
}

inline json op_to_json(const LstmOp& op) {
  return {{"id", op.id},         {"kind", to_string(op.kind)},     {"inputs", op.inputs}, {"outputs", op.outputs},
          {"fn", op.fn},         {"format", to_string(op.format)}, {"length", op.length}};
}

inline LstmOp op_from_json(const json& j) {
  LstmOp op;
  op.id = j.at("id").get<std::string>();
  op.kind = op_kind_from_string(j.at("kind").get<std::string>());
  op.inputs = j.at("inputs").get<std::vector<std::string>>();
  op.outputs = j.at("outputs").get<std::vector<std::string>>();
  op.fn = j.value("fn", "");
  op.format = value_format_from_string(j.value("format", "none"));
  op.length = j.value("length", std::size_t{0});
  return op;
}

inline json schedule_to_json(const Schedule& s) {
  json states = json::array();
  for (const auto& st : s.states) {
    json phases = json::array();
    for (const auto& ph : st.phases) {
      json lanes = json::object();
      for (const auto& [lane, ops] : ph.lanes) {
        json jo = json::array();
        for (const auto& op : ops) jo.push_back(op_to_json(op));
        lanes[to_string(lane)] = jo;
      }
      phases.push_back({{"lanes", lanes}});
    }
    states.push_back({{"name", st.name}, {"phases", phases}});
  }
  return {{"format", "ese-schedule"}, {"version", 1}, {"config", config_to_json(s.config)}, {"states", states}};
}

inline Schedule schedule_from_json(const json& j) {
  try {
    if (j.value("format", "") != "ese-schedule") throw ValidationError("not an ese-schedule document");
    Schedule s;
    s.config = config_from_json(j.at("config"));
    for (const auto& js : j.at("states")) {
      State st{js.at("name").get<std::string>(), {}};
      for (const auto& jp : js.at("phases")) {
        Phase ph;
        for (const auto& [lane, ops] : jp.at("lanes").items()) {
          auto& v = ph.lanes[lane_from_string(lane)];
          for (const auto& jo : ops) v.push_back(op_from_json(jo));
        }
        st.phases.push_back(std::move(ph));
      }
      s.states.push_back(std::move(st));
    }
    return s;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed schedule: ") + e.what());
  }
}

/// Graphviz rendering: one node per op, edges from producer to consumer,
/// one cluster per state.
inline std::string schedule_to_dot(const Schedule& s) {
  std::ostringstream os;
  os << "digraph schedule {\n";
  if (s.states.empty()) {
    os << "}\n";
    return os.str();
  }
  os << "  rankdir=LR;\n  node [shape=box, fontname=\"monospace\"];\n";
  std::map<std::string, std::string> producer;
  std::size_t n = 0, ci = 0;
  std::vector<std::pair<std::string, const LstmOp*>> nodes;
  for (const auto& st : s.states) {
    os << "  subgraph cluster_" << ci++ << " {\n    label=\"" << st.name << "\";\n";
    std::size_t pi = 0;
    for (const auto& ph : st.phases) {
      for (const auto& [lane, ops] : ph.lanes) {
        for (const auto& op : ops) {
          const std::string id = "n" + std::to_string(n++);
          os << "    " << id << " [label=\"" << op.id << "\\n" << to_string(lane) << " / phase " << pi << "\"];\n";
          for (const auto& o : op.outputs) producer[o] = id;
          nodes.emplace_back(id, &op);
        }
      }
      ++pi;
    }
    os << "  }\n";
  }
  for (const auto& [id, op] : nodes) {
    for (const auto& in : op->inputs) {
      auto it = producer.find(in);
      if (it != producer.end()) os << "  " << it->second << " -> " << id << " [label=\"" << in << "\"];\n";
    }
  }
  os << "}\n";
  return os.str();
}

/// Fixed-point value with its scale.
struct QValue {
  QVector v;
  FixedFormat fmt;
};

/// Interprets a schedule on a quantized layer. Ops inside a phase run in an
/// order drawn from `shuffle` (if given) and only see values committed by
/// earlier phases.
inline QVector execute_schedule(const Schedule& s, const QuantizedLayer& q, const ActLuts& luts,
                                std::span<const std::int32_t> x, QLstmState& state,
                                ActivationChoice acts = ActivationChoice::kTanhCellInput,
                                std::mt19937_64* shuffle = nullptr) {
  if (!validate_schedule(s).empty()) throw ValidationError("refusing to execute an invalid schedule");
  std::map<std::string, QValue> values;
  values["y_prev"] = {state.y, q.plan.input};
  values["c_prev"] = {state.c, q.plan.intermediate};

  auto lookup = [&](const std::string& name) -> QValue {
    if (auto it = values.find(name); it != values.end()) return it->second;
    if (name == "x_t") return {QVector(x.begin(), x.end()), q.plan.input};
    if (auto it = q.tensors.find(name); it != q.tensors.end()) return {it->second.values, it->second.format};
    throw ValidationError("value '" + name + "' is not available");
  };
  auto out_fmt = [&](ValueFormat f) {
    switch (f) {
      case ValueFormat::kIntermediate: return q.plan.intermediate;
      case ValueFormat::kActivation: return kActivationFormat;
      case ValueFormat::kInput: return q.plan.input;
      case ValueFormat::kNone: break;
    }
    throw ValidationError("op has no result format");
  };
  std::set<std::string> fetched;

  for (const Phase* ph : s.phases()) {
    std::vector<const LstmOp*> ops;
    for (const auto& [lane, v] : ph->lanes)
      for (const auto& op : v) ops.push_back(&op);
    if (shuffle) std::shuffle(ops.begin(), ops.end(), *shuffle);

    std::map<std::string, QValue> staged;
    std::vector<std::string> staged_fetch;
    for (const LstmOp* op : ops) {
      switch (op->kind) {
        case OpKind::kFetch:
          staged_fetch.insert(staged_fetch.end(), op->outputs.begin(), op->outputs.end());
          break;
        case OpKind::kSpMV: {
          if (!fetched.count(op->inputs[0])) throw ValidationError(op->id + ": weights not fetched");
          const auto& w = q.at(op->inputs[0]);
          const QValue a = lookup(op->inputs[2]);
          const auto fmt = out_fmt(op->format);
          staged[op->outputs[0]] = {qops::spmv(w, a.v, a.fmt.frac_bits, fmt), fmt};
          break;
        }
        case OpKind::kElemMul: {
          const QValue a = lookup(op->inputs[0]);
          const QValue b = lookup(op->inputs[1]);
          const auto fmt = out_fmt(op->format);
          staged[op->outputs[0]] = {qops::elemmul(a.v, a.fmt.frac_bits, b.v, b.fmt.frac_bits, fmt), fmt};
          break;
        }
        case OpKind::kAdderTree:
        case OpKind::kActivation: {
          const auto sum_fmt = op->kind == OpKind::kActivation ? q.plan.intermediate : out_fmt(op->format);
          std::vector<QVector> terms;
          for (const auto& in : op->inputs) {
            const QValue t = lookup(in);
            terms.push_back(t.fmt.frac_bits == sum_fmt.frac_bits ? t.v : qops::convert(t.v, t.fmt.frac_bits, sum_fmt));
          }
          QVector sum = qops::add(terms, sum_fmt);
          if (op->kind == OpKind::kAdderTree) {
            staged[op->outputs[0]] = {std::move(sum), sum_fmt};
          } else {
            const ActLut* lut = &luts.sigmoid;
            if (op->fn == "tanh" || (op->fn == "cell_input" && acts == ActivationChoice::kTanhCellInput)) {
              lut = &luts.tanh;
            }
            staged[op->outputs[0]] = {qops::activate(*lut, sum, sum_fmt.frac_bits), kActivationFormat};
          }
          break;
        }
      }
    }
    for (auto& [k, v] : staged) values[k] = std::move(v);
    fetched.insert(staged_fetch.begin(), staged_fetch.end());
  }
  state.c = lookup("c_t").v;
  state.y = lookup("y_t").v;
  return state.y;
}

}  // namespace ese
