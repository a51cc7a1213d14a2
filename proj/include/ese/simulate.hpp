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

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <future>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "ese/csc.hpp"
#include "ese/schedule.hpp"

namespace ese {

struct SimConfig {
  std::size_t n_channels = 32;
  std::size_t n_pe = 32;
  std::size_t fifo_depth = 8;
  double freq_pe = 200e6;
  double freq_mem = 200e6;
  std::size_t mem_width_bits = 512;
  std::size_t elemmul_units = 16;
  std::size_t pipeline_latency = 16;
  std::size_t spmat_buffer_words = 512;
  /// Every channel fetches its own copy of the weights instead of sharing one
  /// broadcast stream.
  bool per_channel_refetch = false;
  /// Each PE's FIFO fills on its own instead of waiting for the fullest one.
  bool independent_push = false;

  void validate() const {
    if (n_channels < 1 || n_pe < 1 || fifo_depth < 1 || mem_width_bits < 1 || elemmul_units < 1 ||
        pipeline_latency < 1 || spmat_buffer_words < 1) {
      throw ValidationError("simulator counts must all be at least 1");
    }
    if (!(freq_pe > 0) || !(freq_mem > 0) || !std::isfinite(freq_pe) || !std::isfinite(freq_mem)) {
      throw ValidationError("simulator frequencies must be positive");
    }
  }
};

inline json sim_config_to_json(const SimConfig& c) {
  return {{"n_channels", c.n_channels},
          {"n_pe", c.n_pe},
          {"fifo_depth", c.fifo_depth},
          {"freq_pe", c.freq_pe},
          {"freq_mem", c.freq_mem},
          {"mem_width_bits", c.mem_width_bits},
          {"elemmul_units", c.elemmul_units},
          {"pipeline_latency", c.pipeline_latency},
          {"spmat_buffer_words", c.spmat_buffer_words},
          {"per_channel_refetch", c.per_channel_refetch},
          {"independent_push", c.independent_push}};
}

/// Largest PE count per channel whose word demand the memory can feed.
inline std::size_t pe_balance_bound(const SimConfig& c) {
  c.validate();
  const double bound = static_cast<double>(c.mem_width_bits) * c.freq_mem / (16.0 * c.freq_pe);
  return static_cast<std::size_t>(std::floor(bound + 1e-9));
}

struct SpmvResult {
  std::uint64_t cycles = 0;             ///< makespan
  std::vector<std::uint64_t> busy;      ///< words processed per PE, padding included
  std::uint64_t words = 0;
  std::uint64_t real_nnz = 0;
  std::uint64_t compute_lower_bound = 0;  ///< busiest PE's word count
  double utilization = 0.0;             ///< all words / (n_pe x makespan)
  double useful_utilization = 0.0;      ///< real nonzeros / (n_pe x makespan)
};

/// Per-PE, per-column word counts of an encoded matrix.
inline std::vector<std::vector<std::uint32_t>> column_loads(const EncodedSparseMatrix& e) {
  std::vector<std::vector<std::uint32_t>> w(e.n_pe, std::vector<std::uint32_t>(e.cols));
  for (std::size_t k = 0; k < e.n_pe; ++k)
    for (std::size_t j = 0; j < e.cols; ++j) w[k][j] = static_cast<std::uint32_t>(e.pes[k].column_words(j));
  return w;
}

/// Event model of one SpMV. Activation j is pushed into the FIFOs one cycle
/// after activation j-1, and only once the FIFO has a free slot: a slot frees
/// when its PE starts the column `depth` positions earlier. PE k starts column
/// j when it has finished column j-1 and activation j has arrived, then spends
/// one cycle per word.
inline SpmvResult simulate_loads(const std::vector<std::vector<std::uint32_t>>& w, std::size_t fifo_depth,
                                 bool independent_push = false) {
  if (fifo_depth < 1) throw ValidationError("fifo depth must be at least 1");
  const std::size_t n_pe = w.size();
  const std::size_t cols = n_pe ? w[0].size() : 0;
  SpmvResult r;
  r.busy.assign(n_pe, 0);
  std::vector<std::uint64_t> fin(n_pe, 0);
  std::vector<std::vector<std::uint64_t>> start(n_pe, std::vector<std::uint64_t>(cols, 0));
  std::vector<std::uint64_t> push(n_pe, 0);
  for (std::size_t j = 0; j < cols; ++j) {
    if (independent_push) {
      for (std::size_t k = 0; k < n_pe; ++k) {
        std::uint64_t t = j ? push[k] + 1 : 0;
        if (j >= fifo_depth) t = std::max(t, start[k][j - fifo_depth]);
        push[k] = t;
      }
    } else {
      std::uint64_t t = j ? push[0] + 1 : 0;
      if (j >= fifo_depth) {
        for (std::size_t k = 0; k < n_pe; ++k) t = std::max(t, start[k][j - fifo_depth]);
      }
      std::fill(push.begin(), push.end(), t);
    }
    for (std::size_t k = 0; k < n_pe; ++k) {
      start[k][j] = std::max(fin[k], push[k]);
      fin[k] = start[k][j] + w[k][j];
      r.busy[k] += w[k][j];
    }
  }
  for (std::size_t k = 0; k < n_pe; ++k) {
    r.words += r.busy[k];
    r.compute_lower_bound = std::max(r.compute_lower_bound, r.busy[k]);
  }
  // A matrix with no words costs nothing: nothing is pushed or multiplied.
  r.cycles = r.words ? *std::max_element(fin.begin(), fin.end()) : 0;
  r.utilization = r.cycles ? static_cast<double>(r.words) / (static_cast<double>(n_pe) * r.cycles) : 1.0;
  r.useful_utilization = r.utilization;
  return r;
}

inline SpmvResult simulate_spmv(const EncodedSparseMatrix& e, std::size_t fifo_depth, bool independent_push = false) {
  SpmvResult r = simulate_loads(column_loads(e), fifo_depth, independent_push);
  r.real_nnz = e.real_nnz;
  r.useful_utilization =
      r.cycles ? static_cast<double>(r.real_nnz) / (static_cast<double>(e.n_pe) * r.cycles) : 1.0;
  return r;
}

/// Operation counts and rates. Sparse ops count real nonzeros; the padded
/// figure counts every stored word, as the hardware multiplies padding too.
struct Throughput {
  double dense_ops = 0;
  double sparse_ops = 0;
  double sparse_ops_padded = 0;
  double latency_s = 0;
  double sparse_gops = 0;
  double sparse_gops_padded = 0;
  double equivalent_gops = 0;
};

inline Throughput throughput_report(const EncodedModel& model, const SimConfig& cfg, double latency_s) {
  Throughput t;
  double dense = 0, real = 0, words = 0;
  for (const auto& layer : model) {
    for (const auto& [name, m] : layer.matrices) {
      dense += static_cast<double>(m.rows) * m.cols;
      real += static_cast<double>(m.real_nnz);
      words += static_cast<double>(m.total_words());
    }
  }
  const double ch = static_cast<double>(cfg.n_channels);
  t.dense_ops = 2 * dense * ch;
  t.sparse_ops = 2 * real * ch;
  t.sparse_ops_padded = 2 * words * ch;
  t.latency_s = latency_s;
  if (latency_s > 0) {
    t.sparse_gops = t.sparse_ops / latency_s / 1e9;
    t.sparse_gops_padded = t.sparse_ops_padded / latency_s / 1e9;
    t.equivalent_gops = t.dense_ops / latency_s / 1e9;
  }
  return t;
}

struct MatrixReport {
  std::size_t layer = 0;
  std::string name;
  std::size_t rows = 0, cols = 0;
  std::uint64_t words = 0, real_nnz = 0;
  std::uint64_t compute_cycles = 0;
  std::uint64_t compute_lower_bound = 0;
  std::uint64_t fetch_cycles = 0;
  std::uint64_t fetch_start = 0, fetch_end = 0;
  std::uint64_t spmv_start = 0;
  bool fetch_bound = false;  ///< the SpMV waited for its weights
  double utilization = 0, useful_utilization = 0;
  std::size_t pointer_buffer_fills = 0;
  std::vector<std::uint64_t> per_pe_busy;
};

struct PhaseRecord {
  std::size_t layer = 0;
  std::string state;
  std::size_t index = 0;  ///< phase index within the state
  std::uint64_t start = 0, end = 0;
  std::string spmv_op, elem_op, weight_fetch_op;
  std::uint64_t spmv_start = 0, spmv_cycles = 0, elem_cycles = 0;
  std::uint64_t fetch_start = 0, fetch_end = 0;
  bool fetch_bound = false;
};

struct StateRecord {
  std::size_t layer = 0;
  std::string name;
  std::uint64_t start = 0, end = 0;
  bool fetch_bound = false;
  std::uint64_t duration() const { return end - start; }
};

struct SimReport {
  SimConfig config;
  std::vector<MatrixReport> matrices;
  std::vector<PhaseRecord> phases;
  std::vector<StateRecord> states;
  std::vector<std::uint64_t> per_pe_busy;
  std::uint64_t total_cycles = 0;
  double latency_s = 0;
  double utilization = 0;
  double useful_utilization = 0;
  Throughput throughput;

  const MatrixReport& matrix(const std::string& name, std::size_t layer = 0) const {
    for (const auto& m : matrices)
      if (m.name == name && m.layer == layer) return m;
    throw ValidationError("no matrix '" + name + "' in report");
  }
};

namespace detail {

inline std::uint64_t fetch_cycles(std::uint64_t words, const SimConfig& c) {
  if (words == 0) return 0;
  const double copies = c.per_channel_refetch ? static_cast<double>(c.n_channels) : 1.0;
  const double mem_cycles = static_cast<double>(words) * copies * 16.0 / static_cast<double>(c.mem_width_bits);
  return static_cast<std::uint64_t>(std::ceil(mem_cycles * c.freq_pe / c.freq_mem - 1e-9));
}

inline void check_compatible(const Schedule& s, const EncodedLayer& layer) {
  const auto& a = s.config;
  const auto& b = layer.config;
  if (a.hidden_dim != b.hidden_dim || a.has_peephole != b.has_peephole || a.has_projection != b.has_projection ||
      (a.has_projection && a.proj_dim != b.proj_dim)) {
    throw ValidationError("schedule was built for a different layer shape");
  }
  std::set<std::string> used;
  for (const Phase* ph : s.phases()) {
    auto it = ph->lanes.find(Lane::kSpMV);
    if (it == ph->lanes.end()) continue;
    for (const auto& op : it->second) used.insert(op.inputs.front());
  }
  for (const auto& [name, m] : layer.matrices) {
    if (!used.count(name)) throw ValidationError("schedule never multiplies by " + name);
  }
}

}  // namespace detail

/// Walks the schedule phase by phase for every layer in turn. A phase ends
/// when its SpMV and element-wise work are both done; an SpMV cannot start
/// before its weights have arrived. Weight fetches share one memory lane and
/// run back to back in issue order; vector and pointer fetches are hidden.
inline SimReport simulate_lstm(const EncodedModel& model, const Schedule& sched, const SimConfig& cfg) {
  cfg.validate();
  if (auto v = validate_schedule(sched); !v.empty()) {
    throw ValidationError("invalid schedule: " + v.front().message);
  }
  SimReport rep;
  rep.config = cfg;
  rep.per_pe_busy.assign(cfg.n_pe, 0);
  std::uint64_t now = 0, fetch_free = 0;
  std::uint64_t words_all = 0, nnz_all = 0, spmv_cycles_all = 0;

  for (std::size_t l = 0; l < model.size(); ++l) {
    const auto& layer = model[l];
    detail::check_compatible(sched, layer);
    std::map<std::string, std::size_t> mat_index;
    for (const auto& [name, e] : layer.matrices) {
      if (e.n_pe != cfg.n_pe) throw ValidationError("matrix " + name + " is encoded for a different PE count");
      MatrixReport m;
      m.layer = l;
      m.name = name;
      m.rows = e.rows;
      m.cols = e.cols;
      m.real_nnz = e.real_nnz;
      const SpmvResult r = simulate_spmv(e, cfg.fifo_depth, cfg.independent_push);
      m.words = r.words;
      m.compute_cycles = r.cycles;
      m.compute_lower_bound = r.compute_lower_bound;
      m.utilization = r.utilization;
      m.useful_utilization = r.useful_utilization;
      m.per_pe_busy = r.busy;
      m.fetch_cycles = detail::fetch_cycles(r.words, cfg);
      m.pointer_buffer_fills = (e.cols + 1 + cfg.spmat_buffer_words - 1) / cfg.spmat_buffer_words;
      mat_index[name] = rep.matrices.size();
      rep.matrices.push_back(std::move(m));
    }
    auto mat = [&](const std::string& name) -> MatrixReport& {
      auto it = mat_index.find(name);
      if (it == mat_index.end()) throw ValidationError("layer " + std::to_string(l) + " has no matrix " + name);
      return rep.matrices[it->second];
    };

    for (const auto& st : sched.states) {
      StateRecord srec{l, st.name, now, now, false};
      std::size_t pi = 0;
      for (const auto& ph : st.phases) {
        PhaseRecord pr;
        pr.layer = l;
        pr.state = st.name;
        pr.index = pi++;
        pr.start = now;
        std::uint64_t end = now;
        auto lane = [&](Lane ln) -> const std::vector<LstmOp>& {
          static const std::vector<LstmOp> none;
          auto it = ph.lanes.find(ln);
          return it == ph.lanes.end() ? none : it->second;
        };
        for (const auto& op : lane(Lane::kWeightFetch)) {
          for (const auto& name : op.outputs) {
            auto& m = mat(name);
            m.fetch_start = std::max(now, fetch_free);
            m.fetch_end = m.fetch_start + m.fetch_cycles;
            fetch_free = m.fetch_end;
            pr.weight_fetch_op = op.id;
            pr.fetch_start = m.fetch_start;
            pr.fetch_end = m.fetch_end;
          }
        }
        for (const auto& op : lane(Lane::kSpMV)) {
          auto& m = mat(op.inputs.at(0));
          m.spmv_start = std::max(now, m.fetch_end);
          m.fetch_bound = m.fetch_end > now;
          pr.spmv_op = op.id;
          pr.spmv_start = m.spmv_start;
          pr.spmv_cycles = m.compute_cycles;
          pr.fetch_bound = m.fetch_bound;
          end = std::max(end, m.spmv_start + m.compute_cycles);
          words_all += m.words;
          nnz_all += m.real_nnz;
          spmv_cycles_all += m.compute_cycles;
          for (std::size_t k = 0; k < cfg.n_pe; ++k) rep.per_pe_busy[k] += m.per_pe_busy[k];
        }
        for (const auto& op : lane(Lane::kElemAccum)) {
          pr.elem_op = op.id;
          pr.elem_cycles = (op.length + cfg.elemmul_units - 1) / cfg.elemmul_units + cfg.pipeline_latency;
          end = std::max(end, now + pr.elem_cycles);
        }
        pr.end = now = end;
        srec.fetch_bound = srec.fetch_bound || pr.fetch_bound;
        rep.phases.push_back(std::move(pr));
      }
      srec.end = now;
      rep.states.push_back(std::move(srec));
    }
  }
  rep.total_cycles = now;
  rep.latency_s = static_cast<double>(now) / cfg.freq_pe;
  rep.utilization = rep.useful_utilization = 1.0;
  if (spmv_cycles_all) {
    const double denom = static_cast<double>(cfg.n_pe) * static_cast<double>(spmv_cycles_all);
    rep.utilization = static_cast<double>(words_all) / denom;
    rep.useful_utilization = static_cast<double>(nnz_all) / denom;
  }
  rep.throughput = throughput_report(model, cfg, rep.latency_s);
  return rep;
}

inline SimReport simulate_lstm(const EncodedModel& model, const SimConfig& cfg) {
  if (model.empty()) throw ValidationError("model has no layers");
  return simulate_lstm(model, build_schedule(model.front().config), cfg);
}

inline json throughput_to_json(const Throughput& t) {
  return {{"dense_ops", t.dense_ops},
          {"sparse_ops", t.sparse_ops},
          {"sparse_ops_padded", t.sparse_ops_padded},
          {"latency_s", t.latency_s},
          {"sparse_gops", t.sparse_gops},
          {"sparse_gops_padded", t.sparse_gops_padded},
          {"equivalent_gops", t.equivalent_gops}};
}

inline json sim_report_to_json(const SimReport& r) {
  json mats = json::array();
  for (const auto& m : r.matrices) {
    mats.push_back({{"layer", m.layer},
                    {"name", m.name},
                    {"rows", m.rows},
                    {"cols", m.cols},
                    {"words", m.words},
                    {"real_nnz", m.real_nnz},
                    {"compute_cycles", m.compute_cycles},
                    {"compute_lower_bound", m.compute_lower_bound},
                    {"fetch_cycles", m.fetch_cycles},
                    {"fetch_start", m.fetch_start},
                    {"fetch_end", m.fetch_end},
                    {"spmv_start", m.spmv_start},
                    {"fetch_bound", m.fetch_bound},
                    {"utilization", m.utilization},
                    {"useful_utilization", m.useful_utilization},
                    {"pointer_buffer_fills", m.pointer_buffer_fills},
                    {"compute_time_s", static_cast<double>(m.compute_cycles) / r.config.freq_pe},
                    {"per_pe_busy", m.per_pe_busy}});
  }
  json states = json::array();
  for (const auto& s : r.states) {
    states.push_back({{"layer", s.layer},
                      {"name", s.name},
                      {"start", s.start},
                      {"end", s.end},
                      {"duration", s.duration()},
                      {"fetch_bound", s.fetch_bound}});
  }
  return {{"format", "ese-sim-report"},
          {"version", 1},
          {"config", sim_config_to_json(r.config)},
          {"total_cycles", r.total_cycles},
          {"latency_s", r.latency_s},
          {"utilization", r.utilization},
          {"useful_utilization", r.useful_utilization},
          {"per_pe_busy", r.per_pe_busy},
          {"throughput", throughput_to_json(r.throughput)},
          {"matrices", mats},
          {"states", states}};
}

inline std::string timeline_csv(const SimReport& r) {
  std::ostringstream os;
  os << "layer,state,phase,start,end,spmv_op,spmv_start,spmv_cycles,elem_op,elem_cycles,weight_fetch_op,fetch_start,"
        "fetch_end,fetch_bound\n";
  for (const auto& p : r.phases) {
    os << p.layer << ',' << p.state << ',' << p.index << ',' << p.start << ',' << p.end << ',' << p.spmv_op << ','
       << p.spmv_start << ',' << p.spmv_cycles << ',' << p.elem_op << ',' << p.elem_cycles << ','
       << '"' << p.weight_fetch_op << '"' << ',' << p.fetch_start << ',' << p.fetch_end << ','
       << (p.fetch_bound ? 1 : 0) << '\n';
  }
  return os.str();
}

/// Runs `fn(i)` for i in [0, n) on up to `jobs` threads; results keep index order.
template <typename Fn>
auto parallel_map(std::size_t n, std::size_t jobs, Fn fn) -> std::vector<decltype(fn(std::size_t{}))> {
  using R = decltype(fn(std::size_t{}));
  std::vector<std::optional<R>> slots(n);
  jobs = std::max<std::size_t>(1, std::min(jobs, n));
  std::vector<std::future<void>> workers;
  std::atomic<std::size_t> next{0};
  for (std::size_t w = 0; w < jobs; ++w) {
    workers.push_back(std::async(std::launch::async, [&] {
      for (std::size_t i = next++; i < n; i = next++) slots[i].emplace(fn(i));
    }));
  }
  for (auto& w : workers) w.get();
  std::vector<R> out;
  out.reserve(n);
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

}  // namespace ese
