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

#include <chrono>
#include <ctime>
#include <filesystem>
#include <string>
#include <vector>

#include "ese/csc.hpp"
#include "ese/model_io.hpp"
#include "ese/prune.hpp"
#include "ese/quantized_lstm.hpp"
#include "ese/simulate.hpp"

#ifndef ESE_VERSION
#define ESE_VERSION "0.0.0"
#endif

namespace ese {

/// Every artifact of one compress-and-encode run.
struct CompressedModel {
  Model pruned;
  ModelMask mask;
  std::vector<QuantizedLayer> quantized;
  EncodedModel encoded;
};

/// Prunes to `density` (load-balanced or by plain magnitude), quantizes at
/// `width` bits with formats chosen from the pruned weights, and encodes for
/// `n_pe` PEs.
inline CompressedModel compress_model(const Model& model, double density, bool balanced, int width, std::size_t n_pe,
                                      QuotaMode mode = QuotaMode::kPerPe) {
  CompressedModel out;
  out.mask = balanced ? prune_model(model, density, n_pe, mode) : prune_model_magnitude(model, density, n_pe);
  out.pruned = apply_model_mask(model, out.mask);
  for (const auto& p : out.pruned) out.quantized.push_back(quantize_layer(p, make_plan(p, width)));
  out.encoded = encode_model(out.quantized, &out.mask, n_pe);
  return out;
}

struct FifoPoint {
  std::size_t depth = 0;
  std::string matrix;  ///< "*" for the aggregate over all matrices
  double utilization = 0;
  double useful_utilization = 0;
  std::uint64_t cycles = 0;
};

/// Utilization of every matrix at each FIFO depth, plus an aggregate row
/// (all words over PE count times summed makespans) per depth.
inline std::vector<FifoPoint> fifo_sweep(const EncodedModel& model, const std::vector<std::size_t>& depths,
                                         bool independent_push = false) {
  std::vector<FifoPoint> out;
  for (std::size_t d : depths) {
    std::uint64_t words = 0, nnz = 0, cycles = 0;
    std::size_t n_pe = 0;
    for (std::size_t l = 0; l < model.size(); ++l) {
      for (const auto& [name, e] : model[l].matrices) {
        const auto r = simulate_spmv(e, d, independent_push);
        const std::string label = model.size() > 1 ? "L" + std::to_string(l) + "/" + name : name;
        out.push_back({d, label, r.utilization, r.useful_utilization, r.cycles});
        words += r.words;
        nnz += r.real_nnz;
        cycles += r.cycles * e.n_pe;
        n_pe = e.n_pe;
      }
    }
    FifoPoint agg{d, "*", 0, 0, 0};
    if (cycles) {
      agg.utilization = static_cast<double>(words) / static_cast<double>(cycles);
      agg.useful_utilization = static_cast<double>(nnz) / static_cast<double>(cycles);
      agg.cycles = cycles / std::max<std::size_t>(n_pe, 1);
    }
    out.push_back(agg);
  }
  return out;
}

inline std::string fifo_sweep_csv(const std::vector<FifoPoint>& pts) {
  std::ostringstream os;
  os << "depth,matrix,utilization,useful_utilization,cycles\n";
  for (const auto& p : pts) {
    os << p.depth << ',' << p.matrix << ',' << p.utilization << ',' << p.useful_utilization << ',' << p.cycles << '\n';
  }
  return os.str();
}

struct SweepPoint {
  double density = 1.0;
  bool balanced = true;
  std::uint64_t total_cycles = 0;
  double latency_s = 0;
  double speedup = 1.0;  ///< dense latency / this latency
  std::uint64_t words = 0;
  std::uint64_t real_nnz = 0;
};

/// End-to-end latency at each density for balanced and unbalanced masks,
/// relative to the unpruned model. Sweep points run on up to `jobs` threads.
inline std::vector<SweepPoint> sparsity_sweep(const Model& model, const std::vector<double>& densities,
                                              const SimConfig& cfg, int width = 12, std::size_t jobs = 1) {
  cfg.validate();
  for (double d : densities) {
    if (!(d > 0.0 && d <= 1.0)) throw ValidationError("densities must lie in (0, 1]");
  }
  struct Task {
    double density;
    bool balanced;
  };
  std::vector<Task> tasks{{1.0, true}};
  for (double d : densities) {
    tasks.push_back({d, true});
    tasks.push_back({d, false});
  }
  auto run = [&](std::size_t i) {
    const Task& t = tasks[i];
    const auto c = compress_model(model, t.density, t.balanced, width, cfg.n_pe);
    const auto rep = simulate_lstm(c.encoded, cfg);
    SweepPoint p{t.density, t.balanced, rep.total_cycles, rep.latency_s, 1.0, 0, 0};
    for (const auto& m : rep.matrices) {
      p.words += m.words;
      p.real_nnz += m.real_nnz;
    }
    return p;
  };
  auto pts = parallel_map(tasks.size(), jobs, run);
  const double dense = pts.front().latency_s;
  for (auto& p : pts) p.speedup = p.latency_s > 0 ? dense / p.latency_s : 1.0;
  pts.erase(pts.begin());
  return pts;
}

inline std::string sparsity_sweep_csv(const std::vector<SweepPoint>& pts) {
  std::ostringstream os;
  os << "density,mask,total_cycles,latency_us,speedup,words,real_nnz\n";
  for (const auto& p : pts) {
    os << p.density << ',' << (p.balanced ? "balanced" : "unbalanced") << ',' << p.total_cycles << ','
       << p.latency_s * 1e6 << ',' << p.speedup << ',' << p.words << ',' << p.real_nnz << '\n';
  }
  return os.str();
}

/// Log of pipeline stages with the hashes of what each stage read and wrote.
/// Before a stage runs, its inputs are checked against the chain: a file that
/// changed after a stage recorded it, or whose producer read files that have
/// since changed, is stale.
class PipelineManifest {
 public:
  explicit PipelineManifest(std::filesystem::path path) : path_(std::move(path)) {
    if (std::filesystem::exists(path_)) {
      doc_ = read_json(path_);
      if (doc_.value("format", "") != "ese-pipeline") throw ValidationError(path_.string() + " is not a pipeline manifest");
    } else {
      doc_ = {{"format", "ese-pipeline"}, {"version", 1}, {"stages", json::array()}};
    }
  }

  static std::string file_hash(const std::filesystem::path& p) {
    const auto bytes = read_file(p);
    return sha256_hex(bytes);
  }

  /// Throws ValidationError if any input is stale.
  void check_inputs(const std::vector<std::filesystem::path>& inputs) const {
    for (const auto& in : inputs) check_file(key(in), file_hash(in), 0);
  }

  void record(const std::string& stage, const json& params, const std::vector<std::filesystem::path>& inputs,
              const std::vector<std::filesystem::path>& outputs) {
    json rec = {{"stage", stage}, {"tool_version", ESE_VERSION}, {"params", params}, {"timestamp", now_utc()}};
    rec["inputs"] = hashes(inputs);
    rec["outputs"] = hashes(outputs);
    auto& stages = doc_["stages"];
    // Re-running a stage for the same outputs replaces its earlier record.
    for (auto it = stages.begin(); it != stages.end();) {
      bool same = (*it)["stage"] == stage && (*it)["outputs"].size() == rec["outputs"].size();
      for (std::size_t k = 0; same && k < rec["outputs"].size(); ++k) {
        same = (*it)["outputs"][k]["path"] == rec["outputs"][k]["path"];
      }
      it = same ? stages.erase(it) : it + 1;
    }
    stages.push_back(rec);
    write_json(path_, doc_);
  }

  const json& document() const { return doc_; }

 private:
  static std::string key(const std::filesystem::path& p) {
    return std::filesystem::weakly_canonical(std::filesystem::absolute(p)).string();
  }

  static std::string now_utc() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
  }

  static json hashes(const std::vector<std::filesystem::path>& files) {
    json out = json::array();
    for (const auto& f : files) out.push_back({{"path", key(f)}, {"sha256", file_hash(f)}});
    return out;
  }

  const json* producer_of(const std::string& path) const {
    const json* found = nullptr;
    for (const auto& s : doc_["stages"]) {
      for (const auto& o : s["outputs"]) {
        if (o["path"] == path) found = &s;
      }
    }
    return found;
  }

  void check_file(const std::string& path, const std::string& current, int depth) const {
    if (depth > 64) throw ValidationError("pipeline manifest has a cycle");
    const json* prod = producer_of(path);
    if (!prod) return;
    for (const auto& o : (*prod)["outputs"]) {
      if (o["path"] == path && o["sha256"] != current) {
        throw ValidationError("stale input: " + path + " changed after stage '" + (*prod)["stage"].get<std::string>() +
                              "' wrote it");
      }
    }
    for (const auto& in : (*prod)["inputs"]) {
      const std::string p = in["path"].get<std::string>();
      if (!std::filesystem::exists(p)) continue;
      const std::string h = file_hash(p);
      if (h != in["sha256"]) {
        throw ValidationError("stale input: " + path + " was built from an older " + p);
      }
      check_file(p, h, depth + 1);
    }
  }

  std::filesystem::path path_;
  json doc_;
};

}  // namespace ese
