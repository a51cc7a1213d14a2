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
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "ese/container.hpp"
#include "ese/matrix.hpp"
#include "ese/model_io.hpp"

namespace ese {

/// Rows are dealt to PEs round-robin: row r belongs to PE r mod n_pe.
struct PePartition {
  std::size_t n_pe = 32;

  std::size_t pe_of(std::size_t row) const noexcept { return row % n_pe; }

  /// Number of rows PE `pe` owns out of `rows`.
  std::size_t local_rows(std::size_t pe, std::size_t rows) const noexcept {
    return pe < rows ? (rows - pe + n_pe - 1) / n_pe : 0;
  }

  void validate(std::size_t rows) const {
    if (n_pe == 0) throw ValidationError("n_pe must be >= 1");
    if (n_pe > rows) {
      throw ValidationError("n_pe (" + std::to_string(n_pe) + ") exceeds matrix rows (" + std::to_string(rows) + ")");
    }
  }
};

/// How pruning quotas are assigned.
enum class QuotaMode {
  kGlobal,  ///< plain magnitude pruning over the whole matrix
  kPerPe,   ///< equal-density quota per PE submatrix (load-balance-aware)
  kPerRow,  ///< equal-density quota per row
};

inline std::string to_string(QuotaMode m) {
  switch (m) {
    case QuotaMode::kGlobal: return "global";
    case QuotaMode::kPerPe: return "per_pe";
    case QuotaMode::kPerRow: return "per_row";
  }
  return "?";
}

inline QuotaMode quota_mode_from_string(const std::string& s) {
  if (s == "global") return QuotaMode::kGlobal;
  if (s == "per_pe") return QuotaMode::kPerPe;
  if (s == "per_row") return QuotaMode::kPerRow;
  throw ValidationError("unknown quota mode '" + s + "'");
}

struct PruneMask {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> kept;  ///< row-major, 1 = kept
  double target_density = 1.0;

  bool at(std::size_t r, std::size_t c) const noexcept { return kept[r * cols + c] != 0; }
  std::size_t nnz() const noexcept { return static_cast<std::size_t>(std::count(kept.begin(), kept.end(), 1)); }
  double density() const noexcept { return kept.empty() ? 0.0 : static_cast<double>(nnz()) / kept.size(); }

  static PruneMask all(std::size_t rows, std::size_t cols, bool value) {
    return {rows, cols, std::vector<std::uint8_t>(rows * cols, value ? 1 : 0), value ? 1.0 : 0.0};
  }

  friend bool operator==(const PruneMask&, const PruneMask&) = default;
};

/// round(x) with halves rounded up, the quota rounding rule.
inline std::size_t round_half_up(double x) { return static_cast<std::size_t>(std::floor(x + 0.5)); }

namespace detail {

inline void check_density(double density) {
  if (!(density > 0.0 && density <= 1.0)) {
    throw ValidationError("density must be in (0, 1], got " + std::to_string(density));
  }
}

/// Marks the k largest-|value| entries among `idx` in `kept`. Ties go to the
/// lower flat index, which makes the selection a strict total order.
inline void keep_top_k(std::span<const double> values, std::vector<std::size_t>& idx, std::size_t k,
                       std::vector<std::uint8_t>& kept) {
  k = std::min(k, idx.size());
  auto before = [&](std::size_t a, std::size_t b) {
    const double fa = std::fabs(values[a]);
    const double fb = std::fabs(values[b]);
    return fa > fb || (fa == fb && a < b);
  };
  if (k < idx.size()) std::nth_element(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(), before);
  for (std::size_t i = 0; i < k; ++i) kept[idx[i]] = 1;
}

}  // namespace detail

/// Keeps exactly round(density * rows * cols) entries of largest magnitude.
inline PruneMask prune_magnitude(const DenseMatrix& m, double density) {
  detail::check_density(density);
  PruneMask mask = PruneMask::all(m.rows(), m.cols(), false);
  mask.target_density = density;
  std::vector<std::size_t> idx(m.size());
  std::iota(idx.begin(), idx.end(), 0);
  detail::keep_top_k(m.values(), idx, round_half_up(density * static_cast<double>(m.size())), mask.kept);
  return mask;
}

/// Load-balance-aware pruning: every PE submatrix (or every row, with
/// QuotaMode::kPerRow) keeps round(density * its size) largest entries.
inline PruneMask prune_load_balanced(const DenseMatrix& m, double density, const PePartition& part,
                                     QuotaMode mode = QuotaMode::kPerPe) {
  detail::check_density(density);
  part.validate(m.rows());
  if (mode == QuotaMode::kGlobal) return prune_magnitude(m, density);
  PruneMask mask = PruneMask::all(m.rows(), m.cols(), false);
  mask.target_density = density;
  std::vector<std::size_t> idx;
  if (mode == QuotaMode::kPerRow) {
    for (std::size_t r = 0; r < m.rows(); ++r) {
      idx.resize(m.cols());
      std::iota(idx.begin(), idx.end(), r * m.cols());
      detail::keep_top_k(m.values(), idx, round_half_up(density * static_cast<double>(m.cols())), mask.kept);
    }
    return mask;
  }
  for (std::size_t pe = 0; pe < part.n_pe; ++pe) {
    idx.clear();
    for (std::size_t r = pe; r < m.rows(); r += part.n_pe) {
      for (std::size_t c = 0; c < m.cols(); ++c) idx.push_back(r * m.cols() + c);
    }
    detail::keep_top_k(m.values(), idx, round_half_up(density * static_cast<double>(idx.size())), mask.kept);
  }
  return mask;
}

inline DenseMatrix apply_mask(const DenseMatrix& m, const PruneMask& mask) {
  if (mask.rows != m.rows() || mask.cols != m.cols()) throw ShapeError("mask shape differs from matrix shape");
  DenseMatrix out = m;
  auto v = out.values();
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!mask.kept[i]) v[i] = 0.0;
  }
  return out;
}

struct LoadStats {
  std::vector<std::size_t> nnz_per_pe;
  double imbalance = 1.0;  ///< max / mean; 1.0 when perfectly balanced or empty
};

inline LoadStats load_stats(const PruneMask& mask, const PePartition& part) {
  part.validate(mask.rows);
  LoadStats s;
  s.nnz_per_pe.assign(part.n_pe, 0);
  for (std::size_t r = 0; r < mask.rows; ++r) {
    std::size_t n = 0;
    for (std::size_t c = 0; c < mask.cols; ++c) n += mask.kept[r * mask.cols + c];
    s.nnz_per_pe[part.pe_of(r)] += n;
  }
  const std::size_t total = std::accumulate(s.nnz_per_pe.begin(), s.nnz_per_pe.end(), std::size_t{0});
  const std::size_t mx = *std::max_element(s.nnz_per_pe.begin(), s.nnz_per_pe.end());
  if (total > 0) s.imbalance = static_cast<double>(mx) * static_cast<double>(part.n_pe) / static_cast<double>(total);
  return s;
}

/// Masks for every matrix of a model, plus how they were produced. The
/// iteration counter lets an external retrain loop re-import and prune again.
struct ModelMask {
  double density = 1.0;
  std::size_t n_pe = 32;
  QuotaMode mode = QuotaMode::kPerPe;
  int iteration = 0;
  std::vector<std::map<std::string, PruneMask>> layers;
  bool balanced = true;  ///< false: plain magnitude pruning, `mode` unused
};

inline ModelMask prune_model(const Model& model, double density, std::size_t n_pe, QuotaMode mode, int iteration = 0) {
  ModelMask mm{density, n_pe, mode, iteration, {}, true};
  for (const auto& p : model) {
    auto& out = mm.layers.emplace_back();
    LstmParams::for_each_matrix(p, [&](const std::string& name, const DenseMatrix& m) {
      out[name] = prune_load_balanced(m, density, PePartition{std::min(n_pe, m.rows())}, mode);
    });
  }
  return mm;
}

inline ModelMask prune_model_magnitude(const Model& model, double density, std::size_t n_pe, int iteration = 0) {
  ModelMask mm{density, n_pe, QuotaMode::kGlobal, iteration, {}, false};
  for (const auto& p : model) {
    auto& out = mm.layers.emplace_back();
    LstmParams::for_each_matrix(p, [&](const std::string& name, const DenseMatrix& m) {
      out[name] = prune_magnitude(m, density);
    });
  }
  return mm;
}

inline Model apply_model_mask(Model model, const ModelMask& mm) {
  if (mm.layers.size() != model.size()) throw ShapeError("mask layer count differs from model");
  for (std::size_t l = 0; l < model.size(); ++l) {
    LstmParams::for_each_matrix(model[l], [&](const std::string& name, DenseMatrix& m) {
      auto it = mm.layers[l].find(name);
      if (it == mm.layers[l].end()) throw ValidationError("mask lacks tensor " + name);
      m = apply_mask(m, it->second);
    });
  }
  return model;
}

inline void save_mask(const ModelMask& mm, const std::filesystem::path& manifest_path) {
  BlobWriter blob;
  json jl = json::array();
  for (const auto& layer : mm.layers) {
    json tensors = json::array();
    for (const auto& [name, mask] : layer) {
      std::vector<bool> bits(mask.kept.begin(), mask.kept.end());
      json rec = blob.add(name, {mask.rows, mask.cols}, "bool", pack_bits(bits));
      rec["target_density"] = mask.target_density;
      rec["nnz"] = mask.nnz();
      tensors.push_back(rec);
    }
    jl.push_back({{"tensors", tensors}});
  }
  json manifest = {{"format", "ese-mask"},   {"version", 1},         {"density", mm.density},
                   {"n_pe", mm.n_pe},        {"quota_mode", to_string(mm.mode)}, {"iteration", mm.iteration},
                   {"balanced", mm.balanced},    {"layers", jl}};
  write_container(manifest_path, manifest, blob.blob());
}

inline ModelMask load_mask(const std::filesystem::path& manifest_path) {
  if (!std::filesystem::exists(manifest_path)) throw IoError("no such mask: " + manifest_path.string());
  ContainerReader reader(manifest_path);
  const json& man = reader.manifest();
  if (man.value("format", "") != "ese-mask") throw ValidationError(manifest_path.string() + " is not an ese-mask");
  ModelMask mm;
  mm.density = man.at("density").get<double>();
  mm.n_pe = man.at("n_pe").get<std::size_t>();
  mm.mode = quota_mode_from_string(man.at("quota_mode").get<std::string>());
  mm.iteration = man.at("iteration").get<int>();
  mm.balanced = man.value("balanced", true);
  for (const auto& jl : man.at("layers")) {
    auto& layer = mm.layers.emplace_back();
    for (const auto& rec : jl.at("tensors")) {
      const auto dims = dims_of(rec);
      if (dims.size() != 2) throw ShapeError("mask tensor must be 2-D");
      auto bits = unpack_bits(reader.bytes(rec), dims[0] * dims[1]);
      PruneMask m{dims[0], dims[1], std::vector<std::uint8_t>(bits.begin(), bits.end()),
                  rec.value("target_density", mm.density)};
      layer[rec.at("name").get<std::string>()] = std::move(m);
    }
  }
  return mm;
}

}  // namespace ese
