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

// Relative-index compressed sparse column format. Rows are interleaved over
// PEs (row r -> PE r mod n_pe); each PE stores its share of every column as a
// stream of 16-bit words:
//
//   bit 15..4  weight, 12-bit two's complement
//   bit  3..0  number of local rows skipped since the previous word
//
// The first word of a column counts from local row 0. A gap of 16 or more is
// bridged by padding words (weight 0, index 15), each advancing 16 rows.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "ese/container.hpp"
#include "ese/fixed_point.hpp"
#include "ese/prune.hpp"
#include "ese/quantized_lstm.hpp"

namespace ese {

inline constexpr int kWeightBits = 12;
inline constexpr std::uint32_t kMaxRelIndex = (1u << kIndexBits) - 1;  // 15

inline std::uint16_t pack_word(std::int32_t weight, std::uint32_t rel_index) {
  return static_cast<std::uint16_t>(((static_cast<std::uint32_t>(weight) & 0xFFFu) << kIndexBits) |
                                    (rel_index & kMaxRelIndex));
}

inline std::int32_t word_weight(std::uint16_t w) { return static_cast<std::int16_t>(w) >> kIndexBits; }
inline std::uint32_t word_index(std::uint16_t w) { return w & kMaxRelIndex; }

struct PeStream {
  std::size_t local_rows = 0;
  std::vector<std::uint32_t> col_ptr;  ///< cols + 1 offsets into `words`
  std::vector<std::uint16_t> words;

  std::size_t column_words(std::size_t j) const noexcept { return col_ptr[j + 1] - col_ptr[j]; }

  friend bool operator==(const PeStream&, const PeStream&) = default;
};

struct EncodedSparseMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t n_pe = 1;
  FixedFormat weight_format{kWeightBits, 0};
  std::size_t real_nnz = 0;  ///< kept entries, padding excluded
  std::vector<PeStream> pes;

  std::size_t total_words() const noexcept {
    return std::accumulate(pes.begin(), pes.end(), std::size_t{0},
                           [](std::size_t s, const PeStream& p) { return s + p.words.size(); });
  }

  friend bool operator==(const EncodedSparseMatrix&, const EncodedSparseMatrix&) = default;
};

struct PadStats {
  std::size_t real_nnz = 0;
  std::size_t padding_words = 0;

  double overhead() const noexcept {
    return real_nnz == 0 ? 0.0 : static_cast<double>(padding_words) / static_cast<double>(real_nnz);
  }
};

/// Encodes the kept entries of `q` (entries with a false mask bit are
/// dropped, kept zeros are stored).
inline std::pair<EncodedSparseMatrix, PadStats> encode_csc(const QuantizedTensor& q, const PruneMask& mask,
                                                           std::size_t n_pe) {
  if (q.shape.size() != 2) throw ShapeError("encode_csc needs a 2-D tensor");
  if (mask.rows != q.rows() || mask.cols != q.cols()) throw ShapeError("mask shape differs from tensor shape");
  // An index-carrying format's width counts the index bits, so up to 16 fits.
  if (q.format.width_bits > kWeightBits + kIndexBits) {
    throw ValidationError("weights are " + std::to_string(q.format.width_bits) + "-bit; the packed word holds " +
                          std::to_string(kWeightBits + kIndexBits));
  }
  PePartition part{n_pe};
  part.validate(q.rows());

  EncodedSparseMatrix e{q.rows(), q.cols(), n_pe, q.format, 0, std::vector<PeStream>(n_pe)};
  PadStats stats;
  constexpr std::int32_t lo = -(1 << (kWeightBits - 1));
  constexpr std::int32_t hi = (1 << (kWeightBits - 1)) - 1;
  for (std::size_t pe = 0; pe < n_pe; ++pe) {
    auto& s = e.pes[pe];
    s.local_rows = part.local_rows(pe, q.rows());
    s.col_ptr.reserve(q.cols() + 1);
    s.col_ptr.push_back(0);
    for (std::size_t j = 0; j < q.cols(); ++j) {
      std::size_t next = 0;  // first local row not yet covered
      for (std::size_t lr = 0; lr < s.local_rows; ++lr) {
        const std::size_t r = pe + lr * n_pe;
        if (!mask.at(r, j)) continue;
        const std::int32_t w = q.at(r, j);
        if (w < lo || w > hi) {
          throw OverflowError("weight " + std::to_string(w) + " at (" + std::to_string(r) + ", " + std::to_string(j) +
                              ") does not fit 12 bits");
        }
        std::size_t gap = lr - next;
        while (gap > kMaxRelIndex) {
          s.words.push_back(pack_word(0, kMaxRelIndex));
          ++stats.padding_words;
          gap -= kMaxRelIndex + 1;
        }
        s.words.push_back(pack_word(w, static_cast<std::uint32_t>(gap)));
        ++stats.real_nnz;
        next = lr + 1;
      }
      s.col_ptr.push_back(static_cast<std::uint32_t>(s.words.size()));
    }
  }
  e.real_nnz = stats.real_nnz;
  return {std::move(e), stats};
}

/// Structural checks shared by decode and the simulator.
inline void validate_encoded(const EncodedSparseMatrix& e) {
  if (e.n_pe == 0 || e.pes.size() != e.n_pe) throw CorruptionError("PE stream count differs from n_pe");
  PePartition part{e.n_pe};
  for (std::size_t pe = 0; pe < e.n_pe; ++pe) {
    const auto& s = e.pes[pe];
    const std::string where = "PE " + std::to_string(pe);
    if (s.local_rows != part.local_rows(pe, e.rows)) throw CorruptionError(where + ": wrong local row count");
    if (s.col_ptr.size() != e.cols + 1) throw CorruptionError(where + ": col_ptr must have cols + 1 entries");
    if (s.col_ptr.front() != 0) throw CorruptionError(where + ": col_ptr must start at 0");
    for (std::size_t j = 0; j < e.cols; ++j) {
      if (s.col_ptr[j + 1] < s.col_ptr[j]) {
        throw CorruptionError(where + ": col_ptr decreases at column " + std::to_string(j));
      }
    }
    if (s.col_ptr.back() != s.words.size()) throw CorruptionError(where + ": col_ptr end disagrees with word count");
  }
}

inline QuantizedTensor decode_csc(const EncodedSparseMatrix& e) {
  validate_encoded(e);
  QuantizedTensor q{{e.rows, e.cols}, std::vector<std::int32_t>(e.rows * e.cols, 0), e.weight_format};
  for (std::size_t pe = 0; pe < e.n_pe; ++pe) {
    const auto& s = e.pes[pe];
    for (std::size_t j = 0; j < e.cols; ++j) {
      std::size_t next = 0;
      for (std::size_t k = s.col_ptr[j]; k < s.col_ptr[j + 1]; ++k) {
        const std::size_t lr = next + word_index(s.words[k]);
        if (lr >= s.local_rows) {
          throw CorruptionError("PE " + std::to_string(pe) + " column " + std::to_string(j) +
                                ": accumulated index " + std::to_string(lr) + " exceeds local rows " +
                                std::to_string(s.local_rows));
        }
        if (const auto w = word_weight(s.words[k]); w != 0) q.values[(pe + lr * e.n_pe) * e.cols + j] = w;
        next = lr + 1;
      }
    }
  }
  return q;
}

/// Bytes of the packed weight+index words (2 per word, padding included).
inline std::size_t compressed_size_bytes(const EncodedSparseMatrix& e) { return 2 * e.total_words(); }

/// Bytes of the column pointers, reported separately.
inline std::size_t pointer_size_bytes(const EncodedSparseMatrix& e) { return 4 * e.n_pe * (e.cols + 1); }

inline PadStats pad_stats(const EncodedSparseMatrix& e) { return {e.real_nnz, e.total_words() - e.real_nnz}; }

/// Text rendering: per PE, the column pointers, weights and relative indices.
inline std::string dump_csc(const EncodedSparseMatrix& e) {
  std::ostringstream os;
  os << "matrix " << e.rows << "x" << e.cols << ", " << e.n_pe << " PEs, weight Q" << e.weight_format.integer_bits()
     << "." << e.weight_format.frac_bits << ", " << e.real_nnz << " nonzeros, " << e.total_words() << " words\n";
  for (std::size_t pe = 0; pe < e.n_pe; ++pe) {
    const auto& s = e.pes[pe];
    os << "PE" << pe << " (rows " << pe << ", " << pe + e.n_pe << ", ...; " << s.local_rows << " local)\n";
    os << "  Column Pointer:     ";
    for (auto p : s.col_ptr) os << ' ' << p;
    os << "\n  Weight:             ";
    for (auto w : s.words) os << ' ' << word_weight(w);
    os << "\n  Relative Row Index: ";
    for (auto w : s.words) os << ' ' << word_index(w);
    os << '\n';
  }
  return os.str();
}

/// All encoded matrices of one layer, plus what the simulator needs to size
/// the element-wise work.
struct EncodedLayer {
  LayerConfig config;
  QuantizationPlan plan;
  std::map<std::string, EncodedSparseMatrix> matrices;
};

using EncodedModel = std::vector<EncodedLayer>;

/// Mask derived from nonzero codes, for encoding a quantized model that has
/// no explicit mask.
inline PruneMask nonzero_mask(const QuantizedTensor& q) {
  PruneMask m = PruneMask::all(q.rows(), q.cols(), false);
  for (std::size_t i = 0; i < q.values.size(); ++i) m.kept[i] = q.values[i] != 0;
  m.target_density = m.density();
  return m;
}

inline EncodedModel encode_model(std::span<const QuantizedLayer> layers, const ModelMask* mask, std::size_t n_pe) {
  if (mask && mask->layers.size() != layers.size()) throw ShapeError("mask layer count differs from model");
  EncodedModel out;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& q = layers[l];
    EncodedLayer el{q.config, q.plan, {}};
    for (const auto& shape : matrix_shapes(q.config)) {
      const auto& name = shape.name;
      const auto& t = q.at(name);
      PruneMask m;
      if (mask) {
        auto it = mask->layers[l].find(name);
        if (it == mask->layers[l].end()) throw ValidationError("mask lacks tensor " + name);
        m = it->second;
      } else {
        m = nonzero_mask(t);
      }
      el.matrices[name] = encode_csc(t, m, std::min(n_pe, t.rows())).first;
    }
    out.push_back(std::move(el));
  }
  return out;
}

inline void save_encoded(const EncodedModel& model, const std::filesystem::path& manifest_path) {
  BlobWriter blob;
  json jl = json::array();
  for (const auto& layer : model) {
    json tensors = json::array();
    json matrices = json::array();
    for (const auto& [name, e] : layer.matrices) {
      matrices.push_back({{"name", name},
                          {"rows", e.rows},
                          {"cols", e.cols},
                          {"n_pe", e.n_pe},
                          {"width", e.weight_format.width_bits},
                          {"frac", e.weight_format.frac_bits},
                          {"real_nnz", e.real_nnz},
                          {"words", e.total_words()}});
      for (std::size_t pe = 0; pe < e.n_pe; ++pe) {
        const auto& s = e.pes[pe];
        const std::string base = name + "/pe" + std::to_string(pe);
        tensors.push_back(blob.add(base + "/col_ptr", {s.col_ptr.size()}, "u32", encode_le<std::uint32_t>(s.col_ptr)));
        tensors.push_back(blob.add(base + "/words", {s.words.size()}, "u16", encode_le<std::uint16_t>(s.words)));
      }
    }
    json formats = json::object();
    for (const auto& [name, tf] : layer.plan.tensors) {
      formats[name] = {{"width", tf.format.width_bits}, {"frac", tf.format.frac_bits},
                       {"carries_index", tf.carries_index}};
    }
    jl.push_back({{"config", config_to_json(layer.config)},
                  {"input_format", format_to_json(layer.plan.input)},
                  {"intermediate_format", format_to_json(layer.plan.intermediate)},
                  {"formats", formats},
                  {"matrices", matrices},
                  {"tensors", tensors}});
  }
  write_container(manifest_path, {{"format", "ese-encoded"}, {"version", 1}, {"layers", jl}}, blob.blob());
}

inline EncodedModel load_encoded(const std::filesystem::path& manifest_path) {
  if (!std::filesystem::exists(manifest_path)) throw IoError("no such encoded model: " + manifest_path.string());
  ContainerReader reader(manifest_path);
  const json& man = reader.manifest();
  if (man.value("format", "") != "ese-encoded") {
    throw ValidationError(manifest_path.string() + " is not an ese-encoded model");
  }
  EncodedModel out;
  for (const auto& jl : man.at("layers")) {
    EncodedLayer el;
    el.config = config_from_json(jl.at("config"));
    el.plan.input = format_from_json(jl.at("input_format"));
    el.plan.intermediate = format_from_json(jl.at("intermediate_format"));
    for (const auto& [name, f] : jl.at("formats").items()) {
      el.plan.tensors[name] = {format_from_json(f), f.at("carries_index").get<bool>()};
    }
    const auto idx = detail::index_tensors(jl);
    for (const auto& jm : jl.at("matrices")) {
      EncodedSparseMatrix e;
      const auto name = jm.at("name").get<std::string>();
      e.rows = jm.at("rows").get<std::size_t>();
      e.cols = jm.at("cols").get<std::size_t>();
      e.n_pe = jm.at("n_pe").get<std::size_t>();
      e.weight_format = format_from_json(jm);
      e.real_nnz = jm.at("real_nnz").get<std::size_t>();
      PePartition part{e.n_pe};
      for (std::size_t pe = 0; pe < e.n_pe; ++pe) {
        const std::string base = name + "/pe" + std::to_string(pe);
        PeStream s;
        s.local_rows = part.local_rows(pe, e.rows);
        s.col_ptr = decode_le<std::uint32_t>(reader.bytes(detail::find_tensor(idx, base + "/col_ptr")));
        s.words = decode_le<std::uint16_t>(reader.bytes(detail::find_tensor(idx, base + "/words")));
        e.pes.push_back(std::move(s));
      }
      validate_encoded(e);
      el.matrices[name] = std::move(e);
    }
    out.push_back(std::move(el));
  }
  return out;
}

}  // namespace ese
