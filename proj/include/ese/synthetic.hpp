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

// Seeded stand-ins for trained weights. Values are Gaussian, then each
// quantization group is stretched so its extremes land on a reference range.

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "ese/lstm.hpp"
#include "ese/quantized_lstm.hpp"

namespace ese {

struct ValueRange {
  double min;
  double max;
};

/// Per-group weight ranges of the first layer of the reference speech model.
inline const std::map<std::string, ValueRange>& reference_ranges_layer1() {
  static const std::map<std::string, ValueRange> r = {
      {"W_gifo_x", {-4.9285, 5.7196}}, {"W_gifo_r", {-0.6909, 0.7140}}, {"bias", {-3.0143, 2.1120}},
      {"W_ic", {-0.6884, 0.9584}},     {"W_fc", {-0.6597, 0.7204}},     {"W_oc", {-1.5550, 1.3325}},
      {"W_ym", {-0.9373, 0.8676}},
  };
  return r;
}

/// Same for the second layer.
inline const std::map<std::string, ValueRange>& reference_ranges_layer2() {
  static const std::map<std::string, ValueRange> r = {
      {"W_gifo_x", {-1.0541, 1.0413}}, {"W_gifo_r", {-0.6313, 0.6400}}, {"bias", {-1.5833, 1.8009}},
      {"W_ic", {-0.9428, 0.5158}},     {"W_fc", {-0.5762, 0.6202}},     {"W_oc", {-1.0619, 1.4650}},
      {"W_ym", {-1.0947, 1.0170}},
  };
  return r;
}

/// The 1024-hidden, 512-projection layer over 153-dim speech features.
inline LayerConfig reference_config() { return {153, 1024, 512, true, true}; }

namespace detail {

inline std::vector<double*> group_slots(LstmParams& p, const QuantGroup& g) {
  std::vector<double*> out;
  for (const auto& name : g.members) {
    LstmParams::for_each_matrix(p, [&](const std::string& n, DenseMatrix& m) {
      if (n == name)
        for (std::size_t r = 0; r < m.rows(); ++r)
          for (std::size_t c = 0; c < m.cols(); ++c) out.push_back(&m(r, c));
    });
    LstmParams::for_each_vector(p, [&](const std::string& n, Vector& v) {
      if (n == name)
        for (auto& x : v) out.push_back(&x);
    });
  }
  return out;
}

/// Scales negatives onto [r.min, 0) and positives onto (0, r.max], pinning
/// the extremes exactly.
inline void stretch_to(std::vector<double*>& slots, const ValueRange& r) {
  double* lo = nullptr;
  double* hi = nullptr;
  for (double* s : slots) {
    if (!lo || *s < *lo) lo = s;
    if (!hi || *s > *hi) hi = s;
  }
  if (!lo) return;
  const double neg = *lo < 0 ? r.min / *lo : 0.0;
  const double pos = *hi > 0 ? r.max / *hi : 0.0;
  for (double* s : slots) *s *= (*s < 0 ? neg : pos);
  if (*lo < 0) *lo = r.min;
  if (*hi > 0) *hi = r.max;
}

}  // namespace detail

/// Gaussian layer. With `ranges`, every group named there is stretched onto
/// its range; otherwise values keep a 0.1 standard deviation.
inline LstmParams synthetic_layer(const LayerConfig& cfg, std::uint64_t seed,
                                  const std::map<std::string, ValueRange>* ranges = nullptr) {
  LstmParams p = LstmParams::zeros(cfg);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 0.1);
  LstmParams::for_each_matrix(p, [&](const std::string&, DenseMatrix& m) {
    for (std::size_t r = 0; r < m.rows(); ++r)
      for (std::size_t c = 0; c < m.cols(); ++c) m(r, c) = normal(rng);
  });
  LstmParams::for_each_vector(p, [&](const std::string&, Vector& v) {
    for (auto& x : v) x = normal(rng);
  });
  if (ranges) {
    for (const auto& g : quant_groups(cfg)) {
      auto it = ranges->find(g.name);
      if (it == ranges->end()) continue;
      auto slots = detail::group_slots(p, g);
      detail::stretch_to(slots, it->second);
    }
  }
  return p;
}

/// One reference-shaped layer carrying the first layer's value ranges.
inline LstmParams reference_layer(std::uint64_t seed) {
  return synthetic_layer(reference_config(), seed, &reference_ranges_layer1());
}

}  // namespace ese
