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

#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "ese/error.hpp"
#include "ese/fixed_point.hpp"
#include "ese/lstm.hpp"

namespace ese {

enum class ActFn { kSigmoid, kTanh };

inline std::string to_string(ActFn f) { return f == ActFn::kSigmoid ? "sigmoid" : "tanh"; }

inline ActFn act_fn_from_string(const std::string& s) {
  if (s == "sigmoid") return ActFn::kSigmoid;
  if (s == "tanh") return ActFn::kTanh;
  throw ValidationError("unknown activation '" + s + "'");
}

inline double apply_act(ActFn f, double x) { return f == ActFn::kSigmoid ? sigmoid(x) : std::tanh(x); }

/// Sampled activation function with Q1.15 entries, evaluated by linear
/// interpolation between neighbouring samples.
struct ActLut {
  ActFn fn = ActFn::kSigmoid;
  double sample_min = -64.0;
  double sample_max = 64.0;
  std::vector<std::int32_t> entries;

  double step() const noexcept { return (sample_max - sample_min) / static_cast<double>(entries.size()); }
  double sample_x(std::size_t k) const noexcept { return sample_min + static_cast<double>(k) * step(); }
};

inline constexpr std::size_t kLutPoints = 2048;

/// Default sampling windows: sigmoid [-64, 64], tanh [-128, 128].
inline std::pair<double, double> default_lut_range(ActFn f) {
  return f == ActFn::kSigmoid ? std::pair{-64.0, 64.0} : std::pair{-128.0, 128.0};
}

inline ActLut build_lut(ActFn fn, double sample_min, double sample_max, std::size_t n_points = kLutPoints) {
  if (n_points < 2) throw ValidationError("a lookup table needs at least 2 points");
  if (!(sample_min < sample_max)) throw ValidationError("lookup table range is empty");
  ActLut lut{fn, sample_min, sample_max, {}};
  lut.entries.resize(n_points);
  const double step = (sample_max - sample_min) / static_cast<double>(n_points);
  const auto lim = kActivationFormat.max_int();
  for (std::size_t k = 0; k < n_points; ++k) {
    const auto q = quantize_value(apply_act(fn, sample_min + static_cast<double>(k) * step), kActivationFormat);
    lut.entries[k] = static_cast<std::int32_t>(std::clamp<std::int64_t>(q, -lim, lim));
  }
  return lut;
}

inline ActLut build_lut(ActFn fn) {
  auto [lo, hi] = default_lut_range(fn);
  return build_lut(fn, lo, hi);
}

namespace detail {

inline std::int32_t lut_interp(const ActLut& lut, double x) {
  const double pos = (x - lut.sample_min) / lut.step();
  if (!(pos >= 0.0)) return lut.entries.front();  // also catches NaN
  const double k = std::floor(pos);
  if (k >= static_cast<double>(lut.entries.size() - 1)) return lut.entries.back();
  const auto i = static_cast<std::size_t>(k);
  const double t = pos - k;
  const double e0 = lut.entries[i];
  const double e1 = lut.entries[i + 1];
  return static_cast<std::int32_t>(std::round(e0 + (e1 - e0) * t));
}

}  // namespace detail

/// Evaluates the table at a fixed-point input `raw * 2^-frac_bits`; the
/// result is Q1.15. Inputs below the window clamp to the first entry, inputs
/// past the last sample clamp to the last entry.
inline std::int32_t lut_eval(const ActLut& lut, std::int64_t raw, int frac_bits) {
  return detail::lut_interp(lut, std::ldexp(static_cast<double>(raw), -frac_bits));
}

/// Real-valued convenience overload (no input quantization).
inline std::int32_t lut_eval(const ActLut& lut, double x) { return detail::lut_interp(lut, x); }

/// CSV rows "index,x,entry" for inspection.
inline std::string lut_to_csv(const ActLut& lut) {
  std::ostringstream os;
  os.precision(17);
  os << "index,x,entry\n";
  for (std::size_t k = 0; k < lut.entries.size(); ++k) os << k << ',' << lut.sample_x(k) << ',' << lut.entries[k] << '\n';
  return os.str();
}

}  // namespace ese
