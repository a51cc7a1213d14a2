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
#include <limits>
#include <string>
#include <vector>

#include "ese/error.hpp"
#include "ese/matrix.hpp"

namespace ese {

/// Signed two's-complement fixed point: `width_bits` total (sign included),
/// `frac_bits` of them fractional.
struct FixedFormat {
  int width_bits = 16;
  int frac_bits = 8;

  void validate() const {
    if (width_bits < 1 || width_bits > 32) throw ValidationError("fixed width must be in [1, 32]");
    if (frac_bits < 0 || frac_bits > width_bits - 1) throw ValidationError("frac bits must be in [0, width-1]");
  }

  std::int64_t min_int() const noexcept { return -(std::int64_t{1} << (width_bits - 1)); }
  std::int64_t max_int() const noexcept { return (std::int64_t{1} << (width_bits - 1)) - 1; }
  double lsb() const noexcept { return std::ldexp(1.0, -frac_bits); }
  double min_value() const noexcept { return std::ldexp(static_cast<double>(min_int()), -frac_bits); }
  double max_value() const noexcept { return std::ldexp(static_cast<double>(max_int()), -frac_bits); }
  int integer_bits() const noexcept { return width_bits - frac_bits; }

  std::int32_t saturate(std::int64_t v) const noexcept {
    return static_cast<std::int32_t>(std::clamp(v, min_int(), max_int()));
  }

  double to_real(std::int64_t q) const noexcept { return std::ldexp(static_cast<double>(q), -frac_bits); }

  friend bool operator==(const FixedFormat&, const FixedFormat&) = default;
};

/// Formats of the activation datapath.
inline constexpr FixedFormat kInputFormat{16, 11};
inline constexpr FixedFormat kIntermediateFormat{16, 8};
inline constexpr FixedFormat kActivationFormat{16, 15};  // Q1.15 LUT output

/// Bits of a packed sparse word spent on the relative row index.
inline constexpr int kIndexBits = 4;

/// Integer bits (sign included) needed to hold |v| <= max_abs:
/// 1 + max(0, ceil(log2(max_abs))).
inline int integer_bits_for(double max_abs) {
  if (!(max_abs > 0.0) || !std::isfinite(max_abs)) throw ValidationError("max_abs must be positive and finite");
  int exp = 0;
  const double mant = std::frexp(max_abs, &exp);  // max_abs = mant * 2^exp, mant in [0.5, 1)
  const int ceil_log2 = mant == 0.5 ? exp - 1 : exp;
  return 1 + std::max(0, ceil_log2);
}

/// Picks the fraction length for a tensor whose largest magnitude is
/// `max_abs`. Sparse matrices share their 16-bit word with a 4-bit index and
/// lose those bits from the fraction.
inline FixedFormat derive_format(double max_abs, int width, bool carries_index) {
  if (width < 2 || width > 32) throw ValidationError("width must be in [2, 32]");
  const int ib = integer_bits_for(max_abs);
  const int frac = width - (carries_index ? kIndexBits : 0) - ib;
  if (frac < 0) {
    throw OverflowError("range " + std::to_string(max_abs) + " needs " + std::to_string(ib) +
                        " integer bits, which does not fit a " + std::to_string(width) + "-bit" +
                        (carries_index ? " index-carrying" : "") + " word");
  }
  return {width, frac};
}

struct QuantizedTensor {
  std::vector<std::size_t> shape;  ///< {rows, cols} or {n}
  std::vector<std::int32_t> values;
  FixedFormat format;

  std::size_t rows() const noexcept { return shape.empty() ? 0 : shape[0]; }
  std::size_t cols() const noexcept { return shape.size() < 2 ? 1 : shape[1]; }
  std::int32_t at(std::size_t r, std::size_t c) const noexcept { return values[r * cols() + c]; }

  friend bool operator==(const QuantizedTensor&, const QuantizedTensor&) = default;
};

/// round(v * 2^frac), halves away from zero, saturated to the format.
inline std::int32_t quantize_value(double v, const FixedFormat& fmt) {
  const double scaled = std::round(std::ldexp(v, fmt.frac_bits));
  if (std::isnan(scaled)) throw NumericError("cannot quantize NaN");
  if (scaled <= static_cast<double>(fmt.min_int())) return static_cast<std::int32_t>(fmt.min_int());
  if (scaled >= static_cast<double>(fmt.max_int())) return static_cast<std::int32_t>(fmt.max_int());
  return static_cast<std::int32_t>(scaled);
}

inline QuantizedTensor quantize_tensor(std::span<const double> v, std::vector<std::size_t> shape,
                                       const FixedFormat& fmt) {
  fmt.validate();
  QuantizedTensor q{std::move(shape), {}, fmt};
  q.values.reserve(v.size());
  for (double x : v) q.values.push_back(quantize_value(x, fmt));
  return q;
}

inline QuantizedTensor quantize_tensor(const DenseMatrix& m, const FixedFormat& fmt) {
  return quantize_tensor(m.values(), {m.rows(), m.cols()}, fmt);
}

inline std::vector<double> dequantize(const QuantizedTensor& q) {
  std::vector<double> out;
  out.reserve(q.values.size());
  for (auto v : q.values) out.push_back(q.format.to_real(v));
  return out;
}

/// Arithmetic shift right by `shift` bits, rounding halves away from zero.
inline std::int64_t shift_round(std::int64_t v, int shift) noexcept {
  if (shift <= 0) return v;
  if (shift >= 63) return 0;
  const std::int64_t half = std::int64_t{1} << (shift - 1);
  return v >= 0 ? (v + half) >> shift : -((-v + half) >> shift);
}

/// Moves `v` (with `from_frac` fractional bits) into `to`, rounding halves
/// away from zero and saturating.
inline std::int32_t rescale(std::int64_t v, int from_frac, const FixedFormat& to) noexcept {
  const int shift = from_frac - to.frac_bits;
  if (shift >= 0) return to.saturate(shift_round(v, shift));
  if (v == 0) return 0;
  const int up = -shift;
  // Anything at or beyond 2^(62-up) would overflow the shift; it saturates anyway.
  const std::int64_t lim = up >= 62 ? 0 : (std::int64_t{1} << (62 - up));
  if (v >= lim) return static_cast<std::int32_t>(to.max_int());
  if (v <= -lim) return static_cast<std::int32_t>(to.min_int());
  return to.saturate(v * (std::int64_t{1} << up));
}

/// (min, max) over all elements.
inline std::pair<double, double> analyze_range(std::span<const double> v) {
  if (v.empty()) throw ValidationError("analyze_range on an empty tensor");
  auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  return {*lo, *hi};
}

inline std::pair<double, double> analyze_range(const DenseMatrix& m) { return analyze_range(m.values()); }

}  // namespace ese
