// Copyright 2026 The cosgrad Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "cosgrad/codec.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "cosgrad/baselines.hpp"
#include "cosgrad/error.hpp"
#include "cosgrad/random.hpp"
#include "wire_float.hpp"

namespace cosgrad {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kHalfPi = std::numbers::pi / 2.0;

void check_bits(int bits) {
  if (bits < 1 || bits > 8) {
    throw Error(Errc::kInvalidArgument,
                "bits must be in [1, 8], got " + std::to_string(bits));
  }
}

double clamp_unit(double x) { return std::clamp(x, -1.0, 1.0); }

double clamp_bound(double b) { return std::clamp(b, 0.0, kHalfPi - kBoundEpsilon); }

// Position on the code grid, clamped to [0, 2^s].
double grid_position(double theta, double b, double range, int bits) {
  if (range < 1e-9) {
    throw Error(Errc::kDegenerateRange,
                "quantization range pi - 2b is below 1e-9");
  }
  const double levels = std::ldexp(1.0, bits);
  return std::clamp((theta - b) / range * levels, 0.0, levels);
}

}  // namespace

GradientVector::GradientVector(std::vector<double> values)
    : values_(std::move(values)) {
  long double sum = 0.0L;
  for (double v : values_) {
    if (!std::isfinite(v)) {
      throw Error(Errc::kInvalidArgument, "gradient contains NaN or Inf");
    }
    sum += static_cast<long double>(v) * v;
  }
  norm_ = static_cast<double>(std::sqrt(sum));
}

GradientVector GradientVector::from_floats(std::span<const float> values) {
  return GradientVector(std::vector<double>(values.begin(), values.end()));
}

bool is_valid_scheme(std::uint8_t raw) noexcept {
  return raw <= static_cast<std::uint8_t>(Scheme::kSignNorm);
}

const char* scheme_name(Scheme scheme) noexcept {
  switch (scheme) {
    case Scheme::kCosineBiased: return "cosine";
    case Scheme::kCosineUnbiased: return "cosine-unbiased";
    case Scheme::kLinearBiased: return "linear";
    case Scheme::kLinearUnbiased: return "linear-unbiased";
    case Scheme::kSign: return "sign";
    case Scheme::kSignNorm: return "sign-norm";
  }
  return "unknown";
}

void validate(const QuantizerConfig& config) {
  check_bits(config.bits);
  if (!(config.clip_fraction >= 0.0 && config.clip_fraction < 0.5)) {
    throw Error(Errc::kInvalidArgument, "clip_fraction must be in [0, 0.5)");
  }
}

AngleVector compute_angles(const GradientVector& g) {
  if (!(g.norm() > 0.0)) {
    throw Error(Errc::kZeroNorm, "cannot compute angles of a zero vector");
  }
  AngleVector out;
  out.angles.resize(g.size());
  const double norm = g.norm();
  for (std::size_t i = 0; i < g.size(); ++i) {
    out.angles[i] = std::acos(clamp_unit(g[i] / norm));
  }
  return out;
}

AngleBound compute_bound_auto(const AngleVector& theta, BoundFormula formula) {
  if (theta.angles.empty()) {
    throw Error(Errc::kEmpty, "angle vector is empty");
  }
  const auto [lo, hi] = std::minmax_element(theta.angles.begin(), theta.angles.end());
  const double upper = formula == BoundFormula::kSymmetric ? kPi - *hi : 1.0 - *hi;
  return AngleBound{clamp_bound(std::min(*lo, upper)), 0.0};
}

std::pair<AngleBound, AngleVector> compute_bound_clipped(const GradientVector& g,
                                                         double clip_fraction) {
  if (!(clip_fraction > 0.0 && clip_fraction < 0.5)) {
    throw Error(Errc::kInvalidArgument, "clip_fraction must be in (0, 0.5)");
  }
  AngleVector theta = compute_angles(g);

  std::vector<double> magnitudes(g.size());
  std::transform(g.values().begin(), g.values().end(), magnitudes.begin(),
                 [](double v) { return std::abs(v); });
  const auto n = static_cast<double>(g.size());
  // Guard against 0.99 * 100 landing on 99.000000000000014.
  auto rank = static_cast<std::size_t>(std::ceil((1.0 - clip_fraction) * n - 1e-9));
  rank = std::clamp<std::size_t>(rank, 1, g.size());
  auto nth = magnitudes.begin() + static_cast<std::ptrdiff_t>(rank - 1);
  std::nth_element(magnitudes.begin(), nth, magnitudes.end());
  const double b_g = *nth;

  AngleBound bound{clamp_bound(std::acos(std::min(b_g / g.norm(), 1.0))), clip_fraction};
  for (double& a : theta.angles) {
    a = std::clamp(a, bound.b_theta, kPi - bound.b_theta);
  }
  return {bound, std::move(theta)};
}

double angle_step(double b_theta, int bits) {
  return (kPi - 2.0 * b_theta) / std::ldexp(1.0, bits);
}

std::vector<std::uint8_t> quantize_biased(const AngleVector& theta,
                                          const AngleBound& bound, int bits) {
  check_bits(bits);
  const double range = kPi - 2.0 * bound.b_theta;
  const double top = std::ldexp(1.0, bits) - 1.0;
  std::vector<std::uint8_t> codes(theta.size());
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double v = grid_position(theta.angles[i], bound.b_theta, range, bits);
    codes[i] = static_cast<std::uint8_t>(std::min(std::round(v), top));
  }
  return codes;
}

std::vector<std::uint8_t> quantize_unbiased(const AngleVector& theta,
                                            const AngleBound& bound, int bits,
                                            std::uint64_t rng_seed) {
  check_bits(bits);
  const double range = kPi - 2.0 * bound.b_theta;
  const double top = std::ldexp(1.0, bits) - 1.0;
  Rng rng(rng_seed);
  std::vector<std::uint8_t> codes(theta.size());
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double v = grid_position(theta.angles[i], bound.b_theta, range, bits);
    const double lower = std::floor(v);
    const double p = v - lower;
    // Always draw so the stream position does not depend on the data.
    const double u = rng.uniform();
    const double code = u < p ? lower + 1.0 : lower;
    codes[i] = static_cast<std::uint8_t>(std::min(code, top));
  }
  return codes;
}

double one_bit_scale(double b_theta) {
  return std::cos(b_theta + (kPi - 2.0 * b_theta) / 4.0);
}

QuantizedGradient quantize_1bit(const GradientVector& g, const AngleBound& bound) {
  const AngleVector theta = compute_angles(g);
  QuantizedGradient q;
  q.bits = 1;
  q.bound = bound;
  q.norm = g.norm();
  q.scheme = Scheme::kSignNorm;
  q.codes.resize(theta.size());
  for (std::size_t i = 0; i < theta.size(); ++i) {
    q.codes[i] = theta.angles[i] <= kHalfPi ? 1 : 0;
  }
  return q;
}

QuantizedGradient quantize_cosine(const GradientVector& g,
                                  const QuantizerConfig& config) {
  validate(config);
  AngleBound bound;
  AngleVector theta;
  if (config.clip_fraction > 0.0) {
    std::tie(bound, theta) = compute_bound_clipped(g, config.clip_fraction);
  } else {
    theta = compute_angles(g);
    bound = compute_bound_auto(theta, config.bound_formula);
  }
  bound.b_theta = detail::float_floor(bound.b_theta);
  for (double& a : theta.angles) {
    a = std::clamp(a, bound.b_theta, kPi - bound.b_theta);
  }
  if (config.bits == 1) return quantize_1bit(g, bound);

  QuantizedGradient q;
  q.bits = config.bits;
  q.bound = bound;
  q.norm = g.norm();
  if (config.unbiased) {
    q.scheme = Scheme::kCosineUnbiased;
    q.codes = quantize_unbiased(theta, bound, config.bits, config.rng_seed);
  } else {
    q.scheme = Scheme::kCosineBiased;
    q.codes = quantize_biased(theta, bound, config.bits);
  }
  return q;
}

GradientVector dequantize(const QuantizedGradient& q) {
  switch (q.scheme) {
    case Scheme::kCosineBiased:
    case Scheme::kCosineUnbiased: {
      check_bits(q.bits);
      const double step = angle_step(q.bound.b_theta, q.bits);
      std::vector<double> values(q.codes.size());
      for (std::size_t i = 0; i < q.codes.size(); ++i) {
        values[i] = std::cos(q.codes[i] * step + q.bound.b_theta) * q.norm;
      }
      return GradientVector(std::move(values));
    }
    case Scheme::kLinearBiased:
    case Scheme::kLinearUnbiased:
      return GradientVector(decode_linear(q));
    case Scheme::kSign:
    case Scheme::kSignNorm:
      return GradientVector(decode_sign(q));
  }
  throw Error(Errc::kInvalidArgument, "unknown scheme");
}

double interval_error_bound(int k, double b_theta, int bits) {
  const double step = angle_step(b_theta, bits);
  return 2.0 * std::sin(b_theta + step * (k + 0.75)) * std::sin(step / 4.0);
}

double error_bound(double g_i, double norm, const AngleBound& bound, int bits) {
  check_bits(bits);
  if (!(norm > 0.0)) return 0.0;
  const double b = bound.b_theta;
  const double step = angle_step(b, bits);
  const int half = 1 << (bits - 1);

  double theta = std::clamp(std::acos(clamp_unit(g_i / norm)), b, kPi - b);
  if (theta > kHalfPi) {
    theta = kPi - theta;
    if (theta - b <= step / 2.0) {
      return (std::cos(b) - std::cos(b + step)) * norm;
    }
  }
  const int k = std::min(static_cast<int>(std::floor((theta - b) / step)), half - 1);
  return interval_error_bound(std::max(k, 0), b, bits) * norm;
}

IntervalCount count_better_intervals(int bits, const AngleBound& bound) {
  check_bits(bits);
  if (kPi - 2.0 * bound.b_theta < 1e-9) {
    throw Error(Errc::kDegenerateRange, "quantization range pi - 2b is below 1e-9");
  }
  const double linear = std::cos(bound.b_theta) / std::ldexp(1.0, bits);
  IntervalCount result;
  result.total = 1 << (bits - 1);
  for (int k = 0; k < result.total; ++k) {
    if (interval_error_bound(k, bound.b_theta, bits) < linear) ++result.count;
  }
  result.fraction = static_cast<double>(result.count) / result.total;
  return result;
}

}  // namespace cosgrad
