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

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace cosgrad {

/// A flat per-layer gradient with its cached L2 norm.
///
/// Construction rejects NaN and infinite entries. A zero vector is a valid
/// GradientVector; it is the angle transform that refuses it.
class GradientVector {
 public:
  GradientVector() = default;
  explicit GradientVector(std::vector<double> values);

  static GradientVector from_floats(std::span<const float> values);

  std::span<const double> values() const noexcept { return values_; }
  double operator[](std::size_t i) const noexcept { return values_[i]; }
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }
  double norm() const noexcept { return norm_; }

  std::vector<double> release() && { return std::move(values_); }

 private:
  std::vector<double> values_;
  double norm_ = 0.0;
};

/// Per-coordinate angles to the standard axes, each in [0, pi].
struct AngleVector {
  std::vector<double> angles;

  std::size_t size() const noexcept { return angles.size(); }
};

/// Lower edge of the quantization range [b, pi - b].
struct AngleBound {
  double b_theta = 0.0;
  // Fraction of largest-magnitude entries that were clipped; 0 means the
  // bound was computed from the data directly.
  double clip_fraction = 0.0;
};

enum class Scheme : std::uint8_t {
  kCosineBiased = 0,
  kCosineUnbiased = 1,
  kLinearBiased = 2,
  kLinearUnbiased = 3,
  kSign = 4,
  kSignNorm = 5,
};

bool is_valid_scheme(std::uint8_t raw) noexcept;
const char* scheme_name(Scheme scheme) noexcept;

/// Regenerable random-mask descriptor; indices are never transmitted.
struct MaskDescriptor {
  std::uint64_t seed = 0;
  double kept_fraction = 1.0;

  bool operator==(const MaskDescriptor&) const = default;
};

/// The decodable unit produced by every quantizer in the library.
///
/// Field meaning depends on the scheme:
///  - cosine schemes: `norm` is ||g||_2 and `bound` the angle bound.
///  - linear schemes: `norm` carries the clipping scale b_g; `bound` is 0.
///  - Sign: `norm` carries the per-entry magnitude (1 for plain signSGD).
///  - SignNorm: entries decode to +-a(b)*norm with a(b) = cos(b + (pi-2b)/4).
struct QuantizedGradient {
  std::vector<std::uint8_t> codes;
  int bits = 8;
  AngleBound bound;
  double norm = 0.0;
  Scheme scheme = Scheme::kCosineBiased;
  std::optional<MaskDescriptor> mask;
};

enum class BoundFormula {
  kSymmetric,  // min(min(theta), pi - max(theta))
  kLiteral,    // min(min(theta), 1 - max(theta)), kept for comparison only
};

struct QuantizerConfig {
  int bits = 8;
  bool unbiased = false;
  double clip_fraction = 0.0;
  std::uint64_t rng_seed = 0;
  BoundFormula bound_formula = BoundFormula::kSymmetric;
};

void validate(const QuantizerConfig& config);

// Floor on pi/2 - b_theta so the range [b, pi - b] never collapses.
inline constexpr double kBoundEpsilon = 1e-6;

AngleVector compute_angles(const GradientVector& g);

AngleBound compute_bound_auto(const AngleVector& theta,
                              BoundFormula formula = BoundFormula::kSymmetric);

/// Bound from the magnitude quantile at rank ceil((1 - clip_fraction) * n).
/// Returns the bound and the angles clamped into [b, pi - b]; the norm used
/// for the angles is the one of the original, unclipped vector.
std::pair<AngleBound, AngleVector> compute_bound_clipped(const GradientVector& g,
                                                         double clip_fraction);

// Width of one angle interval, (pi - 2b) / 2^s.
double angle_step(double b_theta, int bits);

std::vector<std::uint8_t> quantize_biased(const AngleVector& theta,
                                          const AngleBound& bound, int bits);

std::vector<std::uint8_t> quantize_unbiased(const AngleVector& theta,
                                            const AngleBound& bound, int bits,
                                            std::uint64_t rng_seed);

/// Full cosine pipeline on one layer: angles, bound (automatic or clipped),
/// then biased or unbiased s-bit codes. bits == 1 routes to quantize_1bit.
QuantizedGradient quantize_cosine(const GradientVector& g,
                                  const QuantizerConfig& config);

/// Single-bit cosine quantizer. Reconstructs at interval centers, so every
/// entry decodes to +-cos(b + (pi - 2b)/4) * ||g||.
QuantizedGradient quantize_1bit(const GradientVector& g, const AngleBound& bound);

// Representative magnitude factor a(b) of the single-bit quantizer.
double one_bit_scale(double b_theta);

/// Decodes any scheme back to a dense vector. For cosine schemes
/// value_i = cos(code_i * q + b) * norm. Masked gradients decode to the
/// compacted vector; expansion is the caller's job.
GradientVector dequantize(const QuantizedGradient& q);

/// Worst-case |g_i - Q(g_i)| of the biased cosine quantizer for interval k
/// of the [b, pi/2) half, at unit norm:
/// cos(b + (k + 1/2) q) - cos(b + (k + 1) q) = 2 sin(b + q (k + 3/4)) sin(q/4).
double interval_error_bound(int k, double b_theta, int bits);

/// Per-entry bound for the biased cosine quantizer with left-edge
/// reconstruction. Mirrored for angles above pi/2. Entries within half an
/// interval of pi - b round to the clamped top code and get the widened
/// bound cos(b) - cos(b + q). Angles outside [b, pi - b] are measured after
/// clamping.
double error_bound(double g_i, double norm, const AngleBound& bound, int bits);

struct IntervalCount {
  int count = 0;
  int total = 0;
  double fraction = 0.0;
};

/// Number of [b, pi/2) intervals whose bound beats the linear quantizer's
/// cos(b) / 2^s.
IntervalCount count_better_intervals(int bits, const AngleBound& bound);

}  // namespace cosgrad
