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
#include <span>
#include <vector>

#include "cosgrad/codec.hpp"

namespace cosgrad {

// ---------------------------------------------------------------------------
// Linear (uniform) quantization.

/// Maps [-b_g, b_g] affinely onto the 2^s levels {0, ..., 2^s - 1}, both
/// ends included. b_g is max |g_i|, or the magnitude quantile at rank
/// ceil((1 - clip_fraction) n) when clip_fraction > 0, in which case larger
/// entries saturate. Biased rounding is round-half-up; unbiased rounding is
/// the same stochastic rule as the cosine quantizer.
QuantizedGradient quantize_linear(const GradientVector& g, int bits, bool unbiased,
                                  std::uint64_t rng_seed, double clip_fraction = 0.0);

std::vector<double> decode_linear(const QuantizedGradient& q);

// ---------------------------------------------------------------------------
// Randomized Hadamard rotation.

class HadamardContext {
 public:
  HadamardContext(std::size_t dim, std::uint64_t sign_seed);

  std::size_t dim() const noexcept { return dim_; }
  std::size_t padded_dim() const noexcept { return signs_.size(); }
  std::uint64_t sign_seed() const noexcept { return sign_seed_; }
  std::span<const double> signs() const noexcept { return signs_; }

 private:
  std::size_t dim_;
  std::uint64_t sign_seed_;
  std::vector<double> signs_;
};

// Unnormalized in-place fast Walsh-Hadamard transform; size must be a power
// of two.
void fwht(std::span<double> data);

/// H * D * pad(g) / sqrt(P), where P is the padded dimension.
std::vector<double> hadamard_rotate(std::span<const double> g, const HadamardContext& ctx);

/// Inverse of hadamard_rotate, truncated back to ctx.dim() entries.
std::vector<double> hadamard_unrotate(std::span<const double> rotated,
                                      const HadamardContext& ctx);

// ---------------------------------------------------------------------------
// Sign compressors. sign(0) is +1.

/// Decodes to +-1 per entry.
QuantizedGradient sign_sgd(const GradientVector& g);

/// Decodes to +-||g|| / sqrt(n) per entry, so the decoded vector keeps the
/// norm of g. Encoded as the single-bit cosine quantizer whose bound puts the
/// representative point at exactly 1 / sqrt(n).
QuantizedGradient sign_sgd_norm(const GradientVector& g);

std::vector<double> decode_sign(const QuantizedGradient& q);

/// Compression residual carried between steps of EF-signSGD.
class ErrorFeedbackState {
 public:
  ErrorFeedbackState() = default;
  explicit ErrorFeedbackState(std::size_t dim) : residual_(dim, 0.0) {}

  std::span<const double> residual() const noexcept { return residual_; }
  std::size_t size() const noexcept { return residual_.size(); }

 private:
  friend QuantizedGradient ef_sign_step(const GradientVector&, ErrorFeedbackState&, double);
  std::vector<double> residual_;
};

/// One EF-signSGD step: p = lr * g + e, transmit (||p||_1 / n) * sign(p),
/// then e <- p - decoded. The scale is snapped to f32 first so the residual
/// matches what a receiver decodes.
QuantizedGradient ef_sign_step(const GradientVector& g, ErrorFeedbackState& state,
                               double lr);

// ---------------------------------------------------------------------------
// Random-mask sparsification.

class SparsificationMask {
 public:
  /// Draws round(kept_fraction * n) distinct positions with a seeded
  /// Fisher-Yates prefix shuffle; the result is sorted.
  static SparsificationMask generate(std::size_t n, double kept_fraction,
                                     std::uint64_t seed);

  std::span<const std::size_t> indices() const noexcept { return indices_; }
  std::size_t full_size() const noexcept { return full_size_; }
  double kept_fraction() const noexcept { return kept_fraction_; }
  std::uint64_t seed() const noexcept { return seed_; }
  MaskDescriptor descriptor() const noexcept { return {seed_, kept_fraction_}; }

 private:
  std::vector<std::size_t> indices_;
  std::size_t full_size_ = 0;
  double kept_fraction_ = 1.0;
  std::uint64_t seed_ = 0;
};

std::uint64_t mask_seed(std::uint64_t base_seed, std::uint64_t round, std::uint64_t client,
                        std::uint64_t layer);

std::vector<double> apply_mask(std::span<const double> g, const SparsificationMask& mask);

std::vector<double> expand_mask(std::span<const double> compacted,
                                const SparsificationMask& mask, std::size_t n);

}  // namespace cosgrad
