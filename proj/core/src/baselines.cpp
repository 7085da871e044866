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

#include "cosgrad/baselines.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

#include "cosgrad/error.hpp"
#include "cosgrad/random.hpp"
#include "wire_float.hpp"

namespace cosgrad {

namespace {

void check_bits(int bits) {
  if (bits < 1 || bits > 8) {
    throw Error(Errc::kInvalidArgument, "bits must be in [1, 8]");
  }
}

double magnitude_quantile(std::span<const double> values, double clip_fraction) {
  std::vector<double> mags(values.size());
  std::transform(values.begin(), values.end(), mags.begin(),
                 [](double v) { return std::abs(v); });
  if (clip_fraction <= 0.0) return *std::max_element(mags.begin(), mags.end());
  auto rank = static_cast<std::size_t>(
      std::ceil((1.0 - clip_fraction) * static_cast<double>(mags.size()) - 1e-9));
  rank = std::clamp<std::size_t>(rank, 1, mags.size());
  auto nth = mags.begin() + static_cast<std::ptrdiff_t>(rank - 1);
  std::nth_element(mags.begin(), nth, mags.end());
  return *nth;
}

}  // namespace

QuantizedGradient quantize_linear(const GradientVector& g, int bits, bool unbiased,
                                  std::uint64_t rng_seed, double clip_fraction) {
  check_bits(bits);
  if (!(g.norm() > 0.0)) throw Error(Errc::kZeroNorm, "linear quantizer on zero vector");
  if (!(clip_fraction >= 0.0 && clip_fraction < 0.5)) {
    throw Error(Errc::kInvalidArgument, "clip_fraction must be in [0, 0.5)");
  }
  double scale = detail::float_ceil(magnitude_quantile(g.values(), clip_fraction));
  if (!(scale > 0.0)) {
    // Quantile landed on a zero; fall back to the full range.
    scale = detail::float_ceil(magnitude_quantile(g.values(), 0.0));
  }

  const double top = std::ldexp(1.0, bits) - 1.0;
  QuantizedGradient q;
  q.bits = bits;
  q.norm = scale;
  q.scheme = unbiased ? Scheme::kLinearUnbiased : Scheme::kLinearBiased;
  q.codes.resize(g.size());
  Rng rng(rng_seed);
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double clipped = std::clamp(g[i], -scale, scale);
    const double v = std::clamp((clipped + scale) / (2.0 * scale) * top, 0.0, top);
    double code;
    if (unbiased) {
      const double lower = std::floor(v);
      code = rng.uniform() < v - lower ? lower + 1.0 : lower;
    } else {
      code = std::floor(v + 0.5);
    }
    q.codes[i] = static_cast<std::uint8_t>(std::min(code, top));
  }
  return q;
}

std::vector<double> decode_linear(const QuantizedGradient& q) {
  check_bits(q.bits);
  const double top = std::ldexp(1.0, q.bits) - 1.0;
  std::vector<double> out(q.codes.size());
  for (std::size_t i = 0; i < q.codes.size(); ++i) {
    out[i] = -q.norm + 2.0 * q.norm * q.codes[i] / top;
  }
  return out;
}

HadamardContext::HadamardContext(std::size_t dim, std::uint64_t sign_seed)
    : dim_(dim), sign_seed_(sign_seed) {
  const std::size_t padded = std::bit_ceil(std::max<std::size_t>(dim, 1));
  signs_.resize(padded);
  Rng rng(sign_seed);
  for (double& s : signs_) s = (rng.next() >> 63) ? -1.0 : 1.0;
}

void fwht(std::span<double> data) {
  const std::size_t n = data.size();
  if (!std::has_single_bit(n)) {
    throw Error(Errc::kInvalidArgument, "fwht size must be a power of two");
  }
  for (std::size_t len = 1; len < n; len <<= 1) {
    for (std::size_t i = 0; i < n; i += len << 1) {
      for (std::size_t j = i; j < i + len; ++j) {
        const double a = data[j];
        const double b = data[j + len];
        data[j] = a + b;
        data[j + len] = a - b;
      }
    }
  }
}

std::vector<double> hadamard_rotate(std::span<const double> g, const HadamardContext& ctx) {
  if (g.size() != ctx.dim()) throw Error(Errc::kDimMismatch, "hadamard input size");
  std::vector<double> out(ctx.padded_dim(), 0.0);
  for (std::size_t i = 0; i < g.size(); ++i) out[i] = g[i] * ctx.signs()[i];
  fwht(out);
  const double scale = 1.0 / std::sqrt(static_cast<double>(out.size()));
  for (double& v : out) v *= scale;
  return out;
}

std::vector<double> hadamard_unrotate(std::span<const double> rotated,
                                      const HadamardContext& ctx) {
  if (rotated.size() != ctx.padded_dim()) {
    throw Error(Errc::kDimMismatch, "hadamard rotated size");
  }
  std::vector<double> work(rotated.begin(), rotated.end());
  fwht(work);
  const double scale = 1.0 / std::sqrt(static_cast<double>(work.size()));
  std::vector<double> out(ctx.dim());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = work[i] * scale * ctx.signs()[i];
  return out;
}

QuantizedGradient sign_sgd(const GradientVector& g) {
  QuantizedGradient q;
  q.bits = 1;
  q.norm = 1.0;
  q.scheme = Scheme::kSign;
  q.codes.resize(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) q.codes[i] = g[i] >= 0.0 ? 1 : 0;
  return q;
}

QuantizedGradient sign_sgd_norm(const GradientVector& g) {
  QuantizedGradient q = sign_sgd(g);
  q.scheme = Scheme::kSignNorm;
  q.norm = g.norm();
  // a(b) = cos(b/2 + pi/4) = 1/sqrt(n)  =>  b = 2 acos(1/sqrt(n)) - pi/2.
  const double n = static_cast<double>(std::max<std::size_t>(g.size(), 1));
  q.bound.b_theta = 2.0 * std::acos(1.0 / std::sqrt(n)) - std::numbers::pi / 2.0;
  return q;
}

std::vector<double> decode_sign(const QuantizedGradient& q) {
  double magnitude = q.norm;
  if (q.scheme == Scheme::kSignNorm) magnitude *= one_bit_scale(q.bound.b_theta);
  std::vector<double> out(q.codes.size());
  for (std::size_t i = 0; i < q.codes.size(); ++i) {
    out[i] = q.codes[i] ? magnitude : -magnitude;
  }
  return out;
}

QuantizedGradient ef_sign_step(const GradientVector& g, ErrorFeedbackState& state,
                               double lr) {
  if (state.residual_.size() != g.size()) {
    throw Error(Errc::kDimMismatch, "error-feedback residual has " +
                                        std::to_string(state.residual_.size()) +
                                        " entries, gradient has " + std::to_string(g.size()));
  }
  const std::size_t n = g.size();
  std::vector<double> p(n);
  double l1 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    p[i] = lr * g[i] + state.residual_[i];
    l1 += std::abs(p[i]);
  }
  QuantizedGradient q;
  q.bits = 1;
  q.scheme = Scheme::kSign;
  q.norm = n == 0 ? 0.0 : static_cast<double>(static_cast<float>(l1 / static_cast<double>(n)));
  q.codes.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    q.codes[i] = p[i] >= 0.0 ? 1 : 0;
    const double decoded = q.codes[i] ? q.norm : -q.norm;
    state.residual_[i] = p[i] - decoded;
  }
  return q;
}

SparsificationMask SparsificationMask::generate(std::size_t n, double kept_fraction,
                                                std::uint64_t seed) {
  if (!(kept_fraction > 0.0 && kept_fraction <= 1.0)) {
    throw Error(Errc::kInvalidArgument, "kept_fraction must be in (0, 1]");
  }
  SparsificationMask mask;
  mask.full_size_ = n;
  mask.kept_fraction_ = kept_fraction;
  mask.seed_ = seed;
  const auto kept = static_cast<std::size_t>(
      std::llround(kept_fraction * static_cast<double>(n)));
  std::vector<std::size_t> pool(n);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  if (kept < n) {
    Rng rng(seed);
    for (std::size_t i = 0; i < kept; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
      std::swap(pool[i], pool[j]);
    }
    pool.resize(kept);
    std::sort(pool.begin(), pool.end());
  }
  mask.indices_ = std::move(pool);
  return mask;
}

std::uint64_t mask_seed(std::uint64_t base_seed, std::uint64_t round, std::uint64_t client,
                        std::uint64_t layer) {
  return derive_seed({round, client, layer, base_seed});
}

std::vector<double> apply_mask(std::span<const double> g, const SparsificationMask& mask) {
  if (g.size() != mask.full_size()) {
    throw Error(Errc::kDimMismatch, "mask was generated for a different length");
  }
  std::vector<double> out;
  out.reserve(mask.indices().size());
  for (std::size_t idx : mask.indices()) out.push_back(g[idx]);
  return out;
}

std::vector<double> expand_mask(std::span<const double> compacted,
                                const SparsificationMask& mask, std::size_t n) {
  if (n != mask.full_size() || compacted.size() != mask.indices().size()) {
    throw Error(Errc::kDimMismatch, "compacted vector does not match mask");
  }
  std::vector<double> out(n, 0.0);
  for (std::size_t i = 0; i < compacted.size(); ++i) out[mask.indices()[i]] = compacted[i];
  return out;
}

}  // namespace cosgrad
