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
#include <initializer_list>

namespace cosgrad {

// splitmix64 finalizer; the building block for every derived seed.
std::uint64_t mix64(std::uint64_t x) noexcept;

// Order-sensitive combination of seed components, e.g.
// derive_seed({base, round, client, layer}).
std::uint64_t derive_seed(std::initializer_list<std::uint64_t> parts) noexcept;

/// xoshiro256** generator with hand-rolled distributions.
///
/// The standard library's distributions are implementation-defined, so all
/// sampling goes through this type to keep results bit-identical across
/// toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) noexcept;

  std::uint64_t next() noexcept;

  // Uniform in [0, 1) with 53 random bits.
  double uniform() noexcept;

  // Uniform integer in [0, bound); bound must be > 0. Lemire's method with
  // rejection, so the result is exactly unbiased.
  std::uint64_t below(std::uint64_t bound) noexcept;

  // Standard normal via Box-Muller; caches the second variate.
  double normal() noexcept;

 private:
  std::uint64_t s_[4];
  double cached_normal_ = 0.0;
  bool has_cached_ = false;
};

}  // namespace cosgrad
