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

// Wire layout, little-endian throughout:
//
//   offset size field
//   0      1    format version (kWireVersion)
//   1      1    scheme
//   2      1    bits s
//   3      4    n, number of codes (u32)
//   7      4    norm / scale (f32)
//   11     4    angle bound b_theta (f32)
//   15     8    mask seed (u64), zero when unmasked
//   23     4    kept fraction (f32), 1 when unmasked
//   27     ...  raw DEFLATE stream of the bit-packed codes, absent when n == 0
inline constexpr std::uint8_t kWireVersion = 1;
inline constexpr std::size_t kHeaderSize = 27;

/// Packs codes contiguously, least significant bit first within bytes.
std::vector<std::uint8_t> pack_bits(std::span<const std::uint8_t> codes, int bits);

std::vector<std::uint8_t> unpack_bits(std::span<const std::uint8_t> bytes, int bits,
                                      std::size_t n);

std::size_t packed_size(std::size_t n, int bits) noexcept;

/// Raw RFC 1951 stream, maximum compression.
std::vector<std::uint8_t> deflate(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> inflate(std::span<const std::uint8_t> stream);

struct InflateResult {
  std::vector<std::uint8_t> bytes;
  std::size_t consumed = 0;  // input bytes up to the end of the final block
};

/// Inflates one DEFLATE stream from the front of `stream`; trailing bytes
/// are left alone.
InflateResult inflate_prefix(std::span<const std::uint8_t> stream);

/// Order-0 Shannon entropy of the byte histogram, in bits per byte.
double byte_entropy(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> encode_packet(const QuantizedGradient& q);

struct DecodedPacket {
  QuantizedGradient gradient;
  std::size_t consumed = 0;
};

/// Decodes the packet at the front of `bytes`. Packets are self-delimiting,
/// so a concatenation can be walked with `consumed`.
DecodedPacket decode_packet(std::span<const std::uint8_t> bytes);

/// Uplink byte accounting for a simulation run.
class CostLedger {
 public:
  struct Entry {
    int round = 0;
    int client = 0;
    std::size_t bytes = 0;
    std::size_t float32_bytes = 0;
  };

  void record(int round, int client, std::size_t bytes, std::size_t float32_bytes);

  std::span<const Entry> entries() const noexcept { return entries_; }
  std::size_t round_bytes(int round) const noexcept;
  std::size_t total_bytes() const noexcept { return total_bytes_; }
  std::size_t total_float32_bytes() const noexcept { return total_float32_bytes_; }

  // float32 cost over actual cost; 0 when nothing was sent.
  double compression_ratio() const noexcept;

 private:
  std::vector<Entry> entries_;
  std::size_t total_bytes_ = 0;
  std::size_t total_float32_bytes_ = 0;
};

}  // namespace cosgrad
