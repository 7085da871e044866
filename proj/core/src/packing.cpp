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

#include "cosgrad/packing.hpp"

#include <zlib.h>

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <string>

#include "cosgrad/error.hpp"

namespace cosgrad {

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f32(std::vector<std::uint8_t>& out, double v) {
  put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> in, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[at + i]) << (8 * i);
  return v;
}

std::uint64_t get_u64(std::span<const std::uint8_t> in, std::size_t at) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(in[at + i]) << (8 * i);
  return v;
}

double get_f32(std::span<const std::uint8_t> in, std::size_t at) {
  return std::bit_cast<float>(get_u32(in, at));
}

void check_bits(int bits) {
  if (bits < 1 || bits > 8) throw Error(Errc::kInvalidArgument, "bits must be in [1, 8]");
}

}  // namespace

std::size_t packed_size(std::size_t n, int bits) noexcept {
  return (n * static_cast<std::size_t>(bits) + 7) / 8;
}

std::vector<std::uint8_t> pack_bits(std::span<const std::uint8_t> codes, int bits) {
  check_bits(bits);
  std::vector<std::uint8_t> out(packed_size(codes.size(), bits), 0);
  const unsigned limit = 1u << bits;
  std::size_t pos = 0;
  for (std::uint8_t code : codes) {
    if (code >= limit) {
      throw Error(Errc::kCodeOverflow, "code " + std::to_string(code) + " does not fit in " +
                                           std::to_string(bits) + " bits");
    }
    // A code spans at most two bytes since bits <= 8.
    const unsigned shifted = static_cast<unsigned>(code) << (pos % 8);
    out[pos / 8] |= static_cast<std::uint8_t>(shifted);
    if ((pos % 8) + bits > 8) out[pos / 8 + 1] |= static_cast<std::uint8_t>(shifted >> 8);
    pos += bits;
  }
  return out;
}

std::vector<std::uint8_t> unpack_bits(std::span<const std::uint8_t> bytes, int bits,
                                      std::size_t n) {
  check_bits(bits);
  if (bytes.size() < packed_size(n, bits)) {
    throw Error(Errc::kTruncated, "packed buffer too short");
  }
  std::vector<std::uint8_t> codes(n);
  const unsigned mask = (1u << bits) - 1;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < n; ++i) {
    unsigned word = bytes[pos / 8];
    if ((pos % 8) + bits > 8) word |= static_cast<unsigned>(bytes[pos / 8 + 1]) << 8;
    codes[i] = static_cast<std::uint8_t>((word >> (pos % 8)) & mask);
    pos += bits;
  }
  return codes;
}

std::vector<std::uint8_t> deflate(std::span<const std::uint8_t> bytes) {
  z_stream zs{};
  if (deflateInit2(&zs, Z_BEST_COMPRESSION, Z_DEFLATED, -15, 9, Z_DEFAULT_STRATEGY) != Z_OK) {
    throw Error(Errc::kIo, "deflateInit2 failed");
  }
  std::vector<std::uint8_t> out(deflateBound(&zs, static_cast<uLong>(bytes.size())));
  zs.next_in = const_cast<Bytef*>(bytes.data());
  zs.avail_in = static_cast<uInt>(bytes.size());
  zs.next_out = out.data();
  zs.avail_out = static_cast<uInt>(out.size());
  const int rc = ::deflate(&zs, Z_FINISH);
  const std::size_t produced = zs.total_out;
  deflateEnd(&zs);
  if (rc != Z_STREAM_END) throw Error(Errc::kIo, "deflate did not finish");
  out.resize(produced);
  return out;
}

InflateResult inflate_prefix(std::span<const std::uint8_t> stream) {
  z_stream zs{};
  if (inflateInit2(&zs, -15) != Z_OK) throw Error(Errc::kIo, "inflateInit2 failed");
  zs.next_in = const_cast<Bytef*>(stream.data());
  zs.avail_in = static_cast<uInt>(stream.size());

  InflateResult result;
  std::array<std::uint8_t, 16384> chunk{};
  int rc = Z_OK;
  while (rc != Z_STREAM_END) {
    zs.next_out = chunk.data();
    zs.avail_out = static_cast<uInt>(chunk.size());
    rc = ::inflate(&zs, Z_NO_FLUSH);
    if (rc != Z_OK && rc != Z_STREAM_END) {
      inflateEnd(&zs);
      throw Error(Errc::kCorruptStream, zs.msg ? zs.msg : "invalid deflate stream");
    }
    const std::size_t have = chunk.size() - zs.avail_out;
    result.bytes.insert(result.bytes.end(), chunk.begin(), chunk.begin() + have);
    if (rc == Z_OK && have == 0 && zs.avail_in == 0) {
      inflateEnd(&zs);
      throw Error(Errc::kCorruptStream, "deflate stream ends before its final block");
    }
  }
  result.consumed = zs.total_in;
  inflateEnd(&zs);
  return result;
}

std::vector<std::uint8_t> inflate(std::span<const std::uint8_t> stream) {
  return inflate_prefix(stream).bytes;
}

double byte_entropy(std::span<const std::uint8_t> bytes) {
  if (bytes.empty()) throw Error(Errc::kEmpty, "entropy of an empty buffer");
  std::array<std::size_t, 256> histogram{};
  for (std::uint8_t b : bytes) ++histogram[b];
  const auto total = static_cast<double>(bytes.size());
  double h = 0.0;
  for (std::size_t count : histogram) {
    if (count == 0) continue;
    const double p = static_cast<double>(count) / total;
    h -= p * std::log2(p);
  }
  return h;
}

std::vector<std::uint8_t> encode_packet(const QuantizedGradient& q) {
  check_bits(q.bits);
  if (q.codes.size() > 0xffffffffULL) throw Error(Errc::kInvalidArgument, "too many codes");
  std::vector<std::uint8_t> out;
  out.reserve(kHeaderSize + q.codes.size());
  out.push_back(kWireVersion);
  out.push_back(static_cast<std::uint8_t>(q.scheme));
  out.push_back(static_cast<std::uint8_t>(q.bits));
  put_u32(out, static_cast<std::uint32_t>(q.codes.size()));
  put_f32(out, q.norm);
  put_f32(out, q.bound.b_theta);
  put_u64(out, q.mask ? q.mask->seed : 0);
  put_f32(out, q.mask ? q.mask->kept_fraction : 1.0);
  if (!q.codes.empty()) {
    const auto payload = deflate(pack_bits(q.codes, q.bits));
    out.insert(out.end(), payload.begin(), payload.end());
  }
  return out;
}

DecodedPacket decode_packet(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kHeaderSize) throw Error(Errc::kCorruptStream, "packet shorter than header");
  if (bytes[0] != kWireVersion) {
    throw Error(Errc::kVersionMismatch, "packet version " + std::to_string(bytes[0]) +
                                            ", expected " + std::to_string(kWireVersion));
  }
  if (!is_valid_scheme(bytes[1])) throw Error(Errc::kCorruptStream, "unknown scheme byte");
  const int bits = bytes[2];
  if (bits < 1 || bits > 8) throw Error(Errc::kCorruptStream, "bits out of range");

  DecodedPacket result;
  QuantizedGradient& q = result.gradient;
  q.scheme = static_cast<Scheme>(bytes[1]);
  q.bits = bits;
  const std::size_t n = get_u32(bytes, 3);
  q.norm = get_f32(bytes, 7);
  q.bound.b_theta = get_f32(bytes, 11);
  const std::uint64_t seed = get_u64(bytes, 15);
  const double kept = get_f32(bytes, 23);
  if (!(kept > 0.0 && kept <= 1.0)) throw Error(Errc::kCorruptStream, "kept fraction out of range");
  if (kept < 1.0) q.mask = MaskDescriptor{seed, kept};

  result.consumed = kHeaderSize;
  if (n > 0) {
    auto inflated = inflate_prefix(bytes.subspan(kHeaderSize));
    if (inflated.bytes.size() != packed_size(n, bits)) {
      throw Error(Errc::kCorruptStream, "payload inflates to " +
                                            std::to_string(inflated.bytes.size()) +
                                            " bytes, expected " +
                                            std::to_string(packed_size(n, bits)));
    }
    q.codes = unpack_bits(inflated.bytes, bits, n);
    result.consumed += inflated.consumed;
  }
  return result;
}

void CostLedger::record(int round, int client, std::size_t bytes, std::size_t float32_bytes) {
  entries_.push_back({round, client, bytes, float32_bytes});
  total_bytes_ += bytes;
  total_float32_bytes_ += float32_bytes;
}

std::size_t CostLedger::round_bytes(int round) const noexcept {
  std::size_t sum = 0;
  for (const auto& e : entries_) {
    if (e.round == round) sum += e.bytes;
  }
  return sum;
}

double CostLedger::compression_ratio() const noexcept {
  if (total_bytes_ == 0) return 0.0;
  return static_cast<double>(total_float32_bytes_) / static_cast<double>(total_bytes_);
}

}  // namespace cosgrad
