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

#include <numeric>
#include <vector>

#include <benchmark/benchmark.h>

#include "cosgrad/baselines.hpp"
#include "cosgrad/codec.hpp"
#include "cosgrad/data.hpp"
#include "cosgrad/nn.hpp"
#include "cosgrad/packing.hpp"
#include "cosgrad/random.hpp"

namespace {

using namespace cosgrad;

GradientVector gaussian(std::size_t n) {
  Rng rng(1);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal();
  return GradientVector(std::move(v));
}

void BM_QuantizeCosine(benchmark::State& state) {
  const auto g = gaussian(static_cast<std::size_t>(state.range(0)));
  QuantizerConfig cfg;
  cfg.bits = static_cast<int>(state.range(1));
  for (auto _ : state) benchmark::DoNotOptimize(quantize_cosine(g, cfg));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_QuantizeCosine)->Args({1 << 20, 2})->Args({1 << 20, 8});

void BM_QuantizeCosineClipped(benchmark::State& state) {
  const auto g = gaussian(1 << 20);
  QuantizerConfig cfg;
  cfg.bits = 4;
  cfg.clip_fraction = 0.01;
  for (auto _ : state) benchmark::DoNotOptimize(quantize_cosine(g, cfg));
  state.SetItemsProcessed(state.iterations() * (1 << 20));
}
BENCHMARK(BM_QuantizeCosineClipped);

void BM_Dequantize(benchmark::State& state) {
  QuantizerConfig cfg;
  cfg.bits = 8;
  const auto q = quantize_cosine(gaussian(1 << 20), cfg);
  for (auto _ : state) benchmark::DoNotOptimize(dequantize(q));
  state.SetItemsProcessed(state.iterations() * (1 << 20));
}
BENCHMARK(BM_Dequantize);

void BM_PackBits(benchmark::State& state) {
  const int bits = static_cast<int>(state.range(0));
  Rng rng(2);
  std::vector<std::uint8_t> codes(1 << 20);
  for (auto& c : codes) c = static_cast<std::uint8_t>(rng.below(1u << bits));
  for (auto _ : state) benchmark::DoNotOptimize(pack_bits(codes, bits));
  state.SetBytesProcessed(state.iterations() * (1 << 20));
}
BENCHMARK(BM_PackBits)->Arg(1)->Arg(2)->Arg(3)->Arg(8);

void BM_EncodePacket(benchmark::State& state) {
  QuantizerConfig cfg;
  cfg.bits = static_cast<int>(state.range(0));
  const auto q = quantize_cosine(gaussian(1 << 18), cfg);
  for (auto _ : state) benchmark::DoNotOptimize(encode_packet(q));
  state.SetItemsProcessed(state.iterations() * (1 << 18));
}
BENCHMARK(BM_EncodePacket)->Arg(2)->Arg(8);

void BM_HadamardRotate(benchmark::State& state) {
  const auto g = gaussian(static_cast<std::size_t>(state.range(0)));
  const HadamardContext ctx(g.size(), 3);
  for (auto _ : state) benchmark::DoNotOptimize(hadamard_rotate(g.values(), ctx));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_HadamardRotate)->Arg(100000)->Arg(1 << 20);

void BM_LocalTrainEpoch(benchmark::State& state) {
  const auto data = synth_blobs(10, 600, 784, 4);
  std::vector<std::size_t> shard(data.size());
  std::iota(shard.begin(), shard.end(), std::size_t{0});
  const Mlp start({784, 200, 10}, 1);
  for (auto _ : state) {
    Mlp model = start;
    benchmark::DoNotOptimize(local_train(model, data, shard, {1, 10, {}}, 0.1, 1));
  }
  state.SetItemsProcessed(state.iterations() * 600);
}
BENCHMARK(BM_LocalTrainEpoch)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
