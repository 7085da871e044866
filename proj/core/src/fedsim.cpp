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

#include "cosgrad/fedsim.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <exception>
#include <filesystem>
#include <limits>
#include <numeric>
#include <string>
#include <thread>

#include "cosgrad/error.hpp"
#include "cosgrad/random.hpp"

namespace cosgrad {

namespace {

// Tags that keep the derived seed streams apart.
constexpr std::uint64_t kTagHadamard = 0x4841444dULL;
constexpr std::uint64_t kTagQuantizer = 0x51554e54ULL;
constexpr std::uint64_t kTagTrain = 0x5452414eULL;
constexpr std::uint64_t kTagSampling = 0x53414d50ULL;
constexpr std::uint64_t kTagPartition = 0x50415254ULL;
constexpr std::uint64_t kTagAblation = 0x41424c54ULL;

std::uint64_t hadamard_seed(const Seeds& seeds, const LayerKey& key) {
  return derive_seed({seeds.mask, key.round, key.client, key.layer, kTagHadamard});
}

std::uint64_t quantizer_seed(const Seeds& seeds, const LayerKey& key) {
  return derive_seed({seeds.quantizer, key.round, key.client, key.layer, kTagQuantizer});
}

Scheme wire_scheme(const CompressionSpec& spec) {
  switch (spec.kind) {
    case CompressionKind::kCosine:
      if (spec.bits == 1) return Scheme::kSignNorm;
      return spec.unbiased ? Scheme::kCosineUnbiased : Scheme::kCosineBiased;
    case CompressionKind::kLinear:
      return spec.unbiased ? Scheme::kLinearUnbiased : Scheme::kLinearBiased;
    case CompressionKind::kSignNorm:
      return Scheme::kSignNorm;
    case CompressionKind::kSign:
    case CompressionKind::kEfSign:
    case CompressionKind::kFloat32:
      return Scheme::kSign;
  }
  return Scheme::kSign;
}

int wire_bits(const CompressionSpec& spec) {
  switch (spec.kind) {
    case CompressionKind::kCosine:
    case CompressionKind::kLinear:
      return spec.bits;
    default:
      return 1;
  }
}

std::vector<std::uint8_t> encode_float32(std::span<const double> values) {
  std::vector<std::uint8_t> out;
  out.reserve(values.size() * 4);
  for (double v : values) {
    const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
  }
  return out;
}

std::vector<double> decode_float32(std::span<const std::uint8_t> bytes, std::size_t n) {
  if (bytes.size() != 4 * n) {
    throw Error(Errc::kCorruptStream, "float32 upload has " + std::to_string(bytes.size()) +
                                          " bytes, expected " + std::to_string(4 * n));
  }
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(bytes[4 * i + b]) << (8 * b);
    out[i] = std::bit_cast<float>(bits);
  }
  return out;
}

}  // namespace

std::vector<std::uint8_t> compress_layer(const GradientVector& g, const CompressionSpec& spec,
                                         const Seeds& seeds, const LayerKey& key,
                                         ErrorFeedbackState* feedback) {
  if (spec.kind == CompressionKind::kFloat32) return encode_float32(g.values());

  std::vector<double> working(g.values().begin(), g.values().end());
  std::optional<SparsificationMask> mask;
  if (spec.kept_fraction < 1.0) {
    // The fraction crosses the wire as f32; the server regenerates from that.
    const double kept = static_cast<float>(spec.kept_fraction);
    mask = SparsificationMask::generate(g.size(), kept,
                                        mask_seed(seeds.mask, key.round, key.client, key.layer));
    working = apply_mask(working, *mask);
  }
  if (spec.hadamard && !working.empty()) {
    working = hadamard_rotate(working, HadamardContext(working.size(), hadamard_seed(seeds, key)));
  }
  const GradientVector compact(std::move(working));

  QuantizedGradient q;
  if (spec.kind == CompressionKind::kEfSign) {
    if (feedback == nullptr) throw Error(Errc::kInvalidArgument, "efsign needs residual state");
    if (feedback->size() == 0 && compact.size() != 0) *feedback = ErrorFeedbackState(compact.size());
    q = ef_sign_step(compact, *feedback, 1.0);
  } else if (!(compact.norm() > 0.0)) {
    q.scheme = wire_scheme(spec);
    q.bits = wire_bits(spec);
    q.norm = 0.0;
  } else {
    switch (spec.kind) {
      case CompressionKind::kCosine: {
        QuantizerConfig qc;
        qc.bits = spec.bits;
        qc.unbiased = spec.unbiased;
        qc.clip_fraction = spec.clip_fraction;
        qc.rng_seed = quantizer_seed(seeds, key);
        qc.bound_formula = spec.bound_formula;
        q = quantize_cosine(compact, qc);
        break;
      }
      case CompressionKind::kLinear:
        q = quantize_linear(compact, spec.bits, spec.unbiased, quantizer_seed(seeds, key),
                            spec.clip_fraction);
        break;
      case CompressionKind::kSign:
        q = sign_sgd(compact);
        break;
      case CompressionKind::kSignNorm:
        q = sign_sgd_norm(compact);
        break;
      default:
        throw Error(Errc::kInvalidArgument, "unhandled compression kind");
    }
  }
  if (mask) q.mask = mask->descriptor();
  return encode_packet(q);
}

DecodedLayer decompress_layer(std::span<const std::uint8_t> bytes, const CompressionSpec& spec,
                              const Seeds& seeds, const LayerKey& key, std::size_t n) {
  DecodedLayer out;
  if (spec.kind == CompressionKind::kFloat32) {
    out.values = decode_float32(bytes, n);
    return out;
  }
  auto decoded = decode_packet(bytes);
  if (decoded.consumed != bytes.size()) {
    throw Error(Errc::kCorruptStream, "trailing bytes after layer packet");
  }
  QuantizedGradient& q = decoded.gradient;

  std::size_t compact_len = n;
  if (q.mask) {
    out.mask = SparsificationMask::generate(n, q.mask->kept_fraction, q.mask->seed);
    compact_len = out.mask->indices().size();
  }
  std::vector<double> values;
  if (q.codes.empty()) {
    values.assign(compact_len, 0.0);
  } else {
    values = dequantize(q).release();
    if (spec.hadamard) {
      values = hadamard_unrotate(values, HadamardContext(compact_len, hadamard_seed(seeds, key)));
    }
  }
  if (values.size() != compact_len) {
    throw Error(Errc::kCorruptStream, "layer decodes to " + std::to_string(values.size()) +
                                          " values, expected " + std::to_string(compact_len));
  }
  out.values = out.mask ? expand_mask(values, *out.mask, n) : std::move(values);
  out.quantized = std::move(q);
  return out;
}

std::vector<double> aggregate(std::span<const std::vector<double>> updates,
                              std::span<const double> weights,
                              std::span<const std::optional<SparsificationMask>> masks,
                              Denominator denominator) {
  if (updates.empty() || updates.size() != weights.size()) {
    throw Error(Errc::kDimMismatch, "aggregate needs one weight per update");
  }
  const std::size_t n = updates.front().size();
  std::vector<double> sum(n, 0.0);
  std::vector<double> denom(n, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < updates.size(); ++i) {
    if (updates[i].size() != n) throw Error(Errc::kDimMismatch, "update lengths differ");
    for (std::size_t j = 0; j < n; ++j) sum[j] += weights[i] * updates[i][j];
    total += weights[i];
    if (denominator == Denominator::kPerCoordinate) {
      const bool masked = i < masks.size() && masks[i].has_value();
      if (masked) {
        for (std::size_t idx : masks[i]->indices()) denom[idx] += weights[i];
      } else {
        for (double& d : denom) d += weights[i];
      }
    }
  }
  for (std::size_t j = 0; j < n; ++j) {
    const double d = denominator == Denominator::kClients ? total : denom[j];
    sum[j] = d > 0.0 ? sum[j] / d : 0.0;
  }
  return sum;
}

std::uint64_t client_train_seed(const Seeds& seeds, int t, int client) {
  return derive_seed({seeds.global, static_cast<std::uint64_t>(t), static_cast<std::uint64_t>(client),
                      kTagTrain});
}

std::vector<std::size_t> model_layer_sizes(const FedConfig& config, const Dataset& train) {
  std::vector<std::size_t> sizes{train.dim};
  sizes.insert(sizes.end(), config.hidden.begin(), config.hidden.end());
  sizes.push_back(static_cast<std::size_t>(std::max(train.classes, config.data.classes)));
  return sizes;
}

struct Simulator::ClientUpload {
  int client = 0;
  double weight = 0.0;
  double train_loss = 0.0;
  std::vector<std::vector<std::uint8_t>> packets;
  std::vector<GradientVector> exact;  // kept only with diagnostics on
};

Simulator::Simulator(FedConfig config, const Dataset& train, const Dataset& test)
    : config_(std::move(config)),
      train_(&train),
      test_(&test),
      model_(model_layer_sizes(config_, train), config_.seeds.global) {
  finalize(config_);
  validate(config_);
  partition_ = cosgrad::partition(train, config_.num_clients, config_.data.partition,
                         derive_seed({config_.seeds.data, kTagPartition}));
  feedback_.resize(config_.num_clients);
}

std::vector<int> Simulator::select_clients(int t) const {
  const std::size_t m = config_.num_clients;
  const std::size_t k = clients_per_round(config_);
  std::vector<std::size_t> ids(m);
  std::iota(ids.begin(), ids.end(), std::size_t{0});
  Rng rng(derive_seed({config_.seeds.sampling, static_cast<std::uint64_t>(t), kTagSampling}));
  for (std::size_t i = 0; i < k; ++i) {
    std::swap(ids[i], ids[i + static_cast<std::size_t>(rng.below(m - i))]);
  }
  std::vector<int> chosen(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(k));
  std::sort(chosen.begin(), chosen.end());
  return chosen;
}

Simulator::ClientUpload Simulator::run_client(int client, int t, double lr) {
  ClientUpload up;
  up.client = client;
  const auto& shard = partition_.shards[static_cast<std::size_t>(client)];
  up.weight = static_cast<double>(shard.size());

  Mlp local = model_;
  LocalTrainSpec spec{config_.local_epochs, config_.batch_size, config_.optimizer};
  auto trained = local_train(local, *train_, shard, spec, lr, client_train_seed(config_.seeds, t, client));
  up.train_loss = trained.mean_loss;

  auto& feedback = feedback_[static_cast<std::size_t>(client)];
  if (config_.compression.kind == CompressionKind::kEfSign && feedback.empty()) {
    for (const auto& g : trained.pseudo_gradient) feedback.emplace_back(g.size());
  }
  up.packets.reserve(trained.pseudo_gradient.size());
  for (std::size_t layer = 0; layer < trained.pseudo_gradient.size(); ++layer) {
    const LayerKey key{static_cast<std::uint64_t>(t), static_cast<std::uint64_t>(client), layer};
    ErrorFeedbackState* state = feedback.empty() ? nullptr : &feedback[layer];
    up.packets.push_back(compress_layer(trained.pseudo_gradient[layer], config_.compression,
                                        config_.seeds, key, state));
  }
  if (diagnostics_on_) up.exact = std::move(trained.pseudo_gradient);
  return up;
}

RoundReport Simulator::run_round() {
  const auto started = std::chrono::steady_clock::now();
  const int t = round_ + 1;
  RoundReport report;
  report.round = t;
  report.clients = select_clients(t);
  const double lr = lr_at(config_.client_lr, t - 1);

  const std::size_t k = report.clients.size();
  std::vector<ClientUpload> uploads(k);
  if (config_.parallel && k > 1) {
    const std::size_t workers =
        std::min<std::size_t>(k, std::max(1u, std::thread::hardware_concurrency()));
    std::vector<std::exception_ptr> errors(k);
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t i = w; i < k; i += workers) {
          try {
            uploads[i] = run_client(report.clients[i], t, lr);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  } else {
    for (std::size_t i = 0; i < k; ++i) uploads[i] = run_client(report.clients[i], t, lr);
  }

  // Decode everything before touching the model or the ledger.
  auto& tensors = model_.params().tensors;
  const std::size_t layers = tensors.size();
  std::vector<double> weights(k);
  std::vector<std::vector<DecodedLayer>> decoded(layers, std::vector<DecodedLayer>(k));
  for (std::size_t i = 0; i < k; ++i) {
    weights[i] = uploads[i].weight;
    for (std::size_t layer = 0; layer < layers; ++layer) {
      const LayerKey key{static_cast<std::uint64_t>(t),
                         static_cast<std::uint64_t>(uploads[i].client), layer};
      decoded[layer][i] = decompress_layer(uploads[i].packets[layer], config_.compression,
                                           config_.seeds, key, tensors[layer].size());
    }
  }

  const double weight_total = std::accumulate(weights.begin(), weights.end(), 0.0);
  diagnostics_.max_excess.assign(diagnostics_on_ ? layers : 0, 0.0);
  for (std::size_t layer = 0; layer < layers; ++layer) {
    std::vector<std::vector<double>> updates(k);
    std::vector<std::optional<SparsificationMask>> masks(k);
    for (std::size_t i = 0; i < k; ++i) {
      updates[i] = std::move(decoded[layer][i].values);
      masks[i] = std::move(decoded[layer][i].mask);
    }
    const auto agg = aggregate(updates, weights, masks, config_.denominator);

    if (diagnostics_on_) {
      std::vector<std::vector<double>> exact(k);
      std::vector<double> bounds(agg.size(), 0.0);
      for (std::size_t i = 0; i < k; ++i) {
        const auto& g = uploads[i].exact[layer];
        exact[i].assign(g.values().begin(), g.values().end());
        const auto& q = decoded[layer][i].quantized;
        if (!q || q->codes.empty() || q->mask || q->scheme != Scheme::kCosineBiased ||
            config_.compression.hadamard) {
          continue;
        }
        for (std::size_t j = 0; j < g.size(); ++j) {
          bounds[j] += weights[i] / weight_total * error_bound(g.values()[j], q->norm, q->bound, q->bits);
        }
      }
      const auto reference = aggregate(exact, weights);
      double worst = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < agg.size(); ++j) {
        worst = std::max(worst, std::abs(agg[j] - reference[j]) - bounds[j]);
      }
      diagnostics_.max_excess[layer] = worst;
    }

    auto& w = tensors[layer].values;
    for (std::size_t j = 0; j < w.size(); ++j) w[j] -= config_.server_lr * agg[j];
  }

  const std::size_t f32_bytes = 4 * model_.params().parameter_count();
  double loss_sum = 0.0;
  for (const auto& up : uploads) {
    std::size_t bytes = 0;
    for (const auto& p : up.packets) bytes += p.size();
    ledger_.record(t, up.client, bytes, f32_bytes);
    report.bytes += bytes;
    loss_sum += up.train_loss;
  }
  report.train_loss = loss_sum / static_cast<double>(k);
  report.cumulative_bytes = ledger_.total_bytes();

  round_ = t;
  if (t % config_.eval_every == 0 || t == config_.rounds) last_eval_ = evaluate(model_, *test_);
  report.accuracy = last_eval_.accuracy;
  report.loss = last_eval_.loss;
  report.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started)
                       .count();
  return report;
}

ExperimentResult run_experiment(const FedConfig& config, const Dataset& train, const Dataset& test,
                                const ReportSink& sink) {
  Simulator sim(config, train, test);
  std::vector<RoundReport> reports;
  for (int t = 1; t <= sim.config().rounds; ++t) {
    reports.push_back(sim.run_round());
    if (sink) sink(reports.back());
  }
  return {std::move(reports), sim.model(), sim.ledger()};
}

std::pair<Dataset, Dataset> load_datasets(const FedConfig& config) {
  if (config.data.kind == DatasetKind::kMnist) {
    const std::filesystem::path dir = config.data.mnist_dir;
    auto pick = [&dir](const std::string& stem) {
      const auto plain = dir / stem;
      if (std::filesystem::exists(plain)) return plain;
      const auto gz = dir / (stem + ".gz");
      if (std::filesystem::exists(gz)) return gz;
      throw Error(Errc::kIo, "missing MNIST file " + plain.string());
    };
    return {load_idx(pick("train-images-idx3-ubyte"), pick("train-labels-idx1-ubyte")),
            load_idx(pick("t10k-images-idx3-ubyte"), pick("t10k-labels-idx1-ubyte"))};
  }
  const auto& d = config.data;
  Dataset all = synth_blobs(d.classes, d.train_size + d.test_size, d.dim, config.seeds.data, d.noise);
  return split_head(all, d.train_size);
}

std::vector<AblationPoint> gradient_ablation(AblationMode mode, double fraction, double sigma,
                                             const FedConfig& input, const Dataset& train,
                                             const Dataset& test) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) {
    throw Error(Errc::kInvalidArgument, "ablation fraction must be in [0, 1]");
  }
  FedConfig config = input;
  finalize(config);
  validate(config);
  Mlp model(model_layer_sizes(config, train), config.seeds.global);
  std::vector<std::size_t> all(train.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  const LocalTrainSpec spec{1, config.batch_size, config.optimizer};

  const bool top = mode == AblationMode::kZeroTop || mode == AblationMode::kNoiseTop;
  const bool noise = mode == AblationMode::kNoiseTop || mode == AblationMode::kNoiseRear;
  Rng noise_rng(derive_seed({config.seeds.global, kTagAblation}));
  std::vector<std::size_t> order;
  GradientHook hook = [&](Gradients& grads) {
    for (auto& g : grads) {
      const auto count = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(g.size())));
      if (count == 0) continue;
      order.resize(g.size());
      std::iota(order.begin(), order.end(), std::size_t{0});
      auto by_rank = [&g, top](std::size_t a, std::size_t b) {
        const double ma = std::abs(g[a]);
        const double mb = std::abs(g[b]);
        if (ma != mb) return top ? ma > mb : ma < mb;
        return a < b;
      };
      std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(count - 1),
                       order.end(), by_rank);
      for (std::size_t i = 0; i < count; ++i) {
        double& v = g[order[i]];
        v = noise ? v + sigma * noise_rng.normal() : 0.0;
      }
    }
  };

  std::vector<AblationPoint> trace;
  for (int epoch = 1; epoch <= config.rounds; ++epoch) {
    const double lr = lr_at(config.client_lr, epoch - 1);
    const auto seed = derive_seed({config.seeds.global, static_cast<std::uint64_t>(epoch), kTagTrain});
    local_train(model, train, all, spec, lr, seed, fraction > 0.0 ? hook : GradientHook{});
    const auto eval = evaluate(model, test);
    trace.push_back({epoch, eval.accuracy, eval.loss});
  }
  return trace;
}

}  // namespace cosgrad
