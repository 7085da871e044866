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
#include <functional>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "cosgrad/baselines.hpp"
#include "cosgrad/config.hpp"
#include "cosgrad/data.hpp"
#include "cosgrad/nn.hpp"
#include "cosgrad/packing.hpp"

namespace cosgrad {

// Identifies one layer upload; every per-layer seed is derived from it.
struct LayerKey {
  std::uint64_t round = 0;
  std::uint64_t client = 0;
  std::uint64_t layer = 0;
};

/// Client side of the uplink for one layer. Returns the bytes that go on
/// the wire: raw little-endian f32 for the float32 pipeline, otherwise one
/// packet. An all-zero layer becomes a header-only packet with norm 0.
std::vector<std::uint8_t> compress_layer(const GradientVector& g, const CompressionSpec& spec,
                                         const Seeds& seeds, const LayerKey& key,
                                         ErrorFeedbackState* feedback = nullptr);

struct DecodedLayer {
  std::vector<double> values;                 // dense, length n
  std::optional<SparsificationMask> mask;     // positions that were transmitted
  std::optional<QuantizedGradient> quantized; // absent for float32
};

/// Server side: inverts compress_layer for a layer of `n` parameters.
DecodedLayer decompress_layer(std::span<const std::uint8_t> bytes, const CompressionSpec& spec,
                              const Seeds& seeds, const LayerKey& key, std::size_t n);

/// Weighted mean sum_i w_i u_i / sum_i w_i. With kPerCoordinate, coordinate j
/// divides by the weights of the updates whose mask kept j (and stays 0 when
/// none did).
std::vector<double> aggregate(std::span<const std::vector<double>> updates,
                              std::span<const double> weights,
                              std::span<const std::optional<SparsificationMask>> masks = {},
                              Denominator denominator = Denominator::kClients);

/// Seed for client `client`'s local training in round t.
std::uint64_t client_train_seed(const Seeds& seeds, int t, int client);

struct RoundReport {
  int round = 0;
  std::vector<int> clients;
  double accuracy = 0.0;
  double loss = 0.0;          // test loss
  double train_loss = 0.0;    // mean local loss over selected clients
  std::size_t bytes = 0;
  std::size_t cumulative_bytes = 0;
  double wall_ms = 0.0;
};

/// Per-layer worst excess of |compressed aggregate - exact aggregate| over
/// the weighted sum of per-entry cosine error bounds. Non-positive means the
/// bound held everywhere. Only unmasked, unrotated biased cosine uploads
/// contribute a bound; anything else counts with a bound of zero.
struct RoundDiagnostics {
  std::vector<double> max_excess;
};

/// FedAvg driver. The datasets must outlive the simulator.
class Simulator {
 public:
  Simulator(FedConfig config, const Dataset& train, const Dataset& test);

  /// Runs round t = round() + 1: sample clients, train locally, compress,
  /// decode, aggregate, step the server model. A failing client aborts the
  /// round before the model or the ledger change.
  RoundReport run_round();

  int round() const noexcept { return round_; }
  const FedConfig& config() const noexcept { return config_; }
  const Mlp& model() const noexcept { return model_; }
  Mlp& model() noexcept { return model_; }
  const CostLedger& ledger() const noexcept { return ledger_; }
  const Partition& partition() const noexcept { return partition_; }

  std::vector<int> select_clients(int t) const;

  void enable_diagnostics(bool on) noexcept { diagnostics_on_ = on; }
  const RoundDiagnostics& last_diagnostics() const noexcept { return diagnostics_; }

 private:
  struct ClientUpload;
  ClientUpload run_client(int client, int t, double lr);

  FedConfig config_;
  const Dataset* train_;
  const Dataset* test_;
  Partition partition_;
  Mlp model_;
  CostLedger ledger_;
  std::vector<std::vector<ErrorFeedbackState>> feedback_;  // [client][layer]
  int round_ = 0;
  Evaluation last_eval_;
  bool diagnostics_on_ = false;
  RoundDiagnostics diagnostics_;
};

struct ExperimentResult {
  std::vector<RoundReport> reports;
  Mlp model;
  CostLedger ledger;
};

using ReportSink = std::function<void(const RoundReport&)>;

ExperimentResult run_experiment(const FedConfig& config, const Dataset& train, const Dataset& test,
                                const ReportSink& sink = {});

/// Loads MNIST from config.data.mnist_dir (plain or .gz IDX names), or draws
/// the synthetic train/test pair.
std::pair<Dataset, Dataset> load_datasets(const FedConfig& config);

std::vector<std::size_t> model_layer_sizes(const FedConfig& config, const Dataset& train);

enum class AblationMode { kZeroTop, kZeroRear, kNoiseTop, kNoiseRear };

struct AblationPoint {
  int epoch = 0;
  double accuracy = 0.0;
  double loss = 0.0;
};

/// Centralized training for config.rounds epochs over the whole training
/// set. Before every optimizer step, `fraction` of each tensor's gradient
/// entries (ranked by magnitude, from the top or the rear) is zeroed or gets
/// N(0, sigma^2) noise added.
std::vector<AblationPoint> gradient_ablation(AblationMode mode, double fraction, double sigma,
                                             const FedConfig& config, const Dataset& train,
                                             const Dataset& test);

}  // namespace cosgrad
