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
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "cosgrad/codec.hpp"
#include "cosgrad/data.hpp"
#include "cosgrad/nn.hpp"

namespace cosgrad {

enum class CompressionKind { kFloat32, kCosine, kLinear, kSign, kSignNorm, kEfSign };

/// Per-layer uplink pipeline: mask -> optional Hadamard rotation ->
/// quantizer -> packet.
struct CompressionSpec {
  CompressionKind kind = CompressionKind::kFloat32;
  int bits = 8;
  bool unbiased = false;
  double clip_fraction = 0.0;
  double kept_fraction = 1.0;
  bool hadamard = false;
  BoundFormula bound_formula = BoundFormula::kSymmetric;
};

enum class DatasetKind { kMnist, kSynthetic };

struct DataSpec {
  DatasetKind kind = DatasetKind::kSynthetic;
  std::string mnist_dir = "data/mnist";
  int classes = 10;
  std::size_t train_size = 6000;
  std::size_t test_size = 1000;
  std::size_t dim = 64;
  double noise = 0.1;
  PartitionMode partition = PartitionMode::kIid;
};

// How the weighted aggregate divides masked coordinates.
enum class Denominator {
  kClients,        // sum of N_i over every selected client
  kPerCoordinate,  // sum of N_i over clients that kept the coordinate
};

struct Seeds {
  std::uint64_t global = 1;    // model init and local training
  std::uint64_t sampling = 0;  // client selection
  std::uint64_t mask = 0;      // sparsification masks and Hadamard signs
  std::uint64_t quantizer = 0; // stochastic rounding
  std::uint64_t data = 0;      // synthetic data and partitioning
};

/// Everything that determines a simulation run.
struct FedConfig {
  int rounds = 10;               // T
  double client_fraction = 0.1;  // C
  int local_epochs = 1;          // E
  std::size_t batch_size = 10;   // B
  std::size_t num_clients = 100; // m
  double server_lr = 1.0;
  LrSchedule client_lr;
  OptimizerSpec optimizer;
  CompressionSpec compression;
  DataSpec data;
  std::vector<std::size_t> hidden{128};
  Denominator denominator = Denominator::kClients;
  Seeds seeds;
  bool parallel = false;
  int eval_every = 1;
};

/// Fills sub-seeds left at 0 from the global seed and syncs the schedule
/// length with the round count.
void finalize(FedConfig& config);

void validate(const FedConfig& config);

std::size_t clients_per_round(const FedConfig& config) noexcept;

/// Parses the flat `key = value` format. `#` starts a comment; unknown keys
/// and malformed values are kConfig errors.
FedConfig parse_config(std::string_view text);

FedConfig load_config(const std::filesystem::path& path);

/// Serializes every key, so parse_config(format_config(c)) reproduces c.
std::string format_config(const FedConfig& config);

const char* compression_name(CompressionKind kind) noexcept;

}  // namespace cosgrad
