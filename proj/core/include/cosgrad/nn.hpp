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
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "cosgrad/codec.hpp"
#include "cosgrad/data.hpp"

namespace cosgrad {

struct Tensor {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  std::size_t size() const noexcept { return values.size(); }
};

/// Ordered named tensors shared between the server and simulated workers.
struct ModelParams {
  std::vector<Tensor> tensors;

  std::size_t parameter_count() const noexcept;
};

// One vector per tensor, in ModelParams order.
using Gradients = std::vector<std::vector<double>>;

/// Fully connected ReLU network with a softmax cross-entropy head.
///
/// Tensors are stored as (fcN.weight, fcN.bias) pairs; weights are row-major
/// (out x in). Initialization is He-style uniform, U(-sqrt(6/fan_in),
/// sqrt(6/fan_in)) for weights and zero for biases.
class Mlp {
 public:
  Mlp(std::vector<std::size_t> layer_sizes, std::uint64_t seed);
  Mlp(std::vector<std::size_t> layer_sizes, ModelParams params);

  const ModelParams& params() const noexcept { return params_; }
  ModelParams& params() noexcept { return params_; }
  std::span<const std::size_t> layer_sizes() const noexcept { return sizes_; }
  std::size_t input_dim() const noexcept { return sizes_.front(); }
  std::size_t classes() const noexcept { return sizes_.back(); }

  /// Logits, rows x classes, row-major.
  std::vector<double> forward(std::span<const float> batch, std::size_t rows) const;

  struct Backward {
    double loss = 0.0;  // mean over the batch
    Gradients grads;
  };

  Backward backward(std::span<const float> batch, std::span<const std::uint8_t> labels) const;

 private:
  std::vector<std::size_t> sizes_;
  ModelParams params_;
};

struct Evaluation {
  double accuracy = 0.0;
  double loss = 0.0;
};

Evaluation evaluate(const Mlp& model, const Dataset& data);

enum class OptimizerKind { kSgd, kMomentum, kAdam };

struct OptimizerSpec {
  OptimizerKind kind = OptimizerKind::kSgd;
  double momentum = 0.9;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // L2 term added to the gradient
};

class Optimizer {
 public:
  Optimizer(const OptimizerSpec& spec, const ModelParams& shape);

  void step(ModelParams& params, const Gradients& grads, double lr);

  long steps() const noexcept { return steps_; }

 private:
  OptimizerSpec spec_;
  Gradients first_;
  Gradients second_;
  long steps_ = 0;
};

enum class LrScheduleKind { kConstant, kCosineToZero, kCosineWarmRestarts };

struct LrSchedule {
  LrScheduleKind kind = LrScheduleKind::kConstant;
  double base_lr = 0.1;
  int total_rounds = 1;
  std::vector<int> restarts;  // rounds at which the cosine phase resets
};

/// Learning rate at round index t in [0, T]. Cosine phases run
/// base * (1 + cos(pi * (t - start) / (end - start))) / 2 over each segment.
double lr_at(const LrSchedule& schedule, int t);

struct LocalTrainSpec {
  int epochs = 1;
  std::size_t batch_size = 10;
  OptimizerSpec optimizer;
};

// Called on every mini-batch gradient before the optimizer step.
using GradientHook = std::function<void(Gradients&)>;

struct LocalTrainResult {
  std::vector<GradientVector> pseudo_gradient;  // M_in - M*, per tensor
  double mean_loss = 0.0;
  std::size_t steps = 0;
};

/// E epochs of mini-batch training on `shard`, reshuffled every epoch from
/// `seed`. Each epoch runs ceil(N / B) steps; the last batch may be short.
LocalTrainResult local_train(Mlp& model, const Dataset& data,
                             std::span<const std::size_t> shard, const LocalTrainSpec& spec,
                             double lr, std::uint64_t seed, const GradientHook& hook = {});

// Checkpoint: "CGCK", u32 version, u32 layer-size count, u32 sizes, u32
// tensor count, then per tensor (u16 name length, name, u32 rows, u32 cols),
// followed by every parameter as little-endian f32 in manifest order.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const Mlp& model, const std::filesystem::path& path);
Mlp load_checkpoint(const std::filesystem::path& path);

}  // namespace cosgrad
