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

#include "cosgrad/nn.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <string>

#include "cosgrad/error.hpp"
#include "cosgrad/random.hpp"

namespace cosgrad {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using Map = Eigen::Map<RowMatrix>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;

RowMatrix load_batch(std::span<const float> batch, std::size_t rows, std::size_t dim) {
  if (batch.size() != rows * dim) {
    throw Error(Errc::kShapeMismatch, "batch has " + std::to_string(batch.size()) +
                                          " values, expected " + std::to_string(rows * dim));
  }
  using FloatMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  return Eigen::Map<const FloatMatrix>(batch.data(), static_cast<Eigen::Index>(rows),
                                       static_cast<Eigen::Index>(dim))
      .cast<double>();
}

ConstMap weight(const Tensor& t) {
  return ConstMap(t.values.data(), static_cast<Eigen::Index>(t.rows),
                  static_cast<Eigen::Index>(t.cols));
}

// Runs the network and keeps every layer's activations (input included).
std::vector<RowMatrix> forward_all(const ModelParams& params, RowMatrix input) {
  const std::size_t layers = params.tensors.size() / 2;
  std::vector<RowMatrix> acts;
  acts.reserve(layers + 1);
  acts.push_back(std::move(input));
  for (std::size_t l = 0; l < layers; ++l) {
    const Tensor& w = params.tensors[2 * l];
    const Tensor& b = params.tensors[2 * l + 1];
    RowMatrix z = acts.back() * weight(w).transpose();
    z.rowwise() += ConstVecMap(b.values.data(), static_cast<Eigen::Index>(b.size())).transpose();
    if (l + 1 < layers) z = z.cwiseMax(0.0);
    acts.push_back(std::move(z));
  }
  return acts;
}

// Row-wise log-softmax in place; returns nothing, logits become log-probs.
void log_softmax_rows(RowMatrix& logits) {
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    auto row = logits.row(r);
    const double max = row.maxCoeff();
    const double lse = max + std::log((row.array() - max).exp().sum());
    row.array() -= lse;
  }
}

void write_u32(std::ostream& out, std::uint32_t v) {
  char buf[4];
  for (int i = 0; i < 4; ++i) buf[i] = static_cast<char>(v >> (8 * i));
  out.write(buf, 4);
}

std::uint32_t read_u32(std::istream& in) {
  unsigned char buf[4];
  if (!in.read(reinterpret_cast<char*>(buf), 4)) throw Error(Errc::kTruncated, "checkpoint");
  return buf[0] | (buf[1] << 8) | (buf[2] << 16) | (static_cast<std::uint32_t>(buf[3]) << 24);
}

void check_shapes(const std::vector<std::size_t>& sizes, const ModelParams& params) {
  if (sizes.size() < 2 || params.tensors.size() != 2 * (sizes.size() - 1)) {
    throw Error(Errc::kShapeMismatch, "tensor count does not match layer sizes");
  }
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const Tensor& w = params.tensors[2 * l];
    const Tensor& b = params.tensors[2 * l + 1];
    if (w.rows != sizes[l + 1] || w.cols != sizes[l] || w.size() != w.rows * w.cols ||
        b.size() != sizes[l + 1]) {
      throw Error(Errc::kShapeMismatch, "layer " + std::to_string(l) + " has the wrong shape");
    }
  }
}

}  // namespace

std::size_t ModelParams::parameter_count() const noexcept {
  std::size_t n = 0;
  for (const auto& t : tensors) n += t.size();
  return n;
}

Mlp::Mlp(std::vector<std::size_t> layer_sizes, std::uint64_t seed)
    : sizes_(std::move(layer_sizes)) {
  if (sizes_.size() < 2) throw Error(Errc::kShapeMismatch, "need at least two layer sizes");
  Rng rng(seed);
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    const std::size_t in = sizes_[l];
    const std::size_t out = sizes_[l + 1];
    const std::string prefix = "fc" + std::to_string(l + 1);
    Tensor w{prefix + ".weight", out, in, std::vector<double>(out * in)};
    const double limit = std::sqrt(6.0 / static_cast<double>(in));
    for (double& v : w.values) v = (2.0 * rng.uniform() - 1.0) * limit;
    params_.tensors.push_back(std::move(w));
    params_.tensors.push_back(Tensor{prefix + ".bias", out, 1, std::vector<double>(out, 0.0)});
  }
}

Mlp::Mlp(std::vector<std::size_t> layer_sizes, ModelParams params)
    : sizes_(std::move(layer_sizes)), params_(std::move(params)) {
  check_shapes(sizes_, params_);
}

std::vector<double> Mlp::forward(std::span<const float> batch, std::size_t rows) const {
  auto acts = forward_all(params_, load_batch(batch, rows, input_dim()));
  const RowMatrix& logits = acts.back();
  return {logits.data(), logits.data() + logits.size()};
}

Mlp::Backward Mlp::backward(std::span<const float> batch,
                            std::span<const std::uint8_t> labels) const {
  const std::size_t rows = labels.size();
  if (rows == 0) throw Error(Errc::kShapeMismatch, "empty batch");
  auto acts = forward_all(params_, load_batch(batch, rows, input_dim()));

  RowMatrix delta = acts.back();
  log_softmax_rows(delta);
  Backward result;
  double loss = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (labels[r] >= classes()) throw Error(Errc::kShapeMismatch, "label out of range");
    loss -= delta(static_cast<Eigen::Index>(r), labels[r]);
  }
  result.loss = loss / static_cast<double>(rows);

  // d(mean CE)/d(logits) = (softmax - onehot) / rows
  delta = delta.array().exp();
  for (std::size_t r = 0; r < rows; ++r) delta(static_cast<Eigen::Index>(r), labels[r]) -= 1.0;
  delta /= static_cast<double>(rows);

  const std::size_t layers = params_.tensors.size() / 2;
  result.grads.resize(params_.tensors.size());
  for (std::size_t l = layers; l-- > 0;) {
    const RowMatrix& input = acts[l];
    RowMatrix dw = delta.transpose() * input;
    Eigen::VectorXd db = delta.colwise().sum().transpose();
    result.grads[2 * l].assign(dw.data(), dw.data() + dw.size());
    result.grads[2 * l + 1].assign(db.data(), db.data() + db.size());
    if (l > 0) {
      RowMatrix upstream = delta * weight(params_.tensors[2 * l]);
      delta = upstream.cwiseProduct((input.array() > 0.0).cast<double>().matrix());
    }
  }
  return result;
}

Evaluation evaluate(const Mlp& model, const Dataset& data) {
  Evaluation eval;
  if (data.size() == 0) return eval;
  constexpr std::size_t kChunk = 1000;
  std::size_t correct = 0;
  double loss = 0.0;
  for (std::size_t start = 0; start < data.size(); start += kChunk) {
    const std::size_t rows = std::min(kChunk, data.size() - start);
    std::span<const float> batch(data.features.data() + start * data.dim, rows * data.dim);
    auto acts = forward_all(model.params(), load_batch(batch, rows, data.dim));
    RowMatrix& logp = acts.back();
    log_softmax_rows(logp);
    for (std::size_t r = 0; r < rows; ++r) {
      Eigen::Index best = 0;
      logp.row(static_cast<Eigen::Index>(r)).maxCoeff(&best);
      const std::uint8_t label = data.labels[start + r];
      if (static_cast<std::size_t>(best) == label) ++correct;
      loss -= logp(static_cast<Eigen::Index>(r), label);
    }
  }
  eval.accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
  eval.loss = loss / static_cast<double>(data.size());
  return eval;
}

Optimizer::Optimizer(const OptimizerSpec& spec, const ModelParams& shape) : spec_(spec) {
  auto zeros = [&shape] {
    Gradients g;
    for (const auto& t : shape.tensors) g.emplace_back(t.size(), 0.0);
    return g;
  };
  if (spec_.kind != OptimizerKind::kSgd) first_ = zeros();
  if (spec_.kind == OptimizerKind::kAdam) second_ = zeros();
}

void Optimizer::step(ModelParams& params, const Gradients& grads, double lr) {
  if (grads.size() != params.tensors.size()) {
    throw Error(Errc::kShapeMismatch, "gradient tensor count");
  }
  ++steps_;
  const double bias1 = 1.0 - std::pow(spec_.beta1, static_cast<double>(steps_));
  const double bias2 = 1.0 - std::pow(spec_.beta2, static_cast<double>(steps_));
  for (std::size_t t = 0; t < grads.size(); ++t) {
    auto& w = params.tensors[t].values;
    const auto& g = grads[t];
    if (g.size() != w.size()) throw Error(Errc::kShapeMismatch, "gradient tensor size");
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double grad = g[i] + spec_.weight_decay * w[i];
      switch (spec_.kind) {
        case OptimizerKind::kSgd:
          w[i] -= lr * grad;
          break;
        case OptimizerKind::kMomentum: {
          double& buf = first_[t][i];
          buf = spec_.momentum * buf + grad;
          w[i] -= lr * buf;
          break;
        }
        case OptimizerKind::kAdam: {
          double& m = first_[t][i];
          double& v = second_[t][i];
          m = spec_.beta1 * m + (1.0 - spec_.beta1) * grad;
          v = spec_.beta2 * v + (1.0 - spec_.beta2) * grad * grad;
          w[i] -= lr * (m / bias1) / (std::sqrt(v / bias2) + spec_.eps);
          break;
        }
      }
    }
  }
}

double lr_at(const LrSchedule& schedule, int t) {
  const int total = std::max(schedule.total_rounds, 1);
  t = std::clamp(t, 0, total);
  auto cosine = [&](int start, int end) {
    const double span = std::max(end - start, 1);
    return schedule.base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * (t - start) / span));
  };
  switch (schedule.kind) {
    case LrScheduleKind::kConstant:
      return schedule.base_lr;
    case LrScheduleKind::kCosineToZero:
      return cosine(0, total);
    case LrScheduleKind::kCosineWarmRestarts: {
      int start = 0;
      int end = total;
      for (int r : schedule.restarts) {
        if (r <= 0 || r >= total) continue;
        if (r <= t) {
          start = std::max(start, r);
        } else {
          end = std::min(end, r);
        }
      }
      return cosine(start, end);
    }
  }
  return schedule.base_lr;
}

LocalTrainResult local_train(Mlp& model, const Dataset& data,
                             std::span<const std::size_t> shard, const LocalTrainSpec& spec,
                             double lr, std::uint64_t seed, const GradientHook& hook) {
  if (shard.empty()) throw Error(Errc::kEmptyShard, "client shard is empty");
  if (spec.epochs < 1 || spec.batch_size < 1) {
    throw Error(Errc::kInvalidArgument, "epochs and batch size must be >= 1");
  }
  const ModelParams initial = model.params();
  Optimizer optimizer(spec.optimizer, model.params());
  Rng rng(seed);

  std::vector<std::size_t> order(shard.begin(), shard.end());
  std::vector<float> batch;
  std::vector<std::uint8_t> labels;
  double loss_sum = 0.0;
  LocalTrainResult result;
  for (int epoch = 0; epoch < spec.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[static_cast<std::size_t>(rng.below(i))]);
    }
    for (std::size_t start = 0; start < order.size(); start += spec.batch_size) {
      const std::size_t rows = std::min(spec.batch_size, order.size() - start);
      batch.resize(rows * data.dim);
      labels.resize(rows);
      for (std::size_t r = 0; r < rows; ++r) {
        const auto src = data.row(order[start + r]);
        std::copy(src.begin(), src.end(), batch.begin() + static_cast<std::ptrdiff_t>(r * data.dim));
        labels[r] = data.labels[order[start + r]];
      }
      auto back = model.backward(batch, labels);
      if (hook) hook(back.grads);
      optimizer.step(model.params(), back.grads, lr);
      loss_sum += back.loss;
      ++result.steps;
    }
  }
  result.mean_loss = loss_sum / static_cast<double>(result.steps);
  result.pseudo_gradient.reserve(initial.tensors.size());
  for (std::size_t t = 0; t < initial.tensors.size(); ++t) {
    const auto& before = initial.tensors[t].values;
    const auto& after = model.params().tensors[t].values;
    std::vector<double> diff(before.size());
    for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = before[i] - after[i];
    result.pseudo_gradient.emplace_back(std::move(diff));
  }
  return result;
}

void save_checkpoint(const Mlp& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::kIo, "cannot open " + path.string() + " for writing");
  out.write("CGCK", 4);
  write_u32(out, kCheckpointVersion);
  write_u32(out, static_cast<std::uint32_t>(model.layer_sizes().size()));
  for (std::size_t s : model.layer_sizes()) write_u32(out, static_cast<std::uint32_t>(s));
  const auto& tensors = model.params().tensors;
  write_u32(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    const auto len = static_cast<std::uint16_t>(t.name.size());
    out.put(static_cast<char>(len & 0xff));
    out.put(static_cast<char>(len >> 8));
    out.write(t.name.data(), len);
    write_u32(out, static_cast<std::uint32_t>(t.rows));
    write_u32(out, static_cast<std::uint32_t>(t.cols));
  }
  for (const auto& t : tensors) {
    for (double v : t.values) write_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
  if (!out) throw Error(Errc::kIo, "failed writing " + path.string());
}

Mlp load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::kIo, "cannot open " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || std::string_view(magic, 4) != "CGCK") {
    throw Error(Errc::kBadMagic, path.string() + " is not a checkpoint");
  }
  if (read_u32(in) != kCheckpointVersion) {
    throw Error(Errc::kVersionMismatch, "unsupported checkpoint version");
  }
  std::vector<std::size_t> sizes(read_u32(in));
  for (auto& s : sizes) s = read_u32(in);
  ModelParams params;
  params.tensors.resize(read_u32(in));
  for (auto& t : params.tensors) {
    unsigned char len[2];
    if (!in.read(reinterpret_cast<char*>(len), 2)) throw Error(Errc::kTruncated, "checkpoint");
    t.name.resize(len[0] | (len[1] << 8));
    if (!in.read(t.name.data(), static_cast<std::streamsize>(t.name.size()))) {
      throw Error(Errc::kTruncated, "checkpoint");
    }
    t.rows = read_u32(in);
    t.cols = read_u32(in);
  }
  for (auto& t : params.tensors) {
    t.values.resize(t.rows * t.cols);
    for (double& v : t.values) v = std::bit_cast<float>(read_u32(in));
  }
  return Mlp(std::move(sizes), std::move(params));
}

}  // namespace cosgrad
