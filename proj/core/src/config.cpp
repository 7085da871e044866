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

#include "cosgrad/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <span>
#include <sstream>

#include "cosgrad/error.hpp"
#include "cosgrad/random.hpp"

namespace cosgrad {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value) {
  throw Error(Errc::kConfig, "invalid value '" + std::string(value) + "' for key '" +
                                 std::string(key) + "'");
}

double to_double(std::string_view key, std::string_view value) {
  try {
    std::size_t used = 0;
    const std::string s(value);
    const double v = std::stod(s, &used);
    if (used != s.size() || !std::isfinite(v)) bad_value(key, value);
    return v;
  } catch (const std::logic_error&) {
    bad_value(key, value);
  }
}

template <typename Int>
Int to_int(std::string_view key, std::string_view value) {
  Int v{};
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc{} || ptr != value.data() + value.size()) bad_value(key, value);
  return v;
}

bool to_bool(std::string_view key, std::string_view value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  bad_value(key, value);
}

template <typename Int>
std::vector<Int> to_list(std::string_view key, std::string_view value) {
  std::vector<Int> out;
  while (!value.empty()) {
    const auto comma = value.find(',');
    out.push_back(to_int<Int>(key, trim(value.substr(0, comma))));
    if (comma == std::string_view::npos) break;
    value.remove_prefix(comma + 1);
  }
  return out;
}

template <typename Enum, std::size_t N>
Enum to_enum(std::string_view key, std::string_view value,
             const std::pair<std::string_view, Enum> (&table)[N]) {
  for (const auto& [name, e] : table) {
    if (name == value) return e;
  }
  bad_value(key, value);
}

constexpr std::pair<std::string_view, CompressionKind> kKinds[] = {
    {"float32", CompressionKind::kFloat32}, {"cosine", CompressionKind::kCosine},
    {"linear", CompressionKind::kLinear},   {"sign", CompressionKind::kSign},
    {"signnorm", CompressionKind::kSignNorm}, {"efsign", CompressionKind::kEfSign}};

constexpr std::pair<std::string_view, LrScheduleKind> kSchedules[] = {
    {"constant", LrScheduleKind::kConstant},
    {"cosine", LrScheduleKind::kCosineToZero},
    {"cosine_restarts", LrScheduleKind::kCosineWarmRestarts}};

constexpr std::pair<std::string_view, OptimizerKind> kOptimizers[] = {
    {"sgd", OptimizerKind::kSgd}, {"momentum", OptimizerKind::kMomentum},
    {"adam", OptimizerKind::kAdam}};

constexpr std::pair<std::string_view, BoundFormula> kBoundFormulas[] = {
    {"symmetric", BoundFormula::kSymmetric}, {"literal", BoundFormula::kLiteral}};

constexpr std::pair<std::string_view, Denominator> kDenominators[] = {
    {"clients", Denominator::kClients}, {"per_coordinate", Denominator::kPerCoordinate}};

constexpr std::pair<std::string_view, DatasetKind> kDatasets[] = {
    {"mnist", DatasetKind::kMnist}, {"synthetic", DatasetKind::kSynthetic}};

constexpr std::pair<std::string_view, PartitionMode> kPartitions[] = {
    {"iid", PartitionMode::kIid}, {"noniid", PartitionMode::kNonIid}};

template <typename Enum, std::size_t N>
std::string_view enum_name(Enum e, const std::pair<std::string_view, Enum> (&table)[N]) {
  for (const auto& [name, v] : table) {
    if (v == e) return name;
  }
  return "?";
}

template <typename Int>
std::string join(const std::vector<Int>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(values[i]);
  }
  return out;
}

std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

const char* compression_name(CompressionKind kind) noexcept {
  return enum_name(kind, kKinds).data();
}

void finalize(FedConfig& config) {
  auto fill = [&](std::uint64_t& seed, std::uint64_t tag) {
    if (seed == 0) seed = derive_seed({config.seeds.global, tag});
  };
  fill(config.seeds.sampling, 1);
  fill(config.seeds.mask, 2);
  fill(config.seeds.quantizer, 3);
  fill(config.seeds.data, 4);
  config.client_lr.total_rounds = std::max(config.rounds, 1);
}

std::size_t clients_per_round(const FedConfig& config) noexcept {
  const double want = std::ceil(static_cast<double>(config.num_clients) * config.client_fraction - 1e-9);
  return std::clamp<std::size_t>(static_cast<std::size_t>(std::max(want, 1.0)), 1,
                                 std::max<std::size_t>(config.num_clients, 1));
}

void validate(const FedConfig& c) {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw Error(Errc::kConfig, what);
  };
  require(c.rounds >= 0, "rounds must be >= 0");
  require(c.client_fraction > 0.0 && c.client_fraction <= 1.0, "client_fraction must be in (0, 1]");
  require(c.local_epochs >= 1, "local_epochs must be >= 1");
  require(c.batch_size >= 1, "batch_size must be >= 1");
  require(c.num_clients >= 1, "num_clients must be >= 1");
  require(c.server_lr > 0.0, "server_lr must be > 0");
  require(c.client_lr.base_lr >= 0.0, "client_lr must be >= 0");
  require(c.compression.bits >= 1 && c.compression.bits <= 8, "bits must be in [1, 8]");
  require(c.compression.clip_fraction >= 0.0 && c.compression.clip_fraction < 0.5,
          "clip_fraction must be in [0, 0.5)");
  require(c.compression.kept_fraction > 0.0 && c.compression.kept_fraction <= 1.0,
          "kept_fraction must be in (0, 1]");
  require(!(c.compression.kind == CompressionKind::kEfSign &&
            (c.compression.kept_fraction < 1.0 || c.compression.hadamard)),
          "efsign does not compose with masks or rotation");
  require(c.eval_every >= 1, "eval_every must be >= 1");
  require(c.data.classes >= 2 && c.data.classes <= 256, "classes must be in [2, 256]");
  require(c.data.kind == DatasetKind::kMnist || (c.data.train_size > 0 && c.data.dim > 0),
          "synthetic data needs train_size and dim");
  for (std::size_t h : c.hidden) require(h > 0, "hidden sizes must be > 0");
}

FedConfig parse_config(std::string_view text) {
  FedConfig c;
  std::map<std::string, std::function<void(std::string_view, std::string_view)>> setters;
  auto& s = setters;
  s["rounds"] = [&](auto k, auto v) { c.rounds = to_int<int>(k, v); };
  s["client_fraction"] = [&](auto k, auto v) { c.client_fraction = to_double(k, v); };
  s["local_epochs"] = [&](auto k, auto v) { c.local_epochs = to_int<int>(k, v); };
  s["batch_size"] = [&](auto k, auto v) { c.batch_size = to_int<std::size_t>(k, v); };
  s["num_clients"] = [&](auto k, auto v) { c.num_clients = to_int<std::size_t>(k, v); };
  s["server_lr"] = [&](auto k, auto v) { c.server_lr = to_double(k, v); };
  s["client_lr"] = [&](auto k, auto v) { c.client_lr.base_lr = to_double(k, v); };
  s["lr_schedule"] = [&](auto k, auto v) { c.client_lr.kind = to_enum(k, v, kSchedules); };
  s["lr_restarts"] = [&](auto k, auto v) { c.client_lr.restarts = to_list<int>(k, v); };
  s["optimizer"] = [&](auto k, auto v) { c.optimizer.kind = to_enum(k, v, kOptimizers); };
  s["momentum"] = [&](auto k, auto v) { c.optimizer.momentum = to_double(k, v); };
  s["adam_beta1"] = [&](auto k, auto v) { c.optimizer.beta1 = to_double(k, v); };
  s["adam_beta2"] = [&](auto k, auto v) { c.optimizer.beta2 = to_double(k, v); };
  s["adam_eps"] = [&](auto k, auto v) { c.optimizer.eps = to_double(k, v); };
  s["weight_decay"] = [&](auto k, auto v) { c.optimizer.weight_decay = to_double(k, v); };
  s["scheme"] = [&](auto k, auto v) { c.compression.kind = to_enum(k, v, kKinds); };
  s["bits"] = [&](auto k, auto v) { c.compression.bits = to_int<int>(k, v); };
  s["unbiased"] = [&](auto k, auto v) { c.compression.unbiased = to_bool(k, v); };
  s["clip_fraction"] = [&](auto k, auto v) { c.compression.clip_fraction = to_double(k, v); };
  s["kept_fraction"] = [&](auto k, auto v) { c.compression.kept_fraction = to_double(k, v); };
  s["hadamard"] = [&](auto k, auto v) { c.compression.hadamard = to_bool(k, v); };
  s["bound_formula"] = [&](auto k, auto v) {
    c.compression.bound_formula =
        to_enum(k, v, kBoundFormulas);
  };
  s["aggregation_denominator"] = [&](auto k, auto v) {
    c.denominator = to_enum(k, v, kDenominators);
  };
  s["dataset"] = [&](auto k, auto v) {
    c.data.kind = to_enum(k, v, kDatasets);
  };
  s["mnist_dir"] = [&](auto, auto v) { c.data.mnist_dir = std::string(v); };
  s["synthetic_classes"] = [&](auto k, auto v) { c.data.classes = to_int<int>(k, v); };
  s["synthetic_train"] = [&](auto k, auto v) { c.data.train_size = to_int<std::size_t>(k, v); };
  s["synthetic_test"] = [&](auto k, auto v) { c.data.test_size = to_int<std::size_t>(k, v); };
  s["synthetic_dim"] = [&](auto k, auto v) { c.data.dim = to_int<std::size_t>(k, v); };
  s["synthetic_noise"] = [&](auto k, auto v) { c.data.noise = to_double(k, v); };
  s["partition"] = [&](auto k, auto v) {
    c.data.partition = to_enum(k, v, kPartitions);
  };
  s["hidden"] = [&](auto k, auto v) { c.hidden = to_list<std::size_t>(k, v); };
  s["seed"] = [&](auto k, auto v) { c.seeds.global = to_int<std::uint64_t>(k, v); };
  s["sampling_seed"] = [&](auto k, auto v) { c.seeds.sampling = to_int<std::uint64_t>(k, v); };
  s["mask_seed"] = [&](auto k, auto v) { c.seeds.mask = to_int<std::uint64_t>(k, v); };
  s["quantizer_seed"] = [&](auto k, auto v) { c.seeds.quantizer = to_int<std::uint64_t>(k, v); };
  s["data_seed"] = [&](auto k, auto v) { c.seeds.data = to_int<std::uint64_t>(k, v); };
  s["parallel"] = [&](auto k, auto v) { c.parallel = to_bool(k, v); };
  s["eval_every"] = [&](auto k, auto v) { c.eval_every = to_int<int>(k, v); };

  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw Error(Errc::kConfig, "line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key(trim(line.substr(0, eq)));
    const auto it = setters.find(key);
    if (it == setters.end()) {
      throw Error(Errc::kConfig, "line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    }
    it->second(key, trim(line.substr(eq + 1)));
  }
  finalize(c);
  validate(c);
  return c;
}

FedConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::kIo, "cannot open config " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str());
}

std::string format_config(const FedConfig& c) {
  std::ostringstream os;
  auto kv = [&os](std::string_view key, const auto& value) { os << key << " = " << value << '\n'; };
  kv("rounds", c.rounds);
  kv("client_fraction", fmt_double(c.client_fraction));
  kv("local_epochs", c.local_epochs);
  kv("batch_size", c.batch_size);
  kv("num_clients", c.num_clients);
  kv("server_lr", fmt_double(c.server_lr));
  kv("client_lr", fmt_double(c.client_lr.base_lr));
  kv("lr_schedule", enum_name(c.client_lr.kind, kSchedules));
  if (!c.client_lr.restarts.empty()) kv("lr_restarts", join(c.client_lr.restarts));
  kv("optimizer", enum_name(c.optimizer.kind, kOptimizers));
  kv("momentum", fmt_double(c.optimizer.momentum));
  kv("adam_beta1", fmt_double(c.optimizer.beta1));
  kv("adam_beta2", fmt_double(c.optimizer.beta2));
  kv("adam_eps", fmt_double(c.optimizer.eps));
  kv("weight_decay", fmt_double(c.optimizer.weight_decay));
  kv("scheme", enum_name(c.compression.kind, kKinds));
  kv("bits", c.compression.bits);
  kv("unbiased", c.compression.unbiased ? "true" : "false");
  kv("clip_fraction", fmt_double(c.compression.clip_fraction));
  kv("kept_fraction", fmt_double(c.compression.kept_fraction));
  kv("hadamard", c.compression.hadamard ? "true" : "false");
  kv("bound_formula", c.compression.bound_formula == BoundFormula::kSymmetric ? "symmetric" : "literal");
  kv("aggregation_denominator",
     c.denominator == Denominator::kClients ? "clients" : "per_coordinate");
  kv("dataset", c.data.kind == DatasetKind::kMnist ? "mnist" : "synthetic");
  kv("mnist_dir", c.data.mnist_dir);
  kv("synthetic_classes", c.data.classes);
  kv("synthetic_train", c.data.train_size);
  kv("synthetic_test", c.data.test_size);
  kv("synthetic_dim", c.data.dim);
  kv("synthetic_noise", fmt_double(c.data.noise));
  kv("partition", c.data.partition == PartitionMode::kIid ? "iid" : "noniid");
  kv("hidden", join(c.hidden));
  kv("seed", c.seeds.global);
  kv("sampling_seed", c.seeds.sampling);
  kv("mask_seed", c.seeds.mask);
  kv("quantizer_seed", c.seeds.quantizer);
  kv("data_seed", c.seeds.data);
  kv("parallel", c.parallel ? "true" : "false");
  kv("eval_every", c.eval_every);
  return os.str();
}

}  // namespace cosgrad
