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
#include <span>
#include <utility>
#include <vector>

namespace cosgrad {

/// Row-major feature matrix in [0, 1] with integer labels.
struct Dataset {
  std::vector<float> features;
  std::vector<std::uint8_t> labels;
  std::size_t dim = 0;
  int classes = 0;

  std::size_t size() const noexcept { return labels.size(); }
  std::span<const float> row(std::size_t i) const noexcept {
    return {features.data() + i * dim, dim};
  }
};

/// Reads an IDX image/label pair (optionally gzip-wrapped). Pixels are scaled
/// by 1/255 and the class count is max(label) + 1.
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels);

/// Gaussian clusters around seeded class centers in [0.25, 0.75]^dim, with
/// noise standard deviation `noise`, clamped into [0, 1]. Labels cycle
/// through the classes before the example order is shuffled.
Dataset synth_blobs(int classes, std::size_t n, std::size_t dim, std::uint64_t seed,
                    double noise = 0.1);

/// Splits off the first `head` examples.
std::pair<Dataset, Dataset> split_head(const Dataset& data, std::size_t head);

Dataset subset(const Dataset& data, std::span<const std::size_t> indices);

enum class PartitionMode { kIid, kNonIid };

struct Partition {
  PartitionMode mode = PartitionMode::kIid;
  std::vector<std::vector<std::size_t>> shards;
};

/// IID: seeded shuffle then a contiguous near-equal split.
/// Non-IID: 2m single-label shards, shuffled and dealt two per client, so no
/// client sees more than two classes.
Partition partition(const Dataset& data, std::size_t clients, PartitionMode mode,
                    std::uint64_t seed);

}  // namespace cosgrad
