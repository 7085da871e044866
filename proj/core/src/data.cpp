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

#include "cosgrad/data.hpp"

#include <zlib.h>

#include <algorithm>
#include <array>
#include <numeric>
#include <string>

#include "cosgrad/error.hpp"
#include "cosgrad/random.hpp"

namespace cosgrad {

namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

// gzread passes plain files through unchanged, so this covers both forms.
std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  gzFile file = gzopen(path.string().c_str(), "rb");
  if (file == nullptr) throw Error(Errc::kIo, "cannot open " + path.string());
  std::vector<std::uint8_t> out;
  std::array<std::uint8_t, 1 << 16> chunk{};
  int got = 0;
  while ((got = gzread(file, chunk.data(), static_cast<unsigned>(chunk.size()))) > 0) {
    out.insert(out.end(), chunk.begin(), chunk.begin() + got);
  }
  const bool failed = got < 0;
  gzclose(file);
  if (failed) throw Error(Errc::kIo, "read error on " + path.string());
  return out;
}

std::uint32_t read_be32(const std::vector<std::uint8_t>& buf, std::size_t at,
                        const std::filesystem::path& path) {
  if (buf.size() < at + 4) throw Error(Errc::kTruncated, path.string() + " header is truncated");
  return (static_cast<std::uint32_t>(buf[at]) << 24) | (buf[at + 1] << 16) |
         (buf[at + 2] << 8) | buf[at + 3];
}

}  // namespace

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels) {
  const auto img = read_file(images);
  const auto lab = read_file(labels);
  if (read_be32(img, 0, images) != kImageMagic) {
    throw Error(Errc::kBadMagic, images.string() + " is not an IDX image file");
  }
  if (read_be32(lab, 0, labels) != kLabelMagic) {
    throw Error(Errc::kBadMagic, labels.string() + " is not an IDX label file");
  }
  const std::size_t count = read_be32(img, 4, images);
  const std::size_t rows = read_be32(img, 8, images);
  const std::size_t cols = read_be32(img, 12, images);
  const std::size_t label_count = read_be32(lab, 4, labels);
  if (count != label_count) {
    throw Error(Errc::kDimMismatch, std::to_string(count) + " images but " +
                                        std::to_string(label_count) + " labels");
  }
  const std::size_t dim = rows * cols;
  if (img.size() < 16 + count * dim) throw Error(Errc::kTruncated, images.string());
  if (lab.size() < 8 + count) throw Error(Errc::kTruncated, labels.string());

  Dataset data;
  data.dim = dim;
  data.features.resize(count * dim);
  for (std::size_t i = 0; i < data.features.size(); ++i) {
    data.features[i] = static_cast<float>(img[16 + i]) / 255.0f;
  }
  data.labels.assign(lab.begin() + 8, lab.begin() + 8 + static_cast<std::ptrdiff_t>(count));
  int max_label = -1;
  for (auto l : data.labels) max_label = std::max<int>(max_label, l);
  data.classes = max_label + 1;
  return data;
}

Dataset synth_blobs(int classes, std::size_t n, std::size_t dim, std::uint64_t seed,
                    double noise) {
  if (classes < 1 || classes > 256 || dim == 0) {
    throw Error(Errc::kInvalidArgument, "synth_blobs needs 1..256 classes and dim > 0");
  }
  Rng rng(seed);
  std::vector<double> centers(static_cast<std::size_t>(classes) * dim);
  for (double& c : centers) c = 0.25 + 0.5 * rng.uniform();

  std::vector<std::uint8_t> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<std::uint8_t>(i % classes);
  for (std::size_t i = n; i > 1; --i) {
    std::swap(labels[i - 1], labels[static_cast<std::size_t>(rng.below(i))]);
  }

  Dataset data;
  data.dim = dim;
  data.classes = classes;
  data.labels = std::move(labels);
  data.features.resize(n * dim);
  for (std::size_t i = 0; i < n; ++i) {
    const double* center = centers.data() + static_cast<std::size_t>(data.labels[i]) * dim;
    for (std::size_t j = 0; j < dim; ++j) {
      const double v = center[j] + noise * rng.normal();
      data.features[i * dim + j] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }
  return data;
}

Dataset subset(const Dataset& data, std::span<const std::size_t> indices) {
  Dataset out;
  out.dim = data.dim;
  out.classes = data.classes;
  out.labels.reserve(indices.size());
  out.features.reserve(indices.size() * data.dim);
  for (std::size_t idx : indices) {
    const auto row = data.row(idx);
    out.features.insert(out.features.end(), row.begin(), row.end());
    out.labels.push_back(data.labels[idx]);
  }
  return out;
}

std::pair<Dataset, Dataset> split_head(const Dataset& data, std::size_t head) {
  head = std::min(head, data.size());
  std::vector<std::size_t> first(head);
  std::iota(first.begin(), first.end(), std::size_t{0});
  std::vector<std::size_t> rest(data.size() - head);
  std::iota(rest.begin(), rest.end(), head);
  return {subset(data, first), subset(data, rest)};
}

Partition partition(const Dataset& data, std::size_t clients, PartitionMode mode,
                    std::uint64_t seed) {
  const std::size_t n = data.size();
  if (clients == 0) throw Error(Errc::kInvalidArgument, "need at least one client");
  if (clients > n) {
    throw Error(Errc::kTooManyClients, std::to_string(clients) + " clients for " +
                                           std::to_string(n) + " examples");
  }
  Rng rng(seed);
  Partition part;
  part.mode = mode;
  part.shards.resize(clients);

  // Near-equal contiguous cut of `items` into `pieces` parts.
  auto cut = [](const std::vector<std::size_t>& items, std::size_t pieces) {
    std::vector<std::vector<std::size_t>> out(pieces);
    const std::size_t base = items.size() / pieces;
    const std::size_t extra = items.size() % pieces;
    std::size_t at = 0;
    for (std::size_t p = 0; p < pieces; ++p) {
      const std::size_t len = base + (p < extra ? 1 : 0);
      out[p].assign(items.begin() + static_cast<std::ptrdiff_t>(at),
                    items.begin() + static_cast<std::ptrdiff_t>(at + len));
      at += len;
    }
    return out;
  };

  if (mode == PartitionMode::kIid) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = n; i > 1; --i) {
      std::swap(order[i - 1], order[static_cast<std::size_t>(rng.below(i))]);
    }
    part.shards = cut(order, clients);
    for (auto& shard : part.shards) std::sort(shard.begin(), shard.end());
    return part;
  }

  // Non-IID: group by label, give every present class at least one shard and
  // spread the remaining shards by largest remainder, so no shard straddles
  // two labels.
  std::vector<std::vector<std::size_t>> by_label(static_cast<std::size_t>(data.classes));
  for (std::size_t i = 0; i < n; ++i) by_label[data.labels[i]].push_back(i);
  std::vector<std::size_t> present;
  for (std::size_t c = 0; c < by_label.size(); ++c) {
    if (!by_label[c].empty()) present.push_back(c);
  }
  const std::size_t total_shards = 2 * clients;
  if (present.size() > total_shards) {
    throw Error(Errc::kTooManyClients,
                "non-IID partition needs 2 * clients >= number of classes present");
  }
  if (total_shards > n) {
    throw Error(Errc::kTooManyClients, "non-IID partition needs 2 * clients <= examples");
  }
  std::vector<std::size_t> alloc(by_label.size(), 0);
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t c : present) {
    const double exact = static_cast<double>(total_shards - present.size()) *
                         static_cast<double>(by_label[c].size()) / static_cast<double>(n);
    alloc[c] = 1 + static_cast<std::size_t>(exact);
    assigned += alloc[c];
    remainders.emplace_back(exact - static_cast<double>(alloc[c] - 1), c);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t i = 0; assigned < total_shards; ++i, ++assigned) {
    ++alloc[remainders[i % remainders.size()].second];
  }

  std::vector<std::vector<std::size_t>> shards;
  shards.reserve(total_shards);
  for (std::size_t c : present) {
    const std::size_t pieces = std::min(alloc[c], by_label[c].size());
    for (auto& s : cut(by_label[c], pieces)) shards.push_back(std::move(s));
  }
  // A class smaller than its allotment yields fewer shards; split the
  // largest shards until the count is right.
  while (shards.size() < total_shards) {
    auto largest = std::max_element(shards.begin(), shards.end(), [](const auto& a, const auto& b) {
      return a.size() < b.size();
    });
    auto halves = cut(*largest, 2);
    *largest = std::move(halves[0]);
    shards.push_back(std::move(halves[1]));
  }
  for (std::size_t i = shards.size(); i > 1; --i) {
    std::swap(shards[i - 1], shards[static_cast<std::size_t>(rng.below(i))]);
  }
  for (std::size_t c = 0; c < clients; ++c) {
    auto& dst = part.shards[c];
    dst = std::move(shards[2 * c]);
    dst.insert(dst.end(), shards[2 * c + 1].begin(), shards[2 * c + 1].end());
    std::sort(dst.begin(), dst.end());
  }
  return part;
}

}  // namespace cosgrad
