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

#include "cosgrad/reports.hpp"

#include <cstdio>
#include <ostream>

#include "json.hpp"

namespace cosgrad {

std::string report_csv_row(const RoundReport& r) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%d,%.6f,%.6f,%zu,%zu", r.round, r.accuracy, r.loss, r.bytes,
                r.cumulative_bytes);
  return buf;
}

void write_report_csv(std::ostream& out, std::span<const RoundReport> reports) {
  out << kReportCsvHeader << '\n';
  for (const auto& r : reports) out << report_csv_row(r) << '\n';
}

std::string report_json_line(const RoundReport& r) {
  nlohmann::json j{{"round", r.round},
                   {"clients", r.clients},
                   {"accuracy", r.accuracy},
                   {"loss", r.loss},
                   {"train_loss", r.train_loss},
                   {"bytes", r.bytes},
                   {"cumulative_bytes", r.cumulative_bytes},
                   {"wall_ms", r.wall_ms}};
  return j.dump();
}

void write_ablation_csv(std::ostream& out, std::span<const AblationPoint> trace) {
  out << kAblationCsvHeader << '\n';
  char buf[96];
  for (const auto& p : trace) {
    std::snprintf(buf, sizeof buf, "%d,%.6f,%.6f", p.epoch, p.accuracy, p.loss);
    out << buf << '\n';
  }
}

}  // namespace cosgrad
