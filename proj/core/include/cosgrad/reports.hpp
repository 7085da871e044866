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

#include <iosfwd>
#include <span>
#include <string>

#include "cosgrad/fedsim.hpp"

namespace cosgrad {

inline constexpr const char* kReportCsvHeader = "round,accuracy,loss,bytes,cumulative_bytes";
inline constexpr const char* kAblationCsvHeader = "epoch,accuracy,loss";

std::string report_csv_row(const RoundReport& report);
void write_report_csv(std::ostream& out, std::span<const RoundReport> reports);

/// One JSON object per line, including the selected clients and timing.
std::string report_json_line(const RoundReport& report);

void write_ablation_csv(std::ostream& out, std::span<const AblationPoint> trace);

}  // namespace cosgrad
