// Copyright (C) 2026 The instedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "instedit/dms.hpp"
#include "instedit/schedule.hpp"

namespace instedit {

struct ScheduleConfig {
    std::size_t model_steps = 1000;
    double beta_start = 8.5e-4;
    double beta_end = 1.2e-2;
    std::string alpha_table;  // optional file overriding the linear betas

    bool operator==(const ScheduleConfig&) const = default;
};

/// Everything a command needs. Settings are addressed by dotted keys, see config_keys().
struct RunConfig {
    SamplingPlan plan;
    ScheduleConfig schedule;
    std::string predictor = "gaussian";  // gaussian | attention
    std::string registry;                // Gaussian targets per caption
    std::string manifest;
    std::string out = "instedit_out";
    std::string embeddings;  // precomputed embedding file for metrics
    std::string edited;      // edited frames directory for metrics; default <out>/frames
    std::string trajectory;  // inversion directory written by `invert`; empty inverts in-process

    void validate() const;
    NoiseSchedule make_schedule() const;

    /// Flat {"key": value} snapshot of every setting.
    std::string to_json() const;

    bool operator==(const RunConfig&) const = default;
};

struct ConfigKey {
    std::string name;
    std::string description;
    std::string default_value;
};

/// Every recognised key with its description and default.
const std::vector<ConfigKey>& config_keys();

/// Sets one key from its textual value. Unknown keys and unparsable values throw ConfigError.
void apply_setting(RunConfig& config, std::string_view key, std::string_view value);

/// "key=value" form used by --set.
void apply_assignment(RunConfig& config, std::string_view assignment);

/// Applies a JSON document on top of `config`. Nested objects address dotted
/// keys: {"ipr": {"lambda": 0.3}} sets ipr.lambda.
void apply_config_json(RunConfig& config, std::string_view json_text);
void apply_config_file(RunConfig& config, const std::filesystem::path& path);

/// Key table as aligned text for --help.
std::string config_help();

}  // namespace instedit
