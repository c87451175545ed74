// Copyright (C) 2026 The instedit Authors
// SPDX-License-Identifier: Apache-2.0

#include "instedit/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

#include "instedit/errors.hpp"
#include "json.hpp"

namespace instedit {

using nlohmann::json;

namespace {

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
    T value{};
    const auto* first = text.data();
    const auto* last = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(first, last, value);
    INSTEDIT_CHECK(ec == std::errc() && ptr == last && !text.empty(), ConfigError,
                   "invalid value '" + std::string(text) + "' for " + std::string(key));
    if constexpr (std::is_floating_point_v<T>) {
        INSTEDIT_CHECK(std::isfinite(value), ConfigError, "non-finite value for " + std::string(key));
    }
    return value;
}

struct KeySpec {
    const char* name;
    const char* description;
    std::function<json(const RunConfig&)> get;
    std::function<void(RunConfig&, std::string_view key, std::string_view)> set;
};

#define INSTEDIT_NUMBER_KEY(NAME, DESC, TYPE, FIELD)                                         \
    KeySpec {                                                                                \
        NAME, DESC, [](const RunConfig& c) { return json(c.FIELD); },                        \
            [](RunConfig& c, std::string_view k, std::string_view v) { c.FIELD = parse_number<TYPE>(k, v); } \
    }
#define INSTEDIT_STRING_KEY(NAME, DESC, FIELD)                                               \
    KeySpec {                                                                                \
        NAME, DESC, [](const RunConfig& c) { return json(c.FIELD); },                        \
            [](RunConfig& c, std::string_view, std::string_view v) { c.FIELD = std::string(v); } \
    }

const std::vector<KeySpec>& specs() {
    static const std::vector<KeySpec> table = {
        INSTEDIT_NUMBER_KEY("steps", "DDIM denoising steps T", std::size_t, plan.total_steps),
        INSTEDIT_NUMBER_KEY("inversion_steps", "DDIM inversion steps (empty caption)", std::size_t,
                            plan.inversion_steps),
        INSTEDIT_NUMBER_KEY("cfg_scale", "classifier-free guidance scale", double, plan.cfg_scale),
        INSTEDIT_NUMBER_KEY("sns_fraction", "leading share of steps sampled per instance branch", double,
                            plan.sns_fraction),
        INSTEDIT_NUMBER_KEY("reinversion_steps", "re-inversion steps after latent fusion", std::size_t,
                            plan.reinversion_steps),
        INSTEDIT_NUMBER_KEY("ipr.lambda", "redistribution strength", double, plan.ipr.lambda),
        INSTEDIT_NUMBER_KEY("ipr.lambda_r", "share of moved mass sent to the start token", double,
                            plan.ipr.lambda_r),
        INSTEDIT_NUMBER_KEY("ipr.warmup_fraction", "leading share of steps with warm-up boost", double,
                            plan.ipr.warmup_fraction),
        INSTEDIT_NUMBER_KEY("ipr.fraction", "leading share of steps with redistribution", double,
                            plan.ipr.ipr_fraction),
        INSTEDIT_NUMBER_KEY("seed", "seed for generated scenarios", std::uint64_t, plan.seed),
        INSTEDIT_NUMBER_KEY("threads", "worker cap", std::size_t, plan.threads),
        INSTEDIT_STRING_KEY("predictor", "noise predictor: gaussian | attention", predictor),
        INSTEDIT_STRING_KEY("registry", "Gaussian target registry (JSON)", registry),
        INSTEDIT_STRING_KEY("manifest", "input manifest (JSON)", manifest),
        INSTEDIT_STRING_KEY("out", "output directory", out),
        INSTEDIT_STRING_KEY("embeddings", "precomputed embeddings for metrics (f32le + sidecar)", embeddings),
        INSTEDIT_STRING_KEY("edited", "edited frames directory for metrics (default <out>/frames)", edited),
        INSTEDIT_STRING_KEY("trajectory", "inversion directory from `invert` (default: invert in-process)",
                            trajectory),
        INSTEDIT_NUMBER_KEY("schedule.model_steps", "model timesteps", std::size_t, schedule.model_steps),
        INSTEDIT_NUMBER_KEY("schedule.beta_start", "first linear beta", double, schedule.beta_start),
        INSTEDIT_NUMBER_KEY("schedule.beta_end", "last linear beta", double, schedule.beta_end),
        INSTEDIT_STRING_KEY("schedule.alpha_table", "alpha-bar table overriding the linear betas",
                            schedule.alpha_table),
    };
    return table;
}

#undef INSTEDIT_NUMBER_KEY
#undef INSTEDIT_STRING_KEY

std::string display(const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); }

void flatten(const json& node, const std::string& prefix, std::vector<std::pair<std::string, std::string>>& out) {
    if (node.is_object()) {
        for (const auto& [k, v] : node.items()) {
            flatten(v, prefix.empty() ? k : prefix + "." + k, out);
        }
        return;
    }
    INSTEDIT_CHECK(!node.is_array() && !node.is_null(), ConfigError, "config key " + prefix + " needs a scalar value");
    out.emplace_back(prefix, display(node));
}

}  // namespace

void RunConfig::validate() const {
    plan.validate();
    INSTEDIT_CHECK(predictor == "gaussian" || predictor == "attention", ConfigError,
                   "predictor must be gaussian or attention, got " + predictor);
    INSTEDIT_CHECK(schedule.model_steps >= 1, ConfigError, "schedule.model_steps must be >= 1");
    INSTEDIT_CHECK(!out.empty(), ConfigError, "out must not be empty");
}

NoiseSchedule RunConfig::make_schedule() const {
    if (!schedule.alpha_table.empty()) {
        return NoiseSchedule::load_table(schedule.alpha_table);
    }
    return NoiseSchedule::linear_beta(schedule.model_steps, schedule.beta_start, schedule.beta_end);
}

std::string RunConfig::to_json() const {
    json doc = json::object();
    for (const auto& s : specs()) {
        doc[s.name] = s.get(*this);
    }
    return doc.dump(2);
}

const std::vector<ConfigKey>& config_keys() {
    static const std::vector<ConfigKey> keys = [] {
        const RunConfig defaults;
        std::vector<ConfigKey> out;
        for (const auto& s : specs()) {
            out.push_back({s.name, s.description, display(s.get(defaults))});
        }
        return out;
    }();
    return keys;
}

void apply_setting(RunConfig& config, std::string_view key, std::string_view value) {
    const auto& table = specs();
    const auto it = std::find_if(table.begin(), table.end(), [&](const KeySpec& s) { return key == s.name; });
    INSTEDIT_CHECK(it != table.end(), ConfigError, "unknown config key " + std::string(key));
    it->set(config, key, value);
}

void apply_assignment(RunConfig& config, std::string_view assignment) {
    const auto eq = assignment.find('=');
    INSTEDIT_CHECK(eq != std::string_view::npos && eq > 0, ConfigError,
                   "expected key=value, got '" + std::string(assignment) + "'");
    apply_setting(config, assignment.substr(0, eq), assignment.substr(eq + 1));
}

void apply_config_json(RunConfig& config, std::string_view json_text) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    INSTEDIT_CHECK(doc.is_object(), ConfigError, "config must be a JSON object");
    std::vector<std::pair<std::string, std::string>> flat;
    flatten(doc, "", flat);
    for (const auto& [k, v] : flat) {
        apply_setting(config, k, v);
    }
}

void apply_config_file(RunConfig& config, const std::filesystem::path& path) {
    std::ifstream in(path);
    INSTEDIT_CHECK(in.good(), ConfigError, "cannot open config " + path.string());
    std::ostringstream text;
    text << in.rdbuf();
    apply_config_json(config, text.str());
}

std::string config_help() {
    std::size_t width = 0;
    for (const auto& k : config_keys()) {
        width = std::max(width, k.name.size());
    }
    std::ostringstream out;
    out << "Config keys (--set key=value; precedence --set > --config file > defaults):\n";
    for (const auto& k : config_keys()) {
        out << "  " << k.name << std::string(width - k.name.size() + 2, ' ') << k.description << " [default: "
            << (k.default_value.empty() ? "\"\"" : k.default_value) << "]\n";
    }
    return out.str();
}

}  // namespace instedit
