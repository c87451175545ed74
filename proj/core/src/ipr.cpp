// Copyright (C) 2026 The instedit Authors
// SPDX-License-Identifier: Apache-2.0

#include "instedit/ipr.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "instedit/errors.hpp"

namespace instedit {

TokenLayout TokenLayout::for_text_tokens(std::size_t n_text, std::size_t n_ctx) {
    INSTEDIT_CHECK(n_text >= 1, DataError, "token layout needs at least one text token");
    INSTEDIT_CHECK(n_ctx >= n_text + 2, DataError,
                   "context length " + std::to_string(n_ctx) + " cannot hold " + std::to_string(n_text) +
                       " text tokens plus start/end");
    TokenLayout layout;
    layout.n_ctx = n_ctx;
    layout.index_s = 0;
    for (std::size_t j = 1; j <= n_text; ++j) {
        layout.indices_t.push_back(j);
    }
    layout.index_e = n_text + 1;
    for (std::size_t j = n_text + 2; j < n_ctx; ++j) {
        layout.indices_p.push_back(j);
    }
    return layout;
}

void TokenLayout::validate() const {
    INSTEDIT_CHECK(!indices_t.empty(), DataError, "token layout has no text tokens");
    INSTEDIT_CHECK(index_s == 0, DataError, "start token must be column 0");
    INSTEDIT_CHECK(index_e == 1 + indices_t.size(), DataError, "end token must follow the text tokens");
    std::vector<int> seen(n_ctx, 0);
    auto mark = [&](std::size_t j) {
        INSTEDIT_CHECK(j < n_ctx, DataError, "token index " + std::to_string(j) + " beyond context");
        INSTEDIT_CHECK(seen[j] == 0, DataError, "token index " + std::to_string(j) + " has two roles");
        seen[j] = 1;
    };
    mark(index_s);
    for (auto j : indices_t) {
        mark(j);
    }
    mark(index_e);
    for (auto j : indices_p) {
        INSTEDIT_CHECK(j > index_e, DataError, "padding must follow the end token");
        mark(j);
    }
    INSTEDIT_CHECK(std::all_of(seen.begin(), seen.end(), [](int s) { return s == 1; }), DataError,
                   "token roles do not cover the context");
}

CrossAttentionMap::CrossAttentionMap(std::size_t height, std::size_t width, std::size_t n_ctx)
    : height_(height), width_(width), n_ctx_(n_ctx), values_(height * width * n_ctx, 0.0) {}

CrossAttentionMap::CrossAttentionMap(std::size_t height, std::size_t width, std::size_t n_ctx,
                                     std::vector<double> values)
    : height_(height), width_(width), n_ctx_(n_ctx), values_(std::move(values)) {
    INSTEDIT_CHECK(values_.size() == height_ * width_ * n_ctx_, DataError,
                   "attention map value count does not match its shape");
}

void CrossAttentionMap::validate(double tol) const {
    for (std::size_t i = 0; i < rows(); ++i) {
        double sum = 0.0;
        for (double v : row(i)) {
            INSTEDIT_CHECK(v >= 0.0, NumericalError, "negative attention probability in row " + std::to_string(i));
            sum += v;
        }
        INSTEDIT_CHECK(std::abs(sum - 1.0) <= tol, NumericalError,
                       "attention row " + std::to_string(i) + " sums to " + std::to_string(sum));
    }
}

void IprConfig::validate() const {
    auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
    INSTEDIT_CHECK(unit(lambda), ConfigError, "ipr.lambda must be in [0, 1]");
    INSTEDIT_CHECK(unit(lambda_r), ConfigError, "ipr.lambda_r must be in [0, 1]");
    INSTEDIT_CHECK(unit(warmup_fraction), ConfigError, "ipr.warmup_fraction must be in [0, 1]");
    INSTEDIT_CHECK(unit(ipr_fraction), ConfigError, "ipr.fraction must be in [0, 1]");
}

std::size_t steps_in_fraction(double fraction, std::size_t total) {
    const double x = fraction * static_cast<double>(total);
    return static_cast<std::size_t>(std::ceil(x - 1e-9));
}

double warmup_value(std::size_t step_index, std::size_t total_steps, const IprConfig& cfg) {
    const double window = cfg.warmup_fraction * static_cast<double>(total_steps);
    if (window <= 0.0) {
        return 0.0;
    }
    return cfg.lambda * std::max(0.0, 1.0 - static_cast<double>(step_index) / window);
}

bool ipr_active(std::size_t step_index, std::size_t total_steps, const IprConfig& cfg) {
    return step_index < steps_in_fraction(cfg.ipr_fraction, total_steps);
}

double compute_lambda_s(std::span<const double> a_is, double t, double horizon, double warmup) {
    if (a_is.empty() || horizon <= 0.0) {
        return 0.0;
    }
    double sum = 0.0;
    double lo = std::numeric_limits<double>::infinity();
    for (double v : a_is) {
        sum += v;
        lo = std::min(lo, v);
    }
    const double mean = sum / static_cast<double>(a_is.size());
    return (t / horizon) * (std::min(mean, lo) + warmup);
}

void redistribute_row_outside(std::span<double> row, const TokenLayout& layout) {
    double moved = 0.0;
    for (auto j : layout.indices_t) {
        moved += row[j];
        row[j] = 0.0;
    }
    moved += row[layout.index_e];
    row[layout.index_e] = 0.0;
    row[layout.index_s] += moved;
}

void redistribute_row_inside(std::span<double> row, const TokenLayout& layout, double lambda_s, double lambda_r) {
    const double delta = std::min(std::max(lambda_s, 0.0), row[layout.index_s]);
    if (delta <= 0.0) {
        return;
    }
    row[layout.index_s] -= delta;
    const double per_text = delta * lambda_r / static_cast<double>(layout.text_count());
    for (auto j : layout.indices_t) {
        row[j] += per_text;
    }
    row[layout.index_e] += delta * (1.0 - lambda_r);
}

IprOutcome apply_ipr_detailed(const CrossAttentionMap& map, const FeatureMask& mask, const TokenLayout& layout,
                              const IprConfig& cfg, const IprStep& step) {
    const auto [h, w] = map.feature_shape();
    INSTEDIT_CHECK(mask.height == h && mask.width == w && mask.bits.size() == map.rows(), DataError,
                   "feature mask is " + std::to_string(mask.height) + "x" + std::to_string(mask.width) +
                       " but attention map is " + std::to_string(h) + "x" + std::to_string(w));
    INSTEDIT_CHECK(layout.n_ctx == map.cols(), DataError, "token layout does not match attention map width");

    IprOutcome out{map, false, 0.0, 0.0};
    if (!ipr_active(step.step_index, step.total_steps, cfg)) {
        return out;
    }
    out.active = true;
    out.warmup = warmup_value(step.step_index, step.total_steps, cfg);

    std::vector<double> inside_s;
    for (std::size_t i = 0; i < map.rows(); ++i) {
        if (mask.bits[i] != 0) {
            inside_s.push_back(map.at(i, layout.index_s));
        }
    }
    out.lambda_s = compute_lambda_s(inside_s, step.t, step.horizon, out.warmup);

    for (std::size_t i = 0; i < map.rows(); ++i) {
        if (mask.bits[i] != 0) {
            redistribute_row_inside(out.map.row(i), layout, out.lambda_s, cfg.lambda_r);
        } else {
            redistribute_row_outside(out.map.row(i), layout);
        }
    }
    return out;
}

CrossAttentionMap apply_ipr(const CrossAttentionMap& map, const FeatureMask& mask, const TokenLayout& layout,
                            const IprConfig& cfg, std::size_t step_index, std::size_t total_steps, double t,
                            double horizon) {
    return apply_ipr_detailed(map, mask, layout, cfg, {step_index, total_steps, t, horizon}).map;
}

}  // namespace instedit
