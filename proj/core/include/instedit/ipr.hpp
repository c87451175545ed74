// Copyright (C) 2026 The instedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "instedit/image.hpp"

namespace instedit {

/// Column roles of a tokenized caption: start token at 0, text tokens
/// 1..n, end token at n + 1, padding up to the context length.
struct TokenLayout {
    std::size_t index_s = 0;
    std::vector<std::size_t> indices_t;
    std::size_t index_e = 0;
    std::vector<std::size_t> indices_p;
    std::size_t n_ctx = 0;

    /// Requires 1 <= n_text <= n_ctx - 2.
    static TokenLayout for_text_tokens(std::size_t n_text, std::size_t n_ctx);

    std::size_t text_count() const { return indices_t.size(); }

    /// Throws DataError unless the four roles partition [0, n_ctx).
    void validate() const;
};

/// Post-softmax attention probabilities: one row per feature cell (h * w rows),
/// one column per context token. Rows are probability vectors.
class CrossAttentionMap {
public:
    CrossAttentionMap() = default;
    CrossAttentionMap(std::size_t height, std::size_t width, std::size_t n_ctx);
    CrossAttentionMap(std::size_t height, std::size_t width, std::size_t n_ctx, std::vector<double> values);

    std::size_t rows() const { return height_ * width_; }
    std::size_t cols() const { return n_ctx_; }
    std::pair<std::size_t, std::size_t> feature_shape() const { return {height_, width_}; }

    std::span<double> row(std::size_t i) { return std::span<double>(values_).subspan(i * n_ctx_, n_ctx_); }
    std::span<const double> row(std::size_t i) const {
        return std::span<const double>(values_).subspan(i * n_ctx_, n_ctx_);
    }
    double at(std::size_t i, std::size_t j) const { return values_[i * n_ctx_ + j]; }
    double& at(std::size_t i, std::size_t j) { return values_[i * n_ctx_ + j]; }

    std::span<const double> values() const { return values_; }

    /// Throws NumericalError if an entry is negative or a row sum is off by more than `tol`.
    void validate(double tol = 1e-6) const;

    bool operator==(const CrossAttentionMap&) const = default;

private:
    std::size_t height_ = 0;
    std::size_t width_ = 0;
    std::size_t n_ctx_ = 0;
    std::vector<double> values_;
};

/// Mask at attention-feature resolution; row i of the map pairs with bit i.
using FeatureMask = BinaryMask;

struct IprConfig {
    double lambda = 0.5;            // warm-up magnitude
    double lambda_r = 0.5;          // share of the removed start-token mass given to text tokens
    double warmup_fraction = 0.1;   // fraction of denoising steps over which the warm-up decays
    double ipr_fraction = 0.1;      // fraction of denoising steps with redistribution enabled

    void validate() const;
    bool operator==(const IprConfig&) const = default;
};

/// ceil(fraction * total), robust to representation error in the product.
std::size_t steps_in_fraction(double fraction, std::size_t total);

/// lambda * max(0, 1 - step_index / (warmup_fraction * total_steps)).
double warmup_value(std::size_t step_index, std::size_t total_steps, const IprConfig& cfg);

bool ipr_active(std::size_t step_index, std::size_t total_steps, const IprConfig& cfg);

/// (t / horizon) * (min(mean(a_is), min(a_is)) + warmup). Empty input yields 0.
double compute_lambda_s(std::span<const double> a_is, double t, double horizon, double warmup);

/// Moves all text and end-token mass onto the start token. Padding is untouched.
void redistribute_row_outside(std::span<double> row, const TokenLayout& layout);

/// Takes delta = min(lambda_s, row[S]) from the start token and gives
/// delta * lambda_r / N_T to every text token and delta * (1 - lambda_r) to the end token.
void redistribute_row_inside(std::span<double> row, const TokenLayout& layout, double lambda_s, double lambda_r);

/// Where in the denoising run a map is being rewritten.
struct IprStep {
    std::size_t step_index = 0;   // 0-based count from the start of denoising
    std::size_t total_steps = 1;  // number of denoising steps T
    double t = 0.0;               // current sampling level
    double horizon = 1.0;         // level horizon the lambda_s factor divides by
};

struct IprOutcome {
    CrossAttentionMap map;
    bool active = false;
    double lambda_s = 0.0;
    double warmup = 0.0;
};

IprOutcome apply_ipr_detailed(const CrossAttentionMap& map, const FeatureMask& mask, const TokenLayout& layout,
                              const IprConfig& cfg, const IprStep& step);

CrossAttentionMap apply_ipr(const CrossAttentionMap& map, const FeatureMask& mask, const TokenLayout& layout,
                            const IprConfig& cfg, std::size_t step_index, std::size_t total_steps, double t,
                            double horizon);

}  // namespace instedit
