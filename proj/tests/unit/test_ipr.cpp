// Copyright (C) 2026 The instedit Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "instedit/errors.hpp"
#include "instedit/ipr.hpp"

using namespace instedit;

namespace {

// Layout [S, T1, T2, E, P].
TokenLayout five() { return TokenLayout::for_text_tokens(2, 5); }

std::vector<double> row(std::initializer_list<double> v) { return v; }

void check_row(const std::vector<double>& got, std::initializer_list<double> want) {
    REQUIRE(got.size() == want.size());
    std::size_t i = 0;
    for (double w : want) {
        CHECK(got[i++] == doctest::Approx(w).epsilon(1e-12));
    }
}

CrossAttentionMap random_map(std::size_t h, std::size_t w, std::size_t n_ctx, std::mt19937_64& rng) {
    std::exponential_distribution<double> e(1.0);
    std::vector<double> v(h * w * n_ctx);
    for (std::size_t r = 0; r < h * w; ++r) {
        double sum = 0.0;
        for (std::size_t j = 0; j < n_ctx; ++j) {
            v[r * n_ctx + j] = e(rng);
            sum += v[r * n_ctx + j];
        }
        for (std::size_t j = 0; j < n_ctx; ++j) {
            v[r * n_ctx + j] /= sum;
        }
    }
    return CrossAttentionMap(h, w, n_ctx, std::move(v));
}

}  // namespace

TEST_CASE("token layout") {
    const auto l = TokenLayout::for_text_tokens(3, 8);
    CHECK(l.index_s == 0);
    CHECK(l.indices_t == std::vector<std::size_t>{1, 2, 3});
    CHECK(l.index_e == 4);
    CHECK(l.indices_p == std::vector<std::size_t>{5, 6, 7});
    CHECK_NOTHROW(l.validate());
    CHECK_THROWS_AS(TokenLayout::for_text_tokens(0, 8), DataError);
    CHECK_THROWS_AS(TokenLayout::for_text_tokens(7, 8), DataError);
    auto broken = l;
    broken.indices_p = {5, 6};
    CHECK_THROWS_AS(broken.validate(), DataError);
}

TEST_CASE("fractions of the step count") {
    CHECK(steps_in_fraction(0.1, 50) == 5);
    CHECK(steps_in_fraction(0.4, 50) == 20);
    CHECK(steps_in_fraction(0.1, 7) == 1);
    CHECK(steps_in_fraction(0.0, 50) == 0);
    CHECK(steps_in_fraction(1.0, 50) == 50);
    const IprConfig cfg;
    CHECK(ipr_active(4, 50, cfg));
    CHECK_FALSE(ipr_active(5, 50, cfg));
}

TEST_CASE("warm-up decay") {
    const IprConfig cfg;
    CHECK(warmup_value(0, 50, cfg) == 0.5);
    CHECK(warmup_value(2, 50, cfg) == doctest::Approx(0.3).epsilon(1e-15));
    for (std::size_t k = 5; k < 50; ++k) {
        CHECK(warmup_value(k, 50, cfg) == 0.0);
    }
    IprConfig none = cfg;
    none.warmup_fraction = 0.0;
    CHECK(warmup_value(0, 50, none) == 0.0);
}

TEST_CASE("lambda_s") {
    const std::vector<double> a{0.6, 0.5, 0.7};
    CHECK(compute_lambda_s(a, 981.0, 981.0, 0.0) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(compute_lambda_s(a, 0.0, 981.0, 0.3) == 0.0);
    const std::vector<double> one{0.4};
    CHECK(compute_lambda_s(one, 25.0, 50.0, 0.1) == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(compute_lambda_s({}, 25.0, 50.0, 0.1) == 0.0);
}

TEST_CASE("outside rule") {
    auto r = row({0.5, 0.2, 0.1, 0.1, 0.1});
    redistribute_row_outside(r, five());
    check_row(r, {0.9, 0, 0, 0, 0.1});
    const auto once = r;
    redistribute_row_outside(r, five());
    CHECK(r == once);

    auto pad = row({0.0, 0.0, 0.0, 0.0, 1.0});
    redistribute_row_outside(pad, five());
    CHECK(pad == row({0.0, 0.0, 0.0, 0.0, 1.0}));
}

TEST_CASE("inside rule") {
    auto r = row({0.5, 0.2, 0.1, 0.1, 0.1});
    redistribute_row_inside(r, five(), 0.2, 0.5);
    check_row(r, {0.3, 0.25, 0.15, 0.2, 0.1});

    auto same = row({0.5, 0.2, 0.1, 0.1, 0.1});
    redistribute_row_inside(same, five(), 0.0, 0.5);
    CHECK(same == row({0.5, 0.2, 0.1, 0.1, 0.1}));

    auto clamp = row({0.05, 0.3, 0.3, 0.25, 0.1});
    redistribute_row_inside(clamp, five(), 0.2, 0.5);
    check_row(clamp, {0.0, 0.3125, 0.3125, 0.275, 0.1});
}

TEST_CASE("apply_ipr on whole maps") {
    std::mt19937_64 rng(1);
    const auto layout = five();
    const auto map = random_map(2, 3, 5, rng);
    const IprConfig cfg;

    SUBCASE("inactive window passes through") {
        const auto out = apply_ipr(map, FeatureMask(2, 3, 1), layout, cfg, 5, 50, 900.0, 981.0);
        CHECK(out == map);
    }
    SUBCASE("empty mask zeroes every T and E entry") {
        const auto out = apply_ipr(map, FeatureMask(2, 3, 0), layout, cfg, 0, 50, 981.0, 981.0);
        for (std::size_t i = 0; i < out.rows(); ++i) {
            CHECK(out.at(i, 1) == 0.0);
            CHECK(out.at(i, 2) == 0.0);
            CHECK(out.at(i, 3) == 0.0);
        }
    }
    SUBCASE("full mask only moves start-token mass") {
        const auto detail = apply_ipr_detailed(map, FeatureMask(2, 3, 1), layout, cfg, {1, 50, 900.0, 981.0});
        REQUIRE(detail.active);
        for (std::size_t i = 0; i < map.rows(); ++i) {
            const double drop = map.at(i, 0) - detail.map.at(i, 0);
            CHECK(drop >= 0.0);
            CHECK(drop <= detail.lambda_s + 1e-15);
            CHECK(detail.map.at(i, 4) == map.at(i, 4));
        }
    }
    SUBCASE("mask size mismatch") {
        CHECK_THROWS_AS(apply_ipr(map, FeatureMask(3, 2, 1), layout, cfg, 0, 50, 1.0, 1.0), DataError);
    }
}

TEST_CASE("inside rows gain exactly lambda_s * lambda_r on text tokens") {
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t n_text = 1 + rng() % 6;
        const std::size_t n_ctx = n_text + 2 + rng() % 5;
        const auto layout = TokenLayout::for_text_tokens(n_text, n_ctx);
        const auto map = random_map(3, 3, n_ctx, rng);
        FeatureMask mask(3, 3);
        for (auto& b : mask.bits) {
            b = rng() % 2;
        }
        IprConfig cfg;
        cfg.lambda = u(rng);
        cfg.lambda_r = u(rng);
        const auto detail = apply_ipr_detailed(map, mask, layout, cfg, {0, 10, u(rng) * 981.0, 981.0});
        for (std::size_t i = 0; i < map.rows(); ++i) {
            if (!mask.bits[i] || map.at(i, 0) < detail.lambda_s) {
                continue;
            }
            double before = 0.0;
            double after = 0.0;
            for (auto j : layout.indices_t) {
                before += map.at(i, j);
                after += detail.map.at(i, j);
            }
            REQUIRE(std::abs((after - before) - detail.lambda_s * cfg.lambda_r) <= 1e-12);
        }
    }
}
