// Copyright (C) 2026 The instedit Authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include <random>

#include "instedit/dms.hpp"
#include "instedit/ipr.hpp"
#include "instedit/metrics.hpp"
#include "instedit/predictor.hpp"
#include "instedit/scenario.hpp"
#include "instedit/schedule.hpp"

namespace {

using namespace instedit;

CrossAttentionMap softmax_rows(std::size_t side, std::size_t n_ctx) {
    std::mt19937_64 rng(1);
    std::exponential_distribution<double> e(1.0);
    std::vector<double> v(side * side * n_ctx);
    for (std::size_t r = 0; r < side * side; ++r) {
        double sum = 0.0;
        for (std::size_t j = 0; j < n_ctx; ++j) {
            sum += v[r * n_ctx + j] = e(rng);
        }
        for (std::size_t j = 0; j < n_ctx; ++j) {
            v[r * n_ctx + j] /= sum;
        }
    }
    return CrossAttentionMap(side, side, n_ctx, std::move(v));
}

void BM_ApplyIpr(benchmark::State& state) {
    const auto side = static_cast<std::size_t>(state.range(0));
    const auto map = softmax_rows(side, kDefaultContextLength);
    BinaryMask mask(side, side, 0);
    for (std::size_t y = 0; y < side / 2; ++y) {
        for (std::size_t x = 0; x < side; ++x) {
            mask.at(y, x) = 1;
        }
    }
    const auto layout = TokenLayout::for_text_tokens(6, kDefaultContextLength);
    for (auto _ : state) {
        benchmark::DoNotOptimize(apply_ipr(map, mask, layout, IprConfig{}, 0, 50, 50.0, 50.0));
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(map.rows()));
}
BENCHMARK(BM_ApplyIpr)->Arg(16)->Arg(32)->Arg(64);

void BM_DdimRoundTrip(benchmark::State& state) {
    const auto sched = NoiseSchedule::linear_beta();
    const ConstantPredictor eps(0.1);
    LatentSequence z0({4, 32, 32, 4});
    for (std::size_t i = 0; i < z0.size(); ++i) {
        z0[i] = static_cast<double>(i % 17) / 17.0;
    }
    const auto steps = static_cast<std::size_t>(state.range(0));
    const auto grid = sched.with_sampling_steps(steps);
    for (auto _ : state) {
        const auto traj = invert_sequence(z0, eps, sched, steps);
        benchmark::DoNotOptimize(denoise_sequence(traj.back(), eps, grid, Caption::empty(), 1.0, steps));
    }
}
BENCHMARK(BM_DdimRoundTrip)->Arg(50)->Unit(benchmark::kMillisecond);

void BM_EditToyScenario(benchmark::State& state) {
    const auto sched = NoiseSchedule::linear_beta();
    const auto sc = make_two_instance_scenario(1);
    const ToyGaussianPredictor p(sc.registry, sched);
    SamplingPlan plan;
    plan.threads = static_cast<std::size_t>(state.range(0));
    for (auto _ : state) {
        benchmark::DoNotOptimize(run_edit(sc.source, sc.edits, plan, p, sched));
    }
}
BENCHMARK(BM_EditToyScenario)->Arg(1)->Arg(2)->Unit(benchmark::kMillisecond);

void BM_EditAttention(benchmark::State& state) {
    const auto sched = NoiseSchedule::linear_beta();
    const auto sc = make_two_instance_scenario(1, 2);
    SamplingPlan plan;
    TinyAttentionConfig tc;
    tc.channels = 3;
    const auto p = TinyAttentionPredictor(sched, tc).with_attention_hook(ipr_attention_hook(plan.ipr));
    for (auto _ : state) {
        benchmark::DoNotOptimize(run_edit(sc.source, sc.edits, plan, p, sched));
    }
}
BENCHMARK(BM_EditAttention)->Unit(benchmark::kMillisecond);

void BM_Ssim(benchmark::State& state) {
    const auto side = static_cast<std::size_t>(state.range(0));
    Image a(side, side, 3);
    Image b(side, side, 3);
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        a.data[i] = static_cast<std::uint8_t>(i * 31);
        b.data[i] = static_cast<std::uint8_t>(i * 31 + i % 7);
    }
    for (auto _ : state) {
        benchmark::DoNotOptimize(ssim(a, b));
    }
}
BENCHMARK(BM_Ssim)->Arg(64)->Arg(256);

}  // namespace

BENCHMARK_MAIN();
