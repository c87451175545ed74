// Copyright (C) 2026 The instedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "instedit/latent.hpp"
#include "instedit/predictor.hpp"

namespace instedit::test {

inline LatentSequence scalar(double v, int timestep = 0) { return LatentSequence({1, 1, 1, 1}, {v}, timestep); }

inline LatentSequence random_latents(LatentShape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<double> v(shape.size());
    for (auto& x : v) {
        x = u(rng);
    }
    return LatentSequence(shape, std::move(v));
}

/// Registry whose every entry is a scalar mean broadcast over the latents.
inline GaussianRegistry scalar_registry(std::initializer_list<std::pair<std::string, double>> means, double sigma) {
    GaussianRegistry reg;
    for (const auto& [caption, mu] : means) {
        reg.add(caption, {{}, {mu}, sigma});
    }
    return reg;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("instedit_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace instedit::test
