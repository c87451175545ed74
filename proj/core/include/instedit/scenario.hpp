// Copyright (C) 2026 The instedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "instedit/dms.hpp"
#include "instedit/manifest.hpp"
#include "instedit/predictor.hpp"

namespace instedit {

/// Two disjoint moving boxes over a seeded background, with sigma-0 Gaussian
/// targets: the empty caption maps to the source latents themselves and each
/// instance caption to a constant colour.
struct ToyScenario {
    LatentSequence source;  // z0; every value is an exact 8-bit level
    std::vector<InstanceEdit> edits;
    std::vector<std::string> source_captions;  // per instance
    std::vector<std::vector<double>> target_means;  // per instance, one value per channel
    GaussianRegistry registry;
    std::string global_source_caption;
    std::string global_target_caption;
};

/// Shape is frames x 16 x 16 x 3 by default; `frames` must be in [1, 8].
ToyScenario make_two_instance_scenario(std::uint64_t seed, std::size_t frames = 4);

/// Same scenario with the two instance captions exchanged.
ToyScenario swap_captions(const ToyScenario& scenario);

/// Writes frames/, masks/, registry.json and manifest.json under `dir`;
/// returns the manifest path.
std::filesystem::path write_scenario(const ToyScenario& scenario, const std::filesystem::path& dir);

}  // namespace instedit
