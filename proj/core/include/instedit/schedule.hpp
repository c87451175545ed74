// Copyright (C) 2026 The instedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "instedit/latent.hpp"

namespace instedit {

class NoisePredictor;
class Caption;

/// Cumulative noise coefficients over model timesteps plus the mapping from
/// sampling levels to model timesteps.
///
/// alpha_bar(0) is exactly 1 and the table is strictly decreasing. Sampling
/// level 0 always maps to model timestep 0, so a trajectory denoised down to
/// level 0 ends on the clean-data prediction.
class NoiseSchedule {
public:
    /// Linear beta ramp over `model_steps` training timesteps.
    static NoiseSchedule linear_beta(std::size_t model_steps = 1000, double beta_start = 8.5e-4,
                                     double beta_end = 1.2e-2);

    /// Validates and wraps an explicit table; the sampling map is the identity.
    static NoiseSchedule from_alpha_bar(std::vector<double> alpha_bar);

    /// Reads one decimal per line, line index = model timestep.
    static NoiseSchedule load_table(const std::filesystem::path& path);

    /// Same table, `n` sampling levels with a uniform stride of model_steps / n.
    /// Level k >= 1 maps to 1 + stride * (k - 1).
    NoiseSchedule with_sampling_steps(std::size_t n) const;

    std::size_t model_steps() const { return alpha_bar_.size() - 1; }
    std::size_t sampling_steps() const { return timestep_map_.size() - 1; }

    std::span<const double> alpha_bar_table() const { return alpha_bar_; }
    std::span<const int> timestep_map() const { return timestep_map_; }

    double alpha_bar(int model_timestep) const;
    int model_timestep(std::size_t level) const;
    double alpha_at_level(std::size_t level) const { return alpha_bar(model_timestep(level)); }

private:
    NoiseSchedule() = default;

    std::vector<double> alpha_bar_;
    std::vector<int> timestep_map_;
};

/// Coefficients of one DDIM transition between adjacent levels.
struct AlphaPair {
    double prev = 1.0;     // alpha_bar at level t-1
    double current = 1.0;  // alpha_bar at level t
};

/// Throws ConfigError unless 1 <= level <= sampling_steps().
AlphaPair alpha_pair(const NoiseSchedule& schedule, std::size_t level);

/// x0 = (z_t - sqrt(1-a_t) eps) / sqrt(a_t);  z_{t-1} = sqrt(a_{t-1}) x0 + sqrt(1-a_{t-1}) eps.
LatentSequence ddim_denoise_step(const LatentSequence& z_t, const LatentSequence& eps, AlphaPair alphas);
LatentSequence ddim_denoise_step(const LatentSequence& z_t, const LatentSequence& eps, std::size_t level,
                                 const NoiseSchedule& schedule);

/// Exact algebraic inverse of ddim_denoise_step for a fixed eps.
LatentSequence ddim_invert_step(const LatentSequence& z_prev, const LatentSequence& eps, AlphaPair alphas);
LatentSequence ddim_invert_step(const LatentSequence& z_prev, const LatentSequence& eps, std::size_t level,
                                const NoiseSchedule& schedule);

/// eps_uncond + scale * (eps_cond - eps_uncond).
LatentSequence cfg_combine(const LatentSequence& eps_uncond, const LatentSequence& eps_cond, double scale);

/// DDIM inversion of z0 over `n_steps` uniformly strided levels with the empty
/// caption at guidance scale 1. The predictor is evaluated on the lower level's
/// latent. Entry k of the result lives at level k; entry 0 is a copy of z0.
std::vector<LatentSequence> invert_sequence(const LatentSequence& z0, const NoisePredictor& predictor,
                                            const NoiseSchedule& schedule, std::size_t n_steps);

/// Plain guided DDIM denoising of `z` on `grid` from level `from_level` down to
/// `to_level`. Scale 1 skips the unconditional call.
LatentSequence denoise_sequence(const LatentSequence& z, const NoisePredictor& predictor, const NoiseSchedule& grid,
                                const Caption& caption, double cfg_scale, std::size_t from_level,
                                std::size_t to_level = 0);

}  // namespace instedit
