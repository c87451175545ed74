// Copyright (C) 2026 The instedit Authors
// SPDX-License-Identifier: Apache-2.0

#include "instedit/schedule.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

#include "instedit/caption.hpp"
#include "instedit/errors.hpp"
#include "instedit/predictor.hpp"

namespace instedit {

NoiseSchedule NoiseSchedule::linear_beta(std::size_t model_steps, double beta_start, double beta_end) {
    INSTEDIT_CHECK(model_steps >= 1, ConfigError, "schedule needs at least one model step");
    INSTEDIT_CHECK(beta_start > 0.0 && beta_end < 1.0 && beta_start <= beta_end, ConfigError,
                   "beta range must satisfy 0 < beta_start <= beta_end < 1");
    std::vector<double> alpha_bar(model_steps + 1);
    alpha_bar[0] = 1.0;
    double prod = 1.0;
    for (std::size_t i = 0; i < model_steps; ++i) {
        const double beta = model_steps == 1
                                ? beta_start
                                : beta_start + (beta_end - beta_start) * static_cast<double>(i) /
                                                   static_cast<double>(model_steps - 1);
        prod *= 1.0 - beta;
        alpha_bar[i + 1] = prod;
    }
    return from_alpha_bar(std::move(alpha_bar));
}

NoiseSchedule NoiseSchedule::from_alpha_bar(std::vector<double> alpha_bar) {
    INSTEDIT_CHECK(alpha_bar.size() >= 2, ConfigError, "alpha_bar table needs at least two entries");
    INSTEDIT_CHECK(alpha_bar[0] == 1.0, ConfigError, "alpha_bar[0] must be exactly 1");
    for (std::size_t t = 1; t < alpha_bar.size(); ++t) {
        INSTEDIT_CHECK(alpha_bar[t] > 0.0 && alpha_bar[t] <= 1.0, ConfigError,
                       "alpha_bar[" + std::to_string(t) + "] outside (0, 1]");
        INSTEDIT_CHECK(alpha_bar[t] < alpha_bar[t - 1], ConfigError,
                       "alpha_bar must be strictly decreasing (index " + std::to_string(t) + ")");
    }
    NoiseSchedule s;
    s.alpha_bar_ = std::move(alpha_bar);
    s.timestep_map_.resize(s.alpha_bar_.size());
    for (std::size_t t = 0; t < s.timestep_map_.size(); ++t) {
        s.timestep_map_[t] = static_cast<int>(t);
    }
    return s;
}

NoiseSchedule NoiseSchedule::load_table(const std::filesystem::path& path) {
    std::ifstream in(path);
    INSTEDIT_CHECK(in.good(), DataError, "cannot open alpha_bar table " + path.string());
    std::vector<double> values;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        std::istringstream ls(line);
        double v = 0.0;
        ls >> v;
        INSTEDIT_CHECK(!ls.fail(), DataError,
                       "alpha_bar table " + path.string() + ": bad value on line " + std::to_string(line_no));
        values.push_back(v);
    }
    return from_alpha_bar(std::move(values));
}

NoiseSchedule NoiseSchedule::with_sampling_steps(std::size_t n) const {
    INSTEDIT_CHECK(n >= 1 && n <= model_steps(), ConfigError,
                   "sampling steps must be in [1, " + std::to_string(model_steps()) + "], got " + std::to_string(n));
    const std::size_t stride = model_steps() / n;
    NoiseSchedule s;
    s.alpha_bar_ = alpha_bar_;
    s.timestep_map_.resize(n + 1);
    s.timestep_map_[0] = 0;
    for (std::size_t k = 1; k <= n; ++k) {
        s.timestep_map_[k] = static_cast<int>(1 + stride * (k - 1));
    }
    return s;
}

double NoiseSchedule::alpha_bar(int model_timestep) const {
    INSTEDIT_CHECK(model_timestep >= 0 && static_cast<std::size_t>(model_timestep) < alpha_bar_.size(), ConfigError,
                   "model timestep " + std::to_string(model_timestep) + " outside schedule");
    return alpha_bar_[static_cast<std::size_t>(model_timestep)];
}

int NoiseSchedule::model_timestep(std::size_t level) const {
    INSTEDIT_CHECK(level < timestep_map_.size(), ConfigError,
                   "sampling level " + std::to_string(level) + " outside schedule of " +
                       std::to_string(sampling_steps()) + " steps");
    return timestep_map_[level];
}

AlphaPair alpha_pair(const NoiseSchedule& schedule, std::size_t level) {
    INSTEDIT_CHECK(level >= 1 && level <= schedule.sampling_steps(), ConfigError,
                   "DDIM level " + std::to_string(level) + " outside [1, " +
                       std::to_string(schedule.sampling_steps()) + "]");
    return {schedule.alpha_at_level(level - 1), schedule.alpha_at_level(level)};
}

namespace {

// z_to = sqrt(a_to) * (z_from - sqrt(1 - a_from) eps) / sqrt(a_from) + sqrt(1 - a_to) eps
LatentSequence ddim_transfer(const LatentSequence& z, const LatentSequence& eps, double a_from, double a_to) {
    require_same_shape(z, eps, "DDIM step latent/noise");
    INSTEDIT_CHECK(a_from > 0.0 && a_from <= 1.0 && a_to > 0.0 && a_to <= 1.0, NumericalError,
                   "alpha_bar outside (0, 1]");
    const double sa_from = std::sqrt(a_from);
    const double sb_from = std::sqrt(1.0 - a_from);
    const double sa_to = std::sqrt(a_to);
    const double sb_to = std::sqrt(1.0 - a_to);
    LatentSequence out(z.shape(), z.timestep());
    for (std::size_t i = 0; i < z.size(); ++i) {
        const double x0 = (z[i] - sb_from * eps[i]) / sa_from;
        out[i] = sa_to * x0 + sb_to * eps[i];
    }
    return out;
}

}  // namespace

LatentSequence ddim_denoise_step(const LatentSequence& z_t, const LatentSequence& eps, AlphaPair alphas) {
    return ddim_transfer(z_t, eps, alphas.current, alphas.prev);
}

LatentSequence ddim_denoise_step(const LatentSequence& z_t, const LatentSequence& eps, std::size_t level,
                                 const NoiseSchedule& schedule) {
    LatentSequence out = ddim_denoise_step(z_t, eps, alpha_pair(schedule, level));
    out.set_timestep(schedule.model_timestep(level - 1));
    return out;
}

LatentSequence ddim_invert_step(const LatentSequence& z_prev, const LatentSequence& eps, AlphaPair alphas) {
    return ddim_transfer(z_prev, eps, alphas.prev, alphas.current);
}

LatentSequence ddim_invert_step(const LatentSequence& z_prev, const LatentSequence& eps, std::size_t level,
                                const NoiseSchedule& schedule) {
    LatentSequence out = ddim_invert_step(z_prev, eps, alpha_pair(schedule, level));
    out.set_timestep(schedule.model_timestep(level));
    return out;
}

LatentSequence cfg_combine(const LatentSequence& eps_uncond, const LatentSequence& eps_cond, double scale) {
    require_same_shape(eps_uncond, eps_cond, "cfg_combine");
    INSTEDIT_CHECK(scale >= 0.0 && std::isfinite(scale), ConfigError, "guidance scale must be finite and >= 0");
    LatentSequence out(eps_cond.shape(), eps_cond.timestep());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = eps_uncond[i] + scale * (eps_cond[i] - eps_uncond[i]);
    }
    return out;
}

std::vector<LatentSequence> invert_sequence(const LatentSequence& z0, const NoisePredictor& predictor,
                                            const NoiseSchedule& schedule, std::size_t n_steps) {
    std::vector<LatentSequence> out;
    out.reserve(n_steps + 1);
    out.push_back(z0);
    out.back().set_timestep(0);
    if (n_steps == 0) {
        return out;
    }
    const NoiseSchedule grid = schedule.with_sampling_steps(n_steps);
    const Caption empty = Caption::empty();
    for (std::size_t level = 1; level <= n_steps; ++level) {
        const LatentSequence& current = out.back();
        const LatentSequence eps = predictor.predict({.latents = current, .caption = empty, .timestep = current.timestep()});
        out.push_back(ddim_invert_step(current, eps, level, grid));
        require_finite(out.back(), "DDIM inversion");
    }
    return out;
}

LatentSequence denoise_sequence(const LatentSequence& z, const NoisePredictor& predictor, const NoiseSchedule& grid,
                                const Caption& caption, double cfg_scale, std::size_t from_level,
                                std::size_t to_level) {
    INSTEDIT_CHECK(to_level <= from_level && from_level <= grid.sampling_steps(), ConfigError,
                   "denoise range outside schedule");
    const Caption empty = Caption::empty();
    LatentSequence current = z;
    current.set_timestep(grid.model_timestep(from_level));
    for (std::size_t level = from_level; level > to_level; --level) {
        const int t = grid.model_timestep(level);
        LatentSequence eps = predictor.predict({.latents = current, .caption = caption, .timestep = t});
        if (cfg_scale != 1.0) {
            const LatentSequence eps_u = predictor.predict({.latents = current, .caption = empty, .timestep = t});
            eps = cfg_combine(eps_u, eps, cfg_scale);
        }
        current = ddim_denoise_step(current, eps, level, grid);
        require_finite(current, "DDIM denoising");
    }
    return current;
}

}  // namespace instedit
