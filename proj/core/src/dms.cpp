// Copyright (C) 2026 The instedit Authors
// SPDX-License-Identifier: Apache-2.0

#include "instedit/dms.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>

#include "instedit/errors.hpp"
#include "instedit/parallel.hpp"
#include "json.hpp"

namespace instedit {

using nlohmann::json;

void SamplingPlan::validate() const {
    INSTEDIT_CHECK(total_steps >= 1, ConfigError, "steps must be >= 1");
    INSTEDIT_CHECK(inversion_steps >= 1, ConfigError, "inversion_steps must be >= 1");
    INSTEDIT_CHECK(sns_fraction >= 0.0 && sns_fraction <= 1.0, ConfigError, "sns_fraction must be in [0, 1]");
    INSTEDIT_CHECK(cfg_scale >= 0.0 && std::isfinite(cfg_scale), ConfigError, "cfg_scale must be finite and >= 0");
    INSTEDIT_CHECK(threads >= 1, ConfigError, "threads must be >= 1");
    ipr.validate();
}

std::string SamplingPlan::mode_label() const {
    const std::size_t n_sns = sns_steps();
    if (n_sns == 0) {
        return "pure PNS";
    }
    if (n_sns >= total_steps && reinversion_steps == 0) {
        return "pure SNS";
    }
    if (reinversion_steps == 0) {
        return "SNS + PNS (no re-inv)";
    }
    return "SNS + re-inversion + PNS";
}

InvertedTrajectory::InvertedTrajectory(std::vector<LatentSequence> latents) : latents_(std::move(latents)) {
    INSTEDIT_CHECK(!latents_.empty(), DataError, "inverted trajectory is empty");
    std::sort(latents_.begin(), latents_.end(),
              [](const LatentSequence& a, const LatentSequence& b) { return a.timestep() < b.timestep(); });
    for (std::size_t i = 1; i < latents_.size(); ++i) {
        INSTEDIT_CHECK(latents_[i].timestep() != latents_[i - 1].timestep(), DataError,
                       "inverted trajectory repeats timestep " + std::to_string(latents_[i].timestep()));
        INSTEDIT_CHECK(latents_[i].shape() == latents_[0].shape(), DataError,
                       "inverted trajectory entries differ in shape");
        max_gap_ = std::max(max_gap_, latents_[i].timestep() - latents_[i - 1].timestep());
    }
}

const LatentSequence& InvertedTrajectory::at(int model_timestep) const {
    const LatentSequence* best = &latents_.front();
    int best_dist = std::abs(best->timestep() - model_timestep);
    for (const auto& z : latents_) {
        const int d = std::abs(z.timestep() - model_timestep);
        if (d < best_dist) {
            best = &z;
            best_dist = d;
        }
    }
    INSTEDIT_CHECK(best_dist <= max_gap_, DataError,
                   "inverted trajectory has no entry near timestep " + std::to_string(model_timestep));
    return *best;
}

void validate_edits(std::span<const InstanceEdit> edits, const LatentShape& shape) {
    for (const auto& e : edits) {
        INSTEDIT_CHECK(e.masks.size() == shape.frames, DataError,
                       "instance " + e.instance_id + " has " + std::to_string(e.masks.size()) + " mask frames, expected " +
                           std::to_string(shape.frames));
        for (const auto& m : e.masks) {
            INSTEDIT_CHECK(m.height == shape.height && m.width == shape.width, DataError,
                           "instance " + e.instance_id + " mask is " + std::to_string(m.height) + "x" +
                               std::to_string(m.width) + ", latents are " + std::to_string(shape.height) + "x" +
                               std::to_string(shape.width));
            for (auto b : m.bits) {
                INSTEDIT_CHECK(b <= 1, DataError, "instance " + e.instance_id + " mask is not binary");
            }
        }
    }
    for (std::size_t i = 0; i < edits.size(); ++i) {
        for (std::size_t j = i + 1; j < edits.size(); ++j) {
            INSTEDIT_CHECK(edits[i].instance_id != edits[j].instance_id, DataError,
                           "duplicate instance id " + edits[i].instance_id);
            for (std::size_t f = 0; f < shape.frames; ++f) {
                const auto& a = edits[i].masks[f].bits;
                const auto& b = edits[j].masks[f].bits;
                for (std::size_t p = 0; p < a.size(); ++p) {
                    if (a[p] && b[p]) {
                        throw DataError("instance masks overlap: " + edits[i].instance_id + " and " +
                                        edits[j].instance_id + " in frame " + std::to_string(f));
                    }
                }
            }
        }
    }
}

MaskSequence background_mask(std::span<const InstanceEdit> edits, const LatentShape& shape) {
    validate_edits(edits, shape);
    MaskSequence bg(shape.frames, BinaryMask(shape.height, shape.width, 1));
    for (const auto& e : edits) {
        for (std::size_t f = 0; f < shape.frames; ++f) {
            for (std::size_t p = 0; p < shape.pixels(); ++p) {
                bg[f].bits[p] -= e.masks[f].bits[p];
            }
        }
    }
    return bg;
}

namespace {

// dst += src * mask (mask broadcast over channels).
void add_masked(LatentSequence& dst, const LatentSequence& src, const MaskSequence& mask) {
    const auto& s = dst.shape();
    for (std::size_t f = 0; f < s.frames; ++f) {
        for (std::size_t p = 0; p < s.pixels(); ++p) {
            if (mask[f].bits[p] == 0) {
                continue;
            }
            const std::size_t base = (f * s.pixels() + p) * s.channels;
            for (std::size_t c = 0; c < s.channels; ++c) {
                dst[base + c] += src[base + c];
            }
        }
    }
}

SamplingClock clock_for(const DmsContext& ctx, StepPosition pos) {
    return {pos.step_index, ctx.plan.total_steps, pos.level, ctx.plan.total_steps};
}

// Guided noise for one instance caption on latent z.
LatentSequence instance_noise(const LatentSequence& z, const InstanceEdit& edit, const DmsContext& ctx,
                              StepPosition pos, const LatentSequence* uncond, std::vector<LambdaTraceEntry>* trace) {
    const int t = ctx.grid.model_timestep(pos.level);
    LatentSequence cond = ctx.predictor.predict({.latents = z,
                                                 .caption = edit.caption,
                                                 .timestep = t,
                                                 .instance_mask = &edit.masks,
                                                 .clock = clock_for(ctx, pos),
                                                 .lambda_trace = trace});
    if (ctx.plan.cfg_scale == 1.0) {
        return cond;
    }
    if (uncond != nullptr) {
        return cfg_combine(*uncond, cond, ctx.plan.cfg_scale);
    }
    const Caption empty = Caption::empty(edit.caption.context_length());
    const LatentSequence u = ctx.predictor.predict({.latents = z, .caption = empty, .timestep = t});
    return cfg_combine(u, cond, ctx.plan.cfg_scale);
}

double elapsed_ms(std::chrono::steady_clock::time_point since) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - since).count();
}

}  // namespace

LatentSequence background_noise(const DmsContext& ctx, std::size_t level) {
    const int t = ctx.grid.model_timestep(level);
    const LatentSequence& inverted = ctx.trajectory.at(t);
    const Caption empty = Caption::empty();
    return ctx.predictor.predict({.latents = inverted, .caption = empty, .timestep = t});
}

LatentSequence sns_step(const LatentSequence& branch, const InstanceEdit& edit, const DmsContext& ctx,
                        StepPosition pos, const LatentSequence* bg_noise, std::vector<LambdaTraceEntry>* trace) {
    const LatentSequence n_hat = instance_noise(branch, edit, ctx, pos, nullptr, trace);
    const LatentSequence n_bg = bg_noise != nullptr ? *bg_noise : background_noise(ctx, pos.level);
    require_same_shape(branch, n_bg, "series sampling background noise");

    // n_hat * m + n_bg * (1 - m)
    LatentSequence fused = n_bg;
    const auto& s = branch.shape();
    for (std::size_t f = 0; f < s.frames; ++f) {
        for (std::size_t p = 0; p < s.pixels(); ++p) {
            if (edit.masks[f].bits[p] == 0) {
                continue;
            }
            const std::size_t base = (f * s.pixels() + p) * s.channels;
            for (std::size_t c = 0; c < s.channels; ++c) {
                fused[base + c] = n_hat[base + c];
            }
        }
    }
    LatentSequence next = ddim_denoise_step(branch, fused, pos.level, ctx.grid);
    require_finite(next, "series sampling");
    return next;
}

SnsResult run_sns(std::span<const InstanceEdit> edits, const DmsContext& ctx, std::size_t n_steps,
                  std::span<std::vector<LambdaTraceEntry>> traces) {
    const std::size_t top = ctx.grid.sampling_steps();
    INSTEDIT_CHECK(n_steps <= top, ConfigError, "series sampling longer than the schedule");
    INSTEDIT_CHECK(traces.empty() || traces.size() == edits.size(), ConfigError,
                   "trace slots must match the instance count");
    SnsResult result;
    LatentSequence start = ctx.trajectory.at(ctx.grid.model_timestep(top));
    start.set_timestep(ctx.grid.model_timestep(top));
    result.branches.assign(edits.size(), start);
    result.level = top;
    for (std::size_t k = 0; k < n_steps; ++k) {
        const StepPosition pos{top - k, k};
        const LatentSequence bg = background_noise(ctx, pos.level);
        parallel_for(edits.size(), ctx.plan.threads, [&](std::size_t i) {
            auto* trace = traces.empty() ? nullptr : &traces[i];
            result.branches[i] = sns_step(result.branches[i], edits[i], ctx, pos, &bg, trace);
        });
        result.level = pos.level - 1;
    }
    return result;
}

LatentSequence latent_fusion(std::span<const LatentSequence> branches, const InvertedTrajectory& trajectory,
                             std::span<const InstanceEdit> edits, int model_timestep) {
    INSTEDIT_CHECK(branches.size() == edits.size(), DataError, "latent fusion needs one branch per instance");
    const LatentSequence& inverted = trajectory.at(model_timestep);
    for (const auto& b : branches) {
        require_same_shape(b, inverted, "latent fusion");
        INSTEDIT_CHECK(b.timestep() == model_timestep, DataError,
                       "latent fusion: branch at timestep " + std::to_string(b.timestep()) + ", expected " +
                           std::to_string(model_timestep));
    }
    const MaskSequence bg = background_mask(edits, inverted.shape());
    LatentSequence fused(inverted.shape(), model_timestep);
    for (std::size_t i = 0; i < branches.size(); ++i) {
        add_masked(fused, branches[i], edits[i].masks);
    }
    add_masked(fused, inverted, bg);
    return fused;
}

LatentSequence reinvert(const LatentSequence& fused, const NoisePredictor& predictor, const NoiseSchedule& grid,
                        std::size_t level, std::size_t steps) {
    INSTEDIT_CHECK(level + steps <= grid.sampling_steps(), ConfigError,
                   "re-inversion from level " + std::to_string(level) + " by " + std::to_string(steps) +
                       " steps overflows a " + std::to_string(grid.sampling_steps()) + "-step schedule");
    const Caption empty = Caption::empty();
    LatentSequence z = fused;
    z.set_timestep(grid.model_timestep(level));
    for (std::size_t k = level; k < level + steps; ++k) {
        const LatentSequence eps = predictor.predict({.latents = z, .caption = empty, .timestep = z.timestep()});
        z = ddim_invert_step(z, eps, k + 1, grid);
        require_finite(z, "re-inversion");
    }
    return z;
}

LatentSequence pns_step(const LatentSequence& z, std::span<const InstanceEdit> edits, const DmsContext& ctx,
                        StepPosition pos, std::span<std::vector<LambdaTraceEntry>> traces,
                        LatentSequence* combined_noise) {
    INSTEDIT_CHECK(traces.empty() || traces.size() == edits.size(), ConfigError,
                   "trace slots must match the instance count");
    const MaskSequence bg_mask = background_mask(edits, z.shape());
    const int t = ctx.grid.model_timestep(pos.level);

    std::optional<LatentSequence> uncond;
    if (ctx.plan.cfg_scale != 1.0 && !edits.empty()) {
        const Caption empty = Caption::empty(edits.front().caption.context_length());
        uncond = ctx.predictor.predict({.latents = z, .caption = empty, .timestep = t});
    }
    std::vector<LatentSequence> noises(edits.size());
    parallel_for(edits.size(), ctx.plan.threads, [&](std::size_t i) {
        auto* trace = traces.empty() ? nullptr : &traces[i];
        noises[i] = instance_noise(z, edits[i], ctx, pos, uncond ? &*uncond : nullptr, trace);
    });
    const LatentSequence n_bg = background_noise(ctx, pos.level);
    require_same_shape(z, n_bg, "parallel sampling background noise");

    LatentSequence combined(z.shape(), z.timestep());
    for (std::size_t i = 0; i < edits.size(); ++i) {
        add_masked(combined, noises[i], edits[i].masks);
    }
    add_masked(combined, n_bg, bg_mask);
    if (combined_noise != nullptr) {
        *combined_noise = combined;
    }
    LatentSequence next = ddim_denoise_step(z, combined, pos.level, ctx.grid);
    require_finite(next, "parallel sampling");
    return next;
}

std::string RunReport::to_json(bool include_timing) const {
    json doc;
    doc["mode"] = mode;
    doc["plan"] = {{"steps", plan.total_steps},
                   {"inversion_steps", plan.inversion_steps},
                   {"sns_fraction", plan.sns_fraction},
                   {"sns_steps", plan.sns_steps()},
                   {"reinversion_steps", plan.reinversion_steps},
                   {"reinversion_steps_effective", reinversion_steps_effective},
                   {"cfg_scale", plan.cfg_scale},
                   {"ipr",
                    {{"lambda", plan.ipr.lambda},
                     {"lambda_r", plan.ipr.lambda_r},
                     {"warmup_fraction", plan.ipr.warmup_fraction},
                     {"fraction", plan.ipr.ipr_fraction}}},
                   {"seed", plan.seed}};
    doc["phases"] = json::array();
    for (const auto& p : phases) {
        json rec = {{"phase", p.name}, {"steps", p.steps}, {"from_level", p.from_level}, {"to_level", p.to_level}};
        if (include_timing) {
            rec["wall_ms"] = p.wall_ms;
        }
        doc["phases"].push_back(std::move(rec));
    }
    doc["instances"] = json::array();
    for (const auto& inst : instances) {
        json trace = json::array();
        for (const auto& e : inst.lambda_s) {
            trace.push_back({{"step", e.step_index}, {"frame", e.frame}, {"lambda_s", e.lambda_s}});
        }
        doc["instances"].push_back({{"id", inst.instance_id}, {"caption", inst.caption}, {"lambda_s", trace}});
    }
    return doc.dump(2);
}

EditResult run_edit(const LatentSequence& z0, std::span<const InstanceEdit> edits, const SamplingPlan& plan,
                    const NoisePredictor& predictor, const NoiseSchedule& schedule) {
    plan.validate();
    validate_edits(edits, z0.shape());
    const auto started = std::chrono::steady_clock::now();
    std::vector<LatentSequence> inverted;
    try {
        inverted = invert_sequence(z0, predictor, schedule, plan.inversion_steps);
    } catch (const Error& e) {
        rethrow_with_prefix(e, "inversion phase: ");
    }
    const double inversion_ms = elapsed_ms(started);
    const InvertedTrajectory trajectory(std::move(inverted));
    EditResult result = run_edit_from_trajectory(trajectory, edits, plan, predictor, schedule);
    result.report.phases.insert(result.report.phases.begin(),
                                PhaseRecord{"inversion", plan.inversion_steps, 0, plan.inversion_steps, inversion_ms});
    return result;
}

EditResult run_edit_from_trajectory(const InvertedTrajectory& trajectory, std::span<const InstanceEdit> edits,
                                    const SamplingPlan& plan, const NoisePredictor& predictor,
                                    const NoiseSchedule& schedule) {
    plan.validate();
    const LatentShape shape = trajectory.entries().front().shape();
    validate_edits(edits, shape);
    const NoiseSchedule grid = schedule.with_sampling_steps(plan.total_steps);
    const DmsContext ctx{predictor, grid, trajectory, plan};
    const std::size_t top = plan.total_steps;
    const std::size_t n_sns = std::min(plan.sns_steps(), top);

    EditResult result;
    RunReport& report = result.report;
    report.mode = plan.mode_label();
    report.plan = plan;
    std::vector<std::vector<LambdaTraceEntry>> traces(edits.size());

    auto phase = [&](const char* name, auto&& body) {
        const auto t0 = std::chrono::steady_clock::now();
        try {
            body();
        } catch (const Error& e) {
            rethrow_with_prefix(e, std::string(name) + " phase: ");
        }
        report.phases.back().wall_ms = elapsed_ms(t0);
    };

    LatentSequence z;
    std::size_t pns_top = top;
    if (n_sns > 0) {
        SnsResult sns;
        report.phases.push_back({"sns", n_sns, top, top - n_sns, 0.0});
        phase("sns", [&] { sns = run_sns(edits, ctx, n_sns, traces); });

        const std::size_t fuse_level = sns.level;
        report.phases.push_back({"fusion", 0, fuse_level, fuse_level, 0.0});
        phase("fusion", [&] { z = latent_fusion(sns.branches, trajectory, edits, grid.model_timestep(fuse_level)); });

        // Clamp l to the levels above the fusion point.
        const std::size_t l = std::min(plan.reinversion_steps, top - fuse_level);
        report.reinversion_steps_effective = l;
        report.phases.push_back({"reinversion", l, fuse_level, fuse_level + l, 0.0});
        phase("reinversion", [&] { z = reinvert(z, predictor, grid, fuse_level, l); });
        pns_top = fuse_level + l;
    } else {
        z = trajectory.at(grid.model_timestep(top));
        z.set_timestep(grid.model_timestep(top));
    }

    report.phases.push_back({"pns", pns_top, pns_top, 0, 0.0});
    phase("pns", [&] {
        std::size_t step_index = n_sns;
        for (std::size_t level = pns_top; level >= 1; --level, ++step_index) {
            z = pns_step(z, edits, ctx, {level, step_index}, traces);
        }
    });

    for (std::size_t i = 0; i < edits.size(); ++i) {
        report.instances.push_back({edits[i].instance_id, edits[i].caption.text(), std::move(traces[i])});
    }
    result.latents = std::move(z);
    return result;
}

}  // namespace instedit
