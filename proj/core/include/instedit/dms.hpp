// Copyright (C) 2026 The instedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "instedit/caption.hpp"
#include "instedit/image.hpp"
#include "instedit/ipr.hpp"
#include "instedit/latent.hpp"
#include "instedit/predictor.hpp"
#include "instedit/schedule.hpp"

namespace instedit {

/// One instance to edit: its per-frame masks (latent resolution) and target caption.
struct InstanceEdit {
    std::string instance_id;
    Caption caption;
    MaskSequence masks;
};

struct SamplingPlan {
    std::size_t total_steps = 50;       // T denoising steps
    std::size_t inversion_steps = 100;  // DDIM inversion steps with the empty caption
    double sns_fraction = 0.4;          // leading share of steps run as independent branches
    std::size_t reinversion_steps = 2;  // l
    double cfg_scale = 12.5;
    IprConfig ipr;
    std::uint64_t seed = 0;
    std::size_t threads = 1;

    void validate() const;
    std::size_t sns_steps() const { return steps_in_fraction(sns_fraction, total_steps); }

    /// "pure SNS", "pure PNS", "SNS + PNS (no re-inv)" or "SNS + re-inversion + PNS".
    std::string mode_label() const;

    bool operator==(const SamplingPlan&) const = default;
};

/// Inverted latents keyed by model timestep, looked up by nearest timestep.
class InvertedTrajectory {
public:
    explicit InvertedTrajectory(std::vector<LatentSequence> latents);

    /// Nearest stored entry; throws DataError when `model_timestep` lies further
    /// than one stored stride outside the trajectory.
    const LatentSequence& at(int model_timestep) const;

    std::span<const LatentSequence> entries() const { return latents_; }

private:
    std::vector<LatentSequence> latents_;
    int max_gap_ = 0;
};

/// Checks mask frame counts and sizes against `shape` and pairwise disjointness.
/// Overlaps throw DataError naming both instances and the first frame.
void validate_edits(std::span<const InstanceEdit> edits, const LatentShape& shape);

/// m_B = 1 - sum_i m_i per pixel and frame.
MaskSequence background_mask(std::span<const InstanceEdit> edits, const LatentShape& shape);

struct DmsContext {
    const NoisePredictor& predictor;
    const NoiseSchedule& grid;  // denoising levels
    const InvertedTrajectory& trajectory;
    const SamplingPlan& plan;
};

struct StepPosition {
    std::size_t level = 0;       // stepping from this level to level - 1
    std::size_t step_index = 0;  // 0-based denoising step counter
};

/// Empty-caption, scale-1 noise on the inverted latent at `level`.
LatentSequence background_noise(const DmsContext& ctx, std::size_t level);

/// One series-sampling step for one instance branch: guided instance noise
/// inside the mask, reconstruction noise outside it, then one DDIM step.
/// `bg_noise`, when set, is background_noise(ctx, level) computed by the caller.
LatentSequence sns_step(const LatentSequence& branch, const InstanceEdit& edit, const DmsContext& ctx,
                        StepPosition pos, const LatentSequence* bg_noise = nullptr,
                        std::vector<LambdaTraceEntry>* trace = nullptr);

struct SnsResult {
    std::vector<LatentSequence> branches;  // one per edit, at `level`
    std::size_t level = 0;
};

/// Runs `n_steps` series-sampling steps from the top level for every branch.
/// Branches are evaluated on up to plan.threads workers.
SnsResult run_sns(std::span<const InstanceEdit> edits, const DmsContext& ctx, std::size_t n_steps,
                  std::span<std::vector<LambdaTraceEntry>> traces = {});

/// sum_i branch_i * m_i + inverted(t) * m_B.
LatentSequence latent_fusion(std::span<const LatentSequence> branches, const InvertedTrajectory& trajectory,
                             std::span<const InstanceEdit> edits, int model_timestep);

/// `steps` DDIM inversion steps upward from `level` with the empty caption at scale 1.
LatentSequence reinvert(const LatentSequence& fused, const NoisePredictor& predictor, const NoiseSchedule& grid,
                        std::size_t level, std::size_t steps);

/// One parallel-sampling step on the shared latent: every instance's guided
/// noise inside its mask, reconstruction noise on the background.
/// `combined_noise`, when given, receives the fused noise that was applied.
LatentSequence pns_step(const LatentSequence& z, std::span<const InstanceEdit> edits, const DmsContext& ctx,
                        StepPosition pos, std::span<std::vector<LambdaTraceEntry>> traces = {},
                        LatentSequence* combined_noise = nullptr);

struct PhaseRecord {
    std::string name;
    std::size_t steps = 0;
    std::size_t from_level = 0;
    std::size_t to_level = 0;
    double wall_ms = 0.0;
};

struct InstanceTrace {
    std::string instance_id;
    std::string caption;
    std::vector<LambdaTraceEntry> lambda_s;
};

struct RunReport {
    std::string mode;
    SamplingPlan plan;
    std::size_t reinversion_steps_effective = 0;
    std::vector<PhaseRecord> phases;
    std::vector<InstanceTrace> instances;

    /// Serialized report; wall-clock fields are omitted when `include_timing` is false.
    std::string to_json(bool include_timing = true) const;
};

struct EditResult {
    LatentSequence latents;  // edited latents at timestep 0
    RunReport report;
};

/// Full pipeline: inversion, series sampling for the leading share of steps,
/// latent fusion, re-inversion, parallel sampling down to level 0.
EditResult run_edit(const LatentSequence& z0, std::span<const InstanceEdit> edits, const SamplingPlan& plan,
                    const NoisePredictor& predictor, const NoiseSchedule& schedule);

/// As run_edit, reusing an existing inversion.
EditResult run_edit_from_trajectory(const InvertedTrajectory& trajectory, std::span<const InstanceEdit> edits,
                                    const SamplingPlan& plan, const NoisePredictor& predictor,
                                    const NoiseSchedule& schedule);

}  // namespace instedit
