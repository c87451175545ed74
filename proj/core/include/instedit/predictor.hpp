// Copyright (C) 2026 The instedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "instedit/caption.hpp"
#include "instedit/image.hpp"
#include "instedit/ipr.hpp"
#include "instedit/latent.hpp"
#include "instedit/schedule.hpp"

namespace instedit {

/// Per-frame scalar side channel (depth-like). Carried through to predictors.
struct ControlSequence {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<std::vector<double>> frames;
};

/// Position of a prediction inside a denoising run. Attention hooks use it to
/// decide whether and how strongly to rewrite maps.
struct SamplingClock {
    std::size_t step_index = 0;   // 0-based denoising step counter
    std::size_t total_steps = 1;  // T
    std::size_t level = 0;        // sampling level being stepped from
    std::size_t horizon = 1;      // level count the lambda_s factor is relative to
};

struct LambdaTraceEntry {
    std::size_t step_index = 0;
    std::size_t frame = 0;
    double lambda_s = 0.0;

    bool operator==(const LambdaTraceEntry&) const = default;
};

struct PredictorRequest {
    const LatentSequence& latents;
    const Caption& caption;
    int timestep = 0;  // model timestep
    const MaskSequence* instance_mask = nullptr;
    const ControlSequence* control = nullptr;
    std::optional<SamplingClock> clock = std::nullopt;
    std::vector<LambdaTraceEntry>* lambda_trace = nullptr;
};

/// Throws DataError if mask/control frame counts or sizes disagree with the latents.
void validate_request(const PredictorRequest& request);

/// Noise prediction eps_theta(z_t, c, m, e, t). Implementations are immutable
/// after construction and safe to call concurrently.
class NoisePredictor {
public:
    virtual ~NoisePredictor() = default;
    virtual LatentSequence predict(const PredictorRequest& request) const = 0;
};

/// Returns the same noise regardless of input.
class ConstantPredictor final : public NoisePredictor {
public:
    explicit ConstantPredictor(double value) : pattern_{value} {}
    /// Repeats `pattern` cyclically over the flattened latent.
    explicit ConstantPredictor(std::vector<double> pattern);

    LatentSequence predict(const PredictorRequest& request) const override;

private:
    std::vector<double> pattern_;
};

/// Clean-data prior N(mu, sigma^2) for one caption. `mu` broadcasts from shape
/// [], [c], [h, w, c] or [n, h, w, c].
struct GaussianTarget {
    std::vector<std::size_t> shape;
    std::vector<double> mu;
    double sigma = 0.0;

    LatentSequence broadcast(const LatentShape& latent_shape) const;
};

/// Caption text -> Gaussian target. The empty caption ("") is the source prior.
class GaussianRegistry {
public:
    void add(std::string_view caption, GaussianTarget target);
    bool contains(const Caption& caption) const;
    const GaussianTarget& at(const Caption& caption) const;
    const std::map<std::string, GaussianTarget>& entries() const { return entries_; }

    /// {"<caption>": {"mu": [...], "shape": [...], "sigma": s}, ...}
    static GaussianRegistry from_json(std::string_view json_text);
    static GaussianRegistry load(const std::filesystem::path& path);
    std::string to_json() const;

private:
    std::map<std::string, GaussianTarget> entries_;
};

/// Exact noise predictor for Gaussian data: with E[x0|z] the posterior mean,
/// eps = (z - sqrt(a) E[x0|z]) / sqrt(1 - a), which simplifies to
/// (z - sqrt(a) mu) sqrt(1 - a) / (a sigma^2 + 1 - a). At a = 1 there is no
/// noise component and the prediction is 0.
class ToyGaussianPredictor final : public NoisePredictor {
public:
    ToyGaussianPredictor(GaussianRegistry registry, NoiseSchedule schedule);

    LatentSequence predict(const PredictorRequest& request) const override;

    static double closed_form(double z, double alpha_bar, double mu, double sigma);

    const GaussianRegistry& registry() const { return registry_; }

private:
    GaussianRegistry registry_;
    NoiseSchedule schedule_;
};

struct TinyAttentionConfig {
    std::size_t channels = 4;
    std::size_t key_dim = 8;
    std::size_t context_length = kDefaultContextLength;
    std::uint64_t seed = 0;
    double prior_sigma = 0.5;
    double spatial_gain = 0.3;
    double query_scale = 1.5;
};

struct AttentionSite {
    const PredictorRequest& request;
    std::size_t frame = 0;
    const TokenLayout* layout = nullptr;  // null for the empty caption
};

/// Rewrites a post-softmax map before value aggregation. Must keep the shape.
using AttentionHook = std::function<CrossAttentionMap(const CrossAttentionMap&, const AttentionSite&)>;

/// Minimal noise predictor built around one cross-attention layer.
///
/// Queries are a fixed projection of each latent cell, keys are fixed
/// per-position vectors, and values are the caption's token embeddings. The
/// attended value plus a small 3x3 neighbourhood term forms a clean-latent
/// estimate, turned into noise with the Gaussian closed form above.
class TinyAttentionPredictor final : public NoisePredictor {
public:
    TinyAttentionPredictor(NoiseSchedule schedule, TinyAttentionConfig config);

    /// Copy whose maps pass through `hook` before aggregation.
    TinyAttentionPredictor with_attention_hook(AttentionHook hook) const;

    /// Copy whose vocabulary (text-token) embeddings are multiplied by `factor`.
    /// Start, end and padding embeddings are unchanged.
    TinyAttentionPredictor with_text_embedding_scale(double factor) const;

    /// Pre-hook attention map of one frame.
    CrossAttentionMap attention_map(const LatentSequence& latents, std::size_t frame, const Caption& caption) const;

    LatentSequence predict(const PredictorRequest& request) const override;

    const TinyAttentionConfig& config() const { return config_; }

private:
    struct Weights;

    std::span<const double> value_vector(const Caption& caption, std::size_t position) const;

    NoiseSchedule schedule_;
    TinyAttentionConfig config_;
    std::shared_ptr<const Weights> weights_;
    AttentionHook hook_;
};

/// Hook applying instance-centric redistribution with the request's instance
/// mask and sampling clock. Passes maps through when either is missing or the
/// caption is empty.
AttentionHook ipr_attention_hook(IprConfig config);

}  // namespace instedit
