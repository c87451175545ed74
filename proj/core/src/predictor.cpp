// Copyright (C) 2026 The instedit Authors
// SPDX-License-Identifier: Apache-2.0

#include "instedit/predictor.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "instedit/errors.hpp"
#include "instedit/io.hpp"
#include "json.hpp"

namespace instedit {

using nlohmann::json;

void validate_request(const PredictorRequest& request) {
    const auto& s = request.latents.shape();
    if (request.instance_mask != nullptr) {
        const auto& masks = *request.instance_mask;
        INSTEDIT_CHECK(masks.size() == s.frames, DataError,
                       "instance mask has " + std::to_string(masks.size()) + " frames, latents have " +
                           std::to_string(s.frames));
        for (const auto& m : masks) {
            INSTEDIT_CHECK(m.height >= s.height && m.width >= s.width, DataError,
                           "instance mask is smaller than the latent grid");
        }
    }
    if (request.control != nullptr) {
        INSTEDIT_CHECK(request.control->frames.size() == s.frames, DataError,
                       "control has " + std::to_string(request.control->frames.size()) + " frames, latents have " +
                           std::to_string(s.frames));
    }
}

ConstantPredictor::ConstantPredictor(std::vector<double> pattern) : pattern_(std::move(pattern)) {
    INSTEDIT_CHECK(!pattern_.empty(), ConfigError, "constant predictor pattern is empty");
}

LatentSequence ConstantPredictor::predict(const PredictorRequest& request) const {
    validate_request(request);
    LatentSequence eps(request.latents.shape(), request.latents.timestep());
    for (std::size_t i = 0; i < eps.size(); ++i) {
        eps[i] = pattern_[i % pattern_.size()];
    }
    return eps;
}

// ---------------------------------------------------------------------------
// Gaussian toy

LatentSequence GaussianTarget::broadcast(const LatentShape& ls) const {
    std::size_t expected = 1;
    for (auto d : shape) {
        expected *= d;
    }
    INSTEDIT_CHECK(mu.size() == expected, DataError, "gaussian target: mu size does not match its shape");
    LatentSequence out(ls);
    auto fill = [&](auto index_of) {
        for (std::size_t f = 0; f < ls.frames; ++f) {
            for (std::size_t y = 0; y < ls.height; ++y) {
                for (std::size_t x = 0; x < ls.width; ++x) {
                    for (std::size_t c = 0; c < ls.channels; ++c) {
                        out.at(f, y, x, c) = mu[index_of(f, y, x, c)];
                    }
                }
            }
        }
    };
    switch (shape.size()) {
        case 0:
            fill([](auto, auto, auto, auto) { return std::size_t{0}; });
            break;
        case 1:
            INSTEDIT_CHECK(shape[0] == ls.channels, DataError, "gaussian target channel count mismatch");
            fill([](auto, auto, auto, std::size_t c) { return c; });
            break;
        case 3:
            INSTEDIT_CHECK(shape[0] == ls.height && shape[1] == ls.width && shape[2] == ls.channels, DataError,
                           "gaussian target [h, w, c] does not match latents " + to_string(ls));
            fill([&](auto, std::size_t y, std::size_t x, std::size_t c) { return (y * ls.width + x) * ls.channels + c; });
            break;
        case 4:
            INSTEDIT_CHECK(shape[0] == ls.frames && shape[1] == ls.height && shape[2] == ls.width &&
                               shape[3] == ls.channels,
                           DataError, "gaussian target [n, h, w, c] does not match latents " + to_string(ls));
            fill([&](std::size_t f, std::size_t y, std::size_t x, std::size_t c) {
                return ((f * ls.height + y) * ls.width + x) * ls.channels + c;
            });
            break;
        default:
            throw DataError("gaussian target shape must have 0, 1, 3 or 4 dimensions");
    }
    return out;
}

void GaussianRegistry::add(std::string_view caption, GaussianTarget target) {
    INSTEDIT_CHECK(target.sigma >= 0.0 && std::isfinite(target.sigma), DataError, "gaussian sigma must be >= 0");
    entries_[Caption(caption).text()] = std::move(target);
}

bool GaussianRegistry::contains(const Caption& caption) const { return entries_.count(caption.text()) > 0; }

const GaussianTarget& GaussianRegistry::at(const Caption& caption) const {
    auto it = entries_.find(caption.text());
    INSTEDIT_CHECK(it != entries_.end(), DataError,
                   "no gaussian target registered for caption \"" + caption.text() + "\"");
    return it->second;
}

GaussianRegistry GaussianRegistry::from_json(std::string_view json_text) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::exception& e) {
        throw DataError(std::string("bad gaussian registry JSON: ") + e.what());
    }
    INSTEDIT_CHECK(doc.is_object(), DataError, "gaussian registry must be a JSON object");
    GaussianRegistry reg;
    for (const auto& [caption, entry] : doc.items()) {
        INSTEDIT_CHECK(entry.is_object() && entry.contains("mu"), DataError,
                       "registry entry \"" + caption + "\" needs a mu array");
        GaussianTarget target;
        try {
            target.mu = entry["mu"].is_array() ? entry["mu"].get<std::vector<double>>()
                                               : std::vector<double>{entry["mu"].get<double>()};
            target.shape = entry.value("shape", std::vector<std::size_t>{});
            target.sigma = entry.value("sigma", 0.0);
        } catch (const json::exception& e) {
            throw DataError("registry entry \"" + caption + "\": " + e.what());
        }
        reg.add(caption, std::move(target));
    }
    return reg;
}

GaussianRegistry GaussianRegistry::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    INSTEDIT_CHECK(in.good(), DataError, "cannot open gaussian registry " + path.string());
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return from_json(text);
}

std::string GaussianRegistry::to_json() const {
    json doc = json::object();
    for (const auto& [caption, t] : entries_) {
        doc[caption] = {{"mu", t.mu}, {"shape", t.shape}, {"sigma", t.sigma}};
    }
    return doc.dump(2);
}

ToyGaussianPredictor::ToyGaussianPredictor(GaussianRegistry registry, NoiseSchedule schedule)
    : registry_(std::move(registry)), schedule_(std::move(schedule)) {}

double ToyGaussianPredictor::closed_form(double z, double alpha_bar, double mu, double sigma) {
    if (alpha_bar >= 1.0) {
        return 0.0;
    }
    const double denom = alpha_bar * sigma * sigma + 1.0 - alpha_bar;
    return (z - std::sqrt(alpha_bar) * mu) * std::sqrt(1.0 - alpha_bar) / denom;
}

LatentSequence ToyGaussianPredictor::predict(const PredictorRequest& request) const {
    validate_request(request);
    const GaussianTarget& target = registry_.at(request.caption);
    const LatentSequence mu = target.broadcast(request.latents.shape());
    const double a = schedule_.alpha_bar(request.timestep);
    LatentSequence eps(request.latents.shape(), request.latents.timestep());
    for (std::size_t i = 0; i < eps.size(); ++i) {
        eps[i] = closed_form(request.latents[i], a, mu[i], target.sigma);
    }
    return eps;
}

// ---------------------------------------------------------------------------
// Tiny attention predictor

namespace {

constexpr std::size_t kVocabSize = 1u << 16;

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Deterministic value in [-1, 1) for (seed, stream, index).
double hashed_uniform(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
    const std::uint64_t h = splitmix64(seed ^ splitmix64((stream << 40) ^ index));
    return 2.0 * static_cast<double>(h >> 11) * 0x1.0p-53 - 1.0;
}

enum Stream : std::uint64_t { kVocab = 1, kSpecial = 2, kKeys = 3, kQuery = 4 };

}  // namespace

struct TinyAttentionPredictor::Weights {
    std::vector<double> vocab;    // kVocabSize x channels
    std::vector<double> special;  // 3 x channels: start, end, padding
    std::vector<double> keys;     // n_ctx x key_dim
    std::vector<double> query;    // key_dim x channels
};

TinyAttentionPredictor::TinyAttentionPredictor(NoiseSchedule schedule, TinyAttentionConfig config)
    : schedule_(std::move(schedule)), config_(config) {
    INSTEDIT_CHECK(config_.channels >= 1 && config_.key_dim >= 1, ConfigError,
                   "attention predictor needs positive channel and key sizes");
    INSTEDIT_CHECK(config_.prior_sigma > 0.0, ConfigError, "attention predictor prior_sigma must be positive");
    const std::size_t c = config_.channels;
    auto w = std::make_shared<Weights>();
    w->vocab.resize(kVocabSize * c);
    for (std::size_t i = 0; i < w->vocab.size(); ++i) {
        w->vocab[i] = hashed_uniform(config_.seed, kVocab, i);
    }
    w->special.resize(3 * c);
    for (std::size_t i = 0; i < w->special.size(); ++i) {
        w->special[i] = hashed_uniform(config_.seed, kSpecial, i);
    }
    w->keys.resize(config_.context_length * config_.key_dim);
    for (std::size_t i = 0; i < w->keys.size(); ++i) {
        w->keys[i] = hashed_uniform(config_.seed, kKeys, i);
    }
    w->query.resize(config_.key_dim * c);
    for (std::size_t i = 0; i < w->query.size(); ++i) {
        w->query[i] = config_.query_scale * hashed_uniform(config_.seed, kQuery, i);
    }
    weights_ = std::move(w);
}

TinyAttentionPredictor TinyAttentionPredictor::with_attention_hook(AttentionHook hook) const {
    TinyAttentionPredictor copy = *this;
    copy.hook_ = std::move(hook);
    return copy;
}

TinyAttentionPredictor TinyAttentionPredictor::with_text_embedding_scale(double factor) const {
    auto w = std::make_shared<Weights>(*weights_);
    for (double& v : w->vocab) {
        v *= factor;
    }
    TinyAttentionPredictor copy = *this;
    copy.weights_ = std::move(w);
    return copy;
}

std::span<const double> TinyAttentionPredictor::value_vector(const Caption& caption, std::size_t position) const {
    const std::size_t c = config_.channels;
    switch (caption.role(position)) {
        case TokenRole::Start:
            return std::span<const double>(weights_->special).subspan(0, c);
        case TokenRole::End:
            return std::span<const double>(weights_->special).subspan(c, c);
        case TokenRole::Padding:
            return std::span<const double>(weights_->special).subspan(2 * c, c);
        case TokenRole::Text:
            break;
    }
    const std::size_t id = caption.token_ids()[position - 1];
    return std::span<const double>(weights_->vocab).subspan(id * c, c);
}

CrossAttentionMap TinyAttentionPredictor::attention_map(const LatentSequence& latents, std::size_t frame,
                                                        const Caption& caption) const {
    const auto& s = latents.shape();
    INSTEDIT_CHECK(s.channels == config_.channels, DataError,
                   "attention predictor expects " + std::to_string(config_.channels) + " latent channels, got " +
                       std::to_string(s.channels));
    INSTEDIT_CHECK(caption.context_length() == config_.context_length, DataError,
                   "caption context length does not match the attention predictor");
    const std::size_t n_ctx = config_.context_length;
    const std::size_t kd = config_.key_dim;
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(kd));
    CrossAttentionMap map(s.height, s.width, n_ctx);
    const auto z = latents.frame(frame);
    std::vector<double> q(kd);
    std::vector<double> logits(n_ctx);
    for (std::size_t p = 0; p < s.pixels(); ++p) {
        for (std::size_t k = 0; k < kd; ++k) {
            double acc = 0.0;
            for (std::size_t c = 0; c < s.channels; ++c) {
                acc += weights_->query[k * s.channels + c] * z[p * s.channels + c];
            }
            q[k] = acc;
        }
        double peak = -INFINITY;
        for (std::size_t j = 0; j < n_ctx; ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < kd; ++k) {
                acc += q[k] * weights_->keys[j * kd + k];
            }
            logits[j] = acc * inv_sqrt_d;
            peak = std::max(peak, logits[j]);
        }
        double total = 0.0;
        for (std::size_t j = 0; j < n_ctx; ++j) {
            logits[j] = std::exp(logits[j] - peak);
            total += logits[j];
        }
        auto row = map.row(p);
        for (std::size_t j = 0; j < n_ctx; ++j) {
            row[j] = logits[j] / total;
        }
    }
    return map;
}

LatentSequence TinyAttentionPredictor::predict(const PredictorRequest& request) const {
    validate_request(request);
    const LatentSequence& z = request.latents;
    const auto& s = z.shape();
    const double a = schedule_.alpha_bar(request.timestep);
    const auto layout = request.caption.layout();
    const std::size_t n_ctx = config_.context_length;

    LatentSequence eps(s, z.timestep());
    std::vector<double> clean(s.channels);
    for (std::size_t f = 0; f < s.frames; ++f) {
        CrossAttentionMap map = attention_map(z, f, request.caption);
        if (hook_) {
            const AttentionSite site{request, f, layout ? &*layout : nullptr};
            CrossAttentionMap rewritten = hook_(map, site);
            INSTEDIT_CHECK(rewritten.rows() == map.rows() && rewritten.cols() == map.cols(), DataError,
                           "attention hook changed the map shape");
            map = std::move(rewritten);
        }
        for (std::size_t y = 0; y < s.height; ++y) {
            for (std::size_t x = 0; x < s.width; ++x) {
                const std::size_t p = y * s.width + x;
                std::fill(clean.begin(), clean.end(), 0.0);
                const auto row = map.row(p);
                for (std::size_t j = 0; j < n_ctx; ++j) {
                    if (row[j] == 0.0) {
                        continue;
                    }
                    const auto v = value_vector(request.caption, j);
                    for (std::size_t c = 0; c < s.channels; ++c) {
                        clean[c] += row[j] * v[c];
                    }
                }
                const std::size_t y0 = y == 0 ? 0 : y - 1;
                const std::size_t y1 = std::min(s.height - 1, y + 1);
                const std::size_t x0 = x == 0 ? 0 : x - 1;
                const std::size_t x1 = std::min(s.width - 1, x + 1);
                const double cells = static_cast<double>((y1 - y0 + 1) * (x1 - x0 + 1));
                for (std::size_t c = 0; c < s.channels; ++c) {
                    double neighbourhood = 0.0;
                    for (std::size_t yy = y0; yy <= y1; ++yy) {
                        for (std::size_t xx = x0; xx <= x1; ++xx) {
                            neighbourhood += z.at(f, yy, xx, c);
                        }
                    }
                    const double x0_hat = clean[c] + config_.spatial_gain * std::tanh(neighbourhood / cells);
                    eps.at(f, y, x, c) =
                        ToyGaussianPredictor::closed_form(z.at(f, y, x, c), a, x0_hat, config_.prior_sigma);
                }
            }
        }
    }
    return eps;
}

AttentionHook ipr_attention_hook(IprConfig config) {
    config.validate();
    return [config](const CrossAttentionMap& map, const AttentionSite& site) -> CrossAttentionMap {
        const PredictorRequest& req = site.request;
        if (site.layout == nullptr || req.instance_mask == nullptr || !req.clock) {
            return map;
        }
        const auto [h, w] = map.feature_shape();
        const FeatureMask mask = downsample_mask((*req.instance_mask)[site.frame], h, w);
        const SamplingClock& clock = *req.clock;
        IprOutcome out = apply_ipr_detailed(map, mask, *site.layout, config,
                                            {clock.step_index, clock.total_steps, static_cast<double>(clock.level),
                                             static_cast<double>(clock.horizon)});
        if (out.active && req.lambda_trace != nullptr) {
            req.lambda_trace->push_back({clock.step_index, site.frame, out.lambda_s});
        }
        return std::move(out.map);
    };
}

}  // namespace instedit
