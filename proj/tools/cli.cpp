// Copyright (C) 2026 The instedit Authors
// SPDX-License-Identifier: Apache-2.0

#include "instedit_cli/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <optional>
#include <ostream>

#include "CLI11.hpp"
#include "instedit/dms.hpp"
#include "instedit/io.hpp"
#include "instedit/manifest.hpp"
#include "instedit/metrics.hpp"
#include "instedit/predictor.hpp"
#include "instedit/scenario.hpp"
#include "instedit/schedule.hpp"
#include "json.hpp"

namespace instedit::cli {

namespace fs = std::filesystem;
using nlohmann::json;

int exit_code_for(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::Config:
            return 2;
        case ErrorKind::Data:
            return 3;
        case ErrorKind::Numerical:
            return 4;
    }
    return 1;
}

std::string error_line(const Error& e) {
    static constexpr const char* kNames[] = {"config", "data", "numerical"};
    std::string message = e.what();
    std::replace(message.begin(), message.end(), '\n', ' ');
    return std::string("error kind=") + kNames[static_cast<int>(e.kind())] +
           " code=" + std::to_string(exit_code_for(e.kind())) + " message=" + message;
}

namespace {

void write_text(const fs::path& path, const std::string& text) {
    fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    INSTEDIT_CHECK(out.good(), DataError, "cannot write " + path.string());
    out << text << '\n';
}

std::string numbered(const char* prefix, std::size_t k, const char* ext) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s%04zu%s", prefix, k, ext);
    return buf;
}

void write_frames(const fs::path& dir, std::span<const Image> frames) {
    fs::create_directories(dir);
    for (std::size_t f = 0; f < frames.size(); ++f) {
        write_image(dir / numbered("frame_", f, frames[f].channels == 1 ? ".pgm" : ".ppm"), frames[f]);
    }
}

std::vector<fs::path> image_files(const fs::path& dir) {
    INSTEDIT_CHECK(fs::is_directory(dir), DataError, "not a directory: " + dir.string());
    std::vector<fs::path> out;
    for (const auto& entry : fs::directory_iterator(dir)) {
        const auto ext = entry.path().extension();
        if (entry.is_regular_file() && (ext == ".ppm" || ext == ".pgm" || ext == ".pnm" || ext == ".png")) {
            out.push_back(entry.path());
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::unique_ptr<NoisePredictor> make_predictor(const RunConfig& config, const NoiseSchedule& schedule,
                                               const LatentShape& shape) {
    if (config.predictor == "attention") {
        TinyAttentionConfig tc;
        tc.channels = shape.channels;
        tc.seed = config.plan.seed;
        return std::make_unique<TinyAttentionPredictor>(
            TinyAttentionPredictor(schedule, tc).with_attention_hook(ipr_attention_hook(config.plan.ipr)));
    }
    INSTEDIT_CHECK(!config.registry.empty(), ConfigError, "predictor gaussian needs registry=<file>");
    return std::make_unique<ToyGaussianPredictor>(GaussianRegistry::load(config.registry), schedule);
}

struct LoadedInput {
    VideoManifest manifest;
    std::vector<Image> frames;
    LatentSequence z0;
};

LoadedInput load_input(const RunConfig& config) {
    INSTEDIT_CHECK(!config.manifest.empty(), ConfigError, "manifest is not set");
    LoadedInput in;
    in.manifest = load_manifest(config.manifest);
    in.frames = load_frames(in.manifest.frames);
    in.z0 = frames_to_latents(in.frames);
    return in;
}

InvertedTrajectory load_trajectory(const fs::path& dir, const LatentShape& shape) {
    INSTEDIT_CHECK(fs::is_directory(dir), DataError, "trajectory directory not found: " + dir.string());
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".f32") {
            files.push_back(entry.path());
        }
    }
    std::sort(files.begin(), files.end());
    std::vector<LatentSequence> latents;
    for (const auto& f : files) {
        latents.push_back(load_latents(f));
        INSTEDIT_CHECK(latents.back().shape() == shape, DataError,
                       "trajectory latent " + f.string() + " has shape " + to_string(latents.back().shape()) +
                           ", input is " + to_string(shape));
    }
    return InvertedTrajectory(std::move(latents));
}

json timing_json(const RunReport& report) {
    json doc = json::array();
    for (const auto& p : report.phases) {
        doc.push_back({{"phase", p.name}, {"wall_ms", p.wall_ms}});
    }
    return doc;
}

}  // namespace

CommandOutcome cmd_invert(const RunConfig& config) {
    config.validate();
    const LoadedInput in = load_input(config);
    const NoiseSchedule schedule = config.make_schedule();
    const auto predictor = make_predictor(config, schedule, in.z0.shape());
    const auto trajectory = invert_sequence(in.z0, *predictor, schedule, config.plan.inversion_steps);

    const fs::path dir = fs::path(config.out) / "trajectory";
    fs::create_directories(dir);
    json timesteps = json::array();
    for (const auto& z : trajectory) {
        save_latents(dir / numbered("latent_", static_cast<std::size_t>(z.timestep()), ".f32"), z);
        timesteps.push_back(z.timestep());
    }
    const fs::path report = fs::path(config.out) / "invert_report.json";
    write_text(report, json{{"inversion_steps", config.plan.inversion_steps},
                            {"timesteps", timesteps},
                            {"directory", "trajectory"}}
                           .dump(2));
    return {0, report};
}

CommandOutcome cmd_edit(const RunConfig& config) {
    config.validate();
    const LoadedInput in = load_input(config);
    const LatentShape shape = in.z0.shape();
    const auto edits = load_instance_edits(in.manifest, shape.height, shape.width);
    const NoiseSchedule schedule = config.make_schedule();
    const auto predictor = make_predictor(config, schedule, shape);

    EditResult result;
    if (config.trajectory.empty()) {
        result = run_edit(in.z0, edits, config.plan, *predictor, schedule);
    } else {
        const InvertedTrajectory trajectory = load_trajectory(config.trajectory, shape);
        result = run_edit_from_trajectory(trajectory, edits, config.plan, *predictor, schedule);
    }

    const fs::path out(config.out);
    save_latents(out / "latents" / "edited.f32", result.latents);
    write_frames(out / "frames", latents_to_frames(result.latents));
    write_text(out / "timing.json", timing_json(result.report).dump(2));
    write_text(out / "config.json", config.to_json());
    const fs::path report = out / "report.json";
    write_text(report, result.report.to_json(false));
    return {0, report};
}

CommandOutcome cmd_metrics(const RunConfig& config) {
    config.validate();
    INSTEDIT_CHECK(!config.manifest.empty(), ConfigError, "manifest is not set");
    const VideoManifest manifest = load_manifest(config.manifest);
    const std::vector<Image> source = load_frames(manifest.frames);
    const fs::path edited_dir = config.edited.empty() ? fs::path(config.out) / "frames" : fs::path(config.edited);
    const auto edited_files = image_files(edited_dir);
    const std::vector<Image> edited = load_frames(edited_files);
    INSTEDIT_CHECK(edited.size() == source.size(), DataError,
                   "found " + std::to_string(edited.size()) + " edited frames for " + std::to_string(source.size()) +
                       " source frames");

    std::vector<InstanceEvaluation> instances;
    for (const auto& inst : manifest.instances) {
        instances.push_back({inst.id, inst.caption, inst.source_caption, load_masks(inst.masks)});
    }
    std::unique_ptr<EmbeddingProvider> provider;
    if (config.embeddings.empty()) {
        provider = std::make_unique<ToyEmbeddingProvider>();
    } else {
        provider = std::make_unique<FileEmbeddingProvider>(FileEmbeddingProvider::load(config.embeddings));
    }
    const EvaluationInput input{edited, source, instances, manifest.global_source_caption,
                                manifest.global_target_caption};
    const MetricsReport report = evaluate(input, *provider);
    const fs::path path = fs::path(config.out) / "metrics.json";
    write_text(path, report.to_json());
    return {0, path};
}

namespace {

struct RegionCheck {
    std::string name;
    double value = 0.0;
    double tolerance = 0.0;
    bool pass() const { return value < tolerance; }
};

// Per-channel mean over `mask` of the caption mean implied by a guided
// sigma-0 result: (x - (1 - s) mu_src) / s.
std::vector<double> implied_target(const LatentSequence& x, const LatentSequence& mu_src, const MaskSequence& mask,
                                   double s) {
    const auto& sh = x.shape();
    std::vector<double> sum(sh.channels, 0.0);
    std::size_t n = 0;
    for (std::size_t f = 0; f < sh.frames; ++f) {
        for (std::size_t p = 0; p < sh.pixels(); ++p) {
            if (!mask[f].bits[p]) {
                continue;
            }
            ++n;
            for (std::size_t c = 0; c < sh.channels; ++c) {
                const std::size_t i = (f * sh.pixels() + p) * sh.channels + c;
                sum[c] += (x[i] - (1.0 - s) * mu_src[i]) / s;
            }
        }
    }
    for (auto& v : sum) {
        v /= static_cast<double>(std::max<std::size_t>(n, 1));
    }
    return sum;
}

double max_abs_over(const LatentSequence& a, const LatentSequence& b, const MaskSequence& mask) {
    const auto& sh = a.shape();
    double worst = 0.0;
    for (std::size_t f = 0; f < sh.frames; ++f) {
        for (std::size_t p = 0; p < sh.pixels(); ++p) {
            if (!mask[f].bits[p]) {
                continue;
            }
            for (std::size_t c = 0; c < sh.channels; ++c) {
                const std::size_t i = (f * sh.pixels() + p) * sh.channels + c;
                worst = std::max(worst, std::abs(a[i] - b[i]));
            }
        }
    }
    return worst;
}

}  // namespace

CommandOutcome cmd_demo(const RunConfig& config) {
    config.validate();
    const SamplingPlan& plan = config.plan;
    INSTEDIT_CHECK(plan.cfg_scale > 0.0, ConfigError, "demo needs cfg_scale > 0");
    const fs::path out(config.out);
    const ToyScenario scenario = make_two_instance_scenario(plan.seed);
    const ToyScenario swapped = swap_captions(scenario);
    write_scenario(scenario, out / "scenario");

    const NoiseSchedule schedule = config.make_schedule();
    const ToyGaussianPredictor predictor(scenario.registry, schedule);
    const InvertedTrajectory trajectory(invert_sequence(scenario.source, predictor, schedule, plan.inversion_steps));
    const EditResult edited = run_edit_from_trajectory(trajectory, scenario.edits, plan, predictor, schedule);
    const EditResult reconstruction = run_edit_from_trajectory(trajectory, {}, plan, predictor, schedule);
    const EditResult exchanged = run_edit_from_trajectory(trajectory, swapped.edits, plan, predictor, schedule);

    const LatentShape& shape = scenario.source.shape();
    const MaskSequence bg = background_mask(scenario.edits, shape);
    std::vector<RegionCheck> checks;
    checks.push_back({"background_vs_reconstruction", max_abs_over(edited.latents, reconstruction.latents, bg), 1e-5});
    checks.push_back({"background_vs_source", max_abs_over(edited.latents, scenario.source, bg), 1e-5});

    const double s = plan.cfg_scale;
    std::vector<std::vector<double>> outcome;
    std::vector<std::vector<double>> outcome_swapped;
    for (std::size_t i = 0; i < scenario.edits.size(); ++i) {
        const auto& e = scenario.edits[i];
        // Guided sigma-0 limit: mu_src + s (mu_i - mu_src), per pixel.
        LatentSequence guided = scenario.source;
        for (std::size_t k = 0; k < guided.size(); ++k) {
            const double mu_i = scenario.target_means[i][k % shape.channels];
            guided[k] = scenario.source[k] + s * (mu_i - scenario.source[k]);
        }
        checks.push_back({"instance_" + e.instance_id + "_vs_target", max_abs_over(edited.latents, guided, e.masks),
                          1e-3});
        outcome.push_back(implied_target(edited.latents, scenario.source, e.masks, s));
        outcome_swapped.push_back(implied_target(exchanged.latents, scenario.source, e.masks, s));
    }
    double swap_gap = 0.0;
    for (std::size_t c = 0; c < shape.channels; ++c) {
        swap_gap = std::max(swap_gap, std::abs(outcome_swapped[0][c] - outcome[1][c]));
        swap_gap = std::max(swap_gap, std::abs(outcome_swapped[1][c] - outcome[0][c]));
    }
    checks.push_back({"caption_swap", swap_gap, 1e-12});

    save_latents(out / "latents" / "edited.f32", edited.latents);
    write_frames(out / "frames", latents_to_frames(edited.latents));

    json doc;
    doc["mode"] = edited.report.mode;
    doc["seed"] = plan.seed;
    doc["background_max_abs_deviation"] = checks[1].value;
    doc["checks"] = json::array();
    bool ok = true;
    std::string first_failure;
    for (const auto& c : checks) {
        doc["checks"].push_back({{"name", c.name}, {"value", c.value}, {"tolerance", c.tolerance}, {"pass", c.pass()}});
        if (!c.pass() && ok) {
            ok = false;
            first_failure = c.name;
        }
    }
    doc["instances"] = json::array();
    for (std::size_t i = 0; i < scenario.edits.size(); ++i) {
        doc["instances"].push_back({{"id", scenario.edits[i].instance_id},
                                    {"caption", scenario.edits[i].caption.text()},
                                    {"target_mean", scenario.target_means[i]},
                                    {"implied_mean", outcome[i]}});
    }
    doc["report"] = json::parse(edited.report.to_json(false));
    doc["pass"] = ok;
    const fs::path report = out / "demo_report.json";
    write_text(report, doc.dump(2));
    if (!ok) {
        throw NumericalError("demo check failed: " + first_failure + " (see " + report.string() + ")");
    }
    return {0, report};
}

CommandOutcome run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"instedit: multi-instance video editing sampler", "instedit"};
    app.require_subcommand(1);
    app.fallthrough();
    app.footer(config_help());

    std::string config_file;
    std::vector<std::string> sets;
    std::optional<std::size_t> threads;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out_dir;
    app.add_option("--config", config_file, "JSON config file");
    app.add_option("--set", sets, "override one config key (key=value); repeatable")
        ->expected(1)
        ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
    app.add_option("--threads", threads, "worker cap (same as --set threads=N)");
    app.add_option("--seed", seed, "seed (same as --set seed=N)");
    app.add_option("--out", out_dir, "output directory (same as --set out=DIR)");

    auto* invert = app.add_subcommand("invert", "DDIM-invert the manifest frames and store the trajectory");
    auto* edit = app.add_subcommand("edit", "edit every manifest instance and write frames, latents and a report");
    auto* metrics = app.add_subcommand("metrics", "score edited frames against the manifest");
    auto* demo = app.add_subcommand("demo", "run and check the built-in two-instance toy scenario");
    for (auto* sub : {invert, edit, metrics, demo}) {
        sub->footer(config_help());
    }

    const auto fail = [&](const Error& e) {
        err << error_line(e) << '\n';
        return CommandOutcome{exit_code_for(e.kind()), {}};
    };

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            app.exit(e, out, err);
            return {0, {}};
        }
        return fail(ConfigError(e.what()));
    }

    try {
        RunConfig config;
        if (demo->parsed()) {
            // Demo default; file and --set values still override it.
            config.plan.cfg_scale = 1.0;
        }
        if (!config_file.empty()) {
            apply_config_file(config, config_file);
        }
        for (const auto& s : sets) {
            apply_assignment(config, s);
        }
        if (threads) {
            config.plan.threads = *threads;
        }
        if (seed) {
            config.plan.seed = *seed;
        }
        if (out_dir) {
            config.out = *out_dir;
        }

        CommandOutcome outcome;
        if (invert->parsed()) {
            outcome = cmd_invert(config);
        } else if (edit->parsed()) {
            outcome = cmd_edit(config);
        } else if (metrics->parsed()) {
            outcome = cmd_metrics(config);
        } else {
            outcome = cmd_demo(config);
        }
        out << "wrote " << outcome.report_path.string() << '\n';
        return outcome;
    } catch (const Error& e) {
        return fail(e);
    } catch (const fs::filesystem_error& e) {
        return fail(DataError(e.what()));
    }
}

}  // namespace instedit::cli
