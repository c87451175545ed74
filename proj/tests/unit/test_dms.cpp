// Copyright (C) 2026 The instedit Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <string>

#include "doctest.h"
#include "instedit/dms.hpp"
#include "instedit/errors.hpp"
#include "instedit/scenario.hpp"
#include "json.hpp"
#include "support.hpp"

using namespace instedit;

namespace {

const NoiseSchedule& base_schedule() {
    static const NoiseSchedule s = NoiseSchedule::linear_beta();
    return s;
}

MaskSequence half(std::size_t frames, std::size_t h, std::size_t w, bool left) {
    MaskSequence out(frames, BinaryMask(h, w, 0));
    for (auto& m : out) {
        for (std::size_t y = 0; y < h; ++y) {
            for (std::size_t x = 0; x < w; ++x) {
                m.at(y, x) = (x < w / 2) == left ? 1 : 0;
            }
        }
    }
    return out;
}

// Source prior equal to z0 itself, plus constant instance targets.
GaussianRegistry source_registry(const LatentSequence& z0, double sigma) {
    GaussianRegistry reg;
    const auto& s = z0.shape();
    reg.add("", {{s.frames, s.height, s.width, s.channels}, {z0.values().begin(), z0.values().end()}, sigma});
    reg.add("a red balloon", {{}, {0.8}, sigma});
    reg.add("a blue cube", {{}, {-0.6}, sigma});
    reg.add("a green cone", {{}, {0.3}, sigma});
    return reg;
}

double region_max_dev(const LatentSequence& x, const MaskSequence& m, double target) {
    const auto& s = x.shape();
    double worst = 0.0;
    for (std::size_t f = 0; f < s.frames; ++f) {
        for (std::size_t p = 0; p < s.pixels(); ++p) {
            if (m[f].bits[p]) {
                for (std::size_t c = 0; c < s.channels; ++c) {
                    worst = std::max(worst, std::abs(x[(f * s.pixels() + p) * s.channels + c] - target));
                }
            }
        }
    }
    return worst;
}

bool bit_equal(const LatentSequence& a, const LatentSequence& b) {
    return a.shape() == b.shape() && std::equal(a.values().begin(), a.values().end(), b.values().begin());
}

}  // namespace

TEST_CASE("background mask") {
    const LatentShape shape{2, 2, 4, 1};
    const auto none = background_mask({}, shape);
    CHECK(none[0].count() == 8);

    const std::vector<InstanceEdit> full{{"a", Caption("x"), MaskSequence(2, BinaryMask(2, 4, 1))}};
    CHECK(background_mask(full, shape)[1].count() == 0);

    const std::vector<InstanceEdit> halves{{"l", Caption("x"), half(2, 2, 4, true)},
                                           {"r", Caption("y"), half(2, 2, 4, false)}};
    const auto bg = background_mask(halves, shape);
    for (std::size_t f = 0; f < 2; ++f) {
        for (std::size_t p = 0; p < 8; ++p) {
            CHECK(halves[0].masks[f].bits[p] + halves[1].masks[f].bits[p] + bg[f].bits[p] == 1);
        }
    }
}

TEST_CASE("edit validation") {
    const LatentShape shape{2, 2, 4, 1};
    auto overlap = half(2, 2, 4, true);
    overlap[1].at(0, 3) = 1;
    const std::vector<InstanceEdit> bad{{"l", Caption("x"), half(2, 2, 4, true)}, {"r", Caption("y"), overlap}};
    try {
        validate_edits(bad, shape);
        FAIL("overlap accepted");
    } catch (const DataError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("l and r") != std::string::npos);
        CHECK(msg.find("frame 0") != std::string::npos);
    }
    const std::vector<InstanceEdit> short_seq{{"l", Caption("x"), MaskSequence(1, BinaryMask(2, 4, 0))}};
    CHECK_THROWS_AS(validate_edits(short_seq, shape), DataError);
    const std::vector<InstanceEdit> wrong_size{{"l", Caption("x"), MaskSequence(2, BinaryMask(4, 2, 0))}};
    CHECK_THROWS_AS(validate_edits(wrong_size, shape), DataError);
    auto two = MaskSequence(2, BinaryMask(2, 4, 0));
    two[0].bits[0] = 2;
    CHECK_THROWS_AS(validate_edits(std::vector<InstanceEdit>{{"l", Caption("x"), two}}, shape), DataError);
    const std::vector<InstanceEdit> dup{{"l", Caption("x"), half(2, 2, 4, true)}, {"l", Caption("y"), half(2, 2, 4, false)}};
    CHECK_THROWS_AS(validate_edits(dup, shape), DataError);
}

TEST_CASE("trajectory lookup") {
    std::vector<LatentSequence> entries;
    for (int t : {0, 1, 11, 21}) {
        entries.push_back(LatentSequence::filled({1, 1, 1, 1}, t, t));
    }
    const InvertedTrajectory traj(entries);
    CHECK(traj.at(11)[0] == 11.0);
    CHECK(traj.at(14)[0] == 11.0);
    CHECK(traj.at(17)[0] == 21.0);
    CHECK(traj.at(30)[0] == 21.0);
    CHECK_THROWS_AS(traj.at(40), DataError);
    entries.push_back(LatentSequence::filled({1, 1, 1, 1}, 0.0, 11));
    CHECK_THROWS_AS(InvertedTrajectory{entries}, DataError);
}

TEST_CASE("latent fusion") {
    const LatentShape shape{1, 2, 4, 1};
    const int t = 401;
    const InvertedTrajectory traj({LatentSequence::filled(shape, 3.0, 0), LatentSequence::filled(shape, 7.0, t)});
    const auto a = LatentSequence::filled(shape, 1.0, t);
    const auto b = LatentSequence::filled(shape, 2.0, t);

    const std::vector<InstanceEdit> full{{"a", Caption("x"), MaskSequence(1, BinaryMask(2, 4, 1))}};
    CHECK(bit_equal(latent_fusion(std::vector{a}, traj, full, t), a));
    CHECK(bit_equal(latent_fusion(std::vector<LatentSequence>{}, traj, {}, t), traj.at(t)));

    auto left = half(1, 2, 4, true);
    auto right = MaskSequence(1, BinaryMask(2, 4, 0));
    right[0].at(1, 3) = 1;
    const std::vector<InstanceEdit> two{{"l", Caption("x"), left}, {"r", Caption("y"), right}};
    const auto fused = latent_fusion(std::vector{a, b}, traj, two, t);
    for (std::size_t y = 0; y < 2; ++y) {
        for (std::size_t x = 0; x < 4; ++x) {
            const double want = left[0].at(y, x) ? 1.0 : right[0].at(y, x) ? 2.0 : 7.0;
            CHECK(fused.at(0, y, x, 0) == want);
        }
    }
    CHECK_THROWS_AS(latent_fusion(std::vector{a, LatentSequence::filled(shape, 2.0, t + 1)}, traj, two, t), DataError);
}

TEST_CASE("re-inversion") {
    const auto grid = base_schedule().with_sampling_steps(50);
    const auto z = instedit::test::scalar(0.7, grid.model_timestep(30));

    SUBCASE("zero steps is the identity") {
        const ConstantPredictor eps(0.2);
        CHECK(bit_equal(reinvert(z, eps, grid, 30, 0), z));
    }
    SUBCASE("constant eps round trip") {
        const ConstantPredictor eps(0.2);
        const auto up = reinvert(z, eps, grid, 30, 2);
        CHECK(up.timestep() == grid.model_timestep(32));
        const auto back = denoise_sequence(up, eps, grid, Caption::empty(), 1.0, 32, 30);
        CHECK(std::abs(back[0] - 0.7) < 1e-9);
    }
    SUBCASE("Gaussian values from the float64 reference loop") {
        struct Case {
            double sigma, up, back;
        };
        for (const Case c : {Case{0.0, 0.70459073931833449, 0.7}, Case{0.5, 0.70212398539384824, 0.69981120547610187}}) {
            CAPTURE(c.sigma);
            const ToyGaussianPredictor p(instedit::test::scalar_registry({{"", 0.1}}, c.sigma), base_schedule());
            const auto up = reinvert(z, p, grid, 30, 2);
            CHECK(up[0] == doctest::Approx(c.up).epsilon(1e-12));
            const auto back = denoise_sequence(up, p, grid, Caption::empty(), 1.0, 32, 30);
            CHECK(back[0] == doctest::Approx(c.back).epsilon(1e-12));
        }
    }
    SUBCASE("overflow") {
        const ConstantPredictor eps(0.0);
        CHECK_THROWS_AS(reinvert(z, eps, grid, 49, 2), ConfigError);
    }
}

TEST_CASE("series sampling steps") {
    const LatentShape shape{2, 4, 6, 1};
    const auto z0 = instedit::test::random_latents(shape, 8);
    SamplingPlan plan;
    plan.cfg_scale = 1.0;
    const auto grid = base_schedule().with_sampling_steps(plan.total_steps);

    SUBCASE("empty mask follows the reconstruction path") {
        const ToyGaussianPredictor p(source_registry(z0, 0.5), base_schedule());
        const InvertedTrajectory traj(invert_sequence(z0, p, base_schedule(), plan.inversion_steps));
        const DmsContext ctx{p, grid, traj, plan};
        const std::vector<InstanceEdit> e{{"a", Caption("a red balloon"), MaskSequence(2, BinaryMask(4, 6, 0))}};
        const auto sns = run_sns(e, ctx, plan.total_steps);
        CHECK(sns.level == 0);
        SamplingPlan recon_plan = plan;
        recon_plan.sns_fraction = 0.0;
        const auto recon = run_edit_from_trajectory(traj, {}, recon_plan, p, base_schedule());
        CHECK(max_abs_diff(sns.branches[0], recon.latents) <= 1e-12);
    }
    SUBCASE("full mask converges to the caption mean") {
        const ToyGaussianPredictor p(source_registry(z0, 0.0), base_schedule());
        const InvertedTrajectory traj(invert_sequence(z0, p, base_schedule(), plan.inversion_steps));
        const DmsContext ctx{p, grid, traj, plan};
        const std::vector<InstanceEdit> e{{"a", Caption("a red balloon"), MaskSequence(2, BinaryMask(4, 6, 1))}};
        const auto sns = run_sns(e, ctx, plan.total_steps);
        CHECK(region_max_dev(sns.branches[0], e[0].masks, 0.8) < 1e-5);
    }
    SUBCASE("branches do not see each other's captions") {
        TinyAttentionConfig tc;
        tc.channels = 1;
        const auto p = TinyAttentionPredictor(base_schedule(), tc).with_attention_hook(ipr_attention_hook(plan.ipr));
        const InvertedTrajectory traj(invert_sequence(z0, p, base_schedule(), plan.inversion_steps));
        const DmsContext ctx{p, grid, traj, plan};
        std::vector<InstanceEdit> e{{"l", Caption("a red balloon"), half(2, 4, 6, true)},
                                    {"r", Caption("a blue cube"), half(2, 4, 6, false)}};
        const auto first = run_sns(e, ctx, 20);
        e[1].caption = Caption("a green cone");
        const auto second = run_sns(e, ctx, 20);
        CHECK(bit_equal(first.branches[0], second.branches[0]));
        CHECK_FALSE(bit_equal(first.branches[1], second.branches[1]));
    }
}

TEST_CASE("parallel sampling step") {
    const LatentShape shape{1, 4, 6, 1};
    const auto z0 = instedit::test::random_latents(shape, 12);
    SamplingPlan plan;
    const ToyGaussianPredictor p(source_registry(z0, 0.5), base_schedule());
    const auto grid = base_schedule().with_sampling_steps(plan.total_steps);
    const InvertedTrajectory traj(invert_sequence(z0, p, base_schedule(), plan.inversion_steps));
    const DmsContext ctx{p, grid, traj, plan};
    const std::size_t level = 25;
    const int t = grid.model_timestep(level);
    auto z = instedit::test::random_latents(shape, 13);
    z.set_timestep(t);

    SUBCASE("single full-frame instance is an ordinary guided step") {
        const std::vector<InstanceEdit> e{{"a", Caption("a red balloon"), MaskSequence(1, BinaryMask(4, 6, 1))}};
        const auto out = pns_step(z, e, ctx, {level, 25});
        const auto eu = p.predict({.latents = z, .caption = Caption::empty(), .timestep = t});
        const auto ec = p.predict({.latents = z, .caption = e[0].caption, .timestep = t});
        const auto want = ddim_denoise_step(z, cfg_combine(eu, ec, plan.cfg_scale), level, grid);
        CHECK(bit_equal(out, want));
    }
    SUBCASE("each region receives its own caption's noise") {
        const std::vector<InstanceEdit> e{{"l", Caption("a red balloon"), half(1, 4, 6, true)},
                                          {"r", Caption("a blue cube"), half(1, 4, 6, false)}};
        LatentSequence applied;
        pns_step(z, e, ctx, {level, 25}, {}, &applied);
        const auto eu = p.predict({.latents = z, .caption = Caption::empty(), .timestep = t});
        for (const auto& inst : e) {
            const auto want = cfg_combine(eu, p.predict({.latents = z, .caption = inst.caption, .timestep = t}),
                                          plan.cfg_scale);
            for (std::size_t i = 0; i < z.size(); ++i) {
                if (inst.masks[0].bits[i]) {
                    CHECK(applied[i] == want[i]);
                }
            }
        }
    }
    SUBCASE("equal noises everywhere reduce to a plain step") {
        const ConstantPredictor c(0.25);
        const DmsContext cctx{c, grid, traj, plan};
        const std::vector<InstanceEdit> e{{"l", Caption("x"), half(1, 4, 6, true)}};
        const auto out = pns_step(z, e, cctx, {level, 25});
        const auto want = ddim_denoise_step(z, LatentSequence::filled(shape, 0.25, t), level, grid);
        CHECK(max_abs_diff(out, want) <= 1e-15);
    }
}

TEST_CASE("full edit on the toy scenario") {
    const auto sc = make_two_instance_scenario(3);
    const ToyGaussianPredictor p(sc.registry, base_schedule());
    SamplingPlan plan;
    plan.cfg_scale = 1.0;
    const InvertedTrajectory traj(invert_sequence(sc.source, p, base_schedule(), plan.inversion_steps));
    const auto bg = background_mask(sc.edits, sc.source.shape());

    const auto recon = run_edit_from_trajectory(traj, {}, plan, p, base_schedule());
    CHECK(max_abs_diff(recon.latents, sc.source) < 1e-5);

    for (double s : {1.0, 12.5}) {
        CAPTURE(s);
        plan.cfg_scale = s;
        const auto edited = run_edit_from_trajectory(traj, sc.edits, plan, p, base_schedule());
        for (std::size_t i = 0; i < sc.edits.size(); ++i) {
            const auto& m = sc.edits[i].masks;
            const auto& sh = sc.source.shape();
            for (std::size_t f = 0; f < sh.frames; ++f) {
                for (std::size_t px = 0; px < sh.pixels(); ++px) {
                    for (std::size_t c = 0; c < sh.channels; ++c) {
                        const std::size_t k = (f * sh.pixels() + px) * sh.channels + c;
                        const double mu_src = sc.source[k];
                        if (m[f].bits[px]) {
                            REQUIRE(std::abs(edited.latents[k] - (mu_src + s * (sc.target_means[i][c] - mu_src))) < 1e-5);
                        } else if (bg[f].bits[px]) {
                            REQUIRE(std::abs(edited.latents[k] - recon.latents[k]) < 1e-5);
                        }
                    }
                }
            }
        }
    }
}

TEST_CASE("run report and plan variants") {
    const auto sc = make_two_instance_scenario(1, 2);
    const ToyGaussianPredictor p(sc.registry, base_schedule());
    SamplingPlan plan;

    const auto r = run_edit(sc.source, sc.edits, plan, p, base_schedule());
    CHECK(r.report.mode == "SNS + re-inversion + PNS");
    CHECK(r.report.reinversion_steps_effective == 2);
    REQUIRE(r.report.phases.size() == 5);
    CHECK(r.report.phases[0].name == "inversion");
    CHECK(r.report.phases[1].steps == 20);
    CHECK(r.report.phases[3].from_level == 30);
    CHECK(r.report.phases[3].to_level == 32);
    CHECK(r.report.phases[4].steps == 32);
    CHECK(r.latents.timestep() == 0);

    const auto doc = nlohmann::json::parse(r.report.to_json(false));
    CHECK(doc["plan"]["cfg_scale"] == 12.5);
    CHECK_FALSE(doc["phases"][0].contains("wall_ms"));
    CHECK(nlohmann::json::parse(r.report.to_json(true))["phases"][0].contains("wall_ms"));

    SamplingPlan pure_pns = plan;
    pure_pns.sns_fraction = 0.0;
    CHECK(pure_pns.mode_label() == "pure PNS");
    const auto rp = run_edit(sc.source, sc.edits, pure_pns, p, base_schedule());
    CHECK(rp.report.phases.size() == 2);
    CHECK(rp.report.phases[1].steps == 50);

    SamplingPlan pure_sns = plan;
    pure_sns.sns_fraction = 1.0;
    pure_sns.reinversion_steps = 0;
    CHECK(pure_sns.mode_label() == "pure SNS");
    const auto rs = run_edit(sc.source, sc.edits, pure_sns, p, base_schedule());
    CHECK(rs.report.phases.back().steps == 0);

    SamplingPlan no_reinv = plan;
    no_reinv.reinversion_steps = 0;
    CHECK(no_reinv.mode_label() == "SNS + PNS (no re-inv)");

    SamplingPlan tight = plan;
    tight.sns_fraction = 0.02;
    tight.reinversion_steps = 3;
    const auto rt = run_edit(sc.source, sc.edits, tight, p, base_schedule());
    CHECK(rt.report.reinversion_steps_effective == 1);

    SamplingPlan bad = plan;
    bad.sns_fraction = 1.5;
    CHECK_THROWS_AS(run_edit(sc.source, sc.edits, bad, p, base_schedule()), ConfigError);
}

TEST_CASE("thread count does not change results") {
    const auto sc = make_two_instance_scenario(5);
    TinyAttentionConfig tc;
    tc.channels = 3;
    SamplingPlan plan;
    const auto p = TinyAttentionPredictor(base_schedule(), tc).with_attention_hook(ipr_attention_hook(plan.ipr));
    const auto one = run_edit(sc.source, sc.edits, plan, p, base_schedule());
    plan.threads = 4;
    const auto four = run_edit(sc.source, sc.edits, plan, p, base_schedule());
    CHECK(bit_equal(one.latents, four.latents));
    CHECK(one.report.instances[0].lambda_s == four.report.instances[0].lambda_s);
    CHECK_FALSE(one.report.instances[0].lambda_s.empty());
}

TEST_CASE("phase errors carry context") {
    const auto sc = make_two_instance_scenario(0, 2);
    GaussianRegistry partial;
    partial.add("", sc.registry.at(Caption::empty()));
    const ToyGaussianPredictor p(partial, base_schedule());
    try {
        run_edit(sc.source, sc.edits, SamplingPlan{}, p, base_schedule());
        FAIL("unknown caption accepted");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).rfind("sns phase: ", 0) == 0);
    }
}
