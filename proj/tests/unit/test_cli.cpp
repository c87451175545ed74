// Copyright (C) 2026 The instedit Authors
// SPDX-License-Identifier: Apache-2.0

#include <fstream>
#include <sstream>

#include "doctest.h"
#include "instedit/io.hpp"
#include "instedit/scenario.hpp"
#include "instedit_cli/cli.hpp"
#include "json.hpp"
#include "support.hpp"

using namespace instedit;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Run {
    int code = 0;
    std::string out;
    std::string err;
};

Run run(std::vector<std::string> args) {
    std::ostringstream out;
    std::ostringstream err;
    const auto outcome = cli::run_cli(args, out, err);
    return {outcome.exit_code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

// Two-frame scenario on disk.
fs::path scenario_dir(const std::string& name) {
    const auto dir = instedit::test::temp_dir(name);
    return write_scenario(make_two_instance_scenario(3, 2), dir / "scenario");
}

std::vector<std::string> quick(const fs::path& manifest, const fs::path& out) {
    return {"--set", "manifest=" + manifest.string(), "--set", "registry=" + (manifest.parent_path() / "registry.json").string(),
            "--set", "steps=10", "--set", "inversion_steps=20", "--out", out.string()};
}

}  // namespace

TEST_CASE("exit codes") {
    CHECK(cli::exit_code_for(ErrorKind::Config) == 2);
    CHECK(cli::exit_code_for(ErrorKind::Data) == 3);
    CHECK(cli::exit_code_for(ErrorKind::Numerical) == 4);
    CHECK(cli::error_line(NumericalError("diverged")) == "error kind=numerical code=4 message=diverged");

    const auto help = run({"--help"});
    CHECK(help.code == 0);
    CHECK(help.out.find("ipr.lambda_r") != std::string::npos);
    CHECK(run({"edit", "--help"}).code == 0);

    CHECK(run({}).code == 2);
    CHECK(run({"frobnicate"}).code == 2);
    const auto unknown = run({"demo", "--set", "nokey=1"});
    CHECK(unknown.code == 2);
    CHECK(unknown.err.rfind("error kind=config code=2 message=", 0) == 0);
    CHECK(run({"demo", "--set", "sns_fraction=2"}).code == 2);
    CHECK(run({"edit"}).code == 2);

    const auto dir = instedit::test::temp_dir("cli_codes");
    CHECK(run({"edit", "--set", "manifest=" + (dir / "none.json").string(), "--out", (dir / "o").string()}).code == 3);
    std::ofstream(dir / "bad.json") << "{";
    CHECK(run({"demo", "--config", (dir / "bad.json").string()}).code == 2);
}

TEST_CASE("overlapping masks are a data error") {
    const auto manifest = scenario_dir("cli_overlap");
    const auto doc = json::parse(slurp(manifest));
    const fs::path base = manifest.parent_path();
    for (std::size_t f = 0; f < doc["frames"].size(); ++f) {
        fs::copy_file(base / doc["instances"][0]["masks"][f].get<std::string>(),
                      base / doc["instances"][1]["masks"][f].get<std::string>(), fs::copy_options::overwrite_existing);
    }
    auto args = quick(manifest, base.parent_path() / "out");
    args.insert(args.begin(), "edit");
    const auto r = run(args);
    CHECK(r.code == 3);
    CHECK(r.err.find("instance masks overlap: left and right in frame 0") != std::string::npos);
}

TEST_CASE("edit, invert and metrics") {
    const auto manifest = scenario_dir("cli_pipeline");
    const fs::path root = manifest.parent_path().parent_path();

    auto edit = quick(manifest, root / "a");
    edit.insert(edit.begin(), "edit");
    REQUIRE(run(edit).code == 0);
    for (const char* f : {"latents/edited.f32", "latents/edited.f32.json", "frames/frame_0000.ppm", "timing.json",
                          "config.json", "report.json"}) {
        CHECK(fs::exists(root / "a" / f));
    }
    const auto report = json::parse(slurp(root / "a/report.json"));
    CHECK(report["mode"] == "SNS + re-inversion + PNS");

    auto again = quick(manifest, root / "b");
    again.insert(again.begin(), "edit");
    REQUIRE(run(again).code == 0);
    CHECK(slurp(root / "a/report.json") == slurp(root / "b/report.json"));
    CHECK(slurp(root / "a/latents/edited.f32") == slurp(root / "b/latents/edited.f32"));

    auto inv = quick(manifest, root / "inv");
    inv.insert(inv.begin(), "invert");
    REQUIRE(run(inv).code == 0);
    const auto inv_report = json::parse(slurp(root / "inv/invert_report.json"));
    CHECK(inv_report["timesteps"].size() == 21);

    auto from_traj = quick(manifest, root / "c");
    from_traj.insert(from_traj.begin(), "edit");
    from_traj.insert(from_traj.end(), {"--set", "trajectory=" + (root / "inv/trajectory").string()});
    REQUIRE(run(from_traj).code == 0);
    const auto a = load_latents(root / "a/latents/edited.f32");
    const auto c = load_latents(root / "c/latents/edited.f32");
    CHECK(max_abs_diff(a, c) < 1e-3);

    auto metrics = quick(manifest, root / "a");
    metrics.insert(metrics.begin(), "metrics");
    REQUIRE(run(metrics).code == 0);
    const auto m = json::parse(slurp(root / "a/metrics.json"));
    CHECK(m["lpips"].is_null());
    CHECK(m["instances"].size() == 2);
    CHECK(m["ssim"].get<double>() > 0.99);
}

TEST_CASE("demo") {
    const auto dir = instedit::test::temp_dir("cli_demo");
    const auto r = run({"demo", "--out", (dir / "d").string(), "--seed", "5"});
    REQUIRE(r.code == 0);
    const auto doc = json::parse(slurp(dir / "d/demo_report.json"));
    CHECK(doc["pass"] == true);
    CHECK(doc["mode"] == "SNS + re-inversion + PNS");
    CHECK(doc["checks"].size() == 5);
    CHECK(doc["background_max_abs_deviation"].get<double>() <= 1e-5);

    const auto sns = run({"demo", "--out", (dir / "s").string(), "--set", "sns_fraction=1", "--set",
                          "reinversion_steps=0"});
    REQUIRE(sns.code == 0);
    CHECK(json::parse(slurp(dir / "s/demo_report.json"))["mode"] == "pure SNS");

    const auto pns = run({"demo", "--out", (dir / "p").string(), "--set", "sns_fraction=0"});
    REQUIRE(pns.code == 0);
    CHECK(json::parse(slurp(dir / "p/demo_report.json"))["mode"] == "pure PNS");
}
