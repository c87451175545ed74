// Copyright (C) 2026 The instedit Authors
// SPDX-License-Identifier: Apache-2.0

#include "instedit/scenario.hpp"

#include <cstdio>
#include <fstream>
#include <random>

#include "instedit/errors.hpp"
#include "instedit/io.hpp"

namespace instedit {

namespace fs = std::filesystem;

namespace {

constexpr std::size_t kSide = 16;
constexpr std::size_t kChannels = 3;

double level(int v) { return static_cast<double>(v) / 127.5 - 1.0; }

BinaryMask box(std::size_t y0, std::size_t y1, std::size_t x0, std::size_t x1) {
    BinaryMask m(kSide, kSide, 0);
    for (std::size_t y = y0; y < y1; ++y) {
        for (std::size_t x = x0; x < x1; ++x) {
            m.at(y, x) = 1;
        }
    }
    return m;
}

std::string numbered(const char* prefix, std::size_t k, const char* ext) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s%04zu%s", prefix, k, ext);
    return buf;
}

}  // namespace

ToyScenario make_two_instance_scenario(std::uint64_t seed, std::size_t frames) {
    INSTEDIT_CHECK(frames >= 1 && frames <= 8, ConfigError, "toy scenario supports 1 to 8 frames");
    const LatentShape shape{frames, kSide, kSide, kChannels};
    ToyScenario sc;

    // Background: coarse seeded texture on exact 8-bit levels.
    std::mt19937_64 rng(seed);
    std::vector<double> values(shape.size());
    std::vector<int> base(kSide / 4 * kSide / 4 * kChannels);
    for (auto& b : base) {
        b = 64 + static_cast<int>(rng() % 128);
    }
    for (std::size_t f = 0; f < frames; ++f) {
        for (std::size_t y = 0; y < kSide; ++y) {
            for (std::size_t x = 0; x < kSide; ++x) {
                for (std::size_t c = 0; c < kChannels; ++c) {
                    const int b = base[((y / 4) * (kSide / 4) + x / 4) * kChannels + c];
                    const int v = b + static_cast<int>((x + 2 * y + 3 * c + f) % 7) - 3;
                    values[((f * kSide + y) * kSide + x) * kChannels + c] = level(v);
                }
            }
        }
    }
    sc.source = LatentSequence(shape, values, 0);

    MaskSequence left;
    MaskSequence right;
    for (std::size_t f = 0; f < frames; ++f) {
        left.push_back(box(3, 12, 1 + f / 2, 6 + f / 2));
        right.push_back(box(4, 11, 10, 15));
    }
    sc.edits.push_back({"left", Caption("a red balloon"), std::move(left)});
    sc.edits.push_back({"right", Caption("a blue cube"), std::move(right)});
    sc.source_captions = {"a grey ball", "a grey box"};
    sc.target_means = {{level(230), level(40), level(40)}, {level(40), level(60), level(220)}};
    sc.global_source_caption = "a grey ball and a grey box on a table";
    sc.global_target_caption = "a red balloon and a blue cube on a table";

    sc.registry.add("", {{frames, kSide, kSide, kChannels}, values, 0.0});
    for (std::size_t i = 0; i < sc.edits.size(); ++i) {
        sc.registry.add(sc.edits[i].caption.text(), {{kChannels}, sc.target_means[i], 0.0});
    }
    return sc;
}

ToyScenario swap_captions(const ToyScenario& scenario) {
    INSTEDIT_CHECK(scenario.edits.size() == 2, ConfigError, "caption swap needs exactly two instances");
    ToyScenario out = scenario;
    std::swap(out.edits[0].caption, out.edits[1].caption);
    std::swap(out.target_means[0], out.target_means[1]);
    return out;
}

fs::path write_scenario(const ToyScenario& scenario, const fs::path& dir) {
    fs::create_directories(dir / "frames");
    fs::create_directories(dir / "masks");
    VideoManifest manifest;
    const auto images = latents_to_frames(scenario.source);
    for (std::size_t f = 0; f < images.size(); ++f) {
        const fs::path p = dir / "frames" / numbered("frame_", f, ".ppm");
        write_image(p, images[f]);
        manifest.frames.push_back(p);
    }
    for (std::size_t i = 0; i < scenario.edits.size(); ++i) {
        const auto& e = scenario.edits[i];
        ManifestInstance inst{e.instance_id, e.caption.text(), scenario.source_captions[i], {}};
        for (std::size_t f = 0; f < e.masks.size(); ++f) {
            const fs::path p = dir / "masks" / numbered((e.instance_id + "_").c_str(), f, ".pgm");
            write_image(p, mask_to_image(e.masks[f]));
            inst.masks.push_back(p);
        }
        manifest.instances.push_back(std::move(inst));
    }
    manifest.global_source_caption = scenario.global_source_caption;
    manifest.global_target_caption = scenario.global_target_caption;

    std::ofstream reg(dir / "registry.json");
    INSTEDIT_CHECK(reg.good(), DataError, "cannot write " + (dir / "registry.json").string());
    reg << scenario.registry.to_json() << '\n';
    reg.close();

    const fs::path manifest_path = dir / "manifest.json";
    save_manifest(manifest_path, manifest);
    return manifest_path;
}

}  // namespace instedit
