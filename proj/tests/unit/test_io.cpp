// Copyright (C) 2026 The instedit Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <fstream>

#include "doctest.h"
#include "instedit/errors.hpp"
#include "instedit/io.hpp"
#include "instedit/manifest.hpp"
#include "support.hpp"

using namespace instedit;
namespace fs = std::filesystem;

namespace {

const fs::path kSample = fs::path(INSTEDIT_TEST_DATA_DIR) / "sample_manifest";

void write_text(const fs::path& p, const std::string& s) {
    fs::create_directories(p.parent_path());
    std::ofstream(p) << s;
}

}  // namespace

TEST_CASE("mask threshold") {
    Image img(1, 4, 1);
    img.data = {0, 127, 128, 255};
    const auto m = mask_from_image(img);
    CHECK(m.bits == std::vector<std::uint8_t>{0, 0, 1, 1});
    CHECK(mask_to_image(m).data == std::vector<std::uint8_t>{0, 0, 255, 255});

    const auto dir = instedit::test::temp_dir("io_mask");
    write_image(dir / "white.pgm", Image(3, 5, 1, 255));
    const auto white = load_masks(std::vector<fs::path>{dir / "white.pgm"});
    REQUIRE(white.size() == 1);
    CHECK(white[0].count() == 15);
}

TEST_CASE("netpbm round trip") {
    const auto dir = instedit::test::temp_dir("io_pnm");
    Image img(3, 4, 3);
    for (std::size_t i = 0; i < img.data.size(); ++i) {
        img.data[i] = static_cast<std::uint8_t>(i * 7);
    }
    write_image(dir / "f.ppm", img);
    CHECK(read_image(dir / "f.ppm") == img);

    write_text(dir / "ascii.ppm", "P3\n1 1\n255\n1 2 3\n");
    CHECK_THROWS_AS(read_image(dir / "ascii.ppm"), DataError);
    write_text(dir / "short.ppm", "P6\n4 4\n255\nabc");
    CHECK_THROWS_AS(read_image(dir / "short.ppm"), DataError);
    write_text(dir / "deep.pgm", "P5\n1 1\n65535\nab");
    CHECK_THROWS_AS(read_image(dir / "deep.pgm"), DataError);
    CHECK_THROWS_AS(read_image(dir / "none.ppm"), DataError);
}

TEST_CASE("mask downsampling") {
    BinaryMask m(8, 8, 0);
    m.at(5, 6) = 1;
    const auto d = downsample_mask(m, 2, 2);
    CHECK(d.bits == std::vector<std::uint8_t>{0, 0, 0, 1});
    CHECK(downsample_mask(m, 8, 8) == m);
    CHECK_THROWS_AS(downsample_mask(m, 16, 8), DataError);
    CHECK_THROWS_AS(downsample_mask(m, 0, 2), DataError);

    for (std::size_t y = 0; y < 8; ++y) {
        for (std::size_t x = 0; x < 8; ++x) {
            BinaryMask one(8, 8, 0);
            one.at(y, x) = 1;
            for (std::size_t h = 1; h <= 8; ++h) {
                REQUIRE(downsample_mask(one, h, 9 - h).count() == 1);
            }
        }
    }
}

TEST_CASE("frame latents") {
    Image img(2, 2, 3);
    for (std::size_t i = 0; i < img.data.size(); ++i) {
        img.data[i] = static_cast<std::uint8_t>(i * 23);
    }
    const std::vector<Image> frames{img, Image(2, 2, 3, 255)};
    const auto z = frames_to_latents(frames);
    CHECK(z.shape() == LatentShape{2, 2, 2, 3});
    CHECK(z.at(1, 0, 0, 0) == doctest::Approx(1.0));
    CHECK(z.at(0, 0, 0, 0) == doctest::Approx(-1.0));
    CHECK(latents_to_frames(z) == frames);
    CHECK_THROWS_AS(frames_to_latents(std::vector<Image>{img, Image(3, 2, 3)}), DataError);
}

TEST_CASE("latent files") {
    const auto dir = instedit::test::temp_dir("io_latent");
    auto z = instedit::test::random_latents({2, 3, 4, 2}, 11, -3.0, 3.0);
    z.set_timestep(41);
    save_latents(dir / "z.f32", z);
    CHECK(fs::exists(sidecar_path(dir / "z.f32")));
    const auto back = load_latents(dir / "z.f32");
    CHECK(back.shape() == z.shape());
    CHECK(back.timestep() == 41);
    CHECK(max_abs_diff(back, z) <= 1e-6);
    for (std::size_t i = 0; i < z.size(); ++i) {
        REQUIRE(back[i] == static_cast<double>(static_cast<float>(z[i])));
    }
    CHECK(fs::file_size(dir / "z.f32") == z.size() * 4);

    CHECK_THROWS_AS(save_latents(dir / "e.f32", LatentSequence{}), DataError);
    write_f32le(dir / "odd.f32", std::vector<float>{1.0F, 2.0F});
    CHECK_THROWS_AS(load_latents(dir / "odd.f32"), DataError);
    fs::copy_file(sidecar_path(dir / "z.f32"), sidecar_path(dir / "odd.f32"));
    CHECK_THROWS_AS(load_latents(dir / "odd.f32"), DataError);
    write_text(dir / "trunc.f32", "abc");
    CHECK_THROWS_AS(read_f32le(dir / "trunc.f32"), DataError);
    write_text(dir / "empty.f32", "");
    write_text(sidecar_path(dir / "empty.f32"), R"({"shape":[0,1,1,1],"dtype":"f32le"})");
    CHECK_THROWS_AS(load_latents(dir / "empty.f32"), DataError);
}

TEST_CASE("sample manifest") {
    const auto m = load_manifest(kSample / "manifest.json");
    REQUIRE(m.frames.size() == 2);
    CHECK(m.frames[1] == (kSample / "frames/0001.ppm").lexically_normal());
    CHECK(m.global_source_caption == "a dog in a garden");
    CHECK(m.global_target_caption == "a cat in a garden");
    CHECK(m.controls.empty());
    REQUIRE(m.instances.size() == 2);
    CHECK(m.instances[0].id == "dog");
    CHECK(m.instances[0].caption == "a grey cat");
    CHECK(m.instances[0].source_caption == "a brown dog");
    CHECK(m.instances[0].masks[1] == (kSample / "masks/dog_0001.pgm").lexically_normal());
    CHECK(m.instances[1].id == "hat");
    CHECK(m.instances[1].source_caption.empty());

    const auto frames = load_frames(m.frames);
    CHECK(frames[1].at(0, 0, 0) == 10);

    const auto edits = load_instance_edits(m, 4, 4);
    REQUIRE(edits.size() == 2);
    CHECK(edits[0].caption.text() == "a grey cat");
    CHECK(edits[0].masks[1].count() == 4);
    CHECK(edits[0].masks[1].at(0, 1) == 1);
    CHECK(edits[0].masks[1].at(0, 0) == 0);
    CHECK(edits[1].masks[0].count() == 1);
    CHECK(edits[1].masks[0].at(3, 3) == 1);
    const auto small = load_instance_edits(m, 2, 2);
    CHECK(small[1].masks[0].bits == std::vector<std::uint8_t>{0, 0, 0, 1});

    const auto dir = instedit::test::temp_dir("io_manifest");
    save_manifest(dir / "copy.json", m);
    CHECK(load_manifest(dir / "copy.json") == m);
}

TEST_CASE("manifest validation") {
    const auto parse = [&](const std::string& text) { return parse_manifest(text, kSample); };

    const auto plain = parse(R"({"frames": ["frames/0000.ppm", "frames/0001.ppm"]})");
    CHECK(plain.instances.empty());
    CHECK(plain.frames.size() == 2);

    CHECK_THROWS_AS(parse("{"), DataError);
    CHECK_THROWS_AS(parse("[]"), DataError);
    CHECK_THROWS_AS(parse(R"({"frames": []})"), DataError);
    CHECK_THROWS_AS(parse(R"({"frames": ["frames/9999.ppm"]})"), DataError);
    CHECK_THROWS_AS(parse(R"({"frames": ["frames/0000.ppm"], "controls": ["frames/0000.ppm", "frames/0001.ppm"]})"),
                    DataError);
    CHECK_THROWS_AS(parse(R"({"frames": ["frames/0000.ppm", "frames/0001.ppm"],
        "instances": [{"id": "dog", "caption": "x", "masks": ["masks/dog_0000.pgm"]}]})"),
                    DataError);
    CHECK_THROWS_AS(parse(R"({"frames": ["frames/0000.ppm"],
        "instances": [{"id": "a", "caption": "x", "masks": ["masks/dog_0000.pgm"]},
                      {"id": "a", "caption": "y", "masks": ["masks/hat_0000.pgm"]}]})"),
                    DataError);
    CHECK_THROWS_AS(parse(R"({"frames": ["frames/0000.ppm"], "instances": [{"id": "a", "masks": []}]})"),
                    DataError);
    CHECK_THROWS_AS(load_manifest(kSample / "absent.json"), DataError);

    const auto m = parse(R"({"frames": ["frames/0000.ppm"],
        "instances": [{"id": "a", "caption": "x", "masks": ["masks/dog_0000.pgm"]}]})");
    CHECK_THROWS_AS(load_instance_edits(m, 8, 8), DataError);
}
