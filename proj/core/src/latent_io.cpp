// Copyright (C) 2026 The instedit Authors
// SPDX-License-Identifier: Apache-2.0

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "instedit/errors.hpp"
#include "instedit/io.hpp"
#include "json.hpp"

namespace instedit {

namespace fs = std::filesystem;
using nlohmann::json;

fs::path sidecar_path(const fs::path& data_path) {
    fs::path p = data_path;
    p += ".json";
    return p;
}

void write_f32le(const fs::path& path, std::span<const float> values) {
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary);
    INSTEDIT_CHECK(out.good(), DataError, "cannot write " + path.string());
    std::vector<unsigned char> bytes(values.size() * 4);
    for (std::size_t i = 0; i < values.size(); ++i) {
        const auto bits = std::bit_cast<std::uint32_t>(values[i]);
        for (std::size_t b = 0; b < 4; ++b) {
            bytes[i * 4 + b] = static_cast<unsigned char>((bits >> (8 * b)) & 0xffu);
        }
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    INSTEDIT_CHECK(out.good(), DataError, "failed writing " + path.string());
}

std::vector<float> read_f32le(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    INSTEDIT_CHECK(in.good(), DataError, "cannot open " + path.string());
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    INSTEDIT_CHECK(bytes.size() % 4 == 0, DataError, path.string() + ": size is not a multiple of 4 bytes");
    std::vector<float> values(bytes.size() / 4);
    for (std::size_t i = 0; i < values.size(); ++i) {
        std::uint32_t bits = 0;
        for (std::size_t b = 0; b < 4; ++b) {
            bits |= static_cast<std::uint32_t>(bytes[i * 4 + b]) << (8 * b);
        }
        values[i] = std::bit_cast<float>(bits);
    }
    return values;
}

void save_latents(const fs::path& path, const LatentSequence& latents) {
    INSTEDIT_CHECK(!latents.empty(), DataError, "refusing to save an empty latent sequence");
    std::vector<float> values(latents.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        values[i] = static_cast<float>(latents[i]);
    }
    write_f32le(path, values);
    const auto& s = latents.shape();
    json meta = {{"shape", {s.frames, s.height, s.width, s.channels}},
                 {"dtype", "f32le"},
                 {"timestep", latents.timestep()}};
    std::ofstream out(sidecar_path(path));
    INSTEDIT_CHECK(out.good(), DataError, "cannot write " + sidecar_path(path).string());
    out << meta.dump(2) << "\n";
}

LatentSequence load_latents(const fs::path& path) {
    std::ifstream meta_in(sidecar_path(path));
    INSTEDIT_CHECK(meta_in.good(), DataError, "missing latent sidecar " + sidecar_path(path).string());
    json meta;
    try {
        meta = json::parse(meta_in);
    } catch (const json::exception& e) {
        throw DataError("bad latent sidecar " + sidecar_path(path).string() + ": " + e.what());
    }
    INSTEDIT_CHECK(meta.value("dtype", "") == "f32le", DataError, "latent sidecar dtype must be f32le");
    INSTEDIT_CHECK(meta.contains("shape") && meta["shape"].is_array() && meta["shape"].size() == 4, DataError,
                   "latent sidecar shape must be [n, h, w, c]");
    const auto dims = meta["shape"].get<std::vector<std::size_t>>();
    const LatentShape shape{dims[0], dims[1], dims[2], dims[3]};
    INSTEDIT_CHECK(shape.size() > 0, DataError, "latent sidecar describes an empty sequence");
    const auto raw = read_f32le(path);
    INSTEDIT_CHECK(raw.size() == shape.size(), DataError,
                   path.string() + ": holds " + std::to_string(raw.size()) + " values but sidecar shape " +
                       to_string(shape) + " needs " + std::to_string(shape.size()));
    std::vector<double> values(raw.begin(), raw.end());
    return LatentSequence(shape, std::move(values), meta.value("timestep", 0));
}

}  // namespace instedit
