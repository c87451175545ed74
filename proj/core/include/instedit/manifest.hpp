// Copyright (C) 2026 The instedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "instedit/dms.hpp"

namespace instedit {

struct ManifestInstance {
    std::string id;
    std::string caption;         // target caption
    std::string source_caption;  // optional
    std::vector<std::filesystem::path> masks;

    bool operator==(const ManifestInstance&) const = default;
};

/// Input video description. Paths are absolute after loading (resolved
/// against the manifest's directory).
///
///   {
///     "frames": ["frames/0000.ppm", ...],
///     "instances": [{"id": "left", "caption": "...", "source_caption": "...",
///                    "masks": ["masks/left_0000.pgm", ...]}],
///     "global_source_caption": "...", "global_target_caption": "...",
///     "controls": ["control/0000.pgm", ...]
///   }
struct VideoManifest {
    std::vector<std::filesystem::path> frames;
    std::vector<ManifestInstance> instances;
    std::string global_source_caption;
    std::string global_target_caption;
    std::vector<std::filesystem::path> controls;

    bool operator==(const VideoManifest&) const = default;
};

/// Parses and validates. Throws DataError for missing files, per-instance
/// mask counts or control counts that differ from the frame count, and
/// duplicate instance ids.
VideoManifest load_manifest(const std::filesystem::path& path);
VideoManifest parse_manifest(const std::string& json_text, const std::filesystem::path& base_dir);

/// Writes `manifest` with paths relative to the manifest's directory.
void save_manifest(const std::filesystem::path& path, const VideoManifest& manifest);

/// Loads every instance's masks and brings them to `height` x `width`.
std::vector<InstanceEdit> load_instance_edits(const VideoManifest& manifest, std::size_t height, std::size_t width,
                                              std::size_t context_length = kDefaultContextLength);

}  // namespace instedit
