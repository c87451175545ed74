// Copyright (C) 2026 The instedit Authors
// SPDX-License-Identifier: Apache-2.0

#include "instedit/manifest.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "instedit/errors.hpp"
#include "instedit/io.hpp"
#include "json.hpp"

namespace instedit {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::vector<fs::path> resolve_paths(const json& list, const fs::path& base, const std::string& what) {
    INSTEDIT_CHECK(list.is_array(), DataError, "manifest field " + what + " must be an array of paths");
    std::vector<fs::path> out;
    for (const auto& item : list) {
        INSTEDIT_CHECK(item.is_string(), DataError, "manifest field " + what + " holds a non-string entry");
        fs::path p = item.get<std::string>();
        if (p.is_relative()) {
            p = base / p;
        }
        p = p.lexically_normal();
        INSTEDIT_CHECK(fs::exists(p), DataError, "manifest " + what + " file not found: " + p.string());
        out.push_back(std::move(p));
    }
    return out;
}

std::string optional_string(const json& doc, const char* key) {
    if (!doc.contains(key) || doc.at(key).is_null()) {
        return {};
    }
    INSTEDIT_CHECK(doc.at(key).is_string(), DataError, std::string("manifest field ") + key + " must be a string");
    return doc.at(key).get<std::string>();
}

std::vector<std::string> relative_to(std::span<const fs::path> paths, const fs::path& base) {
    std::vector<std::string> out;
    for (const auto& p : paths) {
        out.push_back(fs::absolute(p).lexically_relative(base).generic_string());
    }
    return out;
}

}  // namespace

VideoManifest parse_manifest(const std::string& json_text, const fs::path& base_dir) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::exception& e) {
        throw DataError(std::string("manifest is not valid JSON: ") + e.what());
    }
    INSTEDIT_CHECK(doc.is_object(), DataError, "manifest must be a JSON object");
    INSTEDIT_CHECK(doc.contains("frames"), DataError, "manifest has no frames");

    VideoManifest m;
    m.frames = resolve_paths(doc.at("frames"), base_dir, "frames");
    INSTEDIT_CHECK(!m.frames.empty(), DataError, "manifest lists no frames");
    const std::size_t n = m.frames.size();
    m.global_source_caption = optional_string(doc, "global_source_caption");
    m.global_target_caption = optional_string(doc, "global_target_caption");
    if (doc.contains("controls") && !doc.at("controls").is_null()) {
        m.controls = resolve_paths(doc.at("controls"), base_dir, "controls");
        INSTEDIT_CHECK(m.controls.size() == n, DataError,
                       "manifest lists " + std::to_string(m.controls.size()) + " control maps for " +
                           std::to_string(n) + " frames");
    }

    std::set<std::string> seen;
    if (doc.contains("instances")) {
        INSTEDIT_CHECK(doc.at("instances").is_array(), DataError, "manifest instances must be an array");
        for (const auto& item : doc.at("instances")) {
            INSTEDIT_CHECK(item.is_object() && item.contains("id") && item.at("id").is_string(), DataError,
                           "manifest instance without a string id");
            ManifestInstance inst;
            inst.id = item.at("id").get<std::string>();
            INSTEDIT_CHECK(!inst.id.empty(), DataError, "manifest instance with an empty id");
            INSTEDIT_CHECK(seen.insert(inst.id).second, DataError, "duplicate instance id " + inst.id);
            INSTEDIT_CHECK(item.contains("caption") && item.at("caption").is_string(), DataError,
                           "instance " + inst.id + " has no caption");
            inst.caption = item.at("caption").get<std::string>();
            inst.source_caption = optional_string(item, "source_caption");
            INSTEDIT_CHECK(item.contains("masks"), DataError, "instance " + inst.id + " has no masks");
            inst.masks = resolve_paths(item.at("masks"), base_dir, "masks of " + inst.id);
            INSTEDIT_CHECK(inst.masks.size() == n, DataError,
                           "instance " + inst.id + " lists " + std::to_string(inst.masks.size()) + " masks for " +
                               std::to_string(n) + " frames");
            m.instances.push_back(std::move(inst));
        }
    }
    return m;
}

VideoManifest load_manifest(const fs::path& path) {
    std::ifstream in(path);
    INSTEDIT_CHECK(in.good(), DataError, "cannot open manifest " + path.string());
    std::ostringstream text;
    text << in.rdbuf();
    return parse_manifest(text.str(), fs::absolute(path).parent_path());
}

void save_manifest(const fs::path& path, const VideoManifest& manifest) {
    const fs::path base = fs::absolute(path).parent_path();
    json doc;
    doc["frames"] = relative_to(manifest.frames, base);
    doc["instances"] = json::array();
    for (const auto& inst : manifest.instances) {
        json item = {{"id", inst.id}, {"caption", inst.caption}, {"masks", relative_to(inst.masks, base)}};
        if (!inst.source_caption.empty()) {
            item["source_caption"] = inst.source_caption;
        }
        doc["instances"].push_back(std::move(item));
    }
    if (!manifest.global_source_caption.empty()) {
        doc["global_source_caption"] = manifest.global_source_caption;
    }
    if (!manifest.global_target_caption.empty()) {
        doc["global_target_caption"] = manifest.global_target_caption;
    }
    if (!manifest.controls.empty()) {
        doc["controls"] = relative_to(manifest.controls, base);
    }
    std::ofstream out(path);
    INSTEDIT_CHECK(out.good(), DataError, "cannot write manifest " + path.string());
    out << doc.dump(2) << '\n';
}

std::vector<InstanceEdit> load_instance_edits(const VideoManifest& manifest, std::size_t height, std::size_t width,
                                              std::size_t context_length) {
    std::vector<InstanceEdit> edits;
    for (const auto& inst : manifest.instances) {
        MaskSequence masks = load_masks(inst.masks);
        for (auto& m : masks) {
            m = downsample_mask(m, height, width);
        }
        edits.push_back({inst.id, Caption(inst.caption, context_length), std::move(masks)});
    }
    return edits;
}

}  // namespace instedit
