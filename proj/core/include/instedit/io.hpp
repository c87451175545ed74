// Copyright (C) 2026 The instedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "instedit/image.hpp"
#include "instedit/latent.hpp"

namespace instedit {

/// True when the library was built with a PNG codec.
bool png_supported();

/// Reads binary NetPBM (P5 gray, P6 RGB, maxval 255) or PNG.
Image read_image(const std::filesystem::path& path);

/// Writes P5/P6 for .pgm/.ppm/.pnm, PNG for .png.
void write_image(const std::filesystem::path& path, const Image& image);

/// Frames in order; all must share dimensions and channel count.
std::vector<Image> load_frames(std::span<const std::filesystem::path> paths);

/// Pixel >= 128 (first channel) becomes 1, anything else 0.
BinaryMask mask_from_image(const Image& image);
Image mask_to_image(const BinaryMask& mask);

MaskSequence load_masks(std::span<const std::filesystem::path> paths);

/// Coverage pooling onto a coarser grid: target cell (i, j) covers source rows
/// [i*H/h, (i+1)*H/h) and columns [j*W/w, (j+1)*W/w); it is set iff any
/// covered source pixel is set. Throws DataError if the target is larger.
BinaryMask downsample_mask(const BinaryMask& mask, std::size_t height, std::size_t width);

/// Identity "encoder": 8-bit pixels to latents in [-1, 1], one channel per colour channel.
LatentSequence frames_to_latents(std::span<const Image> frames);

/// Inverse of frames_to_latents, clamped and rounded to 8 bits.
std::vector<Image> latents_to_frames(const LatentSequence& latents);

/// Raw float32 little-endian values in (frame, y, x, channel) order at `path`
/// plus a sidecar `path`.json: {"shape": [n, h, w, c], "dtype": "f32le", "timestep": t}.
void save_latents(const std::filesystem::path& path, const LatentSequence& latents);
LatentSequence load_latents(const std::filesystem::path& path);

std::filesystem::path sidecar_path(const std::filesystem::path& data_path);

/// Little-endian float32 helpers shared by binary formats.
void write_f32le(const std::filesystem::path& path, std::span<const float> values);
std::vector<float> read_f32le(const std::filesystem::path& path);

}  // namespace instedit
