// Copyright (C) 2026 The instedit Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>

#include "instedit/errors.hpp"
#include "instedit/io.hpp"

#ifdef INSTEDIT_HAVE_PNG
#include <png.h>
#endif

namespace instedit {

namespace fs = std::filesystem;

namespace {

std::string lower_extension(const fs::path& path) {
    std::string ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext;
}

// Next header integer of a NetPBM file, skipping whitespace and comments.
std::size_t read_pnm_int(std::istream& in, const fs::path& path) {
    int c = in.get();
    while (c != EOF) {
        if (c == '#') {
            while (c != EOF && c != '\n') {
                c = in.get();
            }
        } else if (!std::isspace(c)) {
            break;
        }
        c = in.get();
    }
    std::string digits;
    while (c != EOF && std::isdigit(c)) {
        digits.push_back(static_cast<char>(c));
        c = in.get();
    }
    INSTEDIT_CHECK(!digits.empty(), DataError, "malformed NetPBM header in " + path.string());
    // `c` is the single whitespace byte that terminates the field.
    return static_cast<std::size_t>(std::stoul(digits));
}

Image read_pnm(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    INSTEDIT_CHECK(in.good(), DataError, "cannot open image " + path.string());
    char magic[2] = {0, 0};
    in.read(magic, 2);
    INSTEDIT_CHECK(in.gcount() == 2 && magic[0] == 'P' && (magic[1] == '5' || magic[1] == '6'), DataError,
                   "unsupported image format (want binary P5/P6): " + path.string());
    const std::size_t channels = magic[1] == '5' ? 1 : 3;
    const std::size_t width = read_pnm_int(in, path);
    const std::size_t height = read_pnm_int(in, path);
    const std::size_t maxval = read_pnm_int(in, path);
    INSTEDIT_CHECK(maxval == 255, DataError, "only 8-bit NetPBM (maxval 255) is supported: " + path.string());
    INSTEDIT_CHECK(width > 0 && height > 0, DataError, "empty image " + path.string());
    Image img(height, width, channels);
    in.read(reinterpret_cast<char*>(img.data.data()), static_cast<std::streamsize>(img.data.size()));
    INSTEDIT_CHECK(static_cast<std::size_t>(in.gcount()) == img.data.size(), DataError,
                   "truncated pixel data in " + path.string());
    return img;
}

void write_pnm(const fs::path& path, const Image& img) {
    INSTEDIT_CHECK(img.channels == 1 || img.channels == 3, DataError, "NetPBM needs 1 or 3 channels");
    std::ofstream out(path, std::ios::binary);
    INSTEDIT_CHECK(out.good(), DataError, "cannot write image " + path.string());
    out << (img.channels == 1 ? "P5" : "P6") << "\n" << img.width << " " << img.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(img.data.data()), static_cast<std::streamsize>(img.data.size()));
    INSTEDIT_CHECK(out.good(), DataError, "failed writing " + path.string());
}

#ifdef INSTEDIT_HAVE_PNG
Image read_png(const fs::path& path) {
    png_image png{};
    png.version = PNG_IMAGE_VERSION;
    INSTEDIT_CHECK(png_image_begin_read_from_file(&png, path.string().c_str()) != 0, DataError,
                   "cannot read PNG " + path.string());
    const bool gray = (png.format & PNG_FORMAT_FLAG_COLOR) == 0;
    png.format = gray ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
    Image img(png.height, png.width, gray ? 1 : 3);
    if (png_image_finish_read(&png, nullptr, img.data.data(), 0, nullptr) == 0) {
        png_image_free(&png);
        throw DataError("cannot decode PNG " + path.string());
    }
    return img;
}

void write_png(const fs::path& path, const Image& img) {
    png_image png{};
    png.version = PNG_IMAGE_VERSION;
    png.width = static_cast<png_uint_32>(img.width);
    png.height = static_cast<png_uint_32>(img.height);
    png.format = img.channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
    INSTEDIT_CHECK(img.channels == 1 || img.channels == 3, DataError, "PNG output needs 1 or 3 channels");
    INSTEDIT_CHECK(png_image_write_to_file(&png, path.string().c_str(), 0, img.data.data(), 0, nullptr) != 0,
                   DataError, "cannot write PNG " + path.string());
}
#endif

}  // namespace

bool png_supported() {
#ifdef INSTEDIT_HAVE_PNG
    return true;
#else
    return false;
#endif
}

Image read_image(const fs::path& path) {
    if (lower_extension(path) == ".png") {
#ifdef INSTEDIT_HAVE_PNG
        return read_png(path);
#else
        throw DataError("PNG support not built in: " + path.string());
#endif
    }
    return read_pnm(path);
}

void write_image(const fs::path& path, const Image& image) {
    if (lower_extension(path) == ".png") {
#ifdef INSTEDIT_HAVE_PNG
        write_png(path, image);
        return;
#else
        throw DataError("PNG support not built in: " + path.string());
#endif
    }
    write_pnm(path, image);
}

std::vector<Image> load_frames(std::span<const fs::path> paths) {
    std::vector<Image> frames;
    frames.reserve(paths.size());
    for (const auto& p : paths) {
        frames.push_back(read_image(p));
        const Image& f = frames.back();
        const Image& first = frames.front();
        INSTEDIT_CHECK(f.height == first.height && f.width == first.width && f.channels == first.channels, DataError,
                       "frame " + p.string() + " differs in size from the first frame");
    }
    return frames;
}

BinaryMask mask_from_image(const Image& image) {
    BinaryMask mask(image.height, image.width);
    for (std::size_t y = 0; y < image.height; ++y) {
        for (std::size_t x = 0; x < image.width; ++x) {
            mask.at(y, x) = image.at(y, x, 0) >= 128 ? 1 : 0;
        }
    }
    return mask;
}

Image mask_to_image(const BinaryMask& mask) {
    Image img(mask.height, mask.width, 1);
    for (std::size_t i = 0; i < mask.bits.size(); ++i) {
        img.data[i] = mask.bits[i] ? 255 : 0;
    }
    return img;
}

MaskSequence load_masks(std::span<const fs::path> paths) {
    MaskSequence masks;
    masks.reserve(paths.size());
    for (const auto& p : paths) {
        masks.push_back(mask_from_image(read_image(p)));
        INSTEDIT_CHECK(masks.back().height == masks.front().height && masks.back().width == masks.front().width,
                       DataError, "mask " + p.string() + " differs in size from the first mask");
    }
    return masks;
}

BinaryMask downsample_mask(const BinaryMask& mask, std::size_t height, std::size_t width) {
    INSTEDIT_CHECK(height >= 1 && width >= 1, DataError, "downsample target must be non-empty");
    INSTEDIT_CHECK(height <= mask.height && width <= mask.width, DataError,
                   "cannot downsample a " + std::to_string(mask.height) + "x" + std::to_string(mask.width) +
                       " mask to a larger " + std::to_string(height) + "x" + std::to_string(width) + " grid");
    if (height == mask.height && width == mask.width) {
        return mask;
    }
    BinaryMask out(height, width);
    for (std::size_t i = 0; i < height; ++i) {
        const std::size_t y0 = i * mask.height / height;
        const std::size_t y1 = (i + 1) * mask.height / height;
        for (std::size_t j = 0; j < width; ++j) {
            const std::size_t x0 = j * mask.width / width;
            const std::size_t x1 = (j + 1) * mask.width / width;
            std::uint8_t any = 0;
            for (std::size_t y = y0; y < y1 && !any; ++y) {
                for (std::size_t x = x0; x < x1 && !any; ++x) {
                    any = mask.at(y, x);
                }
            }
            out.at(i, j) = any;
        }
    }
    return out;
}

LatentSequence frames_to_latents(std::span<const Image> frames) {
    INSTEDIT_CHECK(!frames.empty(), DataError, "no frames to encode");
    const Image& first = frames.front();
    LatentSequence z({frames.size(), first.height, first.width, first.channels});
    for (std::size_t f = 0; f < frames.size(); ++f) {
        INSTEDIT_CHECK(frames[f].data.size() == first.data.size(), DataError, "frames differ in size");
        auto dst = z.frame(f);
        for (std::size_t i = 0; i < dst.size(); ++i) {
            dst[i] = static_cast<double>(frames[f].data[i]) / 127.5 - 1.0;
        }
    }
    return z;
}

std::vector<Image> latents_to_frames(const LatentSequence& latents) {
    const auto& s = latents.shape();
    std::vector<Image> frames;
    for (std::size_t f = 0; f < s.frames; ++f) {
        Image img(s.height, s.width, s.channels);
        auto src = latents.frame(f);
        for (std::size_t i = 0; i < src.size(); ++i) {
            const double v = std::round((src[i] + 1.0) * 127.5);
            img.data[i] = static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
        }
        frames.push_back(std::move(img));
    }
    return frames;
}

}  // namespace instedit
