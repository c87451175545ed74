// Copyright (C) 2026 The instedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace instedit {

/// 8-bit interleaved pixel grid.
struct Image {
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t channels = 0;
    std::vector<std::uint8_t> data;

    Image() = default;
    Image(std::size_t h, std::size_t w, std::size_t c, std::uint8_t fill = 0)
        : height(h), width(w), channels(c), data(h * w * c, fill) {}

    std::uint8_t& at(std::size_t y, std::size_t x, std::size_t c) { return data[(y * width + x) * channels + c]; }
    std::uint8_t at(std::size_t y, std::size_t x, std::size_t c) const {
        return data[(y * width + x) * channels + c];
    }

    bool operator==(const Image&) const = default;
};

/// Binary h x w mask; every entry is 0 or 1.
struct BinaryMask {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<std::uint8_t> bits;

    BinaryMask() = default;
    BinaryMask(std::size_t h, std::size_t w, std::uint8_t fill = 0) : height(h), width(w), bits(h * w, fill) {}

    std::uint8_t& at(std::size_t y, std::size_t x) { return bits[y * width + x]; }
    std::uint8_t at(std::size_t y, std::size_t x) const { return bits[y * width + x]; }
    std::size_t count() const;
    bool any() const { return count() > 0; }

    bool operator==(const BinaryMask&) const = default;
};

/// One mask per frame.
using MaskSequence = std::vector<BinaryMask>;

inline std::size_t BinaryMask::count() const {
    std::size_t n = 0;
    for (auto b : bits) {
        n += b;
    }
    return n;
}

}  // namespace instedit
