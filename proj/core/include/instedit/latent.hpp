// Copyright (C) 2026 The instedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace instedit {

struct LatentShape {
    std::size_t frames = 0;
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t channels = 0;

    std::size_t pixels() const { return height * width; }
    std::size_t frame_size() const { return height * width * channels; }
    std::size_t size() const { return frames * frame_size(); }

    bool operator==(const LatentShape&) const = default;
};

std::string to_string(const LatentShape& shape);

/// N frames of h x w x c latents stored row-major as (frame, y, x, channel).
/// Values are kept at 64-bit precision; the timestep is the model timestep the
/// sequence lives at.
class LatentSequence {
public:
    LatentSequence() = default;
    explicit LatentSequence(LatentShape shape, int timestep = 0);
    LatentSequence(LatentShape shape, std::vector<double> values, int timestep = 0);

    static LatentSequence filled(LatentShape shape, double value, int timestep = 0);

    const LatentShape& shape() const { return shape_; }
    int timestep() const { return timestep_; }
    void set_timestep(int t) { timestep_ = t; }

    std::size_t size() const { return values_.size(); }
    bool empty() const { return values_.empty(); }

    std::span<double> values() { return values_; }
    std::span<const double> values() const { return values_; }

    std::span<double> frame(std::size_t f);
    std::span<const double> frame(std::size_t f) const;

    double& at(std::size_t f, std::size_t y, std::size_t x, std::size_t c);
    double at(std::size_t f, std::size_t y, std::size_t x, std::size_t c) const;

    double& operator[](std::size_t i) { return values_[i]; }
    double operator[](std::size_t i) const { return values_[i]; }

private:
    LatentShape shape_;
    std::vector<double> values_;
    int timestep_ = 0;
};

/// Throws DataError naming `what` if the shapes differ.
void require_same_shape(const LatentSequence& a, const LatentSequence& b, const char* what);

double max_abs_diff(const LatentSequence& a, const LatentSequence& b);

/// Throws NumericalError if any value is NaN or infinite.
void require_finite(const LatentSequence& z, const char* what);

}  // namespace instedit
