// Copyright (C) 2026 The instedit Authors
// SPDX-License-Identifier: Apache-2.0

#include "instedit/latent.hpp"

#include <algorithm>
#include <cmath>

#include "instedit/errors.hpp"

namespace instedit {

std::string to_string(const LatentShape& s) {
    return "[" + std::to_string(s.frames) + "," + std::to_string(s.height) + "," + std::to_string(s.width) + "," +
           std::to_string(s.channels) + "]";
}

namespace {

void validate_shape(const LatentShape& shape) {
    INSTEDIT_CHECK(shape.frames >= 1, DataError, "latent sequence needs at least one frame");
    INSTEDIT_CHECK(shape.height >= 1 && shape.width >= 1 && shape.channels >= 1, DataError,
                   "latent frame dimensions must be positive, got " + to_string(shape));
}

}  // namespace

LatentSequence::LatentSequence(LatentShape shape, int timestep) : shape_(shape), timestep_(timestep) {
    validate_shape(shape_);
    values_.assign(shape_.size(), 0.0);
}

LatentSequence::LatentSequence(LatentShape shape, std::vector<double> values, int timestep)
    : shape_(shape), values_(std::move(values)), timestep_(timestep) {
    validate_shape(shape_);
    INSTEDIT_CHECK(values_.size() == shape_.size(), DataError,
                   "latent value count " + std::to_string(values_.size()) + " does not match shape " +
                       to_string(shape_));
}

LatentSequence LatentSequence::filled(LatentShape shape, double value, int timestep) {
    LatentSequence z(shape, timestep);
    std::fill(z.values_.begin(), z.values_.end(), value);
    return z;
}

std::span<double> LatentSequence::frame(std::size_t f) {
    return std::span<double>(values_).subspan(f * shape_.frame_size(), shape_.frame_size());
}

std::span<const double> LatentSequence::frame(std::size_t f) const {
    return std::span<const double>(values_).subspan(f * shape_.frame_size(), shape_.frame_size());
}

double& LatentSequence::at(std::size_t f, std::size_t y, std::size_t x, std::size_t c) {
    return values_[((f * shape_.height + y) * shape_.width + x) * shape_.channels + c];
}

double LatentSequence::at(std::size_t f, std::size_t y, std::size_t x, std::size_t c) const {
    return values_[((f * shape_.height + y) * shape_.width + x) * shape_.channels + c];
}

void require_same_shape(const LatentSequence& a, const LatentSequence& b, const char* what) {
    INSTEDIT_CHECK(a.shape() == b.shape(), DataError,
                   std::string(what) + ": shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
}

double max_abs_diff(const LatentSequence& a, const LatentSequence& b) {
    require_same_shape(a, b, "max_abs_diff");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        m = std::max(m, std::abs(a[i] - b[i]));
    }
    return m;
}

void require_finite(const LatentSequence& z, const char* what) {
    for (double v : z.values()) {
        if (!std::isfinite(v)) {
            throw NumericalError(std::string(what) + ": non-finite latent value");
        }
    }
}

}  // namespace instedit
