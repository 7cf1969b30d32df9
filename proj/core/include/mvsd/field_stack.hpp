// Copyright (c) 2026 mvsd authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mvsd/errors.hpp"

namespace mvsd {

// H x W x C real-valued grid with an optional per-pixel validity mask.
// Carries images, latents, depth maps, normal maps and noise uniformly.
// Data is row-major, channel-interleaved: data[(y*width + x)*channels + c].
struct FieldStack {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<double> data;
    std::optional<std::vector<std::uint8_t>> valid_mask;

    FieldStack() = default;
    FieldStack(int w, int h, int c, double fill = 0.0)
        : width(w), height(h), channels(c),
          data(static_cast<std::size_t>(w) * h * c, fill) {}

    std::size_t pixel_count() const {
        return static_cast<std::size_t>(width) * height;
    }
    std::size_t size() const { return data.size(); }

    double& at(int x, int y, int c) {
        return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    double at(int x, int y, int c) const {
        return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }

    bool valid(int x, int y) const {
        if (!valid_mask) return true;
        return (*valid_mask)[static_cast<std::size_t>(y) * width + x] != 0;
    }

    bool same_shape(const FieldStack& o) const {
        return width == o.width && height == o.height && channels == o.channels;
    }

    void check_invariants() const {
        if (data.size() != static_cast<std::size_t>(width) * height * channels)
            throw ContractViolation("FieldStack: data length mismatch");
        if (valid_mask && valid_mask->size() != pixel_count())
            throw ContractViolation("FieldStack: mask size mismatch");
    }
};

// Elementwise helpers used all over the pipeline.
FieldStack operator+(const FieldStack& a, const FieldStack& b);
FieldStack operator-(const FieldStack& a, const FieldStack& b);
FieldStack operator*(double s, const FieldStack& a);
double mse(const FieldStack& a, const FieldStack& b);

// Binary container: 16-byte header (magic "FSTK", u32 width, u32 height,
// u32 channels, little-endian), float32 payload row-major, then the optional
// u8 mask plane.
void save_field_stack(const FieldStack& f, const std::string& path);
FieldStack load_field_stack(const std::string& path);

// 8-bit PNG import/export for 1-, 3- and 4-channel stacks; values mapped
// linearly from [0,1].
void save_png(const FieldStack& f, const std::string& path);
FieldStack load_png(const std::string& path);

}  // namespace mvsd
