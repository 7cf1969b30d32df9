// Copyright (c) 2026 mvsd authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "mvsd/camera.hpp"
#include "mvsd/field_stack.hpp"

namespace mvsd {

// One point per valid source pixel; payload carries the source channels.
struct ColoredPointCloud {
    std::vector<Vec3> positions;
    std::vector<std::vector<double>> payload;  // N x C
    std::vector<std::pair<int, int>> source_pixel;
    int channels = 0;
    // Source pixels skipped because of non-positive depth.
    int skipped_invalid_depth = 0;

    std::size_t size() const { return positions.size(); }
};

struct WarpResult {
    FieldStack warped;
    std::vector<std::uint8_t> void_mask;  // true (1) where no point landed
    std::vector<double> depth;            // nearest camera-space z; +inf where void

    bool is_void(int x, int y) const {
        return void_mask[static_cast<std::size_t>(y) * warped.width + x] != 0;
    }
};

// Back-project every valid pixel of `image` through `cam` at the depth given
// by the single-channel `depth` stack. Pixels with non-positive depth are
// skipped and tallied.
ColoredPointCloud lift_depth(const FieldStack& image, const FieldStack& depth,
                             const CameraView& cam);

// Project each point to its nearest integer pixel in `cam`; per pixel the
// point with smallest camera-space depth wins (z-buffer, nearest neighbor,
// no blending). Ties break on lowest source row-major index. Points behind
// the camera are discarded.
WarpResult splat(const ColoredPointCloud& cloud, const CameraView& cam,
                 double fill_value = 0.0);

// splat(lift_depth(channels, depth, src), dst). Used uniformly for images,
// masks, latents and noise.
WarpResult warp_view(const FieldStack& channels, const FieldStack& depth,
                     const CameraView& src, const CameraView& dst,
                     double fill_value = 0.0);

// Area-min depth downsample: nearest surface wins, matching z-buffer
// semantics when noise is warped at latent resolution.
FieldStack downsample_depth_min(const FieldStack& depth, int factor);

}  // namespace mvsd
