// Copyright (c) 2026 mvsd authors
// SPDX-License-Identifier: Apache-2.0

#include "mvsd/geometry.hpp"

#include <cmath>
#include <limits>

namespace mvsd {

ColoredPointCloud lift_depth(const FieldStack& image, const FieldStack& depth,
                             const CameraView& cam) {
    image.check_invariants();
    depth.check_invariants();
    cam.check_invariants();
    if (image.width != depth.width || image.height != depth.height)
        throw ContractViolation("lift_depth: image/depth resolution mismatch");
    if (depth.channels != 1)
        throw ContractViolation("lift_depth: depth must be single-channel");

    ColoredPointCloud cloud;
    cloud.channels = image.channels;
    cloud.positions.reserve(image.pixel_count());
    for (int y = 0; y < image.height; ++y)
        for (int x = 0; x < image.width; ++x) {
            if (!image.valid(x, y) || !depth.valid(x, y)) continue;
            const double z = depth.at(x, y, 0);
            if (!(z > 0.0)) {
                ++cloud.skipped_invalid_depth;
                continue;
            }
            cloud.positions.push_back(
                cam.backproject(x + 0.5, y + 0.5, z));
            std::vector<double> p(image.channels);
            for (int c = 0; c < image.channels; ++c) p[c] = image.at(x, y, c);
            cloud.payload.push_back(std::move(p));
            cloud.source_pixel.emplace_back(x, y);
        }
    return cloud;
}

WarpResult splat(const ColoredPointCloud& cloud, const CameraView& cam,
                 double fill_value) {
    cam.check_invariants();
    const double inf = std::numeric_limits<double>::infinity();

    WarpResult r;
    r.warped = FieldStack(cam.width, cam.height, cloud.channels, fill_value);
    r.void_mask.assign(r.warped.pixel_count(), 1);
    r.depth.assign(r.warped.pixel_count(), inf);

    // Points are visited in row-major source order, so on a depth tie the
    // lowest source index wins via the strict < test.
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        double u, v;
        const double z = cam.project(cloud.positions[i], u, v);
        if (!(z > 0.0)) continue;
        const int px = static_cast<int>(std::floor(u));
        const int py = static_cast<int>(std::floor(v));
        if (px < 0 || px >= cam.width || py < 0 || py >= cam.height) continue;
        const std::size_t idx = static_cast<std::size_t>(py) * cam.width + px;
        if (z < r.depth[idx]) {
            r.depth[idx] = z;
            r.void_mask[idx] = 0;
            for (int c = 0; c < cloud.channels; ++c)
                r.warped.at(px, py, c) = cloud.payload[i][c];
        }
    }
    return r;
}

WarpResult warp_view(const FieldStack& channels, const FieldStack& depth,
                     const CameraView& src, const CameraView& dst,
                     double fill_value) {
    return splat(lift_depth(channels, depth, src), dst, fill_value);
}

FieldStack downsample_depth_min(const FieldStack& depth, int factor) {
    if (depth.channels != 1)
        throw ContractViolation("downsample_depth_min: depth must be single-channel");
    if (factor < 1 || depth.width % factor != 0 || depth.height % factor != 0)
        throw ContractViolation("downsample_depth_min: resolution not divisible");
    if (factor == 1) return depth;
    FieldStack out(depth.width / factor, depth.height / factor, 1);
    out.valid_mask = std::vector<std::uint8_t>(out.pixel_count(), 0);
    for (int y = 0; y < out.height; ++y)
        for (int x = 0; x < out.width; ++x) {
            double best = std::numeric_limits<double>::infinity();
            bool any = false;
            for (int dy = 0; dy < factor; ++dy)
                for (int dx = 0; dx < factor; ++dx) {
                    const int sx = x * factor + dx, sy = y * factor + dy;
                    const double d = depth.at(sx, sy, 0);
                    if (!depth.valid(sx, sy) || !(d > 0.0)) continue;
                    best = std::min(best, d);
                    any = true;
                }
            out.at(x, y, 0) = any ? best : 0.0;
            (*out.valid_mask)[static_cast<std::size_t>(y) * out.width + x] = any ? 1 : 0;
        }
    return out;
}

}  // namespace mvsd
