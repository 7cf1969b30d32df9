// Copyright (c) 2026 mvsd authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "mvsd/camera.hpp"
#include "mvsd/field_stack.hpp"
#include "mvsd/rng.hpp"

namespace mvsd {

// Per-view MV-NRS state: the anchor noise plus what the retention rule keeps
// between iterations.
struct AnchorViewState {
    FieldStack anchor;        // latent-resolution noise field
    FieldStack target_image;  // retained denoised target
    double retained_score = 0.0;
    std::vector<double> retained_grad;
    bool has_retained = false;  // false on the first iteration
};

struct AnchorNoiseSet {
    std::vector<AnchorViewState> views;
};

// Anchor initialization by geometric transport: the root view's anchor is
// N(0, I); every other view's anchor is the warp of its driver's anchor with
// fresh N(0, I) filling void pixels. `driver[i]` gives each view's source in
// the chain (-1 for the root); pass an empty vector for plain list order.
// Depths are at camera resolution and are min-pooled down by latent_factor.
AnchorNoiseSet init_anchor_chain(const std::vector<CameraView>& views,
                                 const std::vector<FieldStack>& depths,
                                 std::uint64_t seed, int channels = 3,
                                 int latent_factor = 1,
                                 const std::vector<int>& driver = {});

// sqrt(1 - sigma^2) * anchor + sigma * g with fresh standard normal g;
// preserves unit marginal variance for any sigma in [0, 1].
FieldStack resample(const FieldStack& anchor, double sigma, Rng& rng);
FieldStack resample(const FieldStack& anchor, double sigma, std::uint64_t seed);

FieldStack gaussian_field(int width, int height, int channels, Rng& rng);

// Directory persistence: one FieldStack file per view plus a line-oriented
// manifest (view id, anchor file, retained score).
void save_anchor_set(const AnchorNoiseSet& set, const std::string& dir);
AnchorNoiseSet load_anchor_set(const std::string& dir);

}  // namespace mvsd
