// Copyright (c) 2026 mvsd authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "mvsd/scene.hpp"

namespace mvsd {

// Residual feature-grid transform: out = in + conv2(tanh(conv1(in))).
// Both convolutions are 3x3x3 with zero padding; the second layer is
// zero-initialized so the net starts as an exact identity.
struct TransformNet {
    int feature_dim = 4;
    int hidden_dim = 8;
    std::vector<double> w1;  // hidden x feature x 27
    std::vector<double> b1;  // hidden
    std::vector<double> w2;  // feature x hidden x 27
    std::vector<double> b2;  // feature

    static TransformNet identity_init(int feature_dim, int hidden_dim,
                                      std::uint64_t seed);

    std::size_t param_count() const {
        return w1.size() + b1.size() + w2.size() + b2.size();
    }
    std::vector<double> flatten() const;
    void add_scaled(const std::vector<double>& grad, double scale);

    // Residual output for a G^3 x F grid.
    std::vector<double> apply_grid(const std::vector<double>& grid, int grid_size) const;

    // Gradient of sum(grad_out .* apply_grid(grid)) w.r.t. net parameters,
    // input grid held fixed. Layout matches flatten().
    std::vector<double> backward_params(const std::vector<double>& grid, int grid_size,
                                        const std::vector<double>& grad_out) const;
};

// Scene with feature_grid = base.feature_grid + net(base.feature_grid);
// decoder passed through unchanged.
SceneParams apply_transform(const TransformNet& net, const SceneParams& base);

void save_transform_net(const TransformNet& net, const std::string& path);
TransformNet load_transform_net(const std::string& path);

}  // namespace mvsd
