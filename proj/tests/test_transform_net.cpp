// Copyright (c) 2026 mvsd authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "mvsd/rng.hpp"
#include "mvsd/transform_net.hpp"

using namespace mvsd;

namespace {

std::vector<double> random_grid(int g, int f, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> grid(static_cast<std::size_t>(g) * g * g * f);
    for (double& v : grid) v = rng.normal();
    return grid;
}

}  // namespace

TEST_CASE("identity-initialized net is an exact no-op") {
    const TransformNet net = TransformNet::identity_init(4, 8, 11);
    const int g = 6;
    const SceneParams base = init_synthetic(ShapeSpec::Sphere, 0, g);
    const SceneParams out = apply_transform(net, base);
    CHECK(out.feature_grid == base.feature_grid);
    // The residual itself is identically zero.
    const std::vector<double> grid = random_grid(g, 4, 5);
    for (double v : net.apply_grid(grid, g)) CHECK(v == 0.0);
}

TEST_CASE("one second-layer weight influences a wide grid footprint") {
    // Through two stacked 3^3 kernels a single weight's influence covers at
    // least a 5^3 neighborhood; on a dense random grid it reaches every cell
    // the hidden activations touch.
    TransformNet net = TransformNet::identity_init(4, 8, 11);
    const int g = 9;
    const std::vector<double> grid = random_grid(g, 4, 3);
    const std::vector<double> base = net.apply_grid(grid, g);
    net.w2[0] = 0.5;  // first output feature, first hidden channel, one tap
    const std::vector<double> poked = net.apply_grid(grid, g);
    int changed = 0;
    for (std::size_t i = 0; i < base.size(); ++i)
        if (std::abs(poked[i] - base[i]) > 1e-12) ++changed;
    CHECK(changed >= 125);
}

TEST_CASE("parameter gradient matches central finite differences") {
    TransformNet net = TransformNet::identity_init(3, 4, 2);
    Rng rng(23);
    // Make the net non-trivial so both layers carry signal.
    for (double& v : net.w2) v = 0.05 * rng.normal();
    for (double& v : net.b2) v = 0.05 * rng.normal();

    const int g = 5;
    const std::vector<double> grid = random_grid(g, 3, 7);
    std::vector<double> grad_out(grid.size());
    for (double& v : grad_out) v = rng.normal();

    const std::vector<double> grad = net.backward_params(grid, g, grad_out);
    REQUIRE(grad.size() == net.param_count());

    const auto loss = [&](const TransformNet& n) {
        const std::vector<double> out = n.apply_grid(grid, g);
        double acc = 0.0;
        for (std::size_t i = 0; i < out.size(); ++i) acc += out[i] * grad_out[i];
        return acc;
    };

    const double h = 1e-3;
    std::vector<double> flat = net.flatten();
    int checked = 0;
    for (int trial = 0; trial < 300 && checked < 60; ++trial) {
        const std::size_t i =
            static_cast<std::size_t>(rng.uniform() * static_cast<double>(flat.size()));
        TransformNet up = net, dn = net;
        std::vector<double> bump(flat.size(), 0.0);
        bump[i] = h;
        up.add_scaled(bump, 1.0);
        dn.add_scaled(bump, -1.0);
        const double fd = (loss(up) - loss(dn)) / (2.0 * h);
        if (std::abs(fd) < 1e-8 && std::abs(grad[i]) < 1e-8) continue;
        CHECK(std::abs(fd - grad[i]) / std::max(std::abs(fd), 1e-8) < 1e-4);
        ++checked;
    }
    CHECK(checked >= 40);
}

TEST_CASE("apply_transform leaves the decoder untouched") {
    const SceneParams base = init_synthetic(ShapeSpec::Sphere, 0, 8);
    TransformNet net = TransformNet::identity_init(4, 8, 1);
    Rng rng(4);
    for (double& v : net.w2) v = 0.1 * rng.normal();
    const SceneParams out = apply_transform(net, base);
    CHECK(out.decoder_weight == base.decoder_weight);
    CHECK(out.decoder_bias == base.decoder_bias);
    CHECK(out.feature_grid != base.feature_grid);
}

TEST_CASE("net container round trip") {
    TransformNet net = TransformNet::identity_init(4, 6, 9);
    Rng rng(2);
    for (double& v : net.w2) v = rng.normal();
    const std::string path =
        (std::filesystem::temp_directory_path() / "net_rt.tnet").string();
    save_transform_net(net, path);
    const TransformNet t = load_transform_net(path);
    REQUIRE(t.param_count() == net.param_count());
    for (std::size_t i = 0; i < net.w2.size(); ++i)
        CHECK(t.w2[i] == doctest::Approx(net.w2[i]).epsilon(1e-6));
    std::remove(path.c_str());
}
