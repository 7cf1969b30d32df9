// Copyright (c) 2026 mvsd authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "mvsd/rng.hpp"
#include "mvsd/scene.hpp"

using namespace mvsd;

namespace {

// Hard sphere written straight into the grid: density logit +/-30, uniform
// color logit. The identity-initialized decoder passes features through.
SceneParams identity_decoder_scene(int g) {
    SceneParams s(g, 4, 1.0);
    for (int o = 0; o < 4; ++o) s.decoder_weight[o * 4 + o] = 1.0;
    return s;
}

SceneParams hard_sphere(int g, double radius, double color_logit) {
    SceneParams s = identity_decoder_scene(g);
    const double cell = 2.0 / (g - 1);
    for (int z = 0; z < g; ++z)
        for (int y = 0; y < g; ++y)
            for (int x = 0; x < g; ++x) {
                const Vec3 p{-1.0 + x * cell, -1.0 + y * cell, -1.0 + z * cell};
                s.grid_at(x, y, z, 0) = p.norm() < radius ? 30.0 : -30.0;
                for (int c = 0; c < 3; ++c) s.grid_at(x, y, z, c + 1) = color_logit;
            }
    return s;
}

}  // namespace

TEST_CASE("empty scene renders background with near-zero alpha") {
    SceneParams s = identity_decoder_scene(12);
    for (int z = 0; z < 12; ++z)
        for (int y = 0; y < 12; ++y)
            for (int x = 0; x < 12; ++x) s.grid_at(x, y, z, 0) = -20.0;
    const CameraView cam = CameraView::orbit(0, 2.8, 0.2, 0.1, 16.0, 12, 12);
    const RenderOutput out = render(s, cam);
    for (double a : out.alpha.data) CHECK(a < 1e-4);
    for (double v : out.image.data) CHECK(std::abs(v) < 1e-4);
}

TEST_CASE("center-ray depth matches the analytic sphere intersection") {
    const double radius = 0.6;
    const SceneParams s = hard_sphere(32, radius, 0.0);
    const CameraView cam = CameraView::orbit(0, 2.8, 0.0, 0.0, 48.0, 32, 32);
    RenderConfig cfg;
    cfg.samples_per_ray = 128;
    const RenderOutput out = render(s, cam, cfg);
    // Soft shell: one grid cell of trilinear transition plus the march step.
    CHECK(std::abs(out.depth.at(16, 16, 0) - (2.8 - radius)) < 0.15);
}

TEST_CASE("opaque uniform scene renders the decoded color") {
    const double logit = 0.8;
    const SceneParams s = hard_sphere(24, 0.7, logit);
    const CameraView cam = CameraView::orbit(0, 2.8, 0.0, 0.0, 36.0, 24, 24);
    const RenderOutput out = render(s, cam);
    const double want = 1.0 / (1.0 + std::exp(-logit));
    for (int y = 0; y < 24; ++y)
        for (int x = 0; x < 24; ++x)
            if (out.alpha.at(x, y, 0) > 0.99)
                for (int c = 0; c < 3; ++c)
                    CHECK(out.image.at(x, y, c) == doctest::Approx(want).epsilon(1e-4));
}

TEST_CASE("zero image gradient backpropagates to zero") {
    const SceneParams s = init_synthetic(ShapeSpec::Sphere, 0, 12);
    const CameraView cam = CameraView::orbit(0, 2.8, 0.4, 0.2, 12.0, 8, 8);
    const FieldStack zero(8, 8, 3, 0.0);
    for (double g : render_backward(s, cam, zero)) CHECK(g == 0.0);
}

TEST_CASE("render gradient matches central finite differences") {
    SceneParams s = init_synthetic(ShapeSpec::TexturedSphere, 3, 10);
    const CameraView cam = CameraView::orbit(0, 2.8, 0.3, -0.1, 12.0, 8, 8);
    Rng rng(77);
    FieldStack image_grad(8, 8, 3);
    for (double& v : image_grad.data) v = rng.normal();

    const std::vector<double> grad = render_backward(s, cam, image_grad);
    std::vector<double> params = s.flatten();

    const auto loss = [&](const std::vector<double>& p) {
        SceneParams q = s;
        q.unflatten(p);
        const RenderOutput out = render(q, cam);
        double acc = 0.0;
        for (std::size_t i = 0; i < out.image.data.size(); ++i)
            acc += out.image.data[i] * image_grad.data[i];
        return acc;
    };

    const double h = 1e-3;
    int checked = 0;
    for (int trial = 0; trial < 400 && checked < 100; ++trial) {
        const std::size_t i =
            static_cast<std::size_t>(rng.uniform() * static_cast<double>(params.size()));
        if (std::abs(grad[i]) < 1e-7) continue;  // skip untouched cells
        std::vector<double> p = params;
        p[i] += h;
        const double up = loss(p);
        p[i] = params[i] - h;
        const double dn = loss(p);
        const double fd = (up - dn) / (2.0 * h);
        CHECK(std::abs(fd - grad[i]) / std::max(std::abs(fd), 1e-8) < 1e-4);
        ++checked;
    }
    CHECK(checked == 100);
}

TEST_CASE("cells outside every ray have exactly zero gradient") {
    const SceneParams s = init_synthetic(ShapeSpec::Sphere, 0, 16);
    // Narrow field of view down the axis: corner cells are never sampled.
    const CameraView cam = CameraView::orbit(0, 2.8, 0.0, 0.0, 200.0, 8, 8);
    const FieldStack ones(8, 8, 3, 1.0);
    const std::vector<double> grad = render_backward(s, cam, ones);
    SceneParams idx = s;  // reuse the layout helper for flat offsets
    for (int f = 0; f < 4; ++f) {
        const std::size_t corner =
            &idx.grid_at(0, 0, 0, f) - idx.feature_grid.data();
        CHECK(grad[corner] == 0.0);
    }
}

TEST_CASE("synthetic scenes are deterministic in spec and seed") {
    const SceneParams a = init_synthetic(ShapeSpec::TexturedSphere, 42, 12);
    const SceneParams b = init_synthetic(ShapeSpec::TexturedSphere, 42, 12);
    CHECK(a.feature_grid == b.feature_grid);
    CHECK(a.decoder_weight == b.decoder_weight);
    CHECK(a.decoder_bias == b.decoder_bias);
}

TEST_CASE("texture seeds vary color but never density") {
    const SceneParams a = init_synthetic(ShapeSpec::TexturedSphere, 1, 12);
    const SceneParams b = init_synthetic(ShapeSpec::TexturedSphere, 2, 12);
    bool color_differs = false;
    for (int z = 0; z < 12; ++z)
        for (int y = 0; y < 12; ++y)
            for (int x = 0; x < 12; ++x) {
                CHECK(a.grid_at(x, y, z, 0) == b.grid_at(x, y, z, 0));
                for (int c = 1; c < 4; ++c)
                    if (a.grid_at(x, y, z, c) != b.grid_at(x, y, z, c))
                        color_differs = true;
            }
    CHECK(color_differs);
}

TEST_CASE("sphere spec is dense inside and empty outside") {
    const SceneParams s = init_synthetic(ShapeSpec::Sphere, 0, 16);
    const int mid = 8;
    CHECK(s.grid_at(mid, mid, mid, 0) > 5.0);
    CHECK(s.grid_at(0, 0, 0, 0) < -5.0);
}

TEST_CASE("scene container round trip is lossless at float32 precision") {
    const SceneParams s = init_synthetic(ShapeSpec::TwoBlob, 5, 10);
    const std::string path =
        (std::filesystem::temp_directory_path() / "scene_rt.scne").string();
    save_scene(s, path);
    const SceneParams t = load_scene(path);
    REQUIRE(t.grid_size == s.grid_size);
    REQUIRE(t.feature_dim == s.feature_dim);
    for (std::size_t i = 0; i < s.feature_grid.size(); ++i)
        CHECK(t.feature_grid[i] ==
              doctest::Approx(s.feature_grid[i]).epsilon(1e-6));
    std::remove(path.c_str());
}
