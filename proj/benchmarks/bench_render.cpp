// Copyright (c) 2026 mvsd authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include "mvsd/scene.hpp"

namespace {

void BM_render(benchmark::State& state) {
    const int res = static_cast<int>(state.range(0));
    const mvsd::SceneParams scene = mvsd::init_synthetic(mvsd::ShapeSpec::TexturedSphere, 7);
    const mvsd::CameraView cam =
        mvsd::CameraView::orbit(0, 2.8, 0.4, 0.2, 1.5 * res, res, res);
    mvsd::RenderConfig cfg;
    cfg.compute_normals = false;
    for (auto _ : state) {
        benchmark::DoNotOptimize(mvsd::render(scene, cam, cfg));
    }
}
BENCHMARK(BM_render)->Arg(16)->Arg(32)->Arg(64);

void BM_render_backward(benchmark::State& state) {
    const int res = static_cast<int>(state.range(0));
    const mvsd::SceneParams scene = mvsd::init_synthetic(mvsd::ShapeSpec::TexturedSphere, 7);
    const mvsd::CameraView cam =
        mvsd::CameraView::orbit(0, 2.8, 0.4, 0.2, 1.5 * res, res, res);
    const mvsd::FieldStack grad(res, res, 3, 1.0);
    for (auto _ : state) {
        benchmark::DoNotOptimize(mvsd::render_backward(scene, cam, grad));
    }
}
BENCHMARK(BM_render_backward)->Arg(16)->Arg(32);

}  // namespace

BENCHMARK_MAIN();
