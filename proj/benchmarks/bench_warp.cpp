// Copyright (c) 2026 mvsd authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include "mvsd/geometry.hpp"
#include "mvsd/rng.hpp"

namespace {

void BM_warp_view(benchmark::State& state) {
    const int res = static_cast<int>(state.range(0));
    mvsd::Rng rng(11);
    mvsd::FieldStack image(res, res, 3);
    for (double& v : image.data) v = rng.uniform();
    mvsd::FieldStack depth(res, res, 1);
    for (double& v : depth.data) v = 2.0 + rng.uniform();
    const mvsd::CameraView src =
        mvsd::CameraView::orbit(0, 2.8, 0.0, 0.0, 1.5 * res, res, res);
    const mvsd::CameraView dst =
        mvsd::CameraView::orbit(1, 2.8, 0.4, 0.1, 1.5 * res, res, res);
    for (auto _ : state) {
        benchmark::DoNotOptimize(mvsd::warp_view(image, depth, src, dst));
    }
}
BENCHMARK(BM_warp_view)->Arg(32)->Arg(64)->Arg(128);

}  // namespace
