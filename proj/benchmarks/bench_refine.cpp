// Copyright (c) 2026 mvsd authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include "mvsd/distillation.hpp"

namespace {

// One full optimization iteration (all views + reference), measured by
// running a single-step refine on a small fixture.
void BM_refine_step(benchmark::State& state) {
    mvsd::RefineConfig cfg;
    cfg.views = static_cast<int>(state.range(0));
    cfg.steps = 1;
    cfg.render_res = 24;
    cfg.samples_per_ray = 48;
    cfg.seed = 3;

    const mvsd::SceneParams target =
        mvsd::init_synthetic(mvsd::ShapeSpec::TexturedSphere, 5, 16);
    mvsd::SceneParams init = target;
    mvsd::Rng rng(9);
    for (double& v : init.feature_grid) v += 0.3 * rng.normal();

    const mvsd::ViewRing ring = mvsd::make_view_ring(cfg);
    mvsd::RenderConfig rcfg;
    rcfg.samples_per_ray = cfg.samples_per_ray;
    rcfg.compute_normals = false;
    std::vector<mvsd::GaussianImageModel> models;
    for (const auto& cam : ring.cameras) {
        mvsd::GaussianImageModel m;
        m.mean = mvsd::render(target, cam, rcfg).image;
        m.stddev = cfg.tau;
        models.push_back(std::move(m));
    }
    const mvsd::FieldStack ref = mvsd::render(target, ring.cameras[0], rcfg).image;

    for (auto _ : state) {
        benchmark::DoNotOptimize(mvsd::refine(init, ref, models, cfg));
    }
}
BENCHMARK(BM_refine_step)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond);

}  // namespace
