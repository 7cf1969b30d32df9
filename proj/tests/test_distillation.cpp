// Copyright (c) 2026 mvsd authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>

#include "mvsd/distillation.hpp"

using namespace mvsd;

namespace {

FieldStack random_field(int w, int h, int c, std::uint64_t seed) {
    Rng rng(seed);
    FieldStack f(w, h, c);
    for (double& v : f.data) v = rng.normal();
    return f;
}

}  // namespace

TEST_CASE("view ring defaults: 13 views, frontal root, bounded pitch") {
    RefineConfig cfg;
    const ViewRing ring = make_view_ring(cfg);
    REQUIRE(ring.cameras.size() == 13);
    CHECK(ring.drivers[0] == -1);
    CHECK(ring.drivers[1] == 0);
    CHECK(ring.drivers[2] == 0);
    for (int i = 3; i < 13; ++i) CHECK(ring.drivers[i] == i - 2);
    for (const CameraView& cam : ring.cameras) {
        const Vec3 eye = cam.center();
        CHECK(eye.norm() == doctest::Approx(cfg.cam_radius).epsilon(1e-9));
        const double elevation = std::asin(-eye.y / eye.norm());
        CHECK(std::abs(elevation) <= 30.0 * M_PI / 180.0 + 1e-9);
    }
    // The frontal view has zero azimuth and its pitch is also sampled.
    const Vec3 front = ring.cameras[0].center();
    CHECK(std::abs(front.x) < 1e-9);
}

TEST_CASE("matching prediction and noise give a zero distillation gradient") {
    const SceneParams scene = init_synthetic(ShapeSpec::Sphere, 1, 10);
    const CameraView cam = CameraView::orbit(0, 2.8, 0.2, 0.1, 12.0, 8, 8);
    const FieldStack eps = random_field(8, 8, 3, 3);
    const GradientRecord g = sds_gradient(scene, cam, eps, 0.5, eps, LatentMap{});
    CHECK(g.norm() == 0.0);
}

TEST_CASE("reference gradient matches central finite differences") {
    SceneParams scene = init_synthetic(ShapeSpec::TexturedSphere, 2, 10);
    const CameraView cam = CameraView::orbit(0, 2.8, -0.3, 0.15, 12.0, 8, 8);
    const FieldStack ref = render(init_synthetic(ShapeSpec::Sphere, 0, 10), cam).image;

    const auto [loss, grad] = reference_loss_grad(scene, ref, cam);
    CHECK(loss > 0.0);

    Rng rng(41);
    std::vector<double> params = scene.flatten();
    const double h = 1e-3;
    int checked = 0;
    for (int trial = 0; trial < 400 && checked < 40; ++trial) {
        const std::size_t i =
            static_cast<std::size_t>(rng.uniform() * static_cast<double>(params.size()));
        if (std::abs(grad.values[i]) < 1e-7) continue;
        SceneParams q = scene;
        std::vector<double> p = params;
        p[i] += h;
        q.unflatten(p);
        const double up = mse(render(q, cam).image, ref);
        p[i] = params[i] - h;
        q.unflatten(p);
        const double dn = mse(render(q, cam).image, ref);
        const double fd = (up - dn) / (2.0 * h);
        CHECK(std::abs(fd - grad.values[i]) / std::max(std::abs(fd), 1e-8) < 1e-4);
        ++checked;
    }
    CHECK(checked == 40);

    // A perfectly matching reference is a stationary point.
    const auto [loss0, grad0] = reference_loss_grad(scene, render(scene, cam).image, cam);
    CHECK(loss0 == 0.0);
    CHECK(grad0.norm() == 0.0);
}

TEST_CASE("consistency score closed-form values") {
    CHECK(consistency_score({3.0, -1.0, 2.0}, {3.0, -1.0, 2.0}) == doctest::Approx(1.0));
    CHECK(consistency_score({1.0, 0.0, 0.0}, {0.0, 1.0, 0.0}) == 0.0);
    CHECK(consistency_score({1.0, 2.0, 3.0}, {4.0, 5.0, 6.0}) ==
          doctest::Approx(32.0 / (std::sqrt(14.0) * std::sqrt(77.0))).epsilon(1e-9));
    CHECK(consistency_score({0.0, 0.0}, {1.0, 1.0}) == 0.0);
    CHECK_THROWS_AS(consistency_score({1.0}, {1.0, 2.0}), ContractViolation);
}

TEST_CASE("image loss basics") {
    const FieldStack a = random_field(6, 6, 3, 9);
    FieldStack b = a;
    CHECK(image_loss(a, b) == 0.0);
    for (double& v : b.data) v += 0.3;
    CHECK(image_loss(a, b) == doctest::Approx(0.09).epsilon(1e-12));
}

TEST_CASE("retention rule accepts, retains, and treats ties as keep") {
    const SceneParams scene = init_synthetic(ShapeSpec::TexturedSphere, 4, 12);
    const CameraView cam = CameraView::orbit(0, 2.8, 0.25, 0.1, 18.0, 12, 12);
    const RenderOutput rendered = render(scene, cam);
    const LatentMap latent;
    const NoiseSchedule sched;
    GaussianImageModel model;
    model.mean = latent.encode(render(init_synthetic(ShapeSpec::Sphere, 0, 12), cam).image);
    model.stddev = 0.0;

    // A generic driven gradient from a mismatched reference.
    const auto [dl, driven] =
        reference_loss_grad(scene, FieldStack(12, 12, 3, 0.4), cam);

    AnchorViewState state;
    state.anchor = random_field(12, 12, 3, 10);
    const FieldStack anchor0 = state.anchor;
    Rng rs(77);

    SUBCASE("first iteration always accepts the resampled noise") {
        const ViewStepResult r = mvnrs_view_step(scene, cam, rendered, model, state, driven,
                                                 0.5, 0.3, true, rs, latent, sched, nullptr,
                                                 RenderConfig{});
        CHECK(r.anchor_updated);
        CHECK(state.has_retained);
        CHECK(r.retained_score == r.score_resampled);
        CHECK(state.anchor.data != anchor0.data);
        CHECK(r.grad.kind == GradientRecord::Kind::DenoisedTarget);
    }

    SUBCASE("a perfectly aligned retained target wins over the resample") {
        // Retained target chosen so the anchor-side gradient equals the
        // driven gradient exactly: its score is 1, the resample cannot beat it.
        const FieldStack kept(12, 12, 3, 0.4);
        state.target_image = kept;
        state.has_retained = true;
        state.retained_score = 0.5;
        const ViewStepResult r = mvnrs_view_step(scene, cam, rendered, model, state, driven,
                                                 0.5, 0.3, true, rs, latent, sched, nullptr,
                                                 RenderConfig{});
        CHECK(r.score_anchor == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(r.score_resampled < 1.0);
        CHECK_FALSE(r.anchor_updated);
        CHECK(state.anchor.data == anchor0.data);
        CHECK(state.target_image.data == kept.data);
        CHECK(r.grad.kind == GradientRecord::Kind::Retained);
        CHECK(r.retained_score == r.score_anchor);
    }

    SUBCASE("zero-sigma resampling converges to an exact tie and keeps the anchor") {
        const ViewStepResult first = mvnrs_view_step(scene, cam, rendered, model, state,
                                                     driven, 0.5, 0.0, true, rs, latent,
                                                     sched, nullptr, RenderConfig{});
        CHECK(first.anchor_updated);  // first iteration: nothing retained yet
        const ViewStepResult second = mvnrs_view_step(scene, cam, rendered, model, state,
                                                      driven, 0.5, 0.0, true, rs, latent,
                                                      sched, nullptr, RenderConfig{});
        CHECK(second.score_resampled == second.score_anchor);
        CHECK_FALSE(second.anchor_updated);
        CHECK(state.anchor.data == anchor0.data);
    }
}

TEST_CASE("short refinement run reduces the reference loss") {
    const SceneParams target = init_synthetic(ShapeSpec::TexturedSphere, 6, 12);
    SceneParams init = target;
    Rng rng(12);
    for (double& v : init.feature_grid) v += 0.35 * rng.normal();

    RefineConfig cfg;
    cfg.views = 4;
    cfg.steps = 30;
    cfg.render_res = 16;
    cfg.samples_per_ray = 32;
    cfg.seed = 8;

    const ViewRing ring = make_view_ring(cfg);
    RenderConfig rcfg;
    rcfg.samples_per_ray = cfg.samples_per_ray;
    rcfg.compute_normals = false;
    std::vector<GaussianImageModel> models;
    for (const CameraView& cam : ring.cameras) {
        GaussianImageModel m;
        m.mean = render(target, cam, rcfg).image;
        m.stddev = cfg.tau;
        models.push_back(std::move(m));
    }
    const FieldStack ref = render(target, ring.cameras[0], rcfg).image;

    const double before = mse(render(init, ring.cameras[0], rcfg).image, ref);
    const RefineResult res = refine(init, ref, models, cfg);
    const double after = mse(render(res.scene, ring.cameras[0], rcfg).image, ref);
    CHECK(after < before);
    CHECK(res.total_anchor_updates > 0);
}

TEST_CASE("restoration pretraining is stationary on a matched scene") {
    const SceneParams scene = init_synthetic(ShapeSpec::Sphere, 0, 10);
    RestoreScene pair;
    pair.base = scene;
    pair.target = scene;
    RestoreConfig cfg;
    cfg.steps = 3;
    cfg.render_res = 12;
    cfg.samples_per_ray = 24;
    const TransformNet init = TransformNet::identity_init(4, 8, 1);
    const TransformNet out = restore_pretrain({pair}, init, cfg);
    // Stationary up to float cancellation noise in the epsilon residual.
    const std::vector<double> a = out.flatten(), b = init.flatten();
    for (std::size_t i = 0; i < a.size(); ++i)
        CHECK(std::abs(a[i] - b[i]) < 1e-12);
}

TEST_CASE("restoration pretraining reduces the evaluation loss") {
    RestoreConfig cfg;
    cfg.steps = 40;
    cfg.render_res = 12;
    cfg.samples_per_ray = 24;
    cfg.eval_every = 40;
    cfg.eval_views = 4;
    cfg.seed = 5;

    std::vector<RestoreScene> scenes;
    for (int i = 0; i < 2; ++i) {
        RestoreScene pair;
        pair.target = init_synthetic(ShapeSpec::Sphere, 10 + i, 10);
        pair.base = pair.target;
        Rng rng(20 + i);
        for (double& v : pair.base.feature_grid) v += 0.3 * rng.normal();
        scenes.push_back(std::move(pair));
    }
    RestoreTrace trace;
    const TransformNet net = restore_pretrain(
        scenes, TransformNet::identity_init(4, 8, 2), cfg, &trace);
    REQUIRE(trace.eval_losses.size() >= 2);
    CHECK(trace.eval_losses.back() < trace.eval_losses.front());

    // Fine-tuning starts from the transformed scene and may only improve it.
    RestoreTrace ft;
    RestoreConfig ft_cfg = cfg;
    ft_cfg.steps = 20;
    ft_cfg.eval_every = 20;
    const SceneParams restored = restore_finetune(scenes[0], net, ft_cfg, &ft);
    CHECK(ft.eval_losses.back() <= ft.eval_losses.front() + 1e-12);

    // Zero fine-tune steps: exactly the transformed scene.
    RestoreConfig zero_cfg = ft_cfg;
    zero_cfg.steps = 0;
    const SceneParams untouched = restore_finetune(scenes[0], net, zero_cfg);
    const SceneParams want = apply_transform(net, scenes[0].base);
    CHECK(untouched.feature_grid == want.feature_grid);
    CHECK(untouched.decoder_weight == want.decoder_weight);

    // The input base grid is never modified by fine-tuning.
    CHECK(restored.feature_grid.size() == scenes[0].base.feature_grid.size());
}
