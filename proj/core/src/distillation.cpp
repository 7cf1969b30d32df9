// Copyright (c) 2026 mvsd authors
// SPDX-License-Identifier: Apache-2.0

#include "mvsd/distillation.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <sstream>

namespace mvsd {

double GradientRecord::norm() const {
    double acc = 0.0;
    for (double v : values) acc += v * v;
    return std::sqrt(acc);
}

bool GradientRecord::finite() const {
    for (double v : values)
        if (!std::isfinite(v)) return false;
    return true;
}

void RefineConfig::validate() const {
    if (views < 1) throw ConfigError("RefineConfig: views must be >= 1");
    if (steps < 1) throw ConfigError("RefineConfig: steps must be >= 1");
    if (step_size <= 0.0) throw ConfigError("RefineConfig: step_size must be > 0");
    if (sigma < 0.0 || sigma > 1.0) throw ConfigError("RefineConfig: sigma outside [0,1]");
    if (tau < 0.0) throw ConfigError("RefineConfig: tau must be >= 0");
    if (latent_factor != 1 && latent_factor != 2)
        throw ConfigError("RefineConfig: latent_factor must be 1 or 2");
    if (render_res < 8) throw ConfigError("RefineConfig: render_res must be >= 8");
}

ViewRing make_view_ring(const RefineConfig& cfg) {
    // Chain order 0, +1, -1, +2, -2, ... around the azimuth circle; each
    // link's driver is the previous view on its own side of the ring.
    Rng pitch_rng = Rng::substream(cfg.seed, "pitch");
    const double step = 2.0 * M_PI / cfg.views;
    ViewRing ring;
    for (int i = 0; i < cfg.views; ++i) {
        const int k = (i + 1) / 2;
        const double azimuth = (i % 2 == 1 ? k : -k) * step;
        const double pitch = cfg.pitch_deg * M_PI / 180.0 * (2.0 * pitch_rng.uniform() - 1.0);
        ring.cameras.push_back(CameraView::orbit(i, cfg.cam_radius, azimuth, pitch,
                                                 cfg.cam_focal, cfg.render_res,
                                                 cfg.render_res));
        ring.drivers.push_back(i == 0 ? -1 : (i <= 2 ? 0 : i - 2));
    }
    return ring;
}

GradientRecord sds_gradient(const SceneParams& scene, const CameraView& cam,
                            const FieldStack& eps, double t, const FieldStack& eps_pred,
                            const LatentMap& latent, const NoiseSchedule& sched,
                            const RenderConfig& rcfg) {
    if (!eps.same_shape(eps_pred)) throw ContractViolation("sds_gradient: shape mismatch");
    const double wt = sched.weight(t);
    FieldStack residual = eps_pred - eps;
    for (double& v : residual.data) v *= wt;
    const FieldStack image_grad = latent.encode_adjoint(residual);
    GradientRecord g;
    g.values = render_backward(scene, cam, image_grad, rcfg);
    g.source_view = cam.index;
    g.kind = GradientRecord::Kind::DenoisedTarget;
    return g;
}

std::pair<double, GradientRecord> reference_loss_grad(const SceneParams& scene,
                                                      const FieldStack& ref_image,
                                                      const CameraView& ref_cam,
                                                      const RenderConfig& rcfg) {
    const RenderOutput out = render(scene, ref_cam, rcfg);
    if (!out.image.same_shape(ref_image))
        throw ContractViolation("reference_loss_grad: shape mismatch");
    const double loss = mse(out.image, ref_image);
    FieldStack image_grad = out.image - ref_image;
    const double scale = 2.0 / static_cast<double>(ref_image.data.size());
    for (double& v : image_grad.data) v *= scale;
    GradientRecord g;
    g.values = render_backward(scene, ref_cam, image_grad, rcfg);
    g.source_view = ref_cam.index;
    g.kind = GradientRecord::Kind::Reference;
    return {loss, std::move(g)};
}

double image_loss(const FieldStack& rendered, const FieldStack& denoised) {
    return mse(rendered, denoised);
}

double consistency_score(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw ContractViolation("consistency_score: length mismatch");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

double consistency_score(const GradientRecord& a, const GradientRecord& b) {
    return consistency_score(a.values, b.values);
}

namespace {

// Gradient of mse(render, target) w.r.t. scene parameters, target fixed.
GradientRecord target_grad(const SceneParams& scene, const CameraView& cam,
                           const RenderOutput& rendered, const FieldStack& target,
                           const RenderConfig& rcfg, GradientRecord::Kind kind) {
    FieldStack image_grad = rendered.image - target;
    const double scale = 2.0 / static_cast<double>(target.data.size());
    for (double& v : image_grad.data) v *= scale;
    GradientRecord g;
    g.values = render_backward(scene, cam, image_grad, rcfg);
    g.source_view = cam.index;
    g.kind = kind;
    return g;
}

}  // namespace

ViewStepResult mvnrs_view_step(const SceneParams& scene, const CameraView& cam,
                               const RenderOutput& rendered, const GaussianImageModel& model,
                               AnchorViewState& state, const GradientRecord& driven,
                               double t, double sigma, bool retention_enabled,
                               Rng& resample_rng, const LatentMap& latent,
                               const NoiseSchedule& sched, const HybridContext* hybrid,
                               const RenderConfig& rcfg) {
    ViewStepResult res;

    // (1) resample around the anchor, (2) one oracle denoising step.
    const FieldStack eps_rs = resample(state.anchor, sigma, resample_rng);
    const FieldStack z = latent.encode(rendered.image);
    const FieldStack z_t = add_noise(z, eps_rs, t, sched);
    FieldStack eps_hat;
    if (hybrid && hybrid->blocks) {
        eps_hat = hybrid_epsilon(z_t, t, hybrid->cond, hybrid->driving_latent,
                                 hybrid->driving_depth, hybrid->src, hybrid->dst,
                                 hybrid->w_ex, *hybrid->blocks, model, sched);
    } else {
        eps_hat = oracle_epsilon(z_t, t, model, sched);
    }
    const FieldStack denoised = latent.decode(predict_x0(z_t, eps_hat, t, sched));

    // (3) denoised-target loss and gradient, (4) consistency vs the driver.
    res.loss_denoised = image_loss(rendered.image, denoised);
    GradientRecord grad_d = target_grad(scene, cam, rendered, denoised, rcfg,
                                        GradientRecord::Kind::DenoisedTarget);
    res.score_resampled = consistency_score(grad_d, driven);

    // (5) anchor-side score from the retained target image, recomputed
    // against the current parameters.
    double score_p = -std::numeric_limits<double>::infinity();
    GradientRecord grad_p;
    if (state.has_retained) {
        grad_p = target_grad(scene, cam, rendered, state.target_image, rcfg,
                             GradientRecord::Kind::Retained);
        score_p = consistency_score(grad_p, driven);
    }
    res.score_anchor = score_p;

    // (6) retention rule: strict inequality, ties keep the anchor.
    const bool accept = !retention_enabled || !state.has_retained ||
                        res.score_resampled > score_p;
    if (accept) {
        if (retention_enabled) state.anchor = eps_rs;
        state.target_image = denoised;
        state.retained_score = res.score_resampled;
        state.retained_grad = grad_d.values;
        state.has_retained = true;
        res.anchor_updated = retention_enabled;
        res.grad = std::move(grad_d);
    } else {
        state.retained_score = score_p;
        state.retained_grad = grad_p.values;
        res.grad = std::move(grad_p);
    }
    res.retained_score = state.retained_score;
    return res;
}

RefineResult refine(const SceneParams& init, const FieldStack& ref_image,
                    const std::vector<GaussianImageModel>& view_models,
                    const RefineConfig& cfg, std::ostream* metrics,
                    const ConditioningBlocks* blocks) {
    cfg.validate();
    const ViewRing ring = make_view_ring(cfg);
    if (view_models.size() != ring.cameras.size())
        throw ContractViolation("refine: one oracle model per view required");
    const LatentMap latent = cfg.latent_map();
    const NoiseSchedule sched{};
    RenderConfig rcfg;
    rcfg.samples_per_ray = cfg.samples_per_ray;
    rcfg.compute_normals = blocks != nullptr;

    SceneParams scene = init;
    const int n_views = static_cast<int>(ring.cameras.size());

    // Anchor initialization needs per-view depths from the initial scene.
    std::vector<FieldStack> depths;
    for (const CameraView& cam : ring.cameras)
        depths.push_back(render(scene, cam, rcfg).depth);
    AnchorNoiseSet anchors;
    const double sigma = cfg.freeze_noise ? 0.0 : cfg.sigma;
    const bool retention = cfg.retention && !cfg.freeze_noise;
    if (cfg.anchor_init) {
        anchors = init_anchor_chain(ring.cameras, depths, cfg.seed, 3, cfg.latent_factor,
                                    ring.drivers);
    } else {
        // Independent per-view noise (random baseline).
        Rng rng = Rng::substream(cfg.seed, "anchors-independent");
        anchors.views.resize(n_views);
        const int lres = cfg.render_res / cfg.latent_factor;
        for (auto& v : anchors.views) v.anchor = gaussian_field(lres, lres, 3, rng);
    }

    Rng t_rng = Rng::substream(cfg.seed, "timesteps");
    Rng rs_rng = Rng::substream(cfg.seed, "resampling");

    RefineResult result;
    result.final_view_losses.assign(n_views, 0.0);
    double mean_score_acc = 0.0;
    long mean_score_n = 0;

    for (int s = 0; s < cfg.steps; ++s) {
        const double frac = cfg.steps > 1 ? static_cast<double>(s) / (cfg.steps - 1) : 0.0;
        const double hi = cfg.t_hi + (cfg.t_hi_final - cfg.t_hi) * frac;
        const double t = t_rng.uniform(cfg.t_lo, hi);
        const double alpha_s =
            cfg.cosine_decay ? cfg.step_size * 0.5 * (1.0 + std::cos(M_PI * frac))
                             : cfg.step_size;

        std::vector<RenderOutput> renders;
        renders.reserve(n_views);
        for (const CameraView& cam : ring.cameras) renders.push_back(render(scene, cam, rcfg));

        auto [ref_loss, ref_grad] =
            reference_loss_grad(scene, ref_image, ring.cameras[0], rcfg);

        std::vector<GradientRecord> applied(n_views);
        std::vector<ViewStepResult> steps_out(n_views);
        std::vector<double> total(scene.param_count(), 0.0);
        double iter_mean_score = 0.0;
        int updates = 0;

        for (int i = 0; i < n_views; ++i) {
            const int drv = ring.drivers[i];
            const GradientRecord& driven = drv < 0 ? ref_grad : applied[drv];

            HybridContext ctx;
            const HybridContext* ctx_ptr = nullptr;
            if (blocks) {
                const int src = drv < 0 ? i : drv;
                const WarpResult ref_warp =
                    warp_view(renders[src].image, renders[src].depth, ring.cameras[src],
                              ring.cameras[i]);
                // Driver alpha thresholded to a binary mask condition.
                FieldStack mask(renders[src].alpha.width, renders[src].alpha.height, 1);
                for (std::size_t p = 0; p < mask.data.size(); ++p)
                    mask.data[p] = renders[src].alpha.data[p] > 0.5 ? 1.0 : 0.0;
                const WarpResult mask_warp = warp_view(mask, renders[src].depth,
                                                       ring.cameras[src], ring.cameras[i]);
                ctx.cond = build_condition(ref_warp, mask_warp, renders[i], latent,
                                           blocks->geo_merge);
                ctx.driving_latent = latent.encode(renders[src].image);
                ctx.driving_depth =
                    downsample_depth_min(renders[src].depth, cfg.latent_factor);
                const int lres = cfg.render_res / cfg.latent_factor;
                ctx.src = ring.cameras[src].scaled(lres, lres);
                ctx.dst = ring.cameras[i].scaled(lres, lres);
                ctx.w_ex = cfg.w_ex;
                ctx.blocks = blocks;
                ctx_ptr = &ctx;
            }

            steps_out[i] = mvnrs_view_step(scene, ring.cameras[i], renders[i],
                                           view_models[i], anchors.views[i], driven, t,
                                           sigma, retention, rs_rng, latent, sched,
                                           ctx_ptr, rcfg);
            applied[i] = steps_out[i].grad;
            if (!applied[i].finite()) {
                std::ostringstream msg;
                msg << "refine: non-finite gradient at iteration " << s << " view " << i;
                throw NumericError(msg.str());
            }
            for (std::size_t p = 0; p < total.size(); ++p)
                total[p] += applied[i].values[p];
            // Mean S across views: the score of the gradient actually applied
            // (post-retention), not the resampled candidate's.
            iter_mean_score += steps_out[i].retained_score;
            if (steps_out[i].anchor_updated) ++updates;
            result.final_view_losses[i] = steps_out[i].loss_denoised;
        }
        for (std::size_t p = 0; p < total.size(); ++p)
            total[p] += cfg.ref_weight * ref_grad.values[p];

        double grad_norm = 0.0;
        for (double v : total) grad_norm += v * v;
        grad_norm = std::sqrt(grad_norm);
        if (!std::isfinite(grad_norm)) {
            std::ostringstream msg;
            msg << "refine: non-finite aggregate gradient at iteration " << s;
            throw NumericError(msg.str());
        }

        // Loss-gradient descent convention for the parameter update.
        scene.add_scaled(total, -alpha_s);

        result.total_anchor_updates += updates;
        mean_score_acc += iter_mean_score / n_views;
        ++mean_score_n;

        if (metrics) {
            std::ostream& m = *metrics;
            m << "{\"iter\":" << s << ",\"t\":" << t << ",\"ref_loss\":" << ref_loss
              << ",\"grad_norm\":" << grad_norm << ",\"anchor_updates\":" << updates
              << ",\"views\":[";
            for (int i = 0; i < n_views; ++i) {
                if (i) m << ',';
                const auto& vs = steps_out[i];
                m << "{\"view\":" << i << ",\"sd\":" << vs.score_resampled << ",\"sp\":"
                  << (std::isfinite(vs.score_anchor) ? vs.score_anchor : -1.0)
                  << ",\"loss\":" << vs.loss_denoised
                  << ",\"updated\":" << (vs.anchor_updated ? "true" : "false")
                  << ",\"retained\":" << vs.retained_score << "}";
            }
            m << "]}\n";
        }

        if (cfg.checkpoint_every > 0 && !cfg.checkpoint_dir.empty() &&
            (s + 1) % cfg.checkpoint_every == 0) {
            save_scene(scene, (std::filesystem::path(cfg.checkpoint_dir) /
                               ("checkpoint_" + std::to_string(s + 1) + ".scne"))
                                  .string());
        }
    }

    result.final_mean_score = mean_score_n > 0 ? mean_score_acc / mean_score_n : 0.0;
    result.scene = std::move(scene);
    return result;
}

namespace {

double restore_eval_loss(const TransformNet& net, const std::vector<RestoreScene>& scenes,
                         const SceneParams* decoder_override, const RestoreConfig& cfg) {
    RenderConfig rcfg;
    rcfg.samples_per_ray = cfg.samples_per_ray;
    rcfg.compute_normals = false;
    double acc = 0.0;
    int n = 0;
    for (const RestoreScene& sc : scenes) {
        SceneParams transformed = apply_transform(net, sc.base);
        if (decoder_override) {
            transformed.decoder_weight = decoder_override->decoder_weight;
            transformed.decoder_bias = decoder_override->decoder_bias;
        }
        for (int i = 0; i < cfg.eval_views; ++i) {
            const double az = 2.0 * M_PI * i / cfg.eval_views;
            const CameraView cam = CameraView::orbit(i, cfg.cam_radius, az, 0.0,
                                                     cfg.cam_focal, cfg.render_res,
                                                     cfg.render_res);
            acc += mse(render(transformed, cam, rcfg).image,
                       render(sc.target, cam, rcfg).image);
            ++n;
        }
    }
    return n > 0 ? acc / n : 0.0;
}

}  // namespace

TransformNet restore_pretrain(const std::vector<RestoreScene>& scenes, TransformNet net,
                              const RestoreConfig& cfg, RestoreTrace* trace) {
    if (scenes.empty()) throw ContractViolation("restore_pretrain: no scenes");
    Rng view_rng = Rng::substream(cfg.seed, "restore-views");
    Rng noise_rng = Rng::substream(cfg.seed, "restore-noise");
    Rng t_rng = Rng::substream(cfg.seed, "restore-timesteps");
    const LatentMap latent;
    const NoiseSchedule sched{};
    RenderConfig rcfg;
    rcfg.samples_per_ray = cfg.samples_per_ray;
    rcfg.compute_normals = false;

    if (trace) trace->eval_losses.push_back(restore_eval_loss(net, scenes, nullptr, cfg));

    for (int s = 0; s < cfg.steps; ++s) {
        std::vector<double> net_grad(net.param_count(), 0.0);
        for (const RestoreScene& sc : scenes) {
            const double az = 2.0 * M_PI * view_rng.uniform();
            const double pitch =
                cfg.pitch_deg * M_PI / 180.0 * (2.0 * view_rng.uniform() - 1.0);
            const CameraView cam = CameraView::orbit(0, cfg.cam_radius, az, pitch,
                                                     cfg.cam_focal, cfg.render_res,
                                                     cfg.render_res);
            const SceneParams transformed = apply_transform(net, sc.base);
            const RenderOutput out = render(transformed, cam, rcfg);
            const FieldStack z = latent.encode(out.image);

            GaussianImageModel model;
            model.mean = latent.encode(render(sc.target, cam, rcfg).image);
            model.stddev = cfg.tau;

            FieldStack eps = z;
            for (double& v : eps.data) v = noise_rng.normal();
            const double t = t_rng.uniform(0.02, 0.98);
            const FieldStack z_t = add_noise(z, eps, t, sched);
            const FieldStack eps_hat = oracle_epsilon(z_t, t, model, sched);
            const GradientRecord g =
                sds_gradient(transformed, cam, eps, t, eps_hat, latent, sched, rcfg);

            // Only the grid gradient propagates into the net; decoders are
            // frozen during pretraining.
            const std::vector<double> grid_grad(
                g.values.begin(), g.values.begin() + transformed.feature_grid.size());
            const std::vector<double> ng =
                net.backward_params(sc.base.feature_grid, sc.base.grid_size, grid_grad);
            for (std::size_t i = 0; i < net_grad.size(); ++i) net_grad[i] += ng[i];
        }
        net.add_scaled(net_grad, -cfg.step_size);
        if (trace && ((s + 1) % cfg.eval_every == 0 || s + 1 == cfg.steps))
            trace->eval_losses.push_back(restore_eval_loss(net, scenes, nullptr, cfg));
    }
    return net;
}

SceneParams restore_finetune(const RestoreScene& scene, TransformNet net,
                             const RestoreConfig& cfg, RestoreTrace* trace) {
    Rng view_rng = Rng::substream(cfg.seed, "finetune-views");
    Rng noise_rng = Rng::substream(cfg.seed, "finetune-noise");
    Rng t_rng = Rng::substream(cfg.seed, "finetune-timesteps");
    const LatentMap latent;
    const NoiseSchedule sched{};
    RenderConfig rcfg;
    rcfg.samples_per_ray = cfg.samples_per_ray;
    rcfg.compute_normals = false;

    // The decoder is the only scene part that moves; the base grid is frozen.
    SceneParams current = scene.base;

    const std::vector<RestoreScene> one{scene};
    if (trace) trace->eval_losses.push_back(restore_eval_loss(net, one, &current, cfg));

    for (int s = 0; s < cfg.steps; ++s) {
        const double az = 2.0 * M_PI * view_rng.uniform();
        const double pitch = cfg.pitch_deg * M_PI / 180.0 * (2.0 * view_rng.uniform() - 1.0);
        const CameraView cam = CameraView::orbit(0, cfg.cam_radius, az, pitch, cfg.cam_focal,
                                                 cfg.render_res, cfg.render_res);
        const SceneParams transformed = apply_transform(net, current);
        const RenderOutput out = render(transformed, cam, rcfg);
        const FieldStack z = latent.encode(out.image);

        GaussianImageModel model;
        model.mean = latent.encode(render(scene.target, cam, rcfg).image);
        model.stddev = cfg.tau;

        FieldStack eps = z;
        for (double& v : eps.data) v = noise_rng.normal();
        const double t = t_rng.uniform(0.02, 0.98);
        const FieldStack z_t = add_noise(z, eps, t, sched);
        const FieldStack eps_hat = oracle_epsilon(z_t, t, model, sched);
        const GradientRecord g =
            sds_gradient(transformed, cam, eps, t, eps_hat, latent, sched, rcfg);

        const std::vector<double> grid_grad(
            g.values.begin(), g.values.begin() + transformed.feature_grid.size());
        const std::vector<double> ng =
            net.backward_params(current.feature_grid, current.grid_size, grid_grad);
        net.add_scaled(ng, -cfg.step_size);

        // Decoder update straight from the flat gradient tail.
        std::size_t off = transformed.feature_grid.size();
        for (std::size_t i = 0; i < current.decoder_weight.size(); ++i)
            current.decoder_weight[i] -= cfg.step_size * g.values[off + i];
        off += current.decoder_weight.size();
        for (std::size_t i = 0; i < current.decoder_bias.size(); ++i)
            current.decoder_bias[i] -= cfg.step_size * g.values[off + i];

        if (trace && ((s + 1) % cfg.eval_every == 0 || s + 1 == cfg.steps))
            trace->eval_losses.push_back(restore_eval_loss(net, one, &current, cfg));
    }
    return apply_transform(net, current);
}

}  // namespace mvsd
