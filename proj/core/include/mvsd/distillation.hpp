// Copyright (c) 2026 mvsd authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "mvsd/conditioning.hpp"
#include "mvsd/noise_transport.hpp"
#include "mvsd/oracle.hpp"
#include "mvsd/scene.hpp"
#include "mvsd/transform_net.hpp"

namespace mvsd {

struct GradientRecord {
    enum class Kind { DenoisedTarget, Retained, Reference };
    std::vector<double> values;  // flat, SceneParams layout
    int source_view = -1;
    Kind kind = Kind::DenoisedTarget;

    double norm() const;
    bool finite() const;
};

struct RefineConfig {
    int views = 13;              // fixed viewpoint count
    double pitch_deg = 30.0;     // pitch sampled within +/- this
    double sigma = 0.1;          // resampling stddev
    int steps = 500;
    double step_size = 1e-2;
    bool cosine_decay = false;
    std::uint64_t seed = 0;
    double w_ex = 1.0;
    double ref_weight = 1.0;
    double tau = 0.15;           // oracle model stddev
    double t_lo = 0.02;          // timestep sampling window
    double t_hi = 0.98;
    double t_hi_final = 0.5;     // linear annealing target for the upper bound
    int render_res = 32;
    int samples_per_ray = 64;
    double cam_radius = 2.8;
    double cam_focal = 48.0;     // pixels at render_res
    int latent_factor = 1;       // identity latent map by default
    // Ablation switches.
    bool anchor_init = true;     // false: independent per-view anchors
    bool retention = true;       // false: always accept the resample, keep anchors
    bool freeze_noise = false;   // noise fixed at its initialization, never resampled
    int checkpoint_every = 0;
    std::string checkpoint_dir;

    void validate() const;
    LatentMap latent_map() const {
        return LatentMap(latent_factor == 1 ? LatentMap::Kind::Identity
                                            : LatentMap::Kind::AvgPool2);
    }
};

// Camera ring in chain order: frontal first, then alternating +/- azimuth
// steps so consecutive chain links overlap maximally. `drivers` maps each
// ring index to the view whose anchor/gradient drives it (-1 for the root).
struct ViewRing {
    std::vector<CameraView> cameras;
    std::vector<int> drivers;
};
ViewRing make_view_ring(const RefineConfig& cfg);

// Eq.-style SDS gradient: decode (eps_pred - eps) through the latent map
// adjoint, scale by w_t, contract with the render Jacobian.
GradientRecord sds_gradient(const SceneParams& scene, const CameraView& cam,
                            const FieldStack& eps, double t, const FieldStack& eps_pred,
                            const LatentMap& latent, const NoiseSchedule& sched = {},
                            const RenderConfig& rcfg = {});

// Mean-squared pixel error against a reference render plus its exact
// parameter gradient.
std::pair<double, GradientRecord> reference_loss_grad(const SceneParams& scene,
                                                      const FieldStack& ref_image,
                                                      const CameraView& ref_cam,
                                                      const RenderConfig& rcfg = {});

double image_loss(const FieldStack& rendered, const FieldStack& denoised);

// Cosine similarity of flat gradient vectors; 0 when both are zero.
double consistency_score(const GradientRecord& a, const GradientRecord& b);
double consistency_score(const std::vector<double>& a, const std::vector<double>& b);

// Optional conditioning context for the view step; when absent (or the
// blocks are untouched and w_ex is 0) the plain oracle is used.
struct HybridContext {
    const ConditioningBlocks* blocks = nullptr;
    ConditionStack cond;
    FieldStack driving_latent;
    FieldStack driving_depth;  // latent resolution
    CameraView src, dst;       // latent resolution
    double w_ex = 0.0;
};

struct ViewStepResult {
    GradientRecord grad;
    double score_resampled = 0.0;  // S^D
    double score_anchor = 0.0;     // S^P (-inf stand-in on first iteration)
    double loss_denoised = 0.0;    // L^D
    bool anchor_updated = false;
    double retained_score = 0.0;
};

// One MV-NRS step for one view: resample, denoise via the oracle, score the
// resampled and anchor gradients against the driven gradient, apply the
// retention rule. Mutates `state` per the rule.
ViewStepResult mvnrs_view_step(const SceneParams& scene, const CameraView& cam,
                               const RenderOutput& rendered, const GaussianImageModel& model,
                               AnchorViewState& state, const GradientRecord& driven,
                               double t, double sigma, bool retention_enabled,
                               Rng& resample_rng, const LatentMap& latent,
                               const NoiseSchedule& sched, const HybridContext* hybrid,
                               const RenderConfig& rcfg);

struct RefineResult {
    SceneParams scene;
    long total_anchor_updates = 0;
    double final_mean_score = 0.0;
    std::vector<double> final_view_losses;
};

// The MV-NRS optimization loop. Per-view oracle means come from
// `view_models` (aligned with make_view_ring order); metrics are emitted as
// one JSON object per iteration when `metrics` is non-null.
RefineResult refine(const SceneParams& init, const FieldStack& ref_image,
                    const std::vector<GaussianImageModel>& view_models,
                    const RefineConfig& cfg, std::ostream* metrics = nullptr,
                    const ConditioningBlocks* blocks = nullptr);

// Geometry-restoration training: a base scene to transform plus the target
// whose renders define the per-view oracle means.
struct RestoreScene {
    SceneParams base;
    SceneParams target;
};

struct RestoreConfig {
    int steps = 100;
    double step_size = 1e-2;
    double tau = 0.0;
    std::uint64_t seed = 0;
    double pitch_deg = 30.0;
    int render_res = 24;
    int samples_per_ray = 48;
    double cam_radius = 2.8;
    double cam_focal = 36.0;
    int eval_views = 8;
    int eval_every = 10;
};

struct RestoreTrace {
    std::vector<double> eval_losses;  // sampled every eval_every steps
};

// Optimize the transform net by summed SDS gradients over all scenes with
// randomly sampled viewpoints (full 360 degree azimuth); base features and
// decoders stay frozen.
TransformNet restore_pretrain(const std::vector<RestoreScene>& scenes, TransformNet net,
                              const RestoreConfig& cfg, RestoreTrace* trace = nullptr);

// Joint fine-tuning of the pretrained net and the scene decoder on a single
// scene; the base feature grid is never touched. Returns the transformed
// scene with the fine-tuned decoder.
SceneParams restore_finetune(const RestoreScene& scene, TransformNet net,
                             const RestoreConfig& cfg, RestoreTrace* trace = nullptr);

}  // namespace mvsd
