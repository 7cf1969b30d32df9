// Copyright (c) 2026 mvsd authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "mvsd/geometry.hpp"
#include "mvsd/oracle.hpp"
#include "mvsd/rng.hpp"
#include "mvsd/scene.hpp"

namespace mvsd {

// Per-pixel linear map (1x1 convolution).
struct Linear1x1 {
    int cin = 0, cout = 0;
    std::vector<double> w;  // cout x cin
    std::vector<double> b;  // cout

    static Linear1x1 zeros(int cin, int cout);
    static Linear1x1 random(int cin, int cout, Rng& rng, double scale);

    FieldStack forward(const FieldStack& in) const;
    // Accumulates parameter gradients; returns the input gradient.
    FieldStack backward(const FieldStack& in, const FieldStack& gout,
                        std::vector<double>& gw, std::vector<double>& gb) const;

    std::size_t param_count() const { return w.size() + b.size(); }
    bool is_zero() const;
};

// 3x3 convolution with zero padding.
struct Conv3x3 {
    int cin = 0, cout = 0;
    std::vector<double> w;  // cout x cin x 9
    std::vector<double> b;  // cout

    static Conv3x3 random(int cin, int cout, Rng& rng, double scale);

    FieldStack forward(const FieldStack& in) const;
    FieldStack backward(const FieldStack& in, const FieldStack& gout,
                        std::vector<double>& gw, std::vector<double>& gb) const;

    std::size_t param_count() const { return w.size() + b.size(); }
};

// Two per-pixel linear layers with tanh between, residual skip from the
// first input, final layer zero-initialized: out = a + l2(tanh(l1([a; b]))).
// Exact identity on the first input until l2 is trained.
struct MergeBlock {
    Linear1x1 l1;  // (ca + cb) -> hidden
    Linear1x1 l2;  // hidden -> ca, zero-init
    int ca = 0, cb = 0;

    static MergeBlock make(int ca, int cb, int hidden, Rng& rng);

    FieldStack forward(const FieldStack& a, const FieldStack& b) const;
    // Input gradient for `a` is returned; the gradient for `b` is written to
    // gb_in when non-null (the implicit path stops at the warp, so callers
    // usually pass nullptr).
    FieldStack backward(const FieldStack& a, const FieldStack& b, const FieldStack& gout,
                        std::vector<double>& gw1, std::vector<double>& gb1,
                        std::vector<double>& gw2, std::vector<double>& gb2,
                        FieldStack* gb_in) const;

    std::size_t param_count() const { return l1.param_count() + l2.param_count(); }
    bool is_transparent() const { return l2.is_zero(); }
};

// Per-layer feature grids produced by a branch function. Layer l lives at
// the input resolution divided by 2^l.
struct BranchOutput {
    std::vector<FieldStack> layers;
};

// Fixed convolutional stack: per level two 3x3 convs with tanh, then a 2x
// average-pool down to the next level. Emits one feature grid per level.
struct ConvStack2D {
    int levels = 3;
    int width = 8;  // channels per level
    std::vector<Conv3x3> convs;  // 2 per level

    static ConvStack2D make(int cin, int width, int levels, Rng& rng);

    BranchOutput forward(const FieldStack& in) const;
    // Accumulates conv parameter gradients given per-layer output gradients.
    void backward(const FieldStack& in, const std::vector<FieldStack>& glayers,
                  std::vector<std::vector<double>>& gw,
                  std::vector<std::vector<double>>& gb) const;
};

struct ConditionStack {
    FieldStack z_proj;  // merged warped reference latent
    FieldStack s_proj;  // warped auxiliary mask, voids zeroed
    FieldStack geo;     // encoded normal + coarse image
};

// Everything the hybrid epsilon-prediction is parameterized by. All
// trainable paths are zero-initialized, so the stack is an exact no-op on
// the oracle until trained.
struct ConditioningBlocks {
    int latent_channels = 3;
    ConvStack2D branch_base;  // input: z_t
    ConvStack2D branch_ex;    // input: [z_proj, s_proj, z_t]
    ConvStack2D branch_im;    // input: [driving_latent, z_t]
    std::vector<MergeBlock> im_merge;   // per layer
    std::vector<Linear1x1> zero_proj;   // per layer, zero-init
    std::vector<Linear1x1> head;        // per layer -> latent channels, zero-init
    MergeBlock geo_merge;

    static ConditioningBlocks make(int latent_channels, int mask_channels,
                                   std::uint64_t seed, int width = 8, int levels = 3);
    bool fully_transparent() const;
};

// z_proj = geo_merge(encode(ref_warp.warped), encode([render.normal, render.image]));
// s_proj = mask_warp.warped with void pixels forced to zero.
ConditionStack build_condition(const WarpResult& ref_warp, const WarpResult& mask_warp,
                               const RenderOutput& render, const LatentMap& latent,
                               const MergeBlock& geo_merge);

// out_l = base_l + w_ex * zero_proj_l(explicit_l).
BranchOutput explicit_inject(const BranchOutput& base, const BranchOutput& explicit_out,
                             double w_ex, const std::vector<Linear1x1>& zero_proj);

// Warp every implicit layer from src to dst (voids contribute zero) and
// merge it residually into the matching explicit layer.
BranchOutput implicit_transport(const BranchOutput& implicit, const FieldStack& driving_depth,
                                const CameraView& src, const CameraView& dst,
                                const std::vector<MergeBlock>& merge,
                                const BranchOutput& explicit_in);

// The latent-space mean shift produced by the conditioning stack; linear in
// w_ex by construction.
FieldStack hybrid_mean_shift(const FieldStack& z_t, const ConditionStack& cond,
                             const FieldStack& driving_latent, const FieldStack& driving_depth,
                             const CameraView& src, const CameraView& dst, double w_ex,
                             const ConditioningBlocks& blocks);

// Oracle epsilon-prediction with the model mean shifted by the conditioning
// stack. Identical to the plain oracle while the stack is untrained.
FieldStack hybrid_epsilon(const FieldStack& z_t, double t, const ConditionStack& cond,
                          const FieldStack& driving_latent, const FieldStack& driving_depth,
                          const CameraView& src, const CameraView& dst, double w_ex,
                          const ConditioningBlocks& blocks, const GaussianImageModel& model,
                          const NoiseSchedule& sched = {});

// One gradient step on the block parameters (branch_ex, im_merge, zero_proj,
// head) minimizing the masked squared distance between the one-step x0
// prediction and a fixed target latent. Gradient stops at the layer warps
// and at geo_merge. Returns the loss before the step.
double train_blocks_step(ConditioningBlocks& blocks, const FieldStack& z_t, double t,
                         const ConditionStack& cond, const FieldStack& driving_latent,
                         const FieldStack& driving_depth, const CameraView& src,
                         const CameraView& dst, double w_ex,
                         const GaussianImageModel& model, const FieldStack& target_latent,
                         const std::vector<std::uint8_t>& target_mask, double step_size,
                         const NoiseSchedule& sched = {});

// Block weights in the shared container format, magic "HPDM".
void save_blocks(const ConditioningBlocks& blocks, const std::string& path);
ConditioningBlocks load_blocks(const std::string& path);

}  // namespace mvsd
