// Copyright (c) 2026 mvsd authors
// SPDX-License-Identifier: Apache-2.0

#include "mvsd/conditioning.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <memory>

namespace mvsd {

namespace {

FieldStack concat_channels(const std::vector<const FieldStack*>& parts) {
    const int w = parts[0]->width, h = parts[0]->height;
    int c = 0;
    for (const FieldStack* p : parts) {
        if (p->width != w || p->height != h)
            throw ContractViolation("concat: resolution mismatch");
        c += p->channels;
    }
    FieldStack out(w, h, c);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            int co = 0;
            for (const FieldStack* p : parts)
                for (int pc = 0; pc < p->channels; ++pc)
                    out.at(x, y, co++) = p->at(x, y, pc);
        }
    return out;
}

FieldStack avgpool2(const FieldStack& in) {
    if (in.width % 2 != 0 || in.height % 2 != 0)
        throw ContractViolation("avgpool2: odd resolution");
    FieldStack out(in.width / 2, in.height / 2, in.channels);
    for (int y = 0; y < out.height; ++y)
        for (int x = 0; x < out.width; ++x)
            for (int c = 0; c < out.channels; ++c)
                out.at(x, y, c) =
                    0.25 * (in.at(2 * x, 2 * y, c) + in.at(2 * x + 1, 2 * y, c) +
                            in.at(2 * x, 2 * y + 1, c) + in.at(2 * x + 1, 2 * y + 1, c));
    return out;
}

FieldStack avgpool2_adjoint(const FieldStack& g, int up_w, int up_h) {
    FieldStack out(up_w, up_h, g.channels);
    for (int y = 0; y < up_h; ++y)
        for (int x = 0; x < up_w; ++x)
            for (int c = 0; c < g.channels; ++c)
                out.at(x, y, c) = 0.25 * g.at(x / 2, y / 2, c);
    return out;
}

FieldStack upsample_nearest(const FieldStack& in, int factor) {
    if (factor == 1) return in;
    FieldStack out(in.width * factor, in.height * factor, in.channels);
    for (int y = 0; y < out.height; ++y)
        for (int x = 0; x < out.width; ++x)
            for (int c = 0; c < out.channels; ++c)
                out.at(x, y, c) = in.at(x / factor, y / factor, c);
    return out;
}

FieldStack upsample_nearest_adjoint(const FieldStack& g, int factor) {
    if (factor == 1) return g;
    FieldStack out(g.width / factor, g.height / factor, g.channels);
    for (int y = 0; y < g.height; ++y)
        for (int x = 0; x < g.width; ++x)
            for (int c = 0; c < g.channels; ++c)
                out.at(x / factor, y / factor, c) += g.at(x, y, c);
    return out;
}

FieldStack tanh_field(const FieldStack& in) {
    FieldStack out = in;
    for (double& v : out.data) v = std::tanh(v);
    return out;
}

}  // namespace

Linear1x1 Linear1x1::zeros(int cin, int cout) {
    Linear1x1 l;
    l.cin = cin;
    l.cout = cout;
    l.w.assign(static_cast<std::size_t>(cout) * cin, 0.0);
    l.b.assign(cout, 0.0);
    return l;
}

Linear1x1 Linear1x1::random(int cin, int cout, Rng& rng, double scale) {
    Linear1x1 l = zeros(cin, cout);
    for (double& v : l.w) v = scale * rng.normal();
    return l;
}

bool Linear1x1::is_zero() const {
    for (double v : w)
        if (v != 0.0) return false;
    for (double v : b)
        if (v != 0.0) return false;
    return true;
}

FieldStack Linear1x1::forward(const FieldStack& in) const {
    if (in.channels != cin) throw ContractViolation("Linear1x1: channel mismatch");
    FieldStack out(in.width, in.height, cout);
    for (int y = 0; y < in.height; ++y)
        for (int x = 0; x < in.width; ++x)
            for (int co = 0; co < cout; ++co) {
                double acc = b[co];
                const double* wrow = &w[static_cast<std::size_t>(co) * cin];
                for (int ci = 0; ci < cin; ++ci) acc += wrow[ci] * in.at(x, y, ci);
                out.at(x, y, co) = acc;
            }
    return out;
}

FieldStack Linear1x1::backward(const FieldStack& in, const FieldStack& gout,
                               std::vector<double>& gw, std::vector<double>& gb) const {
    gw.resize(w.size(), 0.0);
    gb.resize(b.size(), 0.0);
    FieldStack gin(in.width, in.height, cin);
    for (int y = 0; y < in.height; ++y)
        for (int x = 0; x < in.width; ++x)
            for (int co = 0; co < cout; ++co) {
                const double g = gout.at(x, y, co);
                if (g == 0.0) continue;
                gb[co] += g;
                double* gwrow = &gw[static_cast<std::size_t>(co) * cin];
                const double* wrow = &w[static_cast<std::size_t>(co) * cin];
                for (int ci = 0; ci < cin; ++ci) {
                    gwrow[ci] += g * in.at(x, y, ci);
                    gin.at(x, y, ci) += g * wrow[ci];
                }
            }
    return gin;
}

Conv3x3 Conv3x3::random(int cin, int cout, Rng& rng, double scale) {
    Conv3x3 c;
    c.cin = cin;
    c.cout = cout;
    c.w.resize(static_cast<std::size_t>(cout) * cin * 9);
    c.b.assign(cout, 0.0);
    for (double& v : c.w) v = scale * rng.normal();
    return c;
}

FieldStack Conv3x3::forward(const FieldStack& in) const {
    if (in.channels != cin) throw ContractViolation("Conv3x3: channel mismatch");
    FieldStack out(in.width, in.height, cout);
    for (int y = 0; y < in.height; ++y)
        for (int x = 0; x < in.width; ++x)
            for (int co = 0; co < cout; ++co) {
                double acc = b[co];
                for (int ky = -1; ky <= 1; ++ky) {
                    const int yy = y + ky;
                    if (yy < 0 || yy >= in.height) continue;
                    for (int kx = -1; kx <= 1; ++kx) {
                        const int xx = x + kx;
                        if (xx < 0 || xx >= in.width) continue;
                        const int kidx = (ky + 1) * 3 + (kx + 1);
                        const double* wrow = &w[(static_cast<std::size_t>(co) * cin) * 9];
                        for (int ci = 0; ci < cin; ++ci)
                            acc += wrow[static_cast<std::size_t>(ci) * 9 + kidx] *
                                   in.at(xx, yy, ci);
                    }
                }
                out.at(x, y, co) = acc;
            }
    return out;
}

FieldStack Conv3x3::backward(const FieldStack& in, const FieldStack& gout,
                             std::vector<double>& gw, std::vector<double>& gb) const {
    gw.resize(w.size(), 0.0);
    gb.resize(b.size(), 0.0);
    FieldStack gin(in.width, in.height, cin);
    for (int y = 0; y < in.height; ++y)
        for (int x = 0; x < in.width; ++x)
            for (int co = 0; co < cout; ++co) {
                const double g = gout.at(x, y, co);
                if (g == 0.0) continue;
                gb[co] += g;
                for (int ky = -1; ky <= 1; ++ky) {
                    const int yy = y + ky;
                    if (yy < 0 || yy >= in.height) continue;
                    for (int kx = -1; kx <= 1; ++kx) {
                        const int xx = x + kx;
                        if (xx < 0 || xx >= in.width) continue;
                        const int kidx = (ky + 1) * 3 + (kx + 1);
                        for (int ci = 0; ci < cin; ++ci) {
                            const std::size_t widx =
                                (static_cast<std::size_t>(co) * cin + ci) * 9 + kidx;
                            gw[widx] += g * in.at(xx, yy, ci);
                            gin.at(xx, yy, ci) += g * w[widx];
                        }
                    }
                }
            }
    return gin;
}

MergeBlock MergeBlock::make(int ca, int cb, int hidden, Rng& rng) {
    MergeBlock m;
    m.ca = ca;
    m.cb = cb;
    m.l1 = Linear1x1::random(ca + cb, hidden, rng, 0.3);
    m.l2 = Linear1x1::zeros(hidden, ca);
    return m;
}

FieldStack MergeBlock::forward(const FieldStack& a, const FieldStack& b) const {
    if (a.channels != ca || b.channels != cb)
        throw ContractViolation("MergeBlock: channel mismatch");
    const FieldStack cat = concat_channels({&a, &b});
    const FieldStack mid = tanh_field(l1.forward(cat));
    const FieldStack res = l2.forward(mid);
    FieldStack out = a;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += res.data[i];
    return out;
}

FieldStack MergeBlock::backward(const FieldStack& a, const FieldStack& b,
                                const FieldStack& gout, std::vector<double>& gw1,
                                std::vector<double>& gb1, std::vector<double>& gw2,
                                std::vector<double>& gb2, FieldStack* gb_in) const {
    const FieldStack cat = concat_channels({&a, &b});
    const FieldStack mid_pre = l1.forward(cat);
    const FieldStack mid = tanh_field(mid_pre);

    FieldStack g_mid = l2.backward(mid, gout, gw2, gb2);
    for (std::size_t i = 0; i < g_mid.data.size(); ++i) {
        const double th = mid.data[i];
        g_mid.data[i] *= 1.0 - th * th;
    }
    const FieldStack g_cat = l1.backward(cat, g_mid, gw1, gb1);

    FieldStack ga = gout;  // residual skip
    for (int y = 0; y < a.height; ++y)
        for (int x = 0; x < a.width; ++x) {
            for (int c = 0; c < ca; ++c) ga.at(x, y, c) += g_cat.at(x, y, c);
            if (gb_in)
                for (int c = 0; c < cb; ++c) gb_in->at(x, y, c) += g_cat.at(x, y, ca + c);
        }
    return ga;
}

ConvStack2D ConvStack2D::make(int cin, int width, int levels, Rng& rng) {
    ConvStack2D s;
    s.levels = levels;
    s.width = width;
    int c = cin;
    for (int l = 0; l < levels; ++l) {
        s.convs.push_back(Conv3x3::random(c, width, rng, 0.3 / std::sqrt(9.0 * c)));
        s.convs.push_back(Conv3x3::random(width, width, rng, 0.3 / std::sqrt(9.0 * width)));
        c = width;
    }
    return s;
}

BranchOutput ConvStack2D::forward(const FieldStack& in) const {
    BranchOutput out;
    FieldStack cur = in;
    for (int l = 0; l < levels; ++l) {
        const FieldStack h = tanh_field(convs[2 * l].forward(cur));
        FieldStack f = tanh_field(convs[2 * l + 1].forward(h));
        out.layers.push_back(f);
        if (l + 1 < levels) cur = avgpool2(f);
    }
    return out;
}

void ConvStack2D::backward(const FieldStack& in, const std::vector<FieldStack>& glayers,
                           std::vector<std::vector<double>>& gw,
                           std::vector<std::vector<double>>& gb) const {
    gw.assign(convs.size(), {});
    gb.assign(convs.size(), {});

    // Recompute the forward pass with caches.
    std::vector<FieldStack> inputs, h_acts, f_acts;
    FieldStack cur = in;
    for (int l = 0; l < levels; ++l) {
        inputs.push_back(cur);
        const FieldStack h = tanh_field(convs[2 * l].forward(cur));
        const FieldStack f = tanh_field(convs[2 * l + 1].forward(h));
        h_acts.push_back(h);
        f_acts.push_back(f);
        if (l + 1 < levels) cur = avgpool2(f);
    }

    FieldStack g_from_pool;
    for (int l = levels - 1; l >= 0; --l) {
        FieldStack g_f = glayers[l];
        if (l + 1 < levels)
            for (std::size_t i = 0; i < g_f.data.size(); ++i)
                g_f.data[i] += g_from_pool.data[i];
        // tanh on f
        for (std::size_t i = 0; i < g_f.data.size(); ++i) {
            const double th = f_acts[l].data[i];
            g_f.data[i] *= 1.0 - th * th;
        }
        FieldStack g_h = convs[2 * l + 1].backward(h_acts[l], g_f, gw[2 * l + 1], gb[2 * l + 1]);
        for (std::size_t i = 0; i < g_h.data.size(); ++i) {
            const double th = h_acts[l].data[i];
            g_h.data[i] *= 1.0 - th * th;
        }
        FieldStack g_in = convs[2 * l].backward(inputs[l], g_h, gw[2 * l], gb[2 * l]);
        if (l > 0) g_from_pool = avgpool2_adjoint(g_in, inputs[l - 1].width, inputs[l - 1].height);
    }
}

ConditioningBlocks ConditioningBlocks::make(int latent_channels, int mask_channels,
                                            std::uint64_t seed, int width, int levels) {
    Rng rng = Rng::substream(seed, "conditioning");
    ConditioningBlocks b;
    b.latent_channels = latent_channels;
    b.branch_base = ConvStack2D::make(latent_channels, width, levels, rng);
    b.branch_ex = ConvStack2D::make(2 * latent_channels + mask_channels, width, levels, rng);
    b.branch_im = ConvStack2D::make(2 * latent_channels, width, levels, rng);
    for (int l = 0; l < levels; ++l) {
        b.im_merge.push_back(MergeBlock::make(width, width, width, rng));
        b.zero_proj.push_back(Linear1x1::zeros(width, width));
        // The head must not also start at zero or the zero projection would
        // never receive gradient; transparency is carried by zero_proj alone
        // (head biases stay zero for exact linearity in the injection weight).
        b.head.push_back(Linear1x1::random(width, latent_channels, rng, 0.2));
    }
    // geo input: 3-channel normal + 3-channel coarse image.
    b.geo_merge = MergeBlock::make(latent_channels, 2 * latent_channels, width, rng);
    return b;
}

bool ConditioningBlocks::fully_transparent() const {
    for (const auto& z : zero_proj)
        if (!z.is_zero()) return false;
    for (const auto& m : im_merge)
        if (!m.is_transparent()) return false;
    return geo_merge.is_transparent();
}

ConditionStack build_condition(const WarpResult& ref_warp, const WarpResult& mask_warp,
                               const RenderOutput& render, const LatentMap& latent,
                               const MergeBlock& geo_merge) {
    if (ref_warp.warped.width != render.image.width ||
        ref_warp.warped.height != render.image.height)
        throw ContractViolation("build_condition: warp/render resolution mismatch");
    ConditionStack c;
    const FieldStack geo_raw = concat_channels({&render.normal, &render.image});
    c.geo = latent.encode(geo_raw);
    c.z_proj = geo_merge.forward(latent.encode(ref_warp.warped), c.geo);
    c.s_proj = mask_warp.warped;
    for (int y = 0; y < c.s_proj.height; ++y)
        for (int x = 0; x < c.s_proj.width; ++x)
            if (mask_warp.is_void(x, y))
                for (int ch = 0; ch < c.s_proj.channels; ++ch) c.s_proj.at(x, y, ch) = 0.0;
    // Mask condition lives at latent resolution too.
    c.s_proj = latent.encode(c.s_proj);
    return c;
}

BranchOutput explicit_inject(const BranchOutput& base, const BranchOutput& explicit_out,
                             double w_ex, const std::vector<Linear1x1>& zero_proj) {
    if (base.layers.size() != explicit_out.layers.size() ||
        base.layers.size() != zero_proj.size())
        throw ContractViolation("explicit_inject: layer count mismatch");
    BranchOutput out;
    for (std::size_t l = 0; l < base.layers.size(); ++l) {
        if (!base.layers[l].same_shape(explicit_out.layers[l]))
            throw ContractViolation("explicit_inject: layer shape mismatch");
        FieldStack o = base.layers[l];
        const FieldStack proj = zero_proj[l].forward(explicit_out.layers[l]);
        for (std::size_t i = 0; i < o.data.size(); ++i) o.data[i] += w_ex * proj.data[i];
        out.layers.push_back(std::move(o));
    }
    return out;
}

namespace {

// Warp one implicit layer from src to dst at the layer's resolution; void
// pixels contribute zero.
FieldStack warp_layer(const FieldStack& layer, const FieldStack& driving_depth,
                      const CameraView& src, const CameraView& dst) {
    const int factor = src.width / layer.width;
    const CameraView src_l = src.scaled(layer.width, layer.height);
    const CameraView dst_l = dst.scaled(dst.width / factor, dst.height / factor);
    const FieldStack depth_l = downsample_depth_min(driving_depth, factor);
    return warp_view(layer, depth_l, src_l, dst_l).warped;  // fill value 0
}

}  // namespace

BranchOutput implicit_transport(const BranchOutput& implicit, const FieldStack& driving_depth,
                                const CameraView& src, const CameraView& dst,
                                const std::vector<MergeBlock>& merge,
                                const BranchOutput& explicit_in) {
    if (implicit.layers.size() != explicit_in.layers.size() ||
        implicit.layers.size() != merge.size())
        throw ContractViolation("implicit_transport: layer count mismatch");
    BranchOutput out;
    for (std::size_t l = 0; l < implicit.layers.size(); ++l) {
        const FieldStack warped = warp_layer(implicit.layers[l], driving_depth, src, dst);
        out.layers.push_back(merge[l].forward(explicit_in.layers[l], warped));
    }
    return out;
}

namespace {

struct HybridCache {
    FieldStack ex_in;
    BranchOutput ex_raw;
    std::vector<FieldStack> im_warped;
    BranchOutput ex_merged;
    std::vector<FieldStack> proj;  // zero_proj outputs scaled by w_ex
};

FieldStack hybrid_shift_impl(const FieldStack& z_t, const ConditionStack& cond,
                             const FieldStack& driving_latent, const FieldStack& driving_depth,
                             const CameraView& src, const CameraView& dst, double w_ex,
                             const ConditioningBlocks& blocks, HybridCache* cache) {
    const FieldStack ex_in = concat_channels({&cond.z_proj, &cond.s_proj, &z_t});
    const BranchOutput ex_raw = blocks.branch_ex.forward(ex_in);

    const FieldStack im_in = concat_channels({&driving_latent, &z_t});
    const BranchOutput im_raw = blocks.branch_im.forward(im_in);

    BranchOutput ex_merged;
    std::vector<FieldStack> im_warped;
    for (std::size_t l = 0; l < ex_raw.layers.size(); ++l) {
        FieldStack w = warp_layer(im_raw.layers[l], driving_depth, src, dst);
        ex_merged.layers.push_back(blocks.im_merge[l].forward(ex_raw.layers[l], w));
        im_warped.push_back(std::move(w));
    }

    // The base branch cancels out of the shift: the injection is linear, so
    // head(base + w_ex proj) - head(base) == w_ex * W_head proj. Head biases
    // are identically zero.
    FieldStack shift(z_t.width, z_t.height, z_t.channels);
    std::vector<FieldStack> projs;
    for (std::size_t l = 0; l < ex_merged.layers.size(); ++l) {
        FieldStack p = blocks.zero_proj[l].forward(ex_merged.layers[l]);
        for (double& v : p.data) v *= w_ex;
        const FieldStack h = blocks.head[l].forward(p);
        const int factor = z_t.width / h.width;
        const FieldStack up = upsample_nearest(h, factor);
        for (std::size_t i = 0; i < shift.data.size(); ++i) shift.data[i] += up.data[i];
        projs.push_back(std::move(p));
    }
    if (cache) {
        cache->ex_in = ex_in;
        cache->ex_raw = ex_raw;
        cache->im_warped = std::move(im_warped);
        cache->ex_merged = std::move(ex_merged);
        cache->proj = std::move(projs);
    }
    return shift;
}

}  // namespace

FieldStack hybrid_mean_shift(const FieldStack& z_t, const ConditionStack& cond,
                             const FieldStack& driving_latent, const FieldStack& driving_depth,
                             const CameraView& src, const CameraView& dst, double w_ex,
                             const ConditioningBlocks& blocks) {
    return hybrid_shift_impl(z_t, cond, driving_latent, driving_depth, src, dst, w_ex,
                             blocks, nullptr);
}

FieldStack hybrid_epsilon(const FieldStack& z_t, double t, const ConditionStack& cond,
                          const FieldStack& driving_latent, const FieldStack& driving_depth,
                          const CameraView& src, const CameraView& dst, double w_ex,
                          const ConditioningBlocks& blocks, const GaussianImageModel& model,
                          const NoiseSchedule& sched) {
    GaussianImageModel shifted = model;
    const FieldStack shift = hybrid_mean_shift(z_t, cond, driving_latent, driving_depth,
                                               src, dst, w_ex, blocks);
    for (std::size_t i = 0; i < shifted.mean.data.size(); ++i)
        shifted.mean.data[i] += shift.data[i];
    return oracle_epsilon(z_t, t, shifted, sched);
}

double train_blocks_step(ConditioningBlocks& blocks, const FieldStack& z_t, double t,
                         const ConditionStack& cond, const FieldStack& driving_latent,
                         const FieldStack& driving_depth, const CameraView& src,
                         const CameraView& dst, double w_ex,
                         const GaussianImageModel& model, const FieldStack& target_latent,
                         const std::vector<std::uint8_t>& target_mask, double step_size,
                         const NoiseSchedule& sched) {
    HybridCache cache;
    const FieldStack shift = hybrid_shift_impl(z_t, cond, driving_latent, driving_depth,
                                               src, dst, w_ex, blocks, &cache);

    const double a = sched.alpha(t);
    const double sa = std::sqrt(a);
    const double tau2 = model.stddev * model.stddev;
    const double k = sa * tau2 / (a * tau2 + (1.0 - a));

    GaussianImageModel shifted = model;
    for (std::size_t i = 0; i < shifted.mean.data.size(); ++i)
        shifted.mean.data[i] += shift.data[i];
    const FieldStack eps_hat = oracle_epsilon(z_t, t, shifted, sched);
    const FieldStack x0 = predict_x0(z_t, eps_hat, t, sched);

    // Masked mean squared error against the fixed target latent.
    double loss = 0.0;
    std::size_t n_mask = 0;
    FieldStack g_x0(z_t.width, z_t.height, z_t.channels);
    for (int y = 0; y < z_t.height; ++y)
        for (int x = 0; x < z_t.width; ++x) {
            if (target_mask[static_cast<std::size_t>(y) * z_t.width + x] == 0) continue;
            ++n_mask;
            for (int c = 0; c < z_t.channels; ++c) {
                const double d = x0.at(x, y, c) - target_latent.at(x, y, c);
                loss += d * d;
                g_x0.at(x, y, c) = 2.0 * d;
            }
        }
    if (n_mask == 0) return 0.0;
    const double inv_n = 1.0 / (static_cast<double>(n_mask) * z_t.channels);
    loss *= inv_n;

    // d x0 / d shift is the scalar (1 - k sqrt(a)).
    FieldStack g_shift = g_x0;
    const double x0_shift = 1.0 - k * sa;
    for (double& v : g_shift.data) v *= inv_n * x0_shift;

    // Reverse through head, zero_proj, merge and the explicit branch.
    std::vector<FieldStack> g_ex_layers;
    std::vector<std::vector<double>> g_head_w(blocks.head.size()),
        g_head_b(blocks.head.size()), g_zp_w(blocks.zero_proj.size()),
        g_zp_b(blocks.zero_proj.size());
    std::vector<std::vector<double>> g_m_w1(blocks.im_merge.size()),
        g_m_b1(blocks.im_merge.size()), g_m_w2(blocks.im_merge.size()),
        g_m_b2(blocks.im_merge.size());

    for (std::size_t l = 0; l < blocks.head.size(); ++l) {
        const int factor = z_t.width / cache.proj[l].width;
        const FieldStack g_h = upsample_nearest_adjoint(g_shift, factor);
        FieldStack g_p = blocks.head[l].backward(cache.proj[l], g_h, g_head_w[l], g_head_b[l]);
        for (double& v : g_p.data) v *= w_ex;
        const FieldStack g_merged = blocks.zero_proj[l].backward(
            cache.ex_merged.layers[l], g_p, g_zp_w[l], g_zp_b[l]);
        // The warped implicit input is treated as constant (gradient stops
        // at the warp), so only the explicit-path gradient continues.
        FieldStack g_ex = blocks.im_merge[l].backward(
            cache.ex_raw.layers[l], cache.im_warped[l], g_merged, g_m_w1[l], g_m_b1[l],
            g_m_w2[l], g_m_b2[l], nullptr);
        g_ex_layers.push_back(std::move(g_ex));
    }

    std::vector<std::vector<double>> g_conv_w, g_conv_b;
    blocks.branch_ex.backward(cache.ex_in, g_ex_layers, g_conv_w, g_conv_b);

    // Descent step. Head biases stay at zero so the shift remains linear in
    // the injected features.
    for (std::size_t l = 0; l < blocks.head.size(); ++l) {
        for (std::size_t i = 0; i < blocks.head[l].w.size(); ++i)
            blocks.head[l].w[i] -= step_size * g_head_w[l][i];
        for (std::size_t i = 0; i < blocks.zero_proj[l].w.size(); ++i)
            blocks.zero_proj[l].w[i] -= step_size * g_zp_w[l][i];
        for (std::size_t i = 0; i < blocks.zero_proj[l].b.size(); ++i)
            blocks.zero_proj[l].b[i] -= step_size * g_zp_b[l][i];
        for (std::size_t i = 0; i < blocks.im_merge[l].l1.w.size(); ++i)
            blocks.im_merge[l].l1.w[i] -= step_size * g_m_w1[l][i];
        for (std::size_t i = 0; i < blocks.im_merge[l].l1.b.size(); ++i)
            blocks.im_merge[l].l1.b[i] -= step_size * g_m_b1[l][i];
        for (std::size_t i = 0; i < blocks.im_merge[l].l2.w.size(); ++i)
            blocks.im_merge[l].l2.w[i] -= step_size * g_m_w2[l][i];
        for (std::size_t i = 0; i < blocks.im_merge[l].l2.b.size(); ++i)
            blocks.im_merge[l].l2.b[i] -= step_size * g_m_b2[l][i];
    }
    for (std::size_t ci = 0; ci < blocks.branch_ex.convs.size(); ++ci) {
        for (std::size_t i = 0; i < blocks.branch_ex.convs[ci].w.size(); ++i)
            blocks.branch_ex.convs[ci].w[i] -= step_size * g_conv_w[ci][i];
        for (std::size_t i = 0; i < blocks.branch_ex.convs[ci].b.size(); ++i)
            blocks.branch_ex.convs[ci].b[i] -= step_size * g_conv_b[ci][i];
    }
    return loss;
}

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};

template <typename Fn>
void visit_params(ConditioningBlocks& b, Fn&& fn) {
    auto stack = [&](ConvStack2D& s) {
        for (auto& c : s.convs) {
            fn(c.w);
            fn(c.b);
        }
    };
    auto merge = [&](MergeBlock& m) {
        fn(m.l1.w);
        fn(m.l1.b);
        fn(m.l2.w);
        fn(m.l2.b);
    };
    stack(b.branch_base);
    stack(b.branch_ex);
    stack(b.branch_im);
    for (auto& m : b.im_merge) merge(m);
    for (auto& z : b.zero_proj) {
        fn(z.w);
        fn(z.b);
    }
    for (auto& h : b.head) {
        fn(h.w);
        fn(h.b);
    }
    merge(b.geo_merge);
}

}  // namespace

void save_blocks(const ConditioningBlocks& blocks, const std::string& path) {
    std::unique_ptr<std::FILE, FileCloser> fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw IoError("blocks: cannot open " + path + " for writing");
    if (std::fwrite("HPDM", 1, 4, fp.get()) != 4) throw IoError("blocks: short write");
    const std::uint32_t dims[3] = {
        static_cast<std::uint32_t>(blocks.latent_channels),
        static_cast<std::uint32_t>(blocks.branch_base.width),
        static_cast<std::uint32_t>(blocks.branch_base.levels)};
    if (std::fwrite(dims, sizeof(std::uint32_t), 3, fp.get()) != 3)
        throw IoError("blocks: short write");
    auto& mut = const_cast<ConditioningBlocks&>(blocks);
    visit_params(mut, [&](std::vector<double>& v) {
        std::vector<float> buf(v.begin(), v.end());
        if (!buf.empty() &&
            std::fwrite(buf.data(), sizeof(float), buf.size(), fp.get()) != buf.size())
            throw IoError("blocks: short write");
    });
}

ConditioningBlocks load_blocks(const std::string& path) {
    std::unique_ptr<std::FILE, FileCloser> fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw IoError("blocks: cannot open " + path);
    char magic[4];
    if (std::fread(magic, 1, 4, fp.get()) != 4 || std::memcmp(magic, "HPDM", 4) != 0)
        throw IoError("blocks: bad magic in " + path);
    std::uint32_t dims[3];
    if (std::fread(dims, sizeof(std::uint32_t), 3, fp.get()) != 3)
        throw IoError("blocks: short read");
    // Mask channels are 1 throughout the pipeline.
    ConditioningBlocks b = ConditioningBlocks::make(static_cast<int>(dims[0]), 1, 0,
                                                    static_cast<int>(dims[1]),
                                                    static_cast<int>(dims[2]));
    visit_params(b, [&](std::vector<double>& v) {
        std::vector<float> buf(v.size());
        if (!buf.empty() &&
            std::fread(buf.data(), sizeof(float), buf.size(), fp.get()) != buf.size())
            throw IoError("blocks: truncated payload");
        v.assign(buf.begin(), buf.end());
    });
    return b;
}

}  // namespace mvsd
