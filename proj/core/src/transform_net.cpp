// Copyright (c) 2026 mvsd authors
// SPDX-License-Identifier: Apache-2.0

#include "mvsd/transform_net.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <memory>

#include "mvsd/errors.hpp"
#include "mvsd/rng.hpp"

namespace mvsd {

namespace {

// weight layout: w[((co*Cin + ci)*27) + kernel], kernel = (kz+1)*9 + (ky+1)*3 + (kx+1)
void conv3(const std::vector<double>& in, int cin, std::vector<double>& out, int cout,
           const std::vector<double>& w, const std::vector<double>& b, int g) {
    out.assign(static_cast<std::size_t>(g) * g * g * cout, 0.0);
    for (int z = 0; z < g; ++z)
        for (int y = 0; y < g; ++y)
            for (int x = 0; x < g; ++x) {
                double* o = &out[((static_cast<std::size_t>(z) * g + y) * g + x) * cout];
                for (int co = 0; co < cout; ++co) o[co] = b[co];
                for (int kz = -1; kz <= 1; ++kz) {
                    const int zz = z + kz;
                    if (zz < 0 || zz >= g) continue;
                    for (int ky = -1; ky <= 1; ++ky) {
                        const int yy = y + ky;
                        if (yy < 0 || yy >= g) continue;
                        for (int kx = -1; kx <= 1; ++kx) {
                            const int xx = x + kx;
                            if (xx < 0 || xx >= g) continue;
                            const int kidx = (kz + 1) * 9 + (ky + 1) * 3 + (kx + 1);
                            const double* iv =
                                &in[((static_cast<std::size_t>(zz) * g + yy) * g + xx) * cin];
                            for (int co = 0; co < cout; ++co) {
                                const double* wrow = &w[(static_cast<std::size_t>(co) * cin) * 27];
                                double acc = 0.0;
                                for (int ci = 0; ci < cin; ++ci)
                                    acc += wrow[static_cast<std::size_t>(ci) * 27 + kidx] * iv[ci];
                                o[co] += acc;
                            }
                        }
                    }
                }
            }
}

// Accumulate weight/bias gradients and (optionally) input gradients for
// grad_out contracted against conv3's output.
void conv3_backward(const std::vector<double>& in, int cin, int cout,
                    const std::vector<double>& w, const std::vector<double>& grad_out,
                    std::vector<double>& gw, std::vector<double>& gb,
                    std::vector<double>* grad_in, int g) {
    gw.assign(w.size(), 0.0);
    gb.assign(cout, 0.0);
    if (grad_in) grad_in->assign(in.size(), 0.0);
    for (int z = 0; z < g; ++z)
        for (int y = 0; y < g; ++y)
            for (int x = 0; x < g; ++x) {
                const double* go =
                    &grad_out[((static_cast<std::size_t>(z) * g + y) * g + x) * cout];
                for (int co = 0; co < cout; ++co) gb[co] += go[co];
                for (int kz = -1; kz <= 1; ++kz) {
                    const int zz = z + kz;
                    if (zz < 0 || zz >= g) continue;
                    for (int ky = -1; ky <= 1; ++ky) {
                        const int yy = y + ky;
                        if (yy < 0 || yy >= g) continue;
                        for (int kx = -1; kx <= 1; ++kx) {
                            const int xx = x + kx;
                            if (xx < 0 || xx >= g) continue;
                            const int kidx = (kz + 1) * 9 + (ky + 1) * 3 + (kx + 1);
                            const std::size_t ioff =
                                ((static_cast<std::size_t>(zz) * g + yy) * g + xx) * cin;
                            for (int co = 0; co < cout; ++co) {
                                const double g_o = go[co];
                                if (g_o == 0.0) continue;
                                for (int ci = 0; ci < cin; ++ci) {
                                    const std::size_t widx =
                                        (static_cast<std::size_t>(co) * cin + ci) * 27 + kidx;
                                    gw[widx] += g_o * in[ioff + ci];
                                    if (grad_in) (*grad_in)[ioff + ci] += g_o * w[widx];
                                }
                            }
                        }
                    }
                }
            }
}

}  // namespace

TransformNet TransformNet::identity_init(int feature_dim, int hidden_dim,
                                         std::uint64_t seed) {
    TransformNet n;
    n.feature_dim = feature_dim;
    n.hidden_dim = hidden_dim;
    n.w1.resize(static_cast<std::size_t>(hidden_dim) * feature_dim * 27);
    n.b1.assign(hidden_dim, 0.0);
    n.w2.assign(static_cast<std::size_t>(feature_dim) * hidden_dim * 27, 0.0);
    n.b2.assign(feature_dim, 0.0);
    Rng rng = Rng::substream(seed, "transform-net");
    const double scale = 0.1 / std::sqrt(static_cast<double>(feature_dim) * 27);
    for (double& v : n.w1) v = scale * rng.normal();
    return n;
}

std::vector<double> TransformNet::flatten() const {
    std::vector<double> v;
    v.reserve(param_count());
    v.insert(v.end(), w1.begin(), w1.end());
    v.insert(v.end(), b1.begin(), b1.end());
    v.insert(v.end(), w2.begin(), w2.end());
    v.insert(v.end(), b2.begin(), b2.end());
    return v;
}

void TransformNet::add_scaled(const std::vector<double>& grad, double scale) {
    if (grad.size() != param_count())
        throw ContractViolation("TransformNet::add_scaled: size mismatch");
    std::size_t i = 0;
    for (double& p : w1) p += scale * grad[i++];
    for (double& p : b1) p += scale * grad[i++];
    for (double& p : w2) p += scale * grad[i++];
    for (double& p : b2) p += scale * grad[i++];
}

std::vector<double> TransformNet::apply_grid(const std::vector<double>& grid,
                                             int grid_size) const {
    if (grid.size() !=
        static_cast<std::size_t>(grid_size) * grid_size * grid_size * feature_dim)
        throw ContractViolation("TransformNet::apply_grid: grid size mismatch");
    std::vector<double> hidden, out;
    conv3(grid, feature_dim, hidden, hidden_dim, w1, b1, grid_size);
    for (double& v : hidden) v = std::tanh(v);
    conv3(hidden, hidden_dim, out, feature_dim, w2, b2, grid_size);
    return out;
}

std::vector<double> TransformNet::backward_params(const std::vector<double>& grid,
                                                  int grid_size,
                                                  const std::vector<double>& grad_out) const {
    if (grad_out.size() != grid.size())
        throw ContractViolation("TransformNet::backward_params: grad size mismatch");
    std::vector<double> hidden_pre, hidden;
    conv3(grid, feature_dim, hidden_pre, hidden_dim, w1, b1, grid_size);
    hidden = hidden_pre;
    for (double& v : hidden) v = std::tanh(v);

    std::vector<double> gw2, gb2, g_hidden;
    conv3_backward(hidden, hidden_dim, feature_dim, w2, grad_out, gw2, gb2, &g_hidden,
                   grid_size);
    for (std::size_t i = 0; i < g_hidden.size(); ++i) {
        const double th = hidden[i];
        g_hidden[i] *= 1.0 - th * th;
    }
    std::vector<double> gw1, gb1;
    conv3_backward(grid, feature_dim, hidden_dim, w1, g_hidden, gw1, gb1, nullptr,
                   grid_size);

    std::vector<double> g;
    g.reserve(param_count());
    g.insert(g.end(), gw1.begin(), gw1.end());
    g.insert(g.end(), gb1.begin(), gb1.end());
    g.insert(g.end(), gw2.begin(), gw2.end());
    g.insert(g.end(), gb2.begin(), gb2.end());
    return g;
}

SceneParams apply_transform(const TransformNet& net, const SceneParams& base) {
    if (net.feature_dim != base.feature_dim)
        throw ContractViolation("apply_transform: feature dim mismatch");
    SceneParams out = base;
    const std::vector<double> delta = net.apply_grid(base.feature_grid, base.grid_size);
    for (std::size_t i = 0; i < out.feature_grid.size(); ++i)
        out.feature_grid[i] += delta[i];
    return out;
}

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};

}  // namespace

void save_transform_net(const TransformNet& net, const std::string& path) {
    std::unique_ptr<std::FILE, FileCloser> fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw IoError("transform_net: cannot open " + path + " for writing");
    if (std::fwrite("TNET", 1, 4, fp.get()) != 4) throw IoError("transform_net: short write");
    const std::uint32_t dims[2] = {static_cast<std::uint32_t>(net.feature_dim),
                                   static_cast<std::uint32_t>(net.hidden_dim)};
    if (std::fwrite(dims, sizeof(std::uint32_t), 2, fp.get()) != 2)
        throw IoError("transform_net: short write");
    const std::vector<double> flat = net.flatten();
    std::vector<float> buf(flat.begin(), flat.end());
    if (std::fwrite(buf.data(), sizeof(float), buf.size(), fp.get()) != buf.size())
        throw IoError("transform_net: short write");
}

TransformNet load_transform_net(const std::string& path) {
    std::unique_ptr<std::FILE, FileCloser> fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw IoError("transform_net: cannot open " + path);
    char magic[4];
    if (std::fread(magic, 1, 4, fp.get()) != 4 || std::memcmp(magic, "TNET", 4) != 0)
        throw IoError("transform_net: bad magic in " + path);
    std::uint32_t dims[2];
    if (std::fread(dims, sizeof(std::uint32_t), 2, fp.get()) != 2)
        throw IoError("transform_net: short read");
    TransformNet net = TransformNet::identity_init(static_cast<int>(dims[0]),
                                                   static_cast<int>(dims[1]), 0);
    std::vector<float> buf(net.param_count());
    if (std::fread(buf.data(), sizeof(float), buf.size(), fp.get()) != buf.size())
        throw IoError("transform_net: truncated payload");
    std::size_t i = 0;
    for (double& v : net.w1) v = buf[i++];
    for (double& v : net.b1) v = buf[i++];
    for (double& v : net.w2) v = buf[i++];
    for (double& v : net.b2) v = buf[i++];
    return net;
}

}  // namespace mvsd
