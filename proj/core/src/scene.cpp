// Copyright (c) 2026 mvsd authors
// SPDX-License-Identifier: Apache-2.0

#include "mvsd/scene.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <limits>
#include <memory>

#include "mvsd/rng.hpp"

namespace mvsd {

namespace {

double softplus(double x) {
    return x > 30.0 ? x : std::log1p(std::exp(x));
}
double sigmoid(double x) {
    return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                    : std::exp(x) / (1.0 + std::exp(x));
}

// Trilinear interpolation context: 8 corner indices and weights.
struct TrilinearCtx {
    std::size_t cell[8];  // flat cell index (without feature dim)
    double w[8];
};

TrilinearCtx trilinear_setup(const SceneParams& s, const Vec3& p) {
    const int g = s.grid_size;
    const double scale = (g - 1) / (2.0 * s.bounds);
    double gx = (p.x + s.bounds) * scale;
    double gy = (p.y + s.bounds) * scale;
    double gz = (p.z + s.bounds) * scale;
    gx = std::clamp(gx, 0.0, static_cast<double>(g - 1));
    gy = std::clamp(gy, 0.0, static_cast<double>(g - 1));
    gz = std::clamp(gz, 0.0, static_cast<double>(g - 1));
    const int x0 = std::min(static_cast<int>(gx), g - 2);
    const int y0 = std::min(static_cast<int>(gy), g - 2);
    const int z0 = std::min(static_cast<int>(gz), g - 2);
    const double fx = gx - x0, fy = gy - y0, fz = gz - z0;

    TrilinearCtx c;
    int k = 0;
    for (int dz = 0; dz < 2; ++dz)
        for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx, ++k) {
                c.cell[k] = (static_cast<std::size_t>(z0 + dz) * g + (y0 + dy)) * g + (x0 + dx);
                c.w[k] = (dx ? fx : 1.0 - fx) * (dy ? fy : 1.0 - fy) * (dz ? fz : 1.0 - fz);
            }
    return c;
}

void sample_features(const SceneParams& s, const TrilinearCtx& c, double* feat) {
    const int f = s.feature_dim;
    std::fill(feat, feat + f, 0.0);
    for (int k = 0; k < 8; ++k) {
        const double* cell = &s.feature_grid[c.cell[k] * f];
        for (int j = 0; j < f; ++j) feat[j] += c.w[k] * cell[j];
    }
}

// Decode feature vector to pre-activations (density logit + 3 color logits).
void decode_preact(const SceneParams& s, const double* feat, double* act) {
    const int f = s.feature_dim;
    for (int k = 0; k < 4; ++k) {
        double a = s.decoder_bias[k];
        const double* w = &s.decoder_weight[static_cast<std::size_t>(k) * f];
        for (int j = 0; j < f; ++j) a += w[j] * feat[j];
        act[k] = a;
    }
}

double density_at(const SceneParams& s, const Vec3& p, std::vector<double>& scratch) {
    const TrilinearCtx c = trilinear_setup(s, p);
    sample_features(s, c, scratch.data());
    double a = s.decoder_bias[0];
    const double* w = &s.decoder_weight[0];
    for (int j = 0; j < s.feature_dim; ++j) a += w[j] * scratch[j];
    return softplus(a);
}

// Slab intersection of ray o + t*d with [-b, b]^3. Returns false on miss.
bool intersect_cube(const Vec3& o, const Vec3& d, double b, double& t0, double& t1) {
    t0 = 1e-4;
    t1 = std::numeric_limits<double>::infinity();
    const double os[3] = {o.x, o.y, o.z};
    const double ds[3] = {d.x, d.y, d.z};
    for (int a = 0; a < 3; ++a) {
        if (std::abs(ds[a]) < 1e-15) {
            if (os[a] < -b || os[a] > b) return false;
            continue;
        }
        double ta = (-b - os[a]) / ds[a];
        double tb = (b - os[a]) / ds[a];
        if (ta > tb) std::swap(ta, tb);
        t0 = std::max(t0, ta);
        t1 = std::min(t1, tb);
    }
    return t1 > t0;
}

struct Ray {
    Vec3 origin;
    Vec3 dir;        // camera z-depth parameterization: |dir.z_cam| == 1
    double dir_len;  // world length per unit t
};

Ray pixel_ray(const CameraView& cam, int px, int py) {
    Ray r;
    r.origin = cam.center();
    const Vec3 dc{(px + 0.5 - cam.cx) / cam.focal, (py + 0.5 - cam.cy) / cam.focal, 1.0};
    r.dir = cam.rotation.transposed() * dc;
    r.dir_len = r.dir.norm();
    return r;
}

}  // namespace

SceneParams::SceneParams(int g, int f, double b) : grid_size(g), feature_dim(f), bounds(b) {
    feature_grid.assign(grid_cells() * f, 0.0);
    decoder_weight.assign(static_cast<std::size_t>(4) * f, 0.0);
    decoder_bias.assign(4, 0.0);
}

std::vector<double> SceneParams::flatten() const {
    std::vector<double> v;
    v.reserve(param_count());
    v.insert(v.end(), feature_grid.begin(), feature_grid.end());
    v.insert(v.end(), decoder_weight.begin(), decoder_weight.end());
    v.insert(v.end(), decoder_bias.begin(), decoder_bias.end());
    return v;
}

void SceneParams::unflatten(const std::vector<double>& v) {
    if (v.size() != param_count())
        throw ContractViolation("SceneParams::unflatten: size mismatch");
    std::size_t off = 0;
    std::copy_n(v.begin(), feature_grid.size(), feature_grid.begin());
    off += feature_grid.size();
    std::copy_n(v.begin() + off, decoder_weight.size(), decoder_weight.begin());
    off += decoder_weight.size();
    std::copy_n(v.begin() + off, decoder_bias.size(), decoder_bias.begin());
}

void SceneParams::add_scaled(const std::vector<double>& grad, double scale) {
    if (grad.size() != param_count())
        throw ContractViolation("SceneParams::add_scaled: size mismatch");
    std::size_t i = 0;
    for (double& p : feature_grid) p += scale * grad[i++];
    for (double& p : decoder_weight) p += scale * grad[i++];
    for (double& p : decoder_bias) p += scale * grad[i++];
}

void SceneParams::check_invariants() const {
    if (grid_size < 2 || feature_dim < 1 || bounds <= 0.0)
        throw ContractViolation("SceneParams: degenerate dimensions");
    if (feature_grid.size() != grid_cells() * feature_dim ||
        decoder_weight.size() != static_cast<std::size_t>(4) * feature_dim ||
        decoder_bias.size() != 4)
        throw ContractViolation("SceneParams: buffer size mismatch");
    for (double v : feature_grid)
        if (!std::isfinite(v)) throw ContractViolation("SceneParams: non-finite grid");
    for (double v : decoder_weight)
        if (!std::isfinite(v)) throw ContractViolation("SceneParams: non-finite decoder");
}

RenderOutput render(const SceneParams& scene, const CameraView& cam,
                    const RenderConfig& cfg) {
    scene.check_invariants();
    cam.check_invariants();
    if (cam.width < 8 || cam.height < 8)
        throw ContractViolation("render: resolution must be >= 8");

    const int w = cam.width, h = cam.height, ns = cfg.samples_per_ray;
    RenderOutput out;
    out.image = FieldStack(w, h, 3);
    out.depth = FieldStack(w, h, 1);
    out.normal = FieldStack(w, h, 3);
    out.alpha = FieldStack(w, h, 1);
    out.depth.valid_mask = std::vector<std::uint8_t>(out.depth.pixel_count(), 0);

    const double cell = 2.0 * scene.bounds / (scene.grid_size - 1);
    std::vector<double> feat(scene.feature_dim), scratch(scene.feature_dim);
    double act[4];

    for (int py = 0; py < h; ++py)
        for (int px = 0; px < w; ++px) {
            const Ray ray = pixel_ray(cam, px, py);
            double t0, t1;
            if (!intersect_cube(ray.origin, ray.dir, scene.bounds, t0, t1)) continue;
            const double dt = (t1 - t0) / ns;
            const double dw = dt * ray.dir_len;

            double trans = 1.0, alpha_acc = 0.0, depth_acc = 0.0;
            double col[3] = {0, 0, 0};
            Vec3 n_acc;
            for (int i = 0; i < ns; ++i) {
                const double t = t0 + (i + 0.5) * dt;
                const Vec3 p = ray.origin + t * ray.dir;
                const TrilinearCtx tc = trilinear_setup(scene, p);
                sample_features(scene, tc, feat.data());
                decode_preact(scene, feat.data(), act);
                const double sig = softplus(act[0]);
                const double a = 1.0 - std::exp(-sig * dw);
                const double wi = trans * a;
                for (int c = 0; c < 3; ++c) col[c] += wi * sigmoid(act[c + 1]);
                alpha_acc += wi;
                depth_acc += wi * t;
                if (cfg.compute_normals && wi > 1e-6) {
                    Vec3 g{density_at(scene, p + Vec3{cell, 0, 0}, scratch) -
                               density_at(scene, p - Vec3{cell, 0, 0}, scratch),
                           density_at(scene, p + Vec3{0, cell, 0}, scratch) -
                               density_at(scene, p - Vec3{0, cell, 0}, scratch),
                           density_at(scene, p + Vec3{0, 0, cell}, scratch) -
                               density_at(scene, p - Vec3{0, 0, cell}, scratch)};
                    const double gn = g.norm();
                    if (gn > 1e-12) n_acc += wi * (g / -gn);
                }
                trans *= 1.0 - a;
                if (trans < 1e-7) break;
            }
            for (int c = 0; c < 3; ++c) out.image.at(px, py, c) = col[c];
            out.alpha.at(px, py, 0) = alpha_acc;
            out.depth.at(px, py, 0) = alpha_acc > 1e-12 ? depth_acc / alpha_acc : 0.0;
            if (alpha_acc > cfg.alpha_valid_threshold)
                (*out.depth.valid_mask)[static_cast<std::size_t>(py) * w + px] = 1;
            Vec3 n = n_acc;
            if (n.norm() > 1e-12) {
                n = n.normalized();
            } else {
                n = (ray.dir / -ray.dir_len);  // facing the viewer
            }
            out.normal.at(px, py, 0) = n.x;
            out.normal.at(px, py, 1) = n.y;
            out.normal.at(px, py, 2) = n.z;
        }
    return out;
}

std::vector<double> render_backward(const SceneParams& scene, const CameraView& cam,
                                    const FieldStack& image_grad,
                                    const RenderConfig& cfg) {
    scene.check_invariants();
    cam.check_invariants();
    if (image_grad.width != cam.width || image_grad.height != cam.height ||
        image_grad.channels != 3)
        throw ContractViolation("render_backward: image_grad shape mismatch");

    const int w = cam.width, h = cam.height, ns = cfg.samples_per_ray;
    const int fdim = scene.feature_dim;
    std::vector<double> grad(scene.param_count(), 0.0);
    double* g_grid = grad.data();
    double* g_dec_w = grad.data() + scene.feature_grid.size();
    double* g_dec_b = g_dec_w + scene.decoder_weight.size();

    // Per-sample forward state retained for the reverse sweep.
    struct Sample {
        TrilinearCtx tc;
        std::vector<double> feat;
        double act[4];
        double a;      // per-sample opacity
        double trans;  // transmittance before this sample
        double color[3];
    };
    std::vector<Sample> samples;
    samples.reserve(ns);
    std::vector<double> feat(fdim);

    for (int py = 0; py < h; ++py)
        for (int px = 0; px < w; ++px) {
            const double gp[3] = {image_grad.at(px, py, 0), image_grad.at(px, py, 1),
                                  image_grad.at(px, py, 2)};
            if (gp[0] == 0.0 && gp[1] == 0.0 && gp[2] == 0.0) continue;

            const Ray ray = pixel_ray(cam, px, py);
            double t0, t1;
            if (!intersect_cube(ray.origin, ray.dir, scene.bounds, t0, t1)) continue;
            const double dt = (t1 - t0) / ns;
            const double dw = dt * ray.dir_len;

            samples.clear();
            double trans = 1.0;
            for (int i = 0; i < ns; ++i) {
                const double t = t0 + (i + 0.5) * dt;
                const Vec3 p = ray.origin + t * ray.dir;
                Sample s;
                s.tc = trilinear_setup(scene, p);
                s.feat.resize(fdim);
                sample_features(scene, s.tc, s.feat.data());
                decode_preact(scene, s.feat.data(), s.act);
                const double sig = softplus(s.act[0]);
                s.a = 1.0 - std::exp(-sig * dw);
                s.trans = trans;
                for (int c = 0; c < 3; ++c) s.color[c] = sigmoid(s.act[c + 1]);
                trans *= 1.0 - s.a;
                samples.push_back(std::move(s));
                if (trans < 1e-7) break;
            }

            // Reverse sweep. suffix = sum over later samples of w_j * (c_j . gp),
            // so d/d a_i of the pixel value is T_i (c_i . gp) - suffix / (1 - a_i).
            double suffix = 0.0;
            for (int i = static_cast<int>(samples.size()) - 1; i >= 0; --i) {
                const Sample& s = samples[i];
                const double wi = s.trans * s.a;
                const double cg = s.color[0] * gp[0] + s.color[1] * gp[1] + s.color[2] * gp[2];

                double g_act[4];
                const double one_minus_a = 1.0 - s.a;
                const double g_a = s.trans * cg - (one_minus_a > 1e-300 ? suffix / one_minus_a : 0.0);
                const double g_sigma = g_a * dw * one_minus_a;
                g_act[0] = g_sigma * sigmoid(s.act[0]);  // softplus'
                for (int c = 0; c < 3; ++c)
                    g_act[c + 1] = wi * gp[c] * s.color[c] * (1.0 - s.color[c]);

                // Decoder and feature gradients. `feat` holds the feature
                // gradient for this sample.
                std::fill(feat.begin(), feat.end(), 0.0);
                for (int k = 0; k < 4; ++k) {
                    const double ga = g_act[k];
                    if (ga == 0.0) continue;
                    g_dec_b[k] += ga;
                    double* wrow_g = &g_dec_w[static_cast<std::size_t>(k) * fdim];
                    const double* wrow = &scene.decoder_weight[static_cast<std::size_t>(k) * fdim];
                    for (int j = 0; j < fdim; ++j) {
                        wrow_g[j] += ga * s.feat[j];
                        feat[j] += ga * wrow[j];
                    }
                }
                // Scatter feature gradient into the 8 grid corners.
                for (int k = 0; k < 8; ++k) {
                    double* cellg = &g_grid[s.tc.cell[k] * fdim];
                    for (int j = 0; j < fdim; ++j) cellg[j] += s.tc.w[k] * feat[j];
                }

                suffix += wi * cg;
            }
        }
    return grad;
}

ShapeSpec parse_shape_spec(const std::string& name) {
    if (name == "sphere") return ShapeSpec::Sphere;
    if (name == "textured-sphere") return ShapeSpec::TexturedSphere;
    if (name == "two-blob") return ShapeSpec::TwoBlob;
    if (name == "checker-cube") return ShapeSpec::CheckerCube;
    throw ConfigError("unknown shape spec: " + name);
}

SceneParams init_synthetic(ShapeSpec spec, std::uint64_t seed, int grid_size) {
    SceneParams s(grid_size, 4, 1.0);
    // Identity decoder: feature 0 is the density logit, 1..3 the color logits.
    for (int k = 0; k < 4; ++k) s.decoder_weight[static_cast<std::size_t>(k) * 4 + k] = 1.0;

    Rng rng = Rng::substream(seed, "scene-init");
    const int g = grid_size;
    const double cell = 2.0 * s.bounds / (g - 1);
    const double edge = 4.0 / cell;  // logit slope across one cell

    for (int z = 0; z < g; ++z)
        for (int y = 0; y < g; ++y)
            for (int x = 0; x < g; ++x) {
                const Vec3 p{-s.bounds + x * cell, -s.bounds + y * cell, -s.bounds + z * cell};
                double density_logit = -10.0;
                double col[3] = {0.0, 0.0, 0.0};  // logits; sigmoid(0) = 0.5
                switch (spec) {
                    case ShapeSpec::Sphere:
                    case ShapeSpec::TexturedSphere: {
                        const double r = 0.6;
                        density_logit = std::clamp(edge * (r - p.norm()), -10.0, 10.0);
                        col[0] = 0.8;
                        col[1] = 0.2;
                        col[2] = -0.4;
                        break;
                    }
                    case ShapeSpec::TwoBlob: {
                        const double d1 = (p - Vec3{-0.35, 0, 0}).norm();
                        const double d2 = (p - Vec3{0.35, 0, 0}).norm();
                        density_logit =
                            std::clamp(edge * (0.32 - std::min(d1, d2)), -10.0, 10.0);
                        col[0] = d1 < d2 ? 1.2 : -1.2;
                        col[2] = d1 < d2 ? -1.2 : 1.2;
                        break;
                    }
                    case ShapeSpec::CheckerCube: {
                        const bool inside = std::abs(p.x) < 0.6 && std::abs(p.y) < 0.6 &&
                                            std::abs(p.z) < 0.6;
                        density_logit = inside ? 10.0 : -10.0;
                        const int parity = (x / 3 + y / 3 + z / 3) & 1;
                        col[0] = col[1] = col[2] = parity ? 1.5 : -1.5;
                        break;
                    }
                }
                s.grid_at(x, y, z, 0) = density_logit;
                for (int c = 0; c < 3; ++c) s.grid_at(x, y, z, c + 1) = col[c];
            }

    // Per-cell color noise creates the "detail" the refinement must preserve.
    // The density channel is seed-independent by construction.
    if (spec == ShapeSpec::TexturedSphere) {
        for (int z = 0; z < g; ++z)
            for (int y = 0; y < g; ++y)
                for (int x = 0; x < g; ++x)
                    for (int c = 0; c < 3; ++c)
                        s.grid_at(x, y, z, c + 1) += 0.8 * rng.normal();
    }
    return s;
}

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};

void write_u32f(std::FILE* f, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    if (std::fwrite(b, 1, 4, f) != 4) throw IoError("scene: short write");
}

std::uint32_t read_u32f(std::FILE* f) {
    unsigned char b[4];
    if (std::fread(b, 1, 4, f) != 4) throw IoError("scene: short read");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) |
           (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_f32_block(std::FILE* f, const std::vector<double>& v) {
    std::vector<float> buf(v.begin(), v.end());
    if (!buf.empty() && std::fwrite(buf.data(), sizeof(float), buf.size(), f) != buf.size())
        throw IoError("scene: short write");
}

void read_f32_block(std::FILE* f, std::vector<double>& v, std::size_t n) {
    std::vector<float> buf(n);
    if (n > 0 && std::fread(buf.data(), sizeof(float), n, f) != n)
        throw IoError("scene: truncated payload");
    v.assign(buf.begin(), buf.end());
}

}  // namespace

void save_scene(const SceneParams& scene, const std::string& path) {
    scene.check_invariants();
    std::unique_ptr<std::FILE, FileCloser> fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw IoError("scene: cannot open " + path + " for writing");
    if (std::fwrite("SCNE", 1, 4, fp.get()) != 4) throw IoError("scene: short write");
    write_u32f(fp.get(), static_cast<std::uint32_t>(scene.grid_size));
    write_u32f(fp.get(), static_cast<std::uint32_t>(scene.feature_dim));
    float b = static_cast<float>(scene.bounds);
    if (std::fwrite(&b, sizeof(float), 1, fp.get()) != 1) throw IoError("scene: short write");
    write_f32_block(fp.get(), scene.feature_grid);
    write_f32_block(fp.get(), scene.decoder_weight);
    write_f32_block(fp.get(), scene.decoder_bias);
}

SceneParams load_scene(const std::string& path) {
    std::unique_ptr<std::FILE, FileCloser> fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw IoError("scene: cannot open " + path);
    char magic[4];
    if (std::fread(magic, 1, 4, fp.get()) != 4 || std::memcmp(magic, "SCNE", 4) != 0)
        throw IoError("scene: bad magic in " + path);
    const int g = static_cast<int>(read_u32f(fp.get()));
    const int f = static_cast<int>(read_u32f(fp.get()));
    float b;
    if (std::fread(&b, sizeof(float), 1, fp.get()) != 1) throw IoError("scene: short read");
    SceneParams s(g, f, b);
    read_f32_block(fp.get(), s.feature_grid, s.grid_cells() * f);
    read_f32_block(fp.get(), s.decoder_weight, static_cast<std::size_t>(4) * f);
    read_f32_block(fp.get(), s.decoder_bias, 4);
    s.check_invariants();
    return s;
}

}  // namespace mvsd
