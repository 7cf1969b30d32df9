// Copyright (c) 2026 mvsd authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mvsd/camera.hpp"
#include "mvsd/field_stack.hpp"

namespace mvsd {

// Toy differentiable 3D representation: dense feature grid plus a linear
// decoder to (density logit, 3 color logits). Density decodes through
// softplus, color through sigmoid.
struct SceneParams {
    int grid_size = 24;    // G, cells per axis
    int feature_dim = 4;   // F
    double bounds = 1.0;   // world cube is [-bounds, bounds]^3
    std::vector<double> feature_grid;    // G*G*G*F, ((z*G + y)*G + x)*F + f
    std::vector<double> decoder_weight;  // 4*F, row-major (output-major)
    std::vector<double> decoder_bias;    // 4

    SceneParams() = default;
    SceneParams(int g, int f, double b);

    std::size_t grid_cells() const {
        return static_cast<std::size_t>(grid_size) * grid_size * grid_size;
    }
    std::size_t param_count() const {
        return feature_grid.size() + decoder_weight.size() + decoder_bias.size();
    }

    double& grid_at(int x, int y, int z, int f) {
        return feature_grid[((static_cast<std::size_t>(z) * grid_size + y) * grid_size + x) *
                                feature_dim + f];
    }
    double grid_at(int x, int y, int z, int f) const {
        return feature_grid[((static_cast<std::size_t>(z) * grid_size + y) * grid_size + x) *
                                feature_dim + f];
    }

    // Flat parameter vector order: feature_grid, decoder_weight, decoder_bias.
    std::vector<double> flatten() const;
    void unflatten(const std::vector<double>& v);
    void add_scaled(const std::vector<double>& grad, double scale);

    void check_invariants() const;
};

struct RenderOutput {
    FieldStack image;   // 3ch, [0,1]
    FieldStack depth;   // 1ch, expected termination (camera-space z); mask where alpha low
    FieldStack normal;  // 3ch, unit vectors
    FieldStack alpha;   // 1ch, accumulated opacity
};

struct RenderConfig {
    int samples_per_ray = 64;
    bool compute_normals = true;
    double alpha_valid_threshold = 1e-3;  // depth mask cutoff
};

// Emission-absorption ray marching with a fixed number of samples per ray.
// Frustum misses yield alpha-zero pixels, not errors.
RenderOutput render(const SceneParams& scene, const CameraView& cam,
                    const RenderConfig& cfg = {});

// Exact reverse-mode gradient of the rendered image contracted with
// image_grad (3 channels), with respect to every SceneParams entry.
std::vector<double> render_backward(const SceneParams& scene, const CameraView& cam,
                                    const FieldStack& image_grad,
                                    const RenderConfig& cfg = {});

// Deterministic synthetic scenes used as fixtures. Textured variants carry
// per-cell color noise so the refinement stage has detail to preserve.
enum class ShapeSpec { Sphere, TexturedSphere, TwoBlob, CheckerCube };
ShapeSpec parse_shape_spec(const std::string& name);
SceneParams init_synthetic(ShapeSpec spec, std::uint64_t seed, int grid_size = 24);

// Container format: magic "SCNE", grid dims, decoder dims, float32 payload.
void save_scene(const SceneParams& scene, const std::string& path);
SceneParams load_scene(const std::string& path);

}  // namespace mvsd
