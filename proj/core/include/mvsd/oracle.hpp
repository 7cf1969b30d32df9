// Copyright (c) 2026 mvsd authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>

#include "mvsd/errors.hpp"
#include "mvsd/field_stack.hpp"

namespace mvsd {

// Cumulative signal coefficient alpha(t) over t in [0,1] plus the
// distillation weight w(t). Cosine schedule, clamped away from 0 and 1.
struct NoiseSchedule {
    double clamp_lo = 1e-4;
    double clamp_hi = 1.0 - 1e-4;

    double alpha(double t) const {
        if (t < 0.0 || t > 1.0) throw ContractViolation("NoiseSchedule: t outside [0,1]");
        const double c = std::cos(0.5 * M_PI * t);
        const double a = c * c;
        return a < clamp_lo ? clamp_lo : (a > clamp_hi ? clamp_hi : a);
    }
    double weight(double t) const { return 1.0 - alpha(t); }
};

// Known Gaussian per-view image distribution N(mean, stddev^2 I). The
// conditioning signal selects the mean; the closed-form posterior makes the
// epsilon-prediction exactly checkable.
struct GaussianImageModel {
    FieldStack mean;
    double stddev = 0.0;

    void check_invariants() const {
        if (stddev < 0.0) throw ContractViolation("GaussianImageModel: stddev < 0");
        for (double v : mean.data)
            if (!std::isfinite(v)) throw ContractViolation("GaussianImageModel: non-finite mean");
    }
};

// Fixed invertible-per-pixel affine map between image and latent space.
// Identity by default; the pooled option downsamples 2x on encode and
// upsamples nearest on decode.
class LatentMap {
public:
    enum class Kind { Identity, AvgPool2 };

    explicit LatentMap(Kind kind = Kind::Identity) : kind_(kind) {}

    Kind kind() const { return kind_; }
    int downsample_factor() const { return kind_ == Kind::Identity ? 1 : 2; }

    FieldStack encode(const FieldStack& image) const;
    FieldStack decode(const FieldStack& latent) const;
    // Adjoint of encode: maps a latent-space gradient to image space.
    FieldStack encode_adjoint(const FieldStack& latent_grad) const;

private:
    Kind kind_;
};

// sqrt(alpha_t) z + sqrt(1 - alpha_t) eps.
FieldStack add_noise(const FieldStack& z, const FieldStack& eps, double t,
                     const NoiseSchedule& sched = {});

// Closed-form optimal epsilon-prediction for the Gaussian image model:
// eps_hat = (z_t - sqrt(a) E[z0|z_t]) / sqrt(1-a), with
// E[z0|z_t] = mu + sqrt(a) tau^2 / (a tau^2 + 1 - a) * (z_t - sqrt(a) mu).
FieldStack oracle_epsilon(const FieldStack& z_t, double t, const GaussianImageModel& model,
                          const NoiseSchedule& sched = {});

// One-step x0 prediction: (z_t - sqrt(1-a) eps_hat) / sqrt(a). Latent space;
// decode through a LatentMap to reach image space.
FieldStack predict_x0(const FieldStack& z_t, const FieldStack& eps_hat, double t,
                      const NoiseSchedule& sched = {});

}  // namespace mvsd
