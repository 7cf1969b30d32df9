// Copyright (c) 2026 mvsd authors
// SPDX-License-Identifier: Apache-2.0

#include "mvsd/oracle.hpp"

namespace mvsd {

FieldStack LatentMap::encode(const FieldStack& image) const {
    if (kind_ == Kind::Identity) return image;
    if (image.width % 2 != 0 || image.height % 2 != 0)
        throw ContractViolation("LatentMap: odd resolution cannot be pooled");
    FieldStack out(image.width / 2, image.height / 2, image.channels);
    for (int y = 0; y < out.height; ++y)
        for (int x = 0; x < out.width; ++x)
            for (int c = 0; c < out.channels; ++c)
                out.at(x, y, c) = 0.25 * (image.at(2 * x, 2 * y, c) +
                                          image.at(2 * x + 1, 2 * y, c) +
                                          image.at(2 * x, 2 * y + 1, c) +
                                          image.at(2 * x + 1, 2 * y + 1, c));
    return out;
}

FieldStack LatentMap::decode(const FieldStack& latent) const {
    if (kind_ == Kind::Identity) return latent;
    FieldStack out(latent.width * 2, latent.height * 2, latent.channels);
    for (int y = 0; y < out.height; ++y)
        for (int x = 0; x < out.width; ++x)
            for (int c = 0; c < out.channels; ++c)
                out.at(x, y, c) = latent.at(x / 2, y / 2, c);
    return out;
}

FieldStack LatentMap::encode_adjoint(const FieldStack& latent_grad) const {
    if (kind_ == Kind::Identity) return latent_grad;
    FieldStack out(latent_grad.width * 2, latent_grad.height * 2, latent_grad.channels);
    for (int y = 0; y < out.height; ++y)
        for (int x = 0; x < out.width; ++x)
            for (int c = 0; c < out.channels; ++c)
                out.at(x, y, c) = 0.25 * latent_grad.at(x / 2, y / 2, c);
    return out;
}

FieldStack add_noise(const FieldStack& z, const FieldStack& eps, double t,
                     const NoiseSchedule& sched) {
    if (!z.same_shape(eps)) throw ContractViolation("add_noise: shape mismatch");
    const double a = sched.alpha(t);
    const double sa = std::sqrt(a), sb = std::sqrt(1.0 - a);
    FieldStack out = z;
    for (std::size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = sa * z.data[i] + sb * eps.data[i];
    return out;
}

FieldStack oracle_epsilon(const FieldStack& z_t, double t, const GaussianImageModel& model,
                          const NoiseSchedule& sched) {
    model.check_invariants();
    if (!z_t.same_shape(model.mean)) throw ContractViolation("oracle_epsilon: shape mismatch");
    const double a = sched.alpha(t);
    if (1.0 - a < 1e-12)
        throw DegenerateTimestepError("oracle_epsilon: 1 - alpha_t underflow");
    const double sa = std::sqrt(a), sb = std::sqrt(1.0 - a);
    const double tau2 = model.stddev * model.stddev;
    const double k = sa * tau2 / (a * tau2 + (1.0 - a));
    FieldStack out = z_t;
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        const double mu = model.mean.data[i];
        const double ez0 = mu + k * (z_t.data[i] - sa * mu);
        out.data[i] = (z_t.data[i] - sa * ez0) / sb;
    }
    return out;
}

FieldStack predict_x0(const FieldStack& z_t, const FieldStack& eps_hat, double t,
                      const NoiseSchedule& sched) {
    if (!z_t.same_shape(eps_hat)) throw ContractViolation("predict_x0: shape mismatch");
    const double a = sched.alpha(t);
    if (a < 1e-12) throw DegenerateTimestepError("predict_x0: alpha_t underflow");
    const double sa = std::sqrt(a), sb = std::sqrt(1.0 - a);
    FieldStack out = z_t;
    for (std::size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = (z_t.data[i] - sb * eps_hat.data[i]) / sa;
    return out;
}

}  // namespace mvsd
