// Copyright (c) 2026 mvsd authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>

#include "mvsd/oracle.hpp"
#include "mvsd/rng.hpp"

using namespace mvsd;

namespace {

FieldStack random_field(int w, int h, int c, std::uint64_t seed, double scale = 1.0) {
    Rng rng(seed);
    FieldStack f(w, h, c);
    for (double& v : f.data) v = scale * rng.normal();
    return f;
}

}  // namespace

TEST_CASE("schedule is monotone with the required endpoints") {
    const NoiseSchedule sched;
    CHECK(sched.alpha(0.0) >= 0.999);
    CHECK(sched.alpha(1.0) <= 0.01);
    double prev = sched.alpha(0.0);
    for (int i = 1; i <= 100; ++i) {
        const double a = sched.alpha(i / 100.0);
        CHECK(a <= prev + 1e-12);
        prev = a;
    }
    for (double t : {0.1, 0.5, 0.9}) CHECK(sched.weight(t) > 0.0);
    CHECK_THROWS_AS(sched.alpha(1.5), ContractViolation);
}

TEST_CASE("forward noising boundaries") {
    const NoiseSchedule sched;
    const FieldStack z = random_field(6, 6, 3, 1);
    const FieldStack eps = random_field(6, 6, 3, 2);

    // t=0: alpha clamps at 1-1e-4, so output is z up to a sqrt(1e-4)-sized
    // noise admixture.
    const FieldStack at0 = add_noise(z, eps, 0.0, sched);
    for (std::size_t i = 0; i < z.data.size(); ++i)
        CHECK(std::abs(at0.data[i] - z.data[i]) <
              0.011 * (1.0 + std::abs(z.data[i]) + std::abs(eps.data[i])));

    const FieldStack zero_eps(6, 6, 3, 0.0);
    const double t = 0.37;
    const FieldStack scaled = add_noise(z, zero_eps, t, sched);
    const double sa = std::sqrt(sched.alpha(t));
    for (std::size_t i = 0; i < z.data.size(); ++i)
        CHECK(scaled.data[i] == doctest::Approx(sa * z.data[i]).epsilon(1e-12));
}

TEST_CASE("noise injection has variance 1 - alpha (Monte Carlo)") {
    const NoiseSchedule sched;
    const double t = 0.6;
    const int n = 320;  // 320*320 > 1e5 pixels
    const FieldStack z = random_field(n, n, 1, 5);
    const FieldStack eps = random_field(n, n, 1, 6);
    const FieldStack z_t = add_noise(z, eps, t, sched);
    const double sa = std::sqrt(sched.alpha(t));
    double var = 0.0;
    for (std::size_t i = 0; i < z.data.size(); ++i) {
        const double d = z_t.data[i] - sa * z.data[i];
        var += d * d;
    }
    var /= static_cast<double>(z.data.size());
    CHECK(var == doctest::Approx(1.0 - sched.alpha(t)).epsilon(0.02));
}

TEST_CASE("zero-width model recovers the injected noise exactly") {
    const NoiseSchedule sched;
    GaussianImageModel model;
    model.mean = random_field(8, 8, 3, 11);
    model.stddev = 0.0;
    const FieldStack eps = random_field(8, 8, 3, 12);
    const double t = 0.45;
    const FieldStack z_t = add_noise(model.mean, eps, t, sched);
    const FieldStack eps_hat = oracle_epsilon(z_t, t, model, sched);
    for (std::size_t i = 0; i < eps.data.size(); ++i)
        CHECK(eps_hat.data[i] == doctest::Approx(eps.data[i]).epsilon(1e-10));
}

TEST_CASE("zero-width model off-mean residual follows the closed form") {
    const NoiseSchedule sched;
    GaussianImageModel model;
    model.mean = random_field(8, 8, 3, 21);
    model.stddev = 0.0;
    const FieldStack z = random_field(8, 8, 3, 22);
    const FieldStack eps = random_field(8, 8, 3, 23);
    for (double t : {0.2, 0.5, 0.8}) {
        const FieldStack z_t = add_noise(z, eps, t, sched);
        const FieldStack eps_hat = oracle_epsilon(z_t, t, model, sched);
        const double a = sched.alpha(t);
        const double k = std::sqrt(a) / std::sqrt(1.0 - a);
        for (std::size_t i = 0; i < z.data.size(); ++i)
            CHECK(eps_hat.data[i] - eps.data[i] ==
                  doctest::Approx(k * (z.data[i] - model.mean.data[i])).epsilon(1e-9));
    }
}

TEST_CASE("uninformative model predicts zero noise") {
    const NoiseSchedule sched;
    GaussianImageModel model;
    model.mean = random_field(8, 8, 3, 31);
    model.stddev = 1e6;
    const FieldStack z_t = random_field(8, 8, 3, 32);
    const FieldStack eps_hat = oracle_epsilon(z_t, 0.5, model, sched);
    for (double v : eps_hat.data) CHECK(std::abs(v) < 1e-6);
}

TEST_CASE("degenerate timestep is rejected") {
    NoiseSchedule sched;
    sched.clamp_hi = 1.0;  // allow alpha to reach 1 exactly
    GaussianImageModel model;
    model.mean = FieldStack(4, 4, 1, 0.0);
    model.stddev = 0.3;
    const FieldStack z_t(4, 4, 1, 0.5);
    CHECK_THROWS_AS(oracle_epsilon(z_t, 0.0, model, sched), DegenerateTimestepError);
}

TEST_CASE("one-step prediction inverts forward noising") {
    const NoiseSchedule sched;
    const FieldStack z = random_field(8, 8, 3, 41);
    const FieldStack eps = random_field(8, 8, 3, 42);
    const double t = 0.62;
    const FieldStack z_t = add_noise(z, eps, t, sched);
    const FieldStack x0 = predict_x0(z_t, eps, t, sched);
    for (std::size_t i = 0; i < z.data.size(); ++i)
        CHECK(x0.data[i] == doctest::Approx(z.data[i]).epsilon(1e-9));
}

TEST_CASE("zero-width model pulls the prediction toward the mean as t grows") {
    const NoiseSchedule sched;
    GaussianImageModel model;
    model.mean = FieldStack(4, 4, 1, 2.0);
    model.stddev = 0.0;
    const FieldStack z(4, 4, 1, -1.0);
    const FieldStack eps = random_field(4, 4, 1, 51, 0.3);
    double prev_dist = 1e18;
    for (double t : {0.1, 0.5, 0.9}) {
        const FieldStack z_t = add_noise(z, eps, t, sched);
        const FieldStack x0 =
            predict_x0(z_t, oracle_epsilon(z_t, t, model, sched), t, sched);
        // With a delta model the one-step prediction is exactly the mean.
        double dist = 0.0;
        for (double v : x0.data) dist += std::abs(v - 2.0);
        CHECK(dist < 1e-8);
        CHECK(dist <= prev_dist + 1e-12);
        prev_dist = dist;
    }
}

TEST_CASE("pooled latent map satisfies the adjoint identity") {
    const LatentMap pool(LatentMap::Kind::AvgPool2);
    const FieldStack x = random_field(8, 8, 3, 61);
    const FieldStack y = random_field(4, 4, 3, 62);
    const FieldStack ex = pool.encode(x);
    const FieldStack aty = pool.encode_adjoint(y);
    // <encode(x), y> == <x, adjoint(y)>.
    double lhs = 0.0, rhs = 0.0;
    for (std::size_t i = 0; i < ex.data.size(); ++i) lhs += ex.data[i] * y.data[i];
    for (std::size_t i = 0; i < x.data.size(); ++i) rhs += x.data[i] * aty.data[i];
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-10));

    // Identity map: decode(encode(x)) == x.
    const LatentMap ident;
    const FieldStack rt = ident.decode(ident.encode(x));
    for (std::size_t i = 0; i < x.data.size(); ++i) CHECK(rt.data[i] == x.data[i]);
}
