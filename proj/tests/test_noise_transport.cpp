// Copyright (c) 2026 mvsd authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "mvsd/noise_transport.hpp"

using namespace mvsd;

namespace {

double std_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// Kolmogorov-Smirnov distance against the standard normal.
double ks_statistic(std::vector<double> samples) {
    std::sort(samples.begin(), samples.end());
    const double n = static_cast<double>(samples.size());
    double d = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const double cdf = std_normal_cdf(samples[i]);
        d = std::max(d, std::abs((i + 1) / n - cdf));
        d = std::max(d, std::abs(i / n - cdf));
    }
    return d;
}

double correlation(const std::vector<double>& a, const std::vector<double>& b) {
    const double n = static_cast<double>(a.size());
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    double cab = 0.0, caa = 0.0, cbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        cab += (a[i] - ma) * (b[i] - mb);
        caa += (a[i] - ma) * (a[i] - ma);
        cbb += (b[i] - mb) * (b[i] - mb);
    }
    return cab / std::sqrt(caa * cbb);
}

}  // namespace

TEST_CASE("single-view anchor passes a KS test against the standard normal") {
    const CameraView cam = CameraView::orbit(0, 2.8, 0.0, 0.0, 150.0, 100, 100);
    const FieldStack depth(100, 100, 1, 2.5);
    const AnchorNoiseSet set = init_anchor_chain({cam}, {depth}, 3, 1);
    REQUIRE(set.views.size() == 1);
    const double d = ks_statistic(set.views[0].anchor.data);
    // alpha = 0.01 critical value for n = 1e4.
    CHECK(d < 1.63 / std::sqrt(1e4));
}

TEST_CASE("identical views share the anchor exactly") {
    const CameraView cam = CameraView::orbit(0, 2.8, 0.2, 0.1, 24.0, 16, 16);
    const FieldStack depth(16, 16, 1, 2.5);
    const AnchorNoiseSet set = init_anchor_chain({cam, cam}, {depth, depth}, 9, 3);
    REQUIRE(set.views.size() == 2);
    CHECK(set.views[1].anchor.data == set.views[0].anchor.data);
}

TEST_CASE("opposed views get statistically independent anchors") {
    // The first view's surface sheet lies behind the opposed camera, so the
    // warp is fully void and the second anchor is entirely fresh noise.
    const CameraView a = CameraView::orbit(0, 1.0, 0.0, 0.0, 150.0, 100, 100);
    const CameraView b = CameraView::orbit(1, 1.0, M_PI, 0.0, 150.0, 100, 100);
    const FieldStack depth(100, 100, 1, 3.0);
    const AnchorNoiseSet set = init_anchor_chain({a, b}, {depth, depth}, 17, 1);
    CHECK(std::abs(correlation(set.views[0].anchor.data, set.views[1].anchor.data)) < 0.05);
    CHECK(ks_statistic(set.views[1].anchor.data) < 1.63 / std::sqrt(1e4));
}

TEST_CASE("zero-sigma resampling is the identity") {
    Rng rng(5);
    const FieldStack anchor = gaussian_field(16, 16, 3, rng);
    const FieldStack out = resample(anchor, 0.0, 123);
    CHECK(out.data == anchor.data);
}

TEST_CASE("unit-sigma resampling decorrelates from the anchor") {
    Rng rng(6);
    const FieldStack anchor = gaussian_field(100, 100, 1, rng);
    const FieldStack out = resample(anchor, 1.0, 777);
    CHECK(std::abs(correlation(anchor.data, out.data)) < 0.05);
}

TEST_CASE("resampling preserves unit marginal variance") {
    Rng rng(7);
    const FieldStack anchor = gaussian_field(320, 320, 1, rng);  // > 1e5 draws
    for (double sigma : {0.1, 0.5, 0.9}) {
        const FieldStack out = resample(anchor, sigma, 99);
        double var = 0.0, mean = 0.0;
        for (double v : out.data) mean += v;
        mean /= static_cast<double>(out.data.size());
        for (double v : out.data) var += (v - mean) * (v - mean);
        var /= static_cast<double>(out.data.size());
        CHECK(var == doctest::Approx(1.0).epsilon(0.02));
    }
}

TEST_CASE("sigma outside the unit interval is rejected") {
    Rng rng(8);
    const FieldStack anchor = gaussian_field(4, 4, 1, rng);
    CHECK_THROWS_AS(resample(anchor, -0.1, 1), ConfigError);
    CHECK_THROWS_AS(resample(anchor, 1.2, 1), ConfigError);
}

TEST_CASE("anchor set directory round trip") {
    const CameraView cam = CameraView::orbit(0, 2.8, 0.0, 0.0, 24.0, 16, 16);
    const FieldStack depth(16, 16, 1, 2.5);
    AnchorNoiseSet set = init_anchor_chain({cam, cam}, {depth, depth}, 31, 3);
    set.views[0].retained_score = 0.75;
    set.views[0].has_retained = true;
    set.views[0].target_image = FieldStack(16, 16, 3, 0.5);

    const std::string dir =
        (std::filesystem::temp_directory_path() / "anchor_rt").string();
    save_anchor_set(set, dir);
    const AnchorNoiseSet loaded = load_anchor_set(dir);
    REQUIRE(loaded.views.size() == 2);
    for (std::size_t i = 0; i < set.views[0].anchor.data.size(); ++i)
        CHECK(loaded.views[0].anchor.data[i] ==
              doctest::Approx(set.views[0].anchor.data[i]).epsilon(1e-6));
    CHECK(loaded.views[0].retained_score == doctest::Approx(0.75));
    std::filesystem::remove_all(dir);
}
