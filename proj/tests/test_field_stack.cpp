// Copyright (c) 2026 mvsd authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "mvsd/field_stack.hpp"
#include "mvsd/rng.hpp"

using namespace mvsd;

namespace {

std::string temp_path(const char* name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("field stack indexing is row-major channel-interleaved") {
    FieldStack f(3, 2, 2);
    f.at(1, 0, 1) = 5.0;
    CHECK(f.data[(0 * 3 + 1) * 2 + 1] == 5.0);
    CHECK(f.pixel_count() == 6);
}

TEST_CASE("invariant checks reject malformed stacks") {
    FieldStack f(2, 2, 1);
    f.data.pop_back();
    CHECK_THROWS_AS(f.check_invariants(), ContractViolation);
    FieldStack g(2, 2, 1);
    g.valid_mask = std::vector<std::uint8_t>(3, 1);
    CHECK_THROWS_AS(g.check_invariants(), ContractViolation);
}

TEST_CASE("mse equals direct scalar recomputation") {
    Rng rng(17);
    FieldStack a(5, 4, 3), b(5, 4, 3);
    for (double& v : a.data) v = rng.normal();
    for (double& v : b.data) v = rng.normal();
    double acc = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        acc += d * d;
    }
    acc /= static_cast<double>(a.data.size());
    CHECK(mse(a, b) == doctest::Approx(acc).epsilon(1e-12));
    CHECK(mse(a, a) == 0.0);
    // Constant offset c per pixel -> c^2.
    FieldStack c = a;
    for (double& v : c.data) v += 0.25;
    CHECK(mse(a, c) == doctest::Approx(0.0625).epsilon(1e-12));
}

TEST_CASE("binary container round trip preserves shape, data and mask") {
    Rng rng(3);
    FieldStack f(7, 5, 2);
    for (double& v : f.data) v = rng.uniform(-2.0, 2.0);
    const std::string path = temp_path("fs_roundtrip.fstk");

    SUBCASE("without mask") {
        save_field_stack(f, path);
        const FieldStack g = load_field_stack(path);
        REQUIRE(g.same_shape(f));
        CHECK_FALSE(g.valid_mask.has_value());
        for (std::size_t i = 0; i < f.data.size(); ++i)
            CHECK(g.data[i] == doctest::Approx(f.data[i]).epsilon(1e-6));
    }
    SUBCASE("with mask") {
        f.valid_mask = std::vector<std::uint8_t>(f.pixel_count(), 1);
        (*f.valid_mask)[4] = 0;
        save_field_stack(f, path);
        const FieldStack g = load_field_stack(path);
        REQUIRE(g.valid_mask.has_value());
        CHECK(*g.valid_mask == *f.valid_mask);
    }
    std::remove(path.c_str());
}

TEST_CASE("png round trip is exact on 8-bit quantized values") {
    FieldStack f(4, 3, 3);
    Rng rng(9);
    for (double& v : f.data) v = std::floor(rng.uniform() * 255.0) / 255.0;
    const std::string path = temp_path("fs_roundtrip.png");
    save_png(f, path);
    const FieldStack g = load_png(path);
    REQUIRE(g.same_shape(f));
    for (std::size_t i = 0; i < f.data.size(); ++i)
        CHECK(g.data[i] == doctest::Approx(f.data[i]).epsilon(1e-9));
    std::remove(path.c_str());
}
