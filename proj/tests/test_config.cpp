// Copyright (c) 2026 mvsd authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include "mvsd/config.hpp"
#include "mvsd/errors.hpp"

using namespace mvsd;

TEST_CASE("sectioned key=value parsing with comments") {
    ConfigMap cfg = ConfigMap::parse_string(
        "top = 1\n"
        "[refine]\n"
        "steps = 25  # trailing comment\n"
        "sigma = 0.25\n"
        "retention = false\n"
        "\n"
        "[scene]\n"
        "shape = two-blob\n");
    CHECK(cfg.get_int("top", 0) == 1);
    CHECK(cfg.get_int("refine.steps", 0) == 25);
    CHECK(cfg.get_double("refine.sigma", 0.0) == doctest::Approx(0.25));
    CHECK(cfg.get_bool("refine.retention", true) == false);
    CHECK(cfg.get_string("scene.shape", "") == "two-blob");
    CHECK(cfg.get_string("scene.missing", "fallback") == "fallback");
    cfg.check_all_consumed();
}

TEST_CASE("unknown keys are rejected loudly") {
    ConfigMap cfg = ConfigMap::parse_string("[refine]\nstepz = 10\n");
    refine_config_from(cfg);
    CHECK_THROWS_AS(cfg.check_all_consumed(), ConfigError);
}

TEST_CASE("malformed input is rejected") {
    CHECK_THROWS_AS(ConfigMap::parse_string("[refine\nsteps = 1\n"), ConfigError);
    CHECK_THROWS_AS(ConfigMap::parse_string("just a line\n"), ConfigError);
    CHECK_THROWS_AS(ConfigMap::parse_string("= 3\n"), ConfigError);
    CHECK_THROWS_AS(ConfigMap::parse_string("a = 1\na = 2\n"), ConfigError);
}

TEST_CASE("typed getters validate their values") {
    ConfigMap cfg = ConfigMap::parse_string("x = abc\ny = 1.5\nz = maybe\n");
    CHECK_THROWS_AS(cfg.get_int("x", 0), ConfigError);
    CHECK_THROWS_AS(cfg.get_int("y", 0), ConfigError);
    CHECK_THROWS_AS(cfg.get_bool("z", false), ConfigError);
    CHECK(cfg.get_double("y", 0.0) == doctest::Approx(1.5));
}

TEST_CASE("refine section round trips through the typed view") {
    ConfigMap cfg = ConfigMap::parse_string(
        "[refine]\n"
        "views = 8\n"
        "sigma = 0.4\n"
        "steps = 123\n"
        "seed = 99\n"
        "freeze_noise = true\n");
    const RefineConfig r = refine_config_from(cfg);
    cfg.check_all_consumed();
    CHECK(r.views == 8);
    CHECK(r.sigma == doctest::Approx(0.4));
    CHECK(r.steps == 123);
    CHECK(r.seed == 99);
    CHECK(r.freeze_noise);
    // Untouched fields keep their defaults.
    CHECK(r.pitch_deg == doctest::Approx(30.0));
    CHECK(r.t_lo == doctest::Approx(0.02));
}

TEST_CASE("out-of-range refine values fail validation") {
    ConfigMap a = ConfigMap::parse_string("[refine]\nsigma = 1.5\n");
    CHECK_THROWS_AS(refine_config_from(a), ConfigError);
    ConfigMap b = ConfigMap::parse_string("[refine]\nsteps = 0\n");
    CHECK_THROWS_AS(refine_config_from(b), ConfigError);
}

TEST_CASE("restore section round trips through the typed view") {
    ConfigMap cfg = ConfigMap::parse_string(
        "[restore]\n"
        "steps = 50\n"
        "tau = 0.1\n"
        "eval_every = 5\n");
    const RestoreConfig r = restore_config_from(cfg);
    cfg.check_all_consumed();
    CHECK(r.steps == 50);
    CHECK(r.tau == doctest::Approx(0.1));
    CHECK(r.eval_every == 5);
}
