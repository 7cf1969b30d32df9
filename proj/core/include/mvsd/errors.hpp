// Copyright (c) 2026 mvsd authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace mvsd {

// Precondition / shape-agreement failures.
struct ContractViolation : std::logic_error {
    explicit ContractViolation(const std::string& what) : std::logic_error(what) {}
};

// Bad user-supplied configuration (unknown keys, out-of-range values).
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Noise schedule evaluated where alpha_t or 1-alpha_t underflows.
struct DegenerateTimestepError : std::runtime_error {
    explicit DegenerateTimestepError(const std::string& what) : std::runtime_error(what) {}
};

// Non-finite values detected during optimization.
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

struct IoError : std::runtime_error {
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace mvsd
