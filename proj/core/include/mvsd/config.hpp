// Copyright (c) 2026 mvsd authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>

#include "mvsd/distillation.hpp"

namespace mvsd {

// Sectioned key=value experiment configuration. Lines are `key = value`
// under `[section]` headers; `#` starts a comment. Every key must be
// consumed by a typed getter; check_all_consumed() rejects leftovers so
// typos fail loudly instead of silently using defaults.
class ConfigMap {
public:
    static ConfigMap parse_file(const std::string& path);
    static ConfigMap parse_string(const std::string& text);

    bool has(const std::string& key) const { return values_.count(key) != 0; }

    std::string get_string(const std::string& key, const std::string& fallback);
    double get_double(const std::string& key, double fallback);
    int get_int(const std::string& key, int fallback);
    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback);
    bool get_bool(const std::string& key, bool fallback);

    // Throws ConfigError listing every key never consumed.
    void check_all_consumed() const;

private:
    std::map<std::string, std::string> values_;  // "section.key" -> value
    std::set<std::string> consumed_;

    const std::string* lookup(const std::string& key);
};

// Typed views over the shared sections. Both consume their keys, so one
// ConfigMap can feed several of these before check_all_consumed().
RefineConfig refine_config_from(ConfigMap& cfg, const std::string& section = "refine");
RestoreConfig restore_config_from(ConfigMap& cfg, const std::string& section = "restore");

}  // namespace mvsd
