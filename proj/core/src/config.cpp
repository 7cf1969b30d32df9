// Copyright (c) 2026 mvsd authors
// SPDX-License-Identifier: Apache-2.0

#include "mvsd/config.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

#include "mvsd/errors.hpp"

namespace mvsd {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

}  // namespace

ConfigMap ConfigMap::parse_string(const std::string& text) {
    ConfigMap cfg;
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigError("config line " + std::to_string(lineno) +
                                  ": malformed section header");
            section = trim(line.substr(1, line.size() - 2));
            if (section.empty())
                throw ConfigError("config line " + std::to_string(lineno) +
                                  ": empty section name");
            continue;
        }
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) +
                              ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty())
            throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
        const std::string full = section.empty() ? key : section + "." + key;
        if (!cfg.values_.emplace(full, value).second)
            throw ConfigError("config: duplicate key '" + full + "'");
    }
    return cfg;
}

ConfigMap ConfigMap::parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("config: cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_string(ss.str());
}

const std::string* ConfigMap::lookup(const std::string& key) {
    const auto it = values_.find(key);
    if (it == values_.end()) return nullptr;
    consumed_.insert(key);
    return &it->second;
}

std::string ConfigMap::get_string(const std::string& key, const std::string& fallback) {
    const std::string* v = lookup(key);
    return v ? *v : fallback;
}

double ConfigMap::get_double(const std::string& key, double fallback) {
    const std::string* v = lookup(key);
    if (!v) return fallback;
    try {
        std::size_t pos = 0;
        const double d = std::stod(*v, &pos);
        if (pos != v->size()) throw std::invalid_argument("");
        return d;
    } catch (const std::exception&) {
        throw ConfigError("config: key '" + key + "' is not a number: " + *v);
    }
}

int ConfigMap::get_int(const std::string& key, int fallback) {
    const std::string* v = lookup(key);
    if (!v) return fallback;
    try {
        std::size_t pos = 0;
        const long n = std::stol(*v, &pos);
        if (pos != v->size()) throw std::invalid_argument("");
        return static_cast<int>(n);
    } catch (const std::exception&) {
        throw ConfigError("config: key '" + key + "' is not an integer: " + *v);
    }
}

std::uint64_t ConfigMap::get_u64(const std::string& key, std::uint64_t fallback) {
    const std::string* v = lookup(key);
    if (!v) return fallback;
    try {
        std::size_t pos = 0;
        const unsigned long long n = std::stoull(*v, &pos);
        if (pos != v->size()) throw std::invalid_argument("");
        return n;
    } catch (const std::exception&) {
        throw ConfigError("config: key '" + key + "' is not an unsigned integer: " + *v);
    }
}

bool ConfigMap::get_bool(const std::string& key, bool fallback) {
    const std::string* v = lookup(key);
    if (!v) return fallback;
    if (*v == "true" || *v == "1" || *v == "yes") return true;
    if (*v == "false" || *v == "0" || *v == "no") return false;
    throw ConfigError("config: key '" + key + "' is not a boolean: " + *v);
}

void ConfigMap::check_all_consumed() const {
    std::string bad;
    for (const auto& [key, value] : values_)
        if (!consumed_.count(key)) bad += (bad.empty() ? "" : ", ") + key;
    if (!bad.empty()) throw ConfigError("config: unknown keys: " + bad);
}

RefineConfig refine_config_from(ConfigMap& cfg, const std::string& section) {
    const auto k = [&section](const char* name) { return section + "." + name; };
    RefineConfig r;
    r.views = cfg.get_int(k("views"), r.views);
    r.pitch_deg = cfg.get_double(k("pitch_deg"), r.pitch_deg);
    r.sigma = cfg.get_double(k("sigma"), r.sigma);
    r.steps = cfg.get_int(k("steps"), r.steps);
    r.step_size = cfg.get_double(k("step_size"), r.step_size);
    r.cosine_decay = cfg.get_bool(k("cosine_decay"), r.cosine_decay);
    r.seed = cfg.get_u64(k("seed"), r.seed);
    r.w_ex = cfg.get_double(k("w_ex"), r.w_ex);
    r.ref_weight = cfg.get_double(k("ref_weight"), r.ref_weight);
    r.tau = cfg.get_double(k("tau"), r.tau);
    r.t_lo = cfg.get_double(k("t_lo"), r.t_lo);
    r.t_hi = cfg.get_double(k("t_hi"), r.t_hi);
    r.t_hi_final = cfg.get_double(k("t_hi_final"), r.t_hi_final);
    r.render_res = cfg.get_int(k("render_res"), r.render_res);
    r.samples_per_ray = cfg.get_int(k("samples_per_ray"), r.samples_per_ray);
    r.cam_radius = cfg.get_double(k("cam_radius"), r.cam_radius);
    r.cam_focal = cfg.get_double(k("cam_focal"), r.cam_focal);
    r.latent_factor = cfg.get_int(k("latent_factor"), r.latent_factor);
    r.anchor_init = cfg.get_bool(k("anchor_init"), r.anchor_init);
    r.retention = cfg.get_bool(k("retention"), r.retention);
    r.freeze_noise = cfg.get_bool(k("freeze_noise"), r.freeze_noise);
    r.checkpoint_every = cfg.get_int(k("checkpoint_every"), r.checkpoint_every);
    r.checkpoint_dir = cfg.get_string(k("checkpoint_dir"), r.checkpoint_dir);
    r.validate();
    return r;
}

RestoreConfig restore_config_from(ConfigMap& cfg, const std::string& section) {
    const auto k = [&section](const char* name) { return section + "." + name; };
    RestoreConfig r;
    r.steps = cfg.get_int(k("steps"), r.steps);
    r.step_size = cfg.get_double(k("step_size"), r.step_size);
    r.tau = cfg.get_double(k("tau"), r.tau);
    r.seed = cfg.get_u64(k("seed"), r.seed);
    r.pitch_deg = cfg.get_double(k("pitch_deg"), r.pitch_deg);
    r.render_res = cfg.get_int(k("render_res"), r.render_res);
    r.samples_per_ray = cfg.get_int(k("samples_per_ray"), r.samples_per_ray);
    r.cam_radius = cfg.get_double(k("cam_radius"), r.cam_radius);
    r.cam_focal = cfg.get_double(k("cam_focal"), r.cam_focal);
    r.eval_views = cfg.get_int(k("eval_views"), r.eval_views);
    r.eval_every = cfg.get_int(k("eval_every"), r.eval_every);
    if (r.steps < 0 || r.step_size <= 0.0 || r.tau < 0.0 || r.eval_every < 1)
        throw ConfigError("restore config: out-of-range value");
    return r;
}

}  // namespace mvsd
