// Copyright (c) 2026 mvsd authors
// SPDX-License-Identifier: Apache-2.0
//
// Experiment runner: scene synthesis, geometry restoration, MV-NRS
// refinement and run-directory evaluation.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mvsd/config.hpp"
#include "mvsd/distillation.hpp"
#include "mvsd/errors.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kPsnrCap = 99.0;

struct SceneSection {
    std::string shape = "textured-sphere";
    std::uint64_t seed = 0;
    int grid_size = 24;
    double perturb = 0.4;
    int pretrain_scenes = 3;
};

SceneSection scene_section_from(mvsd::ConfigMap& cfg) {
    SceneSection s;
    s.shape = cfg.get_string("scene.shape", s.shape);
    s.seed = cfg.get_u64("scene.seed", s.seed);
    s.grid_size = cfg.get_int("scene.grid_size", s.grid_size);
    s.perturb = cfg.get_double("scene.perturb", s.perturb);
    s.pretrain_scenes = cfg.get_int("scene.pretrain_scenes", s.pretrain_scenes);
    if (s.grid_size < 2 || s.perturb < 0.0 || s.pretrain_scenes < 1)
        throw mvsd::ConfigError("scene section: out-of-range value");
    return s;
}

mvsd::SceneParams perturbed(const mvsd::SceneParams& target, std::uint64_t seed,
                            double amplitude) {
    mvsd::SceneParams s = target;
    mvsd::Rng rng = mvsd::Rng::substream(seed, "perturb");
    for (double& v : s.feature_grid) v += amplitude * rng.normal();
    return s;
}

mvsd::ConfigMap load_config(const std::string& path) {
    if (path.empty()) return mvsd::ConfigMap::parse_string("");
    return mvsd::ConfigMap::parse_file(path);
}

void require_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw mvsd::IoError("cannot create directory " + dir.string());
}

std::string fmt(double v) {
    std::ostringstream ss;
    ss << std::setprecision(17) << v;
    return ss.str();
}

void write_refine_snapshot(const mvsd::RefineConfig& r, const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw mvsd::IoError("cannot write " + path.string());
    out << "[refine]\n"
        << "views = " << r.views << "\n"
        << "pitch_deg = " << fmt(r.pitch_deg) << "\n"
        << "sigma = " << fmt(r.sigma) << "\n"
        << "steps = " << r.steps << "\n"
        << "step_size = " << fmt(r.step_size) << "\n"
        << "cosine_decay = " << (r.cosine_decay ? "true" : "false") << "\n"
        << "seed = " << r.seed << "\n"
        << "w_ex = " << fmt(r.w_ex) << "\n"
        << "ref_weight = " << fmt(r.ref_weight) << "\n"
        << "tau = " << fmt(r.tau) << "\n"
        << "t_lo = " << fmt(r.t_lo) << "\n"
        << "t_hi = " << fmt(r.t_hi) << "\n"
        << "t_hi_final = " << fmt(r.t_hi_final) << "\n"
        << "render_res = " << r.render_res << "\n"
        << "samples_per_ray = " << r.samples_per_ray << "\n"
        << "cam_radius = " << fmt(r.cam_radius) << "\n"
        << "cam_focal = " << fmt(r.cam_focal) << "\n"
        << "latent_factor = " << r.latent_factor << "\n"
        << "anchor_init = " << (r.anchor_init ? "true" : "false") << "\n"
        << "retention = " << (r.retention ? "true" : "false") << "\n"
        << "freeze_noise = " << (r.freeze_noise ? "true" : "false") << "\n";
}

std::vector<mvsd::GaussianImageModel> oracle_means(const mvsd::SceneParams& target,
                                                   const mvsd::ViewRing& ring,
                                                   const mvsd::RefineConfig& cfg) {
    mvsd::RenderConfig rcfg;
    rcfg.samples_per_ray = cfg.samples_per_ray;
    rcfg.compute_normals = false;
    const mvsd::LatentMap latent = cfg.latent_map();
    std::vector<mvsd::GaussianImageModel> models;
    for (const mvsd::CameraView& cam : ring.cameras) {
        mvsd::GaussianImageModel m;
        m.mean = latent.encode(mvsd::render(target, cam, rcfg).image);
        m.stddev = cfg.tau;
        models.push_back(std::move(m));
    }
    return models;
}

// Per-view render error of scene `a` against scene `b` over the ring.
std::vector<double> per_view_errors(const mvsd::SceneParams& a, const mvsd::SceneParams& b,
                                    const mvsd::ViewRing& ring,
                                    const mvsd::RefineConfig& cfg) {
    mvsd::RenderConfig rcfg;
    rcfg.samples_per_ray = cfg.samples_per_ray;
    rcfg.compute_normals = false;
    std::vector<double> errors;
    for (const mvsd::CameraView& cam : ring.cameras)
        errors.push_back(
            mvsd::mse(mvsd::render(a, cam, rcfg).image, mvsd::render(b, cam, rcfg).image));
    return errors;
}

double psnr_from_errors(const std::vector<double>& errors) {
    double acc = 0.0;
    for (double e : errors) acc += e;
    acc /= static_cast<double>(errors.size());
    if (acc <= 0.0) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(1.0 / acc));
}

int cmd_synth(const std::string& config_path, const std::string& out_dir) {
    mvsd::ConfigMap cfg = load_config(config_path);
    const SceneSection sc = scene_section_from(cfg);
    const mvsd::RefineConfig rcfg = mvsd::refine_config_from(cfg);
    mvsd::restore_config_from(cfg);  // tolerate a shared config file
    cfg.check_all_consumed();

    require_dir(out_dir);
    const fs::path dir(out_dir);

    const mvsd::SceneParams target =
        mvsd::init_synthetic(mvsd::parse_shape_spec(sc.shape), sc.seed, sc.grid_size);
    const mvsd::SceneParams init = perturbed(target, sc.seed, sc.perturb);
    mvsd::save_scene(target, (dir / "target.scne").string());
    mvsd::save_scene(init, (dir / "init.scne").string());

    const mvsd::ViewRing ring = mvsd::make_view_ring(rcfg);
    mvsd::RenderConfig render_cfg;
    render_cfg.samples_per_ray = rcfg.samples_per_ray;
    render_cfg.compute_normals = false;

    require_dir(dir / "means");
    require_dir(dir / "renders");
    std::ofstream manifest(dir / "cameras.txt");
    if (!manifest) throw mvsd::IoError("cannot write camera manifest");
    for (std::size_t i = 0; i < ring.cameras.size(); ++i) {
        const mvsd::CameraView& cam = ring.cameras[i];
        manifest << "view " << i << " driver " << ring.drivers[i] << " focal "
                 << fmt(cam.focal) << " res " << cam.width << "x" << cam.height << " R";
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) manifest << " " << fmt(cam.rotation(r, c));
        manifest << " t " << fmt(cam.translation.x) << " " << fmt(cam.translation.y)
                 << " " << fmt(cam.translation.z) << "\n";

        const mvsd::RenderOutput out = mvsd::render(target, cam, render_cfg);
        std::ostringstream stem;
        stem << std::setw(2) << std::setfill('0') << i;
        mvsd::save_field_stack(out.image, (dir / "means" / ("mean_" + stem.str() + ".fstk")).string());
        mvsd::save_png(out.image, (dir / "renders" / ("target_" + stem.str() + ".png")).string());
    }
    write_refine_snapshot(rcfg, dir / "config.snapshot");
    std::cout << "synth: wrote fixture to " << out_dir << " (" << ring.cameras.size()
              << " views)\n";
    return 0;
}

int cmd_restore(const std::string& config_path, const std::string& out_dir) {
    mvsd::ConfigMap cfg = load_config(config_path);
    const SceneSection sc = scene_section_from(cfg);
    const mvsd::RestoreConfig rcfg = mvsd::restore_config_from(cfg);
    mvsd::refine_config_from(cfg);  // tolerate a shared config file
    cfg.check_all_consumed();

    require_dir(out_dir);
    const fs::path dir(out_dir);

    std::vector<mvsd::RestoreScene> pairs;
    for (int i = 0; i < sc.pretrain_scenes; ++i) {
        mvsd::RestoreScene pair;
        pair.target = mvsd::init_synthetic(mvsd::parse_shape_spec(sc.shape), sc.seed + i,
                                           sc.grid_size);
        pair.base = perturbed(pair.target, sc.seed + i, sc.perturb);
        pairs.push_back(std::move(pair));
    }

    mvsd::TransformNet net =
        mvsd::TransformNet::identity_init(pairs[0].base.feature_dim, 8, rcfg.seed);
    mvsd::RestoreTrace pre_trace, ft_trace;
    net = mvsd::restore_pretrain(pairs, std::move(net), rcfg, &pre_trace);
    const mvsd::SceneParams restored = mvsd::restore_finetune(pairs[0], net, rcfg, &ft_trace);

    mvsd::save_transform_net(net, (dir / "net.tnet").string());
    mvsd::save_scene(restored, (dir / "restored.scne").string());
    std::ofstream trace(dir / "trace.csv");
    trace << "phase,sample,eval_loss\n";
    for (std::size_t i = 0; i < pre_trace.eval_losses.size(); ++i)
        trace << "pretrain," << i << "," << fmt(pre_trace.eval_losses[i]) << "\n";
    for (std::size_t i = 0; i < ft_trace.eval_losses.size(); ++i)
        trace << "finetune," << i << "," << fmt(ft_trace.eval_losses[i]) << "\n";
    std::cout << "restore: eval loss " << pre_trace.eval_losses.front() << " -> "
              << ft_trace.eval_losses.back() << "\n";
    return 0;
}

struct RefineOverrides {
    std::optional<double> sigma, tau, step_size, w_ex;
    std::optional<int> steps;
    std::optional<std::uint64_t> seed;
    bool no_anchor_init = false, no_retention = false, freeze_noise = false;
};

int cmd_refine(const std::string& config_path, const std::string& run_dir,
               const RefineOverrides& ov) {
    const fs::path dir(run_dir);
    if (!fs::exists(dir / "target.scne") || !fs::exists(dir / "init.scne"))
        throw mvsd::IoError("refine: run directory missing target.scne/init.scne (run synth first)");

    mvsd::ConfigMap cfg = load_config(config_path.empty() &&
                                              fs::exists(dir / "config.snapshot")
                                          ? (dir / "config.snapshot").string()
                                          : config_path);
    mvsd::RefineConfig rcfg = mvsd::refine_config_from(cfg);
    scene_section_from(cfg);         // tolerate a shared config file
    mvsd::restore_config_from(cfg);
    cfg.check_all_consumed();
    if (ov.sigma) rcfg.sigma = *ov.sigma;
    if (ov.tau) rcfg.tau = *ov.tau;
    if (ov.step_size) rcfg.step_size = *ov.step_size;
    if (ov.w_ex) rcfg.w_ex = *ov.w_ex;
    if (ov.steps) rcfg.steps = *ov.steps;
    if (ov.seed) rcfg.seed = *ov.seed;
    if (ov.no_anchor_init) rcfg.anchor_init = false;
    if (ov.no_retention) rcfg.retention = false;
    if (ov.freeze_noise) rcfg.freeze_noise = true;
    rcfg.validate();

    const mvsd::SceneParams target = mvsd::load_scene((dir / "target.scne").string());
    const mvsd::SceneParams init = mvsd::load_scene((dir / "init.scne").string());
    const mvsd::ViewRing ring = mvsd::make_view_ring(rcfg);
    const std::vector<mvsd::GaussianImageModel> models = oracle_means(target, ring, rcfg);

    mvsd::RenderConfig render_cfg;
    render_cfg.samples_per_ray = rcfg.samples_per_ray;
    render_cfg.compute_normals = false;
    const mvsd::FieldStack ref_image = mvsd::render(target, ring.cameras[0], render_cfg).image;

    write_refine_snapshot(rcfg, dir / "config.snapshot");
    std::ofstream metrics(dir / "metrics.jsonl");
    if (!metrics) throw mvsd::IoError("cannot write metrics stream");

    mvsd::RefineResult result;
    try {
        result = mvsd::refine(init, ref_image, models, rcfg, &metrics);
    } catch (const mvsd::NumericError& e) {
        std::ofstream dump(dir / "abort.txt");
        dump << e.what() << "\n";
        throw;
    }

    mvsd::save_scene(result.scene, (dir / "final.scne").string());
    require_dir(dir / "renders");
    for (std::size_t i = 0; i < ring.cameras.size(); ++i) {
        std::ostringstream stem;
        stem << std::setw(2) << std::setfill('0') << i;
        mvsd::save_png(mvsd::render(result.scene, ring.cameras[i], render_cfg).image,
                       (dir / "renders" / ("final_" + stem.str() + ".png")).string());
    }
    std::cout << "refine: " << rcfg.steps << " steps, mean consistency score "
              << result.final_mean_score << ", anchor updates "
              << result.total_anchor_updates << "\n";
    return 0;
}

int cmd_eval(const std::string& run_dir) {
    const fs::path dir(run_dir);
    std::string missing;
    for (const char* name : {"metrics.jsonl", "final.scne", "target.scne", "config.snapshot"})
        if (!fs::exists(dir / name)) missing += std::string(" ") + name;
    if (!missing.empty()) throw mvsd::IoError("eval: run directory missing:" + missing);

    std::ifstream metrics(dir / "metrics.jsonl");
    std::vector<json> lines;
    std::string line;
    while (std::getline(metrics, line))
        if (!line.empty()) lines.push_back(json::parse(line));
    if (lines.empty()) throw mvsd::IoError("eval: metrics stream is empty");

    mvsd::ConfigMap cfg = mvsd::ConfigMap::parse_file((dir / "config.snapshot").string());
    const mvsd::RefineConfig rcfg = mvsd::refine_config_from(cfg);
    cfg.check_all_consumed();
    const mvsd::ViewRing ring = mvsd::make_view_ring(rcfg);

    const mvsd::SceneParams target = mvsd::load_scene((dir / "target.scne").string());
    const mvsd::SceneParams final_scene = mvsd::load_scene((dir / "final.scne").string());
    const std::vector<double> view_errors = per_view_errors(final_scene, target, ring, rcfg);
    const double psnr = psnr_from_errors(view_errors);

    double score_acc = 0.0;
    long updates = 0, cells = 0;
    for (const json& l : lines) {
        for (const json& v : l.at("views")) {
            score_acc += v.at("retained").get<double>();
            ++cells;
        }
        updates += l.at("anchor_updates").get<long>();
    }
    const double mean_score = score_acc / cells;
    const double update_rate = static_cast<double>(updates) / cells;

    std::ofstream csv(dir / "summary.csv");
    if (!csv) throw mvsd::IoError("cannot write summary.csv");
    csv << "metric,value\n"
        << "psnr_db," << fmt(psnr) << "\n"
        << "mean_consistency_score," << fmt(mean_score) << "\n"
        << "anchor_update_rate," << fmt(update_rate) << "\n"
        << "iterations," << lines.size() << "\n";
    for (std::size_t i = 0; i < view_errors.size(); ++i)
        csv << "final_loss_view_" << i << "," << fmt(view_errors[i]) << "\n";
    std::cout << "eval: psnr " << psnr << " dB, mean score " << mean_score
              << ", anchor update rate " << update_rate << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"multi-view score-distillation experiment runner"};
    app.require_subcommand(1);

    std::string config_path, out_dir = "run", run_dir = "run";

    CLI::App* synth = app.add_subcommand("synth", "generate a scene fixture + oracle means");
    synth->add_option("--config", config_path, "config file");
    synth->add_option("--out", out_dir, "output run directory");

    CLI::App* restore = app.add_subcommand("restore", "geometry restoration (pretrain + fine-tune)");
    restore->add_option("--config", config_path, "config file");
    restore->add_option("--out", out_dir, "output directory");

    RefineOverrides ov;
    double f_sigma, f_tau, f_step, f_wex;
    int f_steps;
    std::uint64_t f_seed;
    CLI::App* refine = app.add_subcommand("refine", "MV-NRS refinement on a synth run directory");
    refine->add_option("--config", config_path, "config file (defaults to the run's snapshot)");
    refine->add_option("--run", run_dir, "run directory from synth");
    auto* o_sigma = refine->add_option("--sigma", f_sigma, "resampling sigma override");
    auto* o_tau = refine->add_option("--tau", f_tau, "oracle stddev override");
    auto* o_step = refine->add_option("--step-size", f_step, "step size override");
    auto* o_wex = refine->add_option("--w-ex", f_wex, "explicit conditioning weight override");
    auto* o_steps = refine->add_option("--steps", f_steps, "iteration count override");
    auto* o_seed = refine->add_option("--seed", f_seed, "master seed override");
    refine->add_flag("--no-anchor-init", ov.no_anchor_init, "independent per-view anchors");
    refine->add_flag("--no-retention", ov.no_retention, "always accept the resample");
    refine->add_flag("--freeze-noise", ov.freeze_noise, "noise fixed at initialization");

    CLI::App* eval = app.add_subcommand("eval", "summarize a completed run directory");
    eval->add_option("--run", run_dir, "run directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (synth->parsed()) return cmd_synth(config_path, out_dir);
        if (restore->parsed()) return cmd_restore(config_path, out_dir);
        if (refine->parsed()) {
            if (*o_sigma) ov.sigma = f_sigma;
            if (*o_tau) ov.tau = f_tau;
            if (*o_step) ov.step_size = f_step;
            if (*o_wex) ov.w_ex = f_wex;
            if (*o_steps) ov.steps = f_steps;
            if (*o_seed) ov.seed = f_seed;
            return cmd_refine(config_path, run_dir, ov);
        }
        if (eval->parsed()) return cmd_eval(run_dir);
    } catch (const mvsd::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const mvsd::NumericError& e) {
        std::cerr << "numerical abort: " << e.what() << "\n";
        return 3;
    } catch (const mvsd::IoError& e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
