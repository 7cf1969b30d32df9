// Copyright (c) 2026 mvsd authors
// SPDX-License-Identifier: Apache-2.0

#include "mvsd/noise_transport.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "mvsd/geometry.hpp"

namespace mvsd {

FieldStack gaussian_field(int width, int height, int channels, Rng& rng) {
    FieldStack f(width, height, channels);
    for (double& v : f.data) v = rng.normal();
    return f;
}

AnchorNoiseSet init_anchor_chain(const std::vector<CameraView>& views,
                                 const std::vector<FieldStack>& depths,
                                 std::uint64_t seed, int channels, int latent_factor,
                                 const std::vector<int>& driver) {
    if (views.empty()) throw ContractViolation("init_anchor_chain: no views");
    if (depths.size() != views.size())
        throw ContractViolation("init_anchor_chain: depth count mismatch");
    if (!driver.empty() && driver.size() != views.size())
        throw ContractViolation("init_anchor_chain: driver count mismatch");

    Rng rng = Rng::substream(seed, "anchors");
    AnchorNoiseSet set;
    set.views.resize(views.size());

    for (std::size_t i = 0; i < views.size(); ++i) {
        const CameraView latent_cam = views[i].scaled(views[i].width / latent_factor,
                                                      views[i].height / latent_factor);
        const int src = driver.empty() ? static_cast<int>(i) - 1 : driver[i];
        if (src < 0) {
            set.views[i].anchor =
                gaussian_field(latent_cam.width, latent_cam.height, channels, rng);
            continue;
        }
        const CameraView src_cam = views[src].scaled(views[src].width / latent_factor,
                                                     views[src].height / latent_factor);
        const FieldStack src_depth = downsample_depth_min(depths[src], latent_factor);
        const WarpResult wr =
            warp_view(set.views[src].anchor, src_depth, src_cam, latent_cam);
        FieldStack anchor = wr.warped;
        for (int y = 0; y < anchor.height; ++y)
            for (int x = 0; x < anchor.width; ++x)
                if (wr.is_void(x, y))
                    for (int c = 0; c < channels; ++c) anchor.at(x, y, c) = rng.normal();
        set.views[i].anchor = std::move(anchor);
    }
    return set;
}

FieldStack resample(const FieldStack& anchor, double sigma, Rng& rng) {
    if (sigma < 0.0 || sigma > 1.0)
        throw ConfigError("resample: sigma outside [0, 1]");
    if (sigma == 0.0) return anchor;
    const double keep = std::sqrt(1.0 - sigma * sigma);
    FieldStack out = anchor;
    for (double& v : out.data) v = keep * v + sigma * rng.normal();
    return out;
}

FieldStack resample(const FieldStack& anchor, double sigma, std::uint64_t seed) {
    Rng rng = Rng::substream(seed, "resample");
    return resample(anchor, sigma, rng);
}

void save_anchor_set(const AnchorNoiseSet& set, const std::string& dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    std::ofstream manifest(fs::path(dir) / "anchors.manifest");
    if (!manifest) throw IoError("anchor set: cannot write manifest in " + dir);
    for (std::size_t i = 0; i < set.views.size(); ++i) {
        const std::string anchor_file = "anchor_" + std::to_string(i) + ".fstk";
        const std::string target_file = "target_" + std::to_string(i) + ".fstk";
        save_field_stack(set.views[i].anchor, (fs::path(dir) / anchor_file).string());
        manifest << i << ' ' << anchor_file;
        if (set.views[i].has_retained) {
            save_field_stack(set.views[i].target_image,
                             (fs::path(dir) / target_file).string());
            manifest << ' ' << target_file << ' ' << set.views[i].retained_score;
        }
        manifest << '\n';
    }
}

AnchorNoiseSet load_anchor_set(const std::string& dir) {
    namespace fs = std::filesystem;
    std::ifstream manifest(fs::path(dir) / "anchors.manifest");
    if (!manifest) throw IoError("anchor set: missing manifest in " + dir);
    AnchorNoiseSet set;
    std::size_t idx;
    std::string anchor_file;
    std::string line;
    while (std::getline(manifest, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string target_file;
        double score;
        if (!(ls >> idx >> anchor_file))
            throw IoError("anchor set: malformed manifest line: " + line);
        AnchorViewState st;
        st.anchor = load_field_stack((fs::path(dir) / anchor_file).string());
        if (ls >> target_file >> score) {
            st.target_image = load_field_stack((fs::path(dir) / target_file).string());
            st.retained_score = score;
            st.has_retained = true;
        }
        set.views.push_back(std::move(st));
    }
    return set;
}

}  // namespace mvsd
