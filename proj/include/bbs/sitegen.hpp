// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The bbs authors

#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "bbs/common.hpp"
#include "bbs/io.hpp"
#include "bbs/rng.hpp"

namespace bbs::sitegen {

namespace fs = std::filesystem;
using json = nlohmann::json;

inline constexpr int kSiteFormatVersion = 1;

/// Uniform linear array at the base station.
struct ArrayConfig {
    int num_antennas = 64;
    double spacing_over_wavelength = 0.5;
    double carrier_freq_ghz = 28.0;  // metadata only

    void validate() const {
        require(num_antennas >= 2, "ArrayConfig: num_antennas must be >= 2");
        require(spacing_over_wavelength > 0.0, "ArrayConfig: spacing_over_wavelength must be > 0");
        require(carrier_freq_ghz > 0.0, "ArrayConfig: carrier_freq_ghz must be > 0");
    }
};

/// One propagation path: complex amplitude and azimuth of departure.
struct PathParams {
    cplx gain{1.0, 0.0};
    double azimuth_deg = 0.0;
};

struct Channel {
    Eigen::VectorXcd h;
    std::vector<PathParams> paths;  // empty when loaded without path metadata
    bool los = false;
};

/// Shared scatterer direction visible to all users of a site.
struct ClusterSpec {
    double center_deg = 0.0;
    double spread_deg = 5.0;
    double power_db = 0.0;
};

/// Parametric site geometry: a few angular clusters plus per-user LoS that may
/// be blocked. Users are dropped at uniform azimuths inside the field of view.
struct SiteGeometrySpec {
    std::vector<ClusterSpec> clusters;
    double blockage_prob = 0.3;
    double los_power_offset_db = 6.0;
    double gain_sigma_db = 3.0;
    double fov_deg = 60.0;
    int paths_per_user = 5;
    bool normalize_power = false;  // scale each channel to unit norm

    void validate() const {
        require(!clusters.empty(), "SiteGeometrySpec: cluster count must be >= 1");
        for (const auto& c : clusters) {
            require(c.spread_deg >= 0.0, "SiteGeometrySpec: cluster spread must be >= 0");
            require(std::abs(c.center_deg) <= 90.0, "SiteGeometrySpec: cluster center outside [-90, 90]");
        }
        require(blockage_prob >= 0.0 && blockage_prob <= 1.0, "SiteGeometrySpec: blockage_prob outside [0, 1]");
        require(fov_deg > 0.0 && fov_deg <= 90.0, "SiteGeometrySpec: fov_deg outside (0, 90]");
        require(paths_per_user >= 1, "SiteGeometrySpec: paths_per_user must be >= 1");
    }
};

inline SiteGeometrySpec default_geometry() {
    SiteGeometrySpec g;
    g.clusters = {{-40.0, 4.0, 0.0}, {10.0, 4.0, -2.0}, {45.0, 4.0, -4.0}};
    return g;
}

struct SiteDataset {
    ArrayConfig array;
    std::vector<Channel> channels;
    std::uint64_t split_seed = 0;
    double train_ratio = 0.8;
};

/// ULA steering vector, unit norm: element m is exp(j*2*pi*(d/lambda)*m*sin(phi))/sqrt(N).
inline Eigen::VectorXcd steering_vector(const ArrayConfig& array, double azimuth_deg) {
    const int n = array.num_antennas;
    const double mu = 2.0 * kPi * array.spacing_over_wavelength * std::sin(azimuth_deg * kPi / 180.0);
    const double scale = 1.0 / std::sqrt(static_cast<double>(n));
    Eigen::VectorXcd a(n);
    for (int m = 0; m < n; ++m) a[m] = std::polar(scale, mu * m);
    return a;
}

/// Ray-based channel: sum of per-path gains times steering vectors.
inline Channel synthesize_channel(const ArrayConfig& array, std::vector<PathParams> paths, bool los = false) {
    if (paths.empty()) throw ConfigError("synthesize_channel: no propagation paths");
    Eigen::VectorXcd h = Eigen::VectorXcd::Zero(array.num_antennas);
    for (const auto& p : paths) h += p.gain * steering_vector(array, p.azimuth_deg);
    return Channel{std::move(h), std::move(paths), los};
}

namespace detail {

inline double clipped_cluster_angle(Rng& rng, const ClusterSpec& c) {
    for (int tries = 0; tries < 64; ++tries) {
        const double a = c.center_deg + c.spread_deg * rng.normal();
        if (a >= -90.0 && a <= 90.0) return a;
    }
    return std::clamp(c.center_deg, -90.0, 90.0);
}

}  // namespace detail

/// Synthesizes a site of `num_users` multipath channels. Pure function of
/// (array, geometry, seed): per-user substreams keep generation order-free.
inline SiteDataset generate_synthetic_site(const ArrayConfig& array, int num_users, const SiteGeometrySpec& geo,
                                           std::uint64_t seed, double train_ratio = 0.8) {
    array.validate();
    geo.validate();
    require(num_users >= 1, "generate_synthetic_site: num_users must be >= 1");
    require(train_ratio > 0.0 && train_ratio < 1.0, "generate_synthetic_site: train_ratio outside (0, 1)");

    SiteDataset ds;
    ds.array = array;
    ds.split_seed = substream(seed, "split");
    ds.train_ratio = train_ratio;
    ds.channels.reserve(num_users);

    for (int u = 0; u < num_users; ++u) {
        Rng rng(substream(seed, "user", static_cast<std::uint64_t>(u)));
        const double user_dir = -geo.fov_deg + 2.0 * geo.fov_deg * rng.uniform();
        const bool has_los = rng.uniform() >= geo.blockage_prob;

        std::vector<PathParams> paths;
        paths.reserve(geo.paths_per_user);
        if (has_los) {
            const double mag_db = geo.los_power_offset_db + geo.gain_sigma_db * rng.normal();
            paths.push_back({std::polar(std::pow(10.0, mag_db / 20.0), 2.0 * kPi * rng.uniform()), user_dir});
        }
        while (static_cast<int>(paths.size()) < geo.paths_per_user) {
            const auto& c = geo.clusters[rng.bounded(geo.clusters.size())];
            const double angle = detail::clipped_cluster_angle(rng, c);
            const double mag_db = c.power_db + geo.gain_sigma_db * rng.normal();
            paths.push_back({std::polar(std::pow(10.0, mag_db / 20.0), 2.0 * kPi * rng.uniform()), angle});
        }

        Channel ch = synthesize_channel(array, std::move(paths), has_los);
        if (geo.normalize_power) {
            const double norm = ch.h.norm();
            ch.h /= norm;
            for (auto& p : ch.paths) p.gain /= norm;
        }
        ds.channels.push_back(std::move(ch));
    }
    return ds;
}

/// Deterministic shuffle-split under split_seed; |train| = round(train_ratio * D).
inline std::pair<std::vector<int>, std::vector<int>> split_train_test(const SiteDataset& ds) {
    require(!ds.channels.empty(), "split_train_test: dataset is empty");
    require(ds.train_ratio > 0.0 && ds.train_ratio < 1.0, "split_train_test: train_ratio outside (0, 1)");
    const int d = static_cast<int>(ds.channels.size());
    std::vector<int> idx(d);
    for (int i = 0; i < d; ++i) idx[i] = i;
    Rng rng(ds.split_seed);
    rng.shuffle(idx);
    const int n_train = static_cast<int>(std::lround(ds.train_ratio * d));
    std::vector<int> train(idx.begin(), idx.begin() + n_train);
    std::vector<int> test(idx.begin() + n_train, idx.end());
    return {std::move(train), std::move(test)};
}

// --- site directory format ---------------------------------------------------
// <dir>/manifest      JSON: array config, user count, split, format_version
// <dir>/channels.bin  row-major D x N complex doubles, interleaved re/im, LE
// <dir>/paths.jsonl   optional, one record per user with path metadata

inline void save_site(const SiteDataset& ds, const fs::path& dir) {
    fs::create_directories(dir);

    json m;
    m["format_version"] = kSiteFormatVersion;
    m["num_antennas"] = ds.array.num_antennas;
    m["spacing_over_wavelength"] = ds.array.spacing_over_wavelength;
    m["carrier_freq_ghz"] = ds.array.carrier_freq_ghz;
    m["num_users"] = ds.channels.size();
    m["train_ratio"] = ds.train_ratio;
    m["split_seed"] = ds.split_seed;
    io::spit(dir / "manifest", m.dump(2) + "\n");

    std::ofstream bin(dir / "channels.bin", std::ios::binary | std::ios::trunc);
    if (!bin) throw FormatError("cannot write " + (dir / "channels.bin").string());
    for (const auto& ch : ds.channels) {
        if (ch.h.size() != ds.array.num_antennas) throw FormatError("save_site: channel length != num_antennas");
        for (int n = 0; n < ch.h.size(); ++n) {
            io::write_pod(bin, ch.h[n].real());
            io::write_pod(bin, ch.h[n].imag());
        }
    }

    const bool have_paths = std::any_of(ds.channels.begin(), ds.channels.end(),
                                        [](const Channel& c) { return !c.paths.empty(); });
    if (have_paths) {
        std::ofstream pf(dir / "paths.jsonl", std::ios::binary | std::ios::trunc);
        for (std::size_t u = 0; u < ds.channels.size(); ++u) {
            const auto& ch = ds.channels[u];
            json rec;
            rec["user"] = u;
            rec["los"] = ch.los;
            json paths = json::array();
            for (const auto& p : ch.paths) {
                paths.push_back({{"gain_re", p.gain.real()}, {"gain_im", p.gain.imag()}, {"azimuth_deg", p.azimuth_deg}});
            }
            rec["paths"] = std::move(paths);
            pf << rec.dump() << "\n";
        }
    }
}

inline SiteDataset load_site(const fs::path& dir) {
    json m;
    try {
        m = json::parse(io::slurp(dir / "manifest"));
    } catch (const json::exception& e) {
        throw FormatError("manifest parse error in " + (dir / "manifest").string() + ": " + e.what());
    }
    if (m.value("format_version", -1) != kSiteFormatVersion) {
        throw FormatError("manifest field format_version: unsupported value");
    }

    SiteDataset ds;
    ds.array.num_antennas = m.at("num_antennas").get<int>();
    ds.array.spacing_over_wavelength = m.at("spacing_over_wavelength").get<double>();
    ds.array.carrier_freq_ghz = m.at("carrier_freq_ghz").get<double>();
    ds.train_ratio = m.at("train_ratio").get<double>();
    ds.split_seed = m.at("split_seed").get<std::uint64_t>();
    ds.array.validate();
    const auto num_users = m.at("num_users").get<std::size_t>();

    const std::string payload = io::slurp(dir / "channels.bin");
    const int n = ds.array.num_antennas;
    const std::size_t expected = num_users * static_cast<std::size_t>(n) * 2 * sizeof(double);
    if (payload.size() != expected) {
        throw FormatError("channel payload size mismatch: manifest num_users=" + std::to_string(num_users) +
                          ", num_antennas=" + std::to_string(n) + " imply " + std::to_string(expected) +
                          " bytes, file has " + std::to_string(payload.size()));
    }

    ds.channels.resize(num_users);
    const auto* dp = reinterpret_cast<const double*>(payload.data());
    for (std::size_t u = 0; u < num_users; ++u) {
        auto& h = ds.channels[u].h;
        h.resize(n);
        for (int i = 0; i < n; ++i) {
            h[i] = cplx(dp[0], dp[1]);
            dp += 2;
        }
    }

    if (fs::exists(dir / "paths.jsonl")) {
        std::ifstream pf(dir / "paths.jsonl");
        std::string line;
        while (std::getline(pf, line)) {
            if (line.empty()) continue;
            json rec;
            try {
                rec = json::parse(line);
            } catch (const json::exception& e) {
                throw FormatError(std::string("paths.jsonl parse error: ") + e.what());
            }
            const auto u = rec.at("user").get<std::size_t>();
            if (u >= ds.channels.size()) throw FormatError("paths.jsonl field user: index out of range");
            ds.channels[u].los = rec.at("los").get<bool>();
            for (const auto& p : rec.at("paths")) {
                ds.channels[u].paths.push_back(
                    {cplx(p.at("gain_re").get<double>(), p.at("gain_im").get<double>()), p.at("azimuth_deg").get<double>()});
            }
        }
    }
    return ds;
}

}  // namespace bbs::sitegen
