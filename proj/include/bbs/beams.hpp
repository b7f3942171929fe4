// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The bbs authors

#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "bbs/common.hpp"
#include "bbs/rng.hpp"
#include "bbs/sitegen.hpp"

namespace bbs::beams {

using sitegen::ArrayConfig;
using sitegen::Channel;

/// Constant-modulus analog beam: every element has magnitude 1/sqrt(N).
struct BeamformingVector {
    Eigen::VectorXcd w;
};

struct Codebook {
    enum class Kind { dft, generated };
    std::vector<BeamformingVector> beams;
    Kind kind = Kind::dft;

    int size() const { return static_cast<int>(beams.size()); }
};

/// Received powers of the probing beams (linear scale).
struct RsrpPrompt {
    Eigen::VectorXd powers;
    std::vector<int> probing_indices;
    bool noisy = false;
    std::optional<double> snr_db;
};

struct LinkBudget {
    double transmit_power = 1.0;  // linear
    double noise_power = 0.0;     // linear

    void validate() const { require(transmit_power > 0.0, "LinkBudget: transmit_power must be > 0"); }
};

/// N orthonormal beams; beam n has elements exp(j*2*pi*n*m/N)/sqrt(N).
inline Codebook dft_codebook(const ArrayConfig& array) {
    array.validate();
    const int n = array.num_antennas;
    const double scale = 1.0 / std::sqrt(static_cast<double>(n));
    Codebook cb;
    cb.kind = Codebook::Kind::dft;
    cb.beams.resize(n);
    for (int b = 0; b < n; ++b) {
        auto& w = cb.beams[b].w;
        w.resize(n);
        for (int m = 0; m < n; ++m) w[m] = std::polar(scale, 2.0 * kPi * b * m / n);
    }
    return cb;
}

/// Phase-conjugate beam w[n] = exp(j*arg(h[n]))/sqrt(N). arg(0) == 0, so zero
/// channel entries map to a real element.
inline BeamformingVector mrt_beamformer(const Channel& ch) {
    require(ch.h.norm() > 0.0, "mrt_beamformer: zero channel");
    const int n = static_cast<int>(ch.h.size());
    const double scale = 1.0 / std::sqrt(static_cast<double>(n));
    BeamformingVector v;
    v.w.resize(n);
    for (int i = 0; i < n; ++i) v.w[i] = std::polar(scale, std::arg(ch.h[i]));
    return v;
}

/// |h^H w|^2.
inline double beam_gain(const Channel& ch, const BeamformingVector& v) {
    if (ch.h.size() != v.w.size()) {
        throw DimensionError("beam_gain: channel length " + std::to_string(ch.h.size()) + " != beam length " +
                             std::to_string(v.w.size()));
    }
    return std::norm(ch.h.dot(v.w));  // Eigen dot conjugates the left operand
}

/// Uniform probing selection: index q = floor(q*N/Q), strictly increasing from 0.
inline std::vector<int> select_probing_indices(int n, int q) {
    require(q >= 1, "select_probing_indices: Q must be >= 1");
    if (q > n) throw ConfigError("select_probing_indices: Q exceeds codebook size N");
    std::vector<int> idx(q);
    for (int i = 0; i < q; ++i) idx[i] = static_cast<int>((static_cast<std::int64_t>(i) * n) / q);
    return idx;
}

/// Probing-beam received powers. Noiseless mode returns |h^H w_q|^2. Noisy mode
/// draws one circular complex noise sample per beam (averaged over `averaging`
/// symbols when > 1) at a noise power set from the requested SNR and the median
/// probed power: sigma^2 = P_T * median_q |h^H w_q|^2 / snr_linear. Powers are
/// divided by P_T so the two modes share units.
inline RsrpPrompt measure_rsrp(const Channel& ch, const Codebook& cb, const std::vector<int>& indices,
                               const LinkBudget& budget, bool noisy, Rng* rng = nullptr,
                               std::optional<double> snr_db = std::nullopt, int averaging = 1) {
    budget.validate();
    require(averaging >= 1, "measure_rsrp: averaging must be >= 1");
    const int q = static_cast<int>(indices.size());
    require(q >= 1, "measure_rsrp: empty probing index list");
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] < 0 || indices[i] >= cb.size()) throw ConfigError("measure_rsrp: probing index out of range");
        if (i > 0 && indices[i] <= indices[i - 1]) throw ConfigError("measure_rsrp: probing indices not strictly increasing");
    }

    Eigen::VectorXd clean(q);
    for (int i = 0; i < q; ++i) clean[i] = beam_gain(ch, cb.beams[indices[i]]);

    RsrpPrompt prompt;
    prompt.probing_indices = indices;
    prompt.noisy = noisy;
    if (!noisy) {
        prompt.powers = clean;
        return prompt;
    }

    if (!snr_db.has_value()) throw ConfigError("measure_rsrp: noisy mode requires snr_db");
    if (rng == nullptr) throw ConfigError("measure_rsrp: noisy mode requires an rng");
    prompt.snr_db = snr_db;

    std::vector<double> sorted(clean.data(), clean.data() + q);
    std::sort(sorted.begin(), sorted.end());
    const double median = (q % 2 == 1) ? sorted[q / 2] : 0.5 * (sorted[q / 2 - 1] + sorted[q / 2]);
    const double snr_lin = db_to_linear(*snr_db);
    const double sigma2 = std::isinf(snr_lin) ? 0.0 : budget.transmit_power * median / snr_lin;

    // Circular noise is phase-invariant, so the clean signal can carry zero
    // reference phase without changing the statistics.
    const double pt = budget.transmit_power;
    prompt.powers.resize(q);
    for (int i = 0; i < q; ++i) {
        const cplx rx(std::sqrt(pt * clean[i]), 0.0);
        double acc = 0.0;
        for (int a = 0; a < averaging; ++a) acc += std::norm(rx + rng->cnormal(sigma2));
        prompt.powers[i] = acc / (averaging * pt);
    }
    return prompt;
}

/// Argmax of beam_gain over the codebook; ties break toward the lowest index.
inline std::pair<int, double> exhaustive_search(const Channel& ch, const Codebook& cb) {
    require(cb.size() > 0, "exhaustive_search: empty codebook");
    int best = 0;
    double best_gain = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < cb.size(); ++i) {
        const double g = beam_gain(ch, cb.beams[i]);
        if (g > best_gain) {
            best_gain = g;
            best = i;
        }
    }
    return {best, best_gain};
}

/// Writes a codebook as a site-format channel payload for inspection.
inline void export_codebook(const Codebook& cb, const ArrayConfig& array, const std::filesystem::path& dir) {
    sitegen::SiteDataset ds;
    ds.array = array;
    ds.channels.reserve(cb.beams.size());
    for (const auto& b : cb.beams) ds.channels.push_back({b.w, {}, false});
    sitegen::save_site(ds, dir);
}

}  // namespace bbs::beams
