// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The bbs authors

#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <span>
#include <vector>

#include "bbs/beams.hpp"
#include "bbs/common.hpp"

namespace bbs::latent {

using beams::BeamformingVector;
using beams::RsrpPrompt;
using sitegen::Channel;

using Mat2Xd = Eigen::Matrix<double, 2, Eigen::Dynamic>;

/// Angular-domain sample: row 0 holds phases of the unitary DFT of the channel
/// (wrapped to [-pi, pi)), row 1 the amplitudes scaled so max == 1. `scale`
/// records the amplitude divisor; the beam reconstruction never needs it.
struct LatentSample {
    Mat2Xd X;
    double scale = 1.0;
};

/// Per-component dB-domain standardization parameters, fit on training prompts.
struct PromptStats {
    Eigen::VectorXd mean;
    Eigen::VectorXd std;
};

struct NormalizedPrompt {
    Eigen::VectorXd c;
    PromptStats stats;
};

inline constexpr double kPromptEpsilon = 1e-12;

/// Unitary DFT, forward kernel exp(-j*2*pi*k*m/N)/sqrt(N). Direct evaluation:
/// N stays small here and the quadratic form keeps full double precision.
inline Eigen::VectorXcd unitary_dft(const Eigen::VectorXcd& x) {
    const auto n = x.size();
    Eigen::VectorXcd y(n);
    const double s = 1.0 / std::sqrt(static_cast<double>(n));
    for (Eigen::Index k = 0; k < n; ++k) {
        cplx acc = 0.0;
        for (Eigen::Index m = 0; m < n; ++m) acc += x[m] * std::polar(1.0, -2.0 * kPi * k * m / n);
        y[k] = acc * s;
    }
    return y;
}

inline Eigen::VectorXcd unitary_idft(const Eigen::VectorXcd& x) {
    const auto n = x.size();
    Eigen::VectorXcd y(n);
    const double s = 1.0 / std::sqrt(static_cast<double>(n));
    for (Eigen::Index k = 0; k < n; ++k) {
        cplx acc = 0.0;
        for (Eigen::Index m = 0; m < n; ++m) acc += x[m] * std::polar(1.0, 2.0 * kPi * k * m / n);
        y[k] = acc * s;
    }
    return y;
}

inline double wrap_phase(double p) {
    // into [-pi, pi)
    p = std::remainder(p, 2.0 * kPi);
    if (p >= kPi) p -= 2.0 * kPi;
    if (p < -kPi) p += 2.0 * kPi;
    return p;
}

/// Channel -> angular-domain sample.
inline LatentSample to_latent(const Channel& ch) {
    if (ch.h.norm() <= 0.0) throw ConfigError("to_latent: degenerate channel");
    const Eigen::VectorXcd ha = unitary_dft(ch.h);
    const auto n = ha.size();
    LatentSample s;
    s.X.resize(2, n);
    double max_amp = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) max_amp = std::max(max_amp, std::abs(ha[i]));
    s.scale = max_amp;
    for (Eigen::Index i = 0; i < n; ++i) {
        s.X(0, i) = wrap_phase(std::arg(ha[i]));
        s.X(1, i) = std::abs(ha[i]) / max_amp;
    }
    return s;
}

/// Angular-domain sample (phases in radians) -> constant-modulus beam via IDFT.
/// Scale-invariant in row 1; output satisfies |w[n]| = 1/sqrt(N) by construction.
inline BeamformingVector from_latent(const Mat2Xd& x) {
    const auto n = x.cols();
    require(n >= 1, "from_latent: empty sample");
    if (!x.allFinite()) throw ConfigError("from_latent: non-finite sample");
    Eigen::VectorXcd spec(n);
    for (Eigen::Index i = 0; i < n; ++i) spec[i] = std::polar(x(1, i), x(0, i));
    const Eigen::VectorXcd spatial = unitary_idft(spec);
    const double scale = 1.0 / std::sqrt(static_cast<double>(n));
    BeamformingVector v;
    v.w.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) v.w[i] = std::polar(scale, std::arg(spatial[i]));  // arg(0) == 0
    return v;
}

/// Model-space form: phases divided by pi so both rows live in [-1, 1].
inline Mat2Xd to_model_matrix(const LatentSample& s) {
    Mat2Xd m = s.X;
    m.row(0) /= kPi;
    return m;
}

inline Mat2Xd from_model_matrix(const Mat2Xd& m) {
    Mat2Xd x = m;
    x.row(0) *= kPi;
    return x;
}

/// Fits per-component mean/std of 10*log10(power + eps) over training prompts.
inline PromptStats fit_prompt_stats(std::span<const RsrpPrompt> prompts) {
    require(!prompts.empty(), "fit_prompt_stats: no prompts");
    const auto q = prompts.front().powers.size();
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(q);
    Eigen::VectorXd sum2 = Eigen::VectorXd::Zero(q);
    for (const auto& p : prompts) {
        if (p.powers.size() != q) throw DimensionError("fit_prompt_stats: inconsistent prompt lengths");
        for (Eigen::Index i = 0; i < q; ++i) {
            const double db = 10.0 * std::log10(p.powers[i] + kPromptEpsilon);
            sum[i] += db;
            sum2[i] += db * db;
        }
    }
    const double m = static_cast<double>(prompts.size());
    PromptStats st;
    st.mean = sum / m;
    st.std.resize(q);
    for (Eigen::Index i = 0; i < q; ++i) {
        const double var = std::max(0.0, sum2[i] / m - st.mean[i] * st.mean[i]);
        st.std[i] = std::sqrt(var);
        if (st.std[i] <= 0.0) {
            throw ConfigError("fit_prompt_stats: component " + std::to_string(i) +
                              " is constant across the training set (degenerate site)");
        }
    }
    return st;
}

inline NormalizedPrompt normalize_prompt(const RsrpPrompt& p, const PromptStats& stats) {
    if (p.powers.size() != stats.mean.size()) {
        throw DimensionError("normalize_prompt: prompt length " + std::to_string(p.powers.size()) +
                             " != stats length " + std::to_string(stats.mean.size()));
    }
    require((p.powers.array() >= 0.0).all(), "normalize_prompt: negative power");
    NormalizedPrompt out;
    out.stats = stats;
    out.c.resize(p.powers.size());
    for (Eigen::Index i = 0; i < p.powers.size(); ++i) {
        out.c[i] = (10.0 * std::log10(p.powers[i] + kPromptEpsilon) - stats.mean[i]) / stats.std[i];
    }
    return out;
}

}  // namespace bbs::latent
