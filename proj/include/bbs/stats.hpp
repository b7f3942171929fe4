// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The bbs authors

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "bbs/common.hpp"
#include "bbs/rng.hpp"

namespace bbs::stats {

inline double median(std::vector<double> v) {
    require(!v.empty(), "median: empty sample");
    std::sort(v.begin(), v.end());
    const size_t n = v.size();
    return (n % 2 == 1) ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline double median(std::span<const double> v) { return median(std::vector<double>(v.begin(), v.end())); }

inline double mean(std::span<const double> v) {
    require(!v.empty(), "mean: empty sample");
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

struct BootstrapCi {
    double lo = 0.0;
    double hi = 0.0;
    double point = 0.0;
};

/// Percentile bootstrap CI for median(a) - median(b) with paired samples:
/// each resample draws user indices with replacement and keeps the pairing.
inline BootstrapCi bootstrap_paired_median_diff(std::span<const double> a, std::span<const double> b, int iters = 2000,
                                                std::uint64_t seed = 1, double alpha = 0.05) {
    require(a.size() == b.size(), "bootstrap: samples must pair up");
    require(!a.empty(), "bootstrap: empty sample");
    require(iters >= 100, "bootstrap: too few iterations");
    require(alpha > 0.0 && alpha < 1.0, "bootstrap: alpha outside (0,1)");
    const size_t n = a.size();
    Rng rng(substream(seed, "bootstrap"));
    std::vector<double> diffs(static_cast<size_t>(iters));
    std::vector<double> ra(n), rb(n);
    for (int it = 0; it < iters; ++it) {
        for (size_t i = 0; i < n; ++i) {
            const auto j = static_cast<size_t>(rng.bounded(n));
            ra[i] = a[j];
            rb[i] = b[j];
        }
        diffs[static_cast<size_t>(it)] = median(ra) - median(rb);
    }
    std::sort(diffs.begin(), diffs.end());
    const auto lo_i = static_cast<size_t>(std::floor(alpha / 2.0 * (iters - 1)));
    const auto hi_i = static_cast<size_t>(std::ceil((1.0 - alpha / 2.0) * (iters - 1)));
    BootstrapCi ci;
    ci.lo = diffs[lo_i];
    ci.hi = diffs[hi_i];
    ci.point = median(std::vector<double>(a.begin(), a.end())) - median(std::vector<double>(b.begin(), b.end()));
    return ci;
}

inline std::vector<double> ranks_with_ties(std::span<const double> v) {
    const size_t n = v.size();
    std::vector<size_t> idx(n);
    for (size_t i = 0; i < n; ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(n);
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
        const double avg = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
        for (size_t k = i; k <= j; ++k) ranks[idx[k]] = avg;
        i = j + 1;
    }
    return ranks;
}

struct SpearmanResult {
    double rho = 0.0;
    double p_value = 1.0;  // two-sided, normal approximation z = rho * sqrt(n-1)
};

inline SpearmanResult spearman(std::span<const double> x, std::span<const double> y) {
    require(x.size() == y.size(), "spearman: length mismatch");
    require(x.size() >= 3, "spearman: need at least 3 pairs");
    const auto rx = ranks_with_ties(x);
    const auto ry = ranks_with_ties(y);
    const double mx = mean(rx), my = mean(ry);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (size_t i = 0; i < rx.size(); ++i) {
        const double dx = rx[i] - mx, dy = ry[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    require(sxx > 0.0 && syy > 0.0, "spearman: a variable is constant");
    SpearmanResult r;
    r.rho = sxy / std::sqrt(sxx * syy);
    const double z = r.rho * std::sqrt(static_cast<double>(rx.size()) - 1.0);
    r.p_value = std::erfc(std::abs(z) / std::sqrt(2.0));
    return r;
}

}  // namespace bbs::stats
