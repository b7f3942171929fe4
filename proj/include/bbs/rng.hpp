// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The bbs authors

#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "bbs/common.hpp"

namespace bbs {

/// Deterministic random stream. All value mappings (uniform, normal, bounded
/// int, shuffle) are spelled out here instead of using std distributions, so a
/// given seed produces the same draws on every platform and the whole state is
/// the engine state (serializable, no hidden caches).
class Rng {
  public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform on [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Uniform on (0, 1]; safe as a log() argument.
    double uniform_pos() { return (static_cast<double>(engine_() >> 11) + 1.0) * 0x1.0p-53; }

    /// Standard normal via Box-Muller (two uniforms per draw, no cached state).
    double normal() {
        const double u1 = uniform_pos();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
    }

    /// Circularly-symmetric complex normal with total variance sigma2.
    cplx cnormal(double sigma2) {
        const double s = std::sqrt(sigma2 / 2.0);
        return {s * normal(), s * normal()};
    }

    /// Uniform integer in [0, n); unbiased via rejection.
    std::uint64_t bounded(std::uint64_t n) {
        const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
        std::uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return x % n;
    }

    /// Uniform integer in [lo, hi] inclusive.
    int uniform_int(int lo, int hi) { return lo + static_cast<int>(bounded(static_cast<std::uint64_t>(hi - lo) + 1)); }

    /// Fisher-Yates; self-contained so shuffles are reproducible across stdlibs.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[bounded(i)]);
        }
    }

    std::string serialize() const {
        std::ostringstream os;
        os << engine_;
        return os.str();
    }

    void deserialize(const std::string& s) {
        std::istringstream is(s);
        is >> engine_;
        if (!is) throw FormatError("bad rng state string");
    }

  private:
    std::mt19937_64 engine_;
};

/// Seed derivation for named substreams: every consumer of randomness hangs
/// off the root seed through a (name, counters) path, so adding or reordering
/// consumers never perturbs other streams.
inline std::uint64_t substream(std::uint64_t root, std::string_view name, std::uint64_t a = 0, std::uint64_t b = 0) {
    std::uint64_t h = fnv1a(&root, sizeof(root));
    h = fnv1a(name.data(), name.size(), h);
    h = fnv1a(&a, sizeof(a), h);
    h = fnv1a(&b, sizeof(b), h);
    // splitmix64 finalizer to spread fnv output over the full state space
    h += 0x9e3779b97f4a7c15ull;
    h = (h ^ (h >> 30)) * 0xbf58476d1ce4e5b9ull;
    h = (h ^ (h >> 27)) * 0x94d049bb133111ebull;
    return h ^ (h >> 31);
}

}  // namespace bbs
