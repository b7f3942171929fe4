// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The bbs authors

#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>

namespace bbs {

inline constexpr const char* kVersion = "0.1.0";

using cplx = std::complex<double>;
inline constexpr double kPi = std::numbers::pi;

/// Invalid configuration values (bad ranges, mismatched shapes at setup time).
struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Malformed or inconsistent on-disk artifacts.
struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Incompatible vector/matrix dimensions at call time.
struct DimensionError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Non-finite values produced while running a model.
struct InferenceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Diverged or otherwise unusable optimization state.
struct TrainingError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw ConfigError(msg);
}

inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }
inline double linear_to_db(double lin) { return 10.0 * std::log10(lin); }

/// FNV-1a, used for substream derivation and file integrity tags.
inline std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::uint64_t fnv1a(const std::string& s, std::uint64_t h = 0xcbf29ce484222325ull) {
    return fnv1a(s.data(), s.size(), h);
}

}  // namespace bbs
