// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The bbs authors

#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <string>

#include "bbs/common.hpp"

namespace bbs::diffusion {

template <typename S>
using Mat2X = Eigen::Matrix<S, 2, Eigen::Dynamic>;

enum class ScheduleKind { linear, cosine };

inline ScheduleKind schedule_kind_from_string(const std::string& s) {
    if (s == "linear") return ScheduleKind::linear;
    if (s == "cosine") return ScheduleKind::cosine;
    throw ConfigError("unknown schedule kind '" + s + "' (expected linear or cosine)");
}

/// Noise schedule with precomputed cumulative products. alpha_bar is indexed by
/// t in [0, T] with alpha_bar(0) == 1; betas and posterior variances by t in
/// [1, T]. Products are accumulated in long double before storing.
class NoiseSchedule {
  public:
    NoiseSchedule(Eigen::VectorXd betas) : betas_(std::move(betas)) {
        const int t_max = static_cast<int>(betas_.size());
        require(t_max >= 1, "NoiseSchedule: T must be >= 1");
        for (int t = 0; t < t_max; ++t) {
            require(betas_[t] > 0.0 && betas_[t] < 1.0, "NoiseSchedule: beta outside (0, 1)");
        }
        alpha_bars_.resize(t_max + 1);
        alpha_bars_[0] = 1.0;
        long double prod = 1.0L;
        for (int t = 1; t <= t_max; ++t) {
            prod *= (1.0L - static_cast<long double>(betas_[t - 1]));
            alpha_bars_[t] = static_cast<double>(prod);
        }
        posterior_vars_.resize(t_max);
        for (int t = 1; t <= t_max; ++t) {
            posterior_vars_[t - 1] = betas_[t - 1] * (1.0 - alpha_bars_[t - 1]) / (1.0 - alpha_bars_[t]);
        }
    }

    int T() const { return static_cast<int>(betas_.size()); }
    double beta(int t) const { return betas_[check(t) - 1]; }
    double alpha_bar(int t) const {
        if (t < 0 || t > T()) throw ConfigError("alpha_bar: t out of range [0, T]");
        return alpha_bars_[t];
    }
    double posterior_var(int t) const { return posterior_vars_[check(t) - 1]; }
    const Eigen::VectorXd& betas() const { return betas_; }

  private:
    int check(int t) const {
        if (t < 1 || t > T()) throw ConfigError("schedule access: t out of range [1, T]");
        return t;
    }

    Eigen::VectorXd betas_;
    Eigen::VectorXd alpha_bars_;      // index t in [0, T]
    Eigen::VectorXd posterior_vars_;  // index t-1 for t in [1, T]
};

inline NoiseSchedule make_schedule(int t_steps, ScheduleKind kind, double beta_start = 1e-4, double beta_end = 0.02) {
    require(t_steps >= 1, "make_schedule: T must be >= 1");
    require(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0,
            "make_schedule: need 0 < beta_start <= beta_end < 1");
    Eigen::VectorXd betas(t_steps);
    if (kind == ScheduleKind::linear) {
        if (t_steps == 1) {
            betas[0] = beta_start;
        } else {
            for (int t = 0; t < t_steps; ++t) {
                betas[t] = beta_start + (beta_end - beta_start) * t / (t_steps - 1.0);
            }
        }
    } else {
        const double s = 0.008;
        auto f = [&](double t) {
            const double v = std::cos((t / t_steps + s) / (1.0 + s) * kPi / 2.0);
            return v * v;
        };
        for (int t = 1; t <= t_steps; ++t) {
            betas[t - 1] = std::min(1.0 - f(static_cast<double>(t)) / f(static_cast<double>(t - 1)), 0.999);
        }
    }
    return NoiseSchedule(std::move(betas));
}

template <typename S>
void check_t(int t, const NoiseSchedule& sched, const char* op) {
    if (t < 1 || t > sched.T()) {
        throw ConfigError(std::string(op) + ": t=" + std::to_string(t) + " outside [1, " + std::to_string(sched.T()) + "]");
    }
}

/// X_t = sqrt(alpha_bar_t) * X0 + sqrt(1 - alpha_bar_t) * Z.
template <typename S>
Mat2X<S> forward_diffuse(const Mat2X<S>& x0, int t, const Mat2X<S>& z, const NoiseSchedule& sched) {
    check_t<S>(t, sched, "forward_diffuse");
    const double ab = sched.alpha_bar(t);
    return static_cast<S>(std::sqrt(ab)) * x0 + static_cast<S>(std::sqrt(1.0 - ab)) * z;
}

/// X0_hat = (X_t - sqrt(1 - alpha_bar_t) * Z_hat) / sqrt(alpha_bar_t).
template <typename S>
Mat2X<S> predict_x0(const Mat2X<S>& xt, const Mat2X<S>& z_hat, int t, const NoiseSchedule& sched) {
    check_t<S>(t, sched, "predict_x0");
    const double ab = sched.alpha_bar(t);
    return (xt - static_cast<S>(std::sqrt(1.0 - ab)) * z_hat) / static_cast<S>(std::sqrt(ab));
}

/// Posterior mean of X_{t-1} given (X_t, X0). At t=1 the X_t coefficient is 0
/// and the X0 coefficient is 1, so the result is X0 exactly.
template <typename S>
Mat2X<S> posterior_mean(const Mat2X<S>& xt, const Mat2X<S>& x0, int t, const NoiseSchedule& sched) {
    check_t<S>(t, sched, "posterior_mean");
    const double beta = sched.beta(t);
    const double ab_t = sched.alpha_bar(t);
    const double ab_prev = sched.alpha_bar(t - 1);
    const double c_xt = std::sqrt(1.0 - beta) * (1.0 - ab_prev) / (1.0 - ab_t);
    const double c_x0 = beta * std::sqrt(ab_prev) / (1.0 - ab_t);
    return static_cast<S>(c_xt) * xt + static_cast<S>(c_x0) * x0;
}

/// Deterministic reverse update:
/// X_{t-1} = (X_t - beta_t / sqrt(1 - alpha_bar_t) * Z_hat) / sqrt(1 - beta_t).
/// No noise is injected; generation diversity comes solely from the X_T draw.
template <typename S>
Mat2X<S> denoise_step(const Mat2X<S>& xt, const Mat2X<S>& z_hat, int t, const NoiseSchedule& sched) {
    check_t<S>(t, sched, "denoise_step");
    const double beta = sched.beta(t);
    const double ab_t = sched.alpha_bar(t);
    return (xt - static_cast<S>(beta / std::sqrt(1.0 - ab_t)) * z_hat) / static_cast<S>(std::sqrt(1.0 - beta));
}

/// Folds denoise_step from t=T down to 1. The predictor owns its conditioning;
/// it is called as predictor(X_t, t). Non-finite predictions abort with the
/// offending step in the message.
template <typename S, typename Predictor>
Mat2X<S> reverse_chain(Mat2X<S> x, const Predictor& predictor, const NoiseSchedule& sched) {
    for (int t = sched.T(); t >= 1; --t) {
        const Mat2X<S> z_hat = predictor(x, t);
        if (!z_hat.allFinite()) {
            throw InferenceError("reverse_chain: non-finite noise prediction at t=" + std::to_string(t) +
                                 ", max |entry| of state = " + std::to_string(x.cwiseAbs().maxCoeff()));
        }
        x = denoise_step<S>(x, z_hat, t, sched);
        if (!x.allFinite()) {
            throw InferenceError("reverse_chain: non-finite state at t=" + std::to_string(t - 1));
        }
    }
    return x;
}

}  // namespace bbs::diffusion
