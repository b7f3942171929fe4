// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The bbs authors

#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bbs/beams.hpp"
#include "bbs/common.hpp"
#include "bbs/denoiser.hpp"
#include "bbs/diffusion.hpp"
#include "bbs/latent.hpp"
#include "bbs/rng.hpp"
#include "bbs/sitegen.hpp"
#include "bbs/training.hpp"

namespace bbs::brainstorm {

/// Beam sweeping slots consumed: Q probes plus the M generated beams, except
/// that a single generated beam rides along with the probes.
inline int overhead(int q, int m) {
    require(q >= 1, "overhead: Q < 1");
    require(m >= 1, "overhead: M < 1");
    return m > 1 ? q + m : q;
}

struct BrainstormConfig {
    int m = 5;
    int q = 8;
    std::optional<double> snr_db;  // set -> noisy prompt measurements
    std::uint64_t seed = 1;
    int user_id = 0;      // substream tag so users decouple
    int chunk_chains = 1024;  // lockstep chains per network pass

    void validate() const {
        require(m >= 1, "brainstorm config: M < 1");
        require(q >= 1, "brainstorm config: Q < 1");
        require(chunk_chains >= 1, "brainstorm config: chunk_chains < 1");
    }
};

struct BrainstormResult {
    std::vector<beams::BeamformingVector> beams;
    std::vector<double> gains;
    int best_index = 0;
    double best_gain = 0.0;
    int overhead = 0;
};

namespace detail {

/// Standard-normal 2 x n start state for chain (user, m); the stream depends
/// only on (seed, user, m), so runs with different M share the first draws.
inline latent::Mat2Xd initial_noise(std::uint64_t seed, int user_id, int m_index, int n) {
    Rng rng(substream(seed, "xt", static_cast<std::uint64_t>(user_id), static_cast<std::uint64_t>(m_index)));
    latent::Mat2Xd x(2, n);
    for (int j = 0; j < n; ++j) {
        for (int r = 0; r < 2; ++r) {
            x(r, j) = rng.normal();
        }
    }
    return x;
}

}  // namespace detail

/// Runs all chains of one chunk in lockstep: every chain sits at the same
/// timestep, so each denoising step is one batched network pass.
/// x: 2 x (chains * n) float state, prompts: Q x chains.
inline void reverse_chain_batched(denoiser::UNet1d<float>& net, const diffusion::NoiseSchedule& sched, Eigen::MatrixXf& x,
                                  const Eigen::MatrixXf& prompts) {
    const int n = net.config().seq_len;
    const Eigen::Index chains = x.cols() / n;
    std::vector<int> ts(static_cast<size_t>(chains));
    for (int t = sched.T(); t >= 1; --t) {
        std::fill(ts.begin(), ts.end(), t);
        const Eigen::MatrixXf z_hat = net.forward(x, ts, prompts, false);
        const double beta = sched.beta(t);
        const double ab = sched.alpha_bar(t);
        x = (x - static_cast<float>(beta / std::sqrt(1.0 - ab)) * z_hat) / static_cast<float>(std::sqrt(1.0 - beta));
        if (!x.allFinite()) {
            for (Eigen::Index c = 0; c < chains; ++c) {
                if (!x.middleCols(c * n, n).allFinite()) {
                    throw InferenceError("reverse_chain_batched: non-finite state in chain " + std::to_string(c) + " at t=" +
                                         std::to_string(t - 1));
                }
            }
        }
    }
}

/// Generates M candidate beams for each user and scores them against the true
/// channel (a noiseless stand-in for the mini-sweep). Best beam wins, lowest
/// index on ties. cfg.user_id seeds the first user; users channels[i] use
/// user_ids[i] when given, else cfg.user_id + i.
inline std::vector<BrainstormResult> brainstorm_batch(std::span<const sitegen::Channel> channels, training::InferenceModel& model,
                                                      const BrainstormConfig& cfg, std::span<const int> user_ids = {}) {
    cfg.validate();
    const int n = model.config.net.seq_len;
    const int q = model.config.net.prompt_len;
    if (cfg.q != q) {
        throw ConfigError("brainstorm: configured Q=" + std::to_string(cfg.q) + " but model expects prompt length " + std::to_string(q));
    }
    require(cfg.q <= n, "brainstorm: Q exceeds antenna count");
    if (!user_ids.empty() && user_ids.size() != channels.size()) {
        throw DimensionError("brainstorm: user_ids size != channels size");
    }
    const int users = static_cast<int>(channels.size());
    const int m = cfg.m;

    sitegen::ArrayConfig array;
    array.num_antennas = n;
    const auto codebook = beams::dft_codebook(array);
    const auto probing = beams::select_probing_indices(n, q);
    const beams::LinkBudget budget;

    Eigen::MatrixXf prompt_cols(q, users);
    for (int u = 0; u < users; ++u) {
        const auto& ch = channels[static_cast<size_t>(u)];
        if (ch.h.size() != n) {
            throw ConfigError("brainstorm: channel has " + std::to_string(ch.h.size()) + " antennas but model expects " + std::to_string(n));
        }
        const int tag = user_ids.empty() ? cfg.user_id + u : user_ids[static_cast<size_t>(u)];
        beams::RsrpPrompt prompt;
        if (cfg.snr_db) {
            Rng prng(substream(cfg.seed, "prompt", static_cast<std::uint64_t>(tag)));
            prompt = beams::measure_rsrp(ch, codebook, probing, budget, true, &prng, cfg.snr_db);
        } else {
            prompt = beams::measure_rsrp(ch, codebook, probing, budget, false);
        }
        prompt_cols.col(u) = latent::normalize_prompt(prompt, model.stats).c.cast<float>();
    }

    std::vector<BrainstormResult> results(static_cast<size_t>(users));
    const int total_chains = users * m;
    for (int chunk_start = 0; chunk_start < total_chains; chunk_start += cfg.chunk_chains) {
        const int chunk = std::min(cfg.chunk_chains, total_chains - chunk_start);
        Eigen::MatrixXf x(2, static_cast<Eigen::Index>(chunk) * n);
        Eigen::MatrixXf prompts(q, chunk);
        for (int c = 0; c < chunk; ++c) {
            const int global = chunk_start + c;
            const int u = global / m;
            const int mi = global % m;
            const int tag = user_ids.empty() ? cfg.user_id + u : user_ids[static_cast<size_t>(u)];
            x.middleCols(static_cast<Eigen::Index>(c) * n, n) = detail::initial_noise(cfg.seed, tag, mi, n).cast<float>();
            prompts.col(c) = prompt_cols.col(u);
        }
        try {
            reverse_chain_batched(*model.net, *model.schedule, x, prompts);
        } catch (const InferenceError& e) {
            throw InferenceError(std::string(e.what()) + " (chunk starting at chain " + std::to_string(chunk_start) + ")");
        }
        for (int c = 0; c < chunk; ++c) {
            const int global = chunk_start + c;
            const int u = global / m;
            const latent::Mat2Xd model_mat = x.middleCols(static_cast<Eigen::Index>(c) * n, n).cast<double>();
            const auto beam = latent::from_latent(latent::from_model_matrix(model_mat));
            const double gain = beams::beam_gain(channels[static_cast<size_t>(u)], beam);
            results[static_cast<size_t>(u)].beams.push_back(beam);
            results[static_cast<size_t>(u)].gains.push_back(gain);
        }
    }

    for (int u = 0; u < users; ++u) {
        auto& r = results[static_cast<size_t>(u)];
        r.best_index = 0;
        for (int i = 1; i < m; ++i) {
            if (r.gains[static_cast<size_t>(i)] > r.gains[static_cast<size_t>(r.best_index)]) r.best_index = i;
        }
        r.best_gain = r.gains[static_cast<size_t>(r.best_index)];
        r.overhead = overhead(cfg.q, m);
    }
    return results;
}

inline BrainstormResult brainstorm(const sitegen::Channel& ch, training::InferenceModel& model, const BrainstormConfig& cfg) {
    const std::vector<sitegen::Channel> one{ch};
    return brainstorm_batch(std::span<const sitegen::Channel>(one), model, cfg).front();
}

}  // namespace bbs::brainstorm
