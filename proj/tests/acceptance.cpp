// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The bbs authors

// Acceptance gate. Prints one PASS/FAIL line per criterion and exits with the
// number of failed criteria.
//
//   bbs_acceptance [exact|network|desk|all]      (default: all)
//
//   exact    criterion 1: closed-form arithmetic, runs in seconds
//   network  criterion 2: gradient checks and tiny fits, < 5 min
//   desk     criteria 3-5: trains and evaluates the desk-scale pipeline,
//            roughly one to two hours on one CPU core
//
// The desk group keeps its artifacts in ./acceptance_ws. By default the
// workspace is rebuilt from scratch. Set BBS_ACCEPTANCE_REUSE=1 to keep
// whatever is already there (dataset, per-Q checkpoints, eval CSV) and only
// rebuild the missing pieces; only do that between runs with identical
// settings.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "bbs/evaluation.hpp"
#include "bbs/io.hpp"
#include "bbs/training.hpp"

#ifndef BBS_CLI_PATH
#define BBS_CLI_PATH ""
#endif

namespace fs = std::filesystem;
using bbs::Rng;
using MatD = bbs::diffusion::Mat2X<double>;

namespace {

std::string num(double v) {
    std::ostringstream o;
    o.precision(4);
    o << v;
    return o.str();
}

/// Collects sub-checks and prints each as an indented ok/FAIL line.
struct Checker {
    bool all = true;
    int count = 0;

    void is(bool ok, const std::string& msg) {
        std::cout << "    " << (ok ? "ok  " : "FAIL") << ": " << msg << '\n';
        all = all && ok;
        ++count;
    }
};

bool run_criterion(int idx, const std::string& title, const std::function<void(Checker&)>& body) {
    std::cout << "criterion " << idx << " [" << title << "]\n";
    Checker c;
    try {
        body(c);
    } catch (const std::exception& e) {
        c.is(false, std::string("unexpected error: ") + e.what());
    }
    const bool pass = c.all && c.count > 0;
    std::cout << "criterion " << idx << ": " << (pass ? "PASS" : "FAIL") << '\n';
    return pass;
}

double seconds_since(const std::chrono::steady_clock::time_point& t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

MatD random_mat2(Eigen::Index cols, Rng& rng) {
    MatD m(2, cols);
    for (Eigen::Index j = 0; j < cols; ++j) {
        m(0, j) = rng.normal();
        m(1, j) = rng.normal();
    }
    return m;
}

// ---------------------------------------------------------------------------
// criterion 1: exact math
// ---------------------------------------------------------------------------

void criterion_exact(Checker& c) {
    // latent roundtrip and beam constraints over 1000 random channels
    double worst_elem = 0.0, worst_gain = 0.0, worst_scale = 0.0, worst_cm = 0.0, worst_norm = 0.0;
    int total = 0;
    auto track_beam = [&](const bbs::beams::BeamformingVector& v) {
        const double target = 1.0 / std::sqrt(static_cast<double>(v.w.size()));
        for (Eigen::Index i = 0; i < v.w.size(); ++i) {
            worst_cm = std::max(worst_cm, std::abs(std::abs(v.w[i]) - target));
        }
        worst_norm = std::max(worst_norm, std::abs(v.w.norm() - 1.0));
    };
    for (int n : {16, 32, 64}) {
        bbs::sitegen::ArrayConfig array;
        array.num_antennas = n;
        const int users = (n == 16) ? 334 : 333;
        const auto site = bbs::sitegen::generate_synthetic_site(array, users, bbs::sitegen::default_geometry(),
                                                                static_cast<std::uint64_t>(40 + n), 0.8);
        const auto codebook = bbs::beams::dft_codebook(site.array);
        for (const auto& b : codebook.beams) track_beam(b);
        for (const auto& ch : site.channels) {
            const auto mrt = bbs::beams::mrt_beamformer(ch);
            const auto lat = bbs::latent::to_latent(ch);
            const auto rt = bbs::latent::from_latent(lat.X);
            worst_elem = std::max(worst_elem, (rt.w - mrt.w).cwiseAbs().maxCoeff());
            const double gm = bbs::beams::beam_gain(ch, mrt);
            const double gr = bbs::beams::beam_gain(ch, rt);
            worst_gain = std::max(worst_gain, std::abs(gr - gm) / gm);
            const auto back = bbs::latent::from_model_matrix(bbs::latent::to_model_matrix(lat));
            worst_scale = std::max(worst_scale, (back - lat.X).cwiseAbs().maxCoeff());
            track_beam(mrt);
            track_beam(rt);
            ++total;
        }
    }
    c.is(total == 1000 && worst_elem <= 1e-9,
         "latent roundtrip equals the phase beamformer on " + std::to_string(total) + " channels, max elementwise err " +
             num(worst_elem) + " (tol 1e-9)");
    c.is(worst_gain <= 1e-9, "roundtrip beam gain matches, max relative err " + num(worst_gain) + " (tol 1e-9)");
    c.is(worst_scale <= 1e-12, "model-space scaling inverts, max err " + num(worst_scale) + " (tol 1e-12)");
    c.is(worst_cm <= 1e-12 && worst_norm <= 1e-12,
         "every emitted beam is constant modulus with unit power, max modulus err " + num(worst_cm) + ", max norm err " +
             num(worst_norm) + " (tol 1e-12)");

    // one-step reverse update vs the posterior-mean composition, and the
    // closed-form inversions, on 10^4 random tuples
    const auto sched = bbs::diffusion::make_schedule(1000, bbs::diffusion::ScheduleKind::linear);
    Rng rng(99);
    double worst_step = 0.0, worst_inv = 0.0, worst_post = 0.0;
    for (int i = 0; i < 10000; ++i) {
        const MatD xt = random_mat2(1, rng);
        const MatD zh = random_mat2(1, rng);
        const MatD x0 = random_mat2(1, rng);
        const int t = rng.uniform_int(1, sched.T());
        const MatD direct = bbs::diffusion::denoise_step(xt, zh, t, sched);
        const MatD composed = bbs::diffusion::posterior_mean(xt, bbs::diffusion::predict_x0(xt, zh, t, sched), t, sched);
        worst_step = std::max(worst_step, (direct - composed).cwiseAbs().maxCoeff());
        const MatD diffused = bbs::diffusion::forward_diffuse(x0, t, zh, sched);
        worst_inv = std::max(worst_inv, (bbs::diffusion::predict_x0(diffused, zh, t, sched) - x0).cwiseAbs().maxCoeff());
        worst_post = std::max(worst_post, (bbs::diffusion::posterior_mean(xt, x0, 1, sched) - x0).cwiseAbs().maxCoeff());
    }
    c.is(worst_step <= 1e-10,
         "deterministic reverse step equals predict-x0 + posterior mean on 10000 tuples, max err " + num(worst_step) +
             " (tol 1e-10)");
    c.is(worst_inv <= 1e-12, "predict_x0 inverts forward_diffuse, max err " + num(worst_inv) + " (tol 1e-12)");
    c.is(worst_post <= 1e-12, "posterior mean at t=1 returns x0, max err " + num(worst_post) + " (tol 1e-12)");

    // analytic-oracle reverse chain over the full schedule
    const MatD x0 = random_mat2(64, rng);
    const MatD z = random_mat2(64, rng);
    const MatD xT = bbs::diffusion::forward_diffuse(x0, sched.T(), z, sched);
    const auto oracle = [&](const MatD& x, int t) -> MatD {
        const double ab = sched.alpha_bar(t);
        return (x - std::sqrt(ab) * x0) / std::sqrt(1.0 - ab);
    };
    const MatD recovered = bbs::diffusion::reverse_chain(xT, oracle, sched);
    const double chain_err = (recovered - x0).cwiseAbs().maxCoeff();
    c.is(chain_err <= 1e-6, "oracle reverse chain over T=1000 recovers x0, max err " + num(chain_err) + " (tol 1e-6)");

    // probing overhead arithmetic
    c.is(bbs::brainstorm::overhead(9, 5) == 14 && bbs::evaluation::pct_change_1dp(64.0, 14.0) == -78.1,
         "overhead (Q=9, M=5) -> 14 probes, -78.1% against a 64-beam sweep");
    c.is(bbs::brainstorm::overhead(64, 5) == 69 && bbs::evaluation::pct_change_1dp(64.0, 69.0) == 7.8,
         "overhead (Q=64, M=5) -> 69 probes, +7.8% against a 64-beam sweep");
    bool m1_rule = true;
    for (int q : {1, 4, 9, 16, 64}) m1_rule = m1_rule && bbs::brainstorm::overhead(q, 1) == q;
    c.is(m1_rule, "a single generated beam costs exactly the Q probes");
}

// ---------------------------------------------------------------------------
// criterion 2: network correctness
// ---------------------------------------------------------------------------

bbs::denoiser::DenoiserConfig tiny_net() {
    bbs::denoiser::DenoiserConfig cfg;
    cfg.in_channels = 2;
    cfg.level_channels = {4, 8};
    cfg.attention_heads = 2;
    cfg.embed_dim = 8;
    cfg.prompt_len = 3;
    cfg.seq_len = 8;
    cfg.attention_levels = -1;
    return cfg;
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6}); }

void criterion_network(Checker& c) {
    // central-difference check of every parameter and the input, fp64
    {
        Rng rng(23);
        bbs::denoiser::UNet1d<double> net(tiny_net(), rng);
        for (auto& v : net.params()) {
            if (v.name.rfind("out.", 0) == 0) {
                for (Eigen::Index j = 0; j < v.value->cols(); ++j) {
                    for (Eigen::Index i = 0; i < v.value->rows(); ++i) (*v.value)(i, j) = rng.normal() * 0.3;
                }
            }
        }
        const int batch = 2;
        MatD x = random_mat2(batch * 8, rng);
        Eigen::MatrixXd prompts(3, batch);
        for (int j = 0; j < batch; ++j) {
            for (int i = 0; i < 3; ++i) prompts(i, j) = rng.normal();
        }
        const std::vector<int> t{3, 150};
        const MatD proj = random_mat2(batch * 8, rng);
        const auto loss = [&]() { return net.forward(x, t, prompts, false).cwiseProduct(proj).sum(); };

        net.zero_grad();
        net.forward(x, t, prompts, true);
        const Eigen::MatrixXd dx = net.backward(proj);

        const double h = 1e-6;
        double worst = 0.0;
        for (auto& v : net.params()) {
            for (Eigen::Index j = 0; j < v.value->cols(); ++j) {
                for (Eigen::Index i = 0; i < v.value->rows(); ++i) {
                    const double orig = (*v.value)(i, j);
                    (*v.value)(i, j) = orig + h;
                    const double lp = loss();
                    (*v.value)(i, j) = orig - h;
                    const double lm = loss();
                    (*v.value)(i, j) = orig;
                    worst = std::max(worst, rel_err((lp - lm) / (2.0 * h), (*v.grad)(i, j)));
                }
            }
        }
        for (Eigen::Index j = 0; j < x.cols(); ++j) {
            for (Eigen::Index i = 0; i < x.rows(); ++i) {
                const double orig = x(i, j);
                x(i, j) = orig + h;
                const double lp = loss();
                x(i, j) = orig - h;
                const double lm = loss();
                x(i, j) = orig;
                worst = std::max(worst, rel_err((lp - lm) / (2.0 * h), dx(i, j)));
            }
        }
        c.is(worst <= 1e-3, "finite differences vs backprop over all " + std::to_string(net.num_params()) +
                                " parameters and the input, max relative err " + num(worst) + " (tol 1e-3)");
    }

    // a fixed (x0, t, z) example must be memorized quickly
    {
        Rng rng(31);
        bbs::denoiser::UNet1d<double> net(tiny_net(), rng);
        const auto sched = bbs::diffusion::make_schedule(10, bbs::diffusion::ScheduleKind::linear);
        const MatD x0 = random_mat2(8, rng);
        const MatD z = random_mat2(8, rng);
        const int t = 5;
        const MatD xt = bbs::diffusion::forward_diffuse(x0, t, z, sched);
        Eigen::MatrixXd prompt(3, 1);
        prompt << 0.3, -0.8, 1.1;
        const double numel = static_cast<double>(z.size());

        bbs::training::Adam<double> adam(1e-2);
        adam.init(net.params());
        double loss = std::numeric_limits<double>::infinity();
        int steps = 0;
        while (steps < 2000) {
            const MatD y = net.forward(xt, {t}, prompt, true);
            const MatD d = y - z;
            loss = d.squaredNorm() / numel;
            if (loss < 1e-3) break;
            net.zero_grad();
            net.backward((2.0 / numel) * d);
            adam.step(net.params());
            ++steps;
        }
        c.is(loss < 1e-3, "single-sample overfit reaches loss " + num(loss) + " after " + std::to_string(steps) +
                              " updates (target < 1e-3 within 2000)");
    }

    // noise has unit variance, and the output conv starts at zero, so the
    // first batch loss of an untrained model is 1 up to sampling error
    {
        bbs::sitegen::ArrayConfig array;
        array.num_antennas = 16;
        const auto site = bbs::sitegen::generate_synthetic_site(array, 400, bbs::sitegen::default_geometry(), 123, 0.8);
        const auto set = bbs::training::build_training_set(site, 4);

        bbs::training::TrainConfig cfg;
        cfg.epochs = 1;
        cfg.batch_size = 256;
        cfg.ema_decay = 0.9;
        cfg.diffusion_steps = 10;
        cfg.seed = 31;
        cfg.net = tiny_net();
        cfg.net.prompt_len = 4;
        cfg.net.seq_len = 16;
        cfg.net.attention_levels = 1;

        bbs::training::Trainer<float> trainer(cfg, set.stats);
        const auto records = trainer.train_epoch(set);
        const double first = records.at(0).loss;
        c.is(std::abs(first - 1.0) <= 0.05,
             "zero-initialized model: first 256-sample batch loss " + num(first) + " = 1.0 +- 0.05");
    }
}

// ---------------------------------------------------------------------------
// criteria 3-5: desk-scale pipeline
// ---------------------------------------------------------------------------

struct DeskArtifacts {
    std::vector<bbs::evaluation::GainRecord> records;
    fs::path eval_csv;
};

bbs::training::TrainConfig desk_train_config(int q) {
    bbs::training::TrainConfig cfg;
    cfg.epochs = 60;
    cfg.diffusion_steps = 200;
    cfg.net.level_channels = {32, 64, 128};
    cfg.net.seq_len = 32;
    cfg.net.attention_levels = 2;
    cfg.net.prompt_len = q;
    cfg.seed = 1000 + static_cast<std::uint64_t>(q);
    return cfg;
}

DeskArtifacts build_desk_artifacts() {
    const fs::path ws = "acceptance_ws";
    const char* reuse_env = std::getenv("BBS_ACCEPTANCE_REUSE");
    const bool reuse = reuse_env != nullptr && std::string(reuse_env) == "1";
    if (!reuse) fs::remove_all(ws);
    fs::create_directories(ws / "models");

    // dataset: clustered site, N=32, 5000 users, 80/20 split
    const fs::path data_dir = ws / "data";
    if (!fs::exists(data_dir / "channels.bin")) {
        const auto t0 = std::chrono::steady_clock::now();
        bbs::sitegen::ArrayConfig array;
        array.num_antennas = 32;
        const auto site = bbs::sitegen::generate_synthetic_site(array, 5000, bbs::sitegen::default_geometry(), 2026, 0.8);
        bbs::sitegen::save_site(site, data_dir.string());
        std::cout << "  [desk] generated site: 5000 users, 32 antennas (" << num(seconds_since(t0)) << " s)\n";
    } else {
        std::cout << "  [desk] reusing dataset " << data_dir.string() << '\n';
    }
    const auto site = bbs::sitegen::load_site(data_dir.string());

    // one denoiser per prompt length
    for (int q : {4, 8, 16}) {
        const fs::path ckpt = ws / "models" / bbs::evaluation::model_checkpoint_name(q);
        if (fs::exists(ckpt)) {
            std::cout << "  [desk] reusing " << ckpt.string() << '\n';
            continue;
        }
        const auto t0 = std::chrono::steady_clock::now();
        const auto cfg = desk_train_config(q);
        const auto set = bbs::training::build_training_set(site, q);
        bbs::training::Trainer<float> trainer(cfg, set.stats);
        for (int e = 0; e < cfg.epochs; ++e) {
            const auto recs = trainer.train_epoch(set);
            double sum = 0.0;
            for (const auto& r : recs) sum += r.loss;
            std::cout << "  [desk] q=" << q << " epoch " << trainer.epoch() << "/" << cfg.epochs
                      << " mean_loss=" << num(sum / static_cast<double>(recs.size())) << '\n';
        }
        trainer.save_checkpoint(ckpt.string());
        std::cout << "  [desk] trained " << ckpt.string() << " (" << num(seconds_since(t0)) << " s)\n";
    }

    // parameter-matched regression baseline at Q=8
    const fs::path disc_path = ws / "models" / bbs::evaluation::regressor_checkpoint_name(8);
    if (!fs::exists(disc_path)) {
        const auto t0 = std::chrono::steady_clock::now();
        auto ref = bbs::training::Trainer<float>::load_checkpoint((ws / "models" / bbs::evaluation::model_checkpoint_name(8)).string());
        bbs::evaluation::RegressorConfig rc;
        rc.prompt_len = 8;
        rc.seq_len = 32;
        rc.hidden = bbs::evaluation::matched_hidden_width(ref.net().num_params(), rc.prompt_len, rc.seq_len);
        rc.epochs = 60;
        rc.batch_size = 32;
        rc.seed = 1008;
        const auto set = bbs::training::build_training_set(site, 8);
        bbs::evaluation::MlpRegressor disc(rc);
        const double final_loss = disc.train(set);
        disc.save(disc_path.string());
        std::cout << "  [desk] trained regressor hidden=" << rc.hidden << " params=" << disc.num_params()
                  << " final_loss=" << num(final_loss) << (disc.diverged() ? " (diverged)" : "") << " ("
                  << num(seconds_since(t0)) << " s)\n";
    } else {
        std::cout << "  [desk] reusing " << disc_path.string() << '\n';
    }

    // evaluation sweep: noiseless across Q and M, then the SNR pair at Q=8
    DeskArtifacts art;
    art.eval_csv = ws / "eval" / "eval.csv";
    if (fs::exists(art.eval_csv)) {
        std::cout << "  [desk] reusing " << art.eval_csv.string() << '\n';
        art.records = bbs::evaluation::read_gain_csv(art.eval_csv.string());
    } else {
        const auto t0 = std::chrono::steady_clock::now();
        bbs::evaluation::SweepSpec spec;
        spec.q_list = {4, 8, 16};
        spec.m_list = {1, 5, 8};
        spec.snr_list = {std::nullopt};
        spec.seed = 77;
        spec.dataset_dir = data_dir.string();
        spec.model_dir = (ws / "models").string();
        spec.max_users = 500;
        std::cout << "  [desk] evaluating noiseless cells (Q x M grid, 500 users)\n";
        auto clean = bbs::evaluation::run_sweep(spec);
        if (!clean.skipped_q.empty()) throw bbs::ConfigError("desk sweep skipped a Q cell despite training");

        bbs::evaluation::SweepSpec noisy = spec;
        noisy.q_list = {8};
        noisy.m_list = {5};
        noisy.snr_list = {10.0, 30.0};
        std::cout << "  [desk] evaluating noisy prompts at Q=8, SNR {10, 30} dB\n";
        auto snr = bbs::evaluation::run_sweep(noisy);

        art.records = std::move(clean.records);
        art.records.insert(art.records.end(), snr.records.begin(), snr.records.end());
        fs::create_directories(ws / "eval");
        bbs::evaluation::write_gain_csv(art.records, art.eval_csv.string());
        std::cout << "  [desk] wrote " << art.records.size() << " records (" << num(seconds_since(t0)) << " s)\n";
    }
    return art;
}

using UserMap = std::map<int, double>;

UserMap cell(const std::vector<bbs::evaluation::GainRecord>& recs, const std::string& method, int q, int m,
             std::optional<double> snr) {
    UserMap out;
    for (const auto& r : recs) {
        if (r.method == method && r.q == q && r.m == m && r.snr_db == snr) out[r.user_id] = r.norm_gain_db;
    }
    return out;
}

std::vector<double> values(const UserMap& m) {
    std::vector<double> v;
    v.reserve(m.size());
    for (const auto& [uid, g] : m) v.push_back(g);
    return v;
}

/// Pairs two per-user maps on the shared user ids, preserving order.
std::pair<std::vector<double>, std::vector<double>> aligned(const UserMap& a, const UserMap& b) {
    std::vector<double> va, vb;
    for (const auto& [uid, ga] : a) {
        const auto it = b.find(uid);
        if (it != b.end()) {
            va.push_back(ga);
            vb.push_back(it->second);
        }
    }
    return {va, vb};
}

void criterion_desk_learning(const DeskArtifacts& art, Checker& c) {
    const auto bbs_q8_m5 = cell(art.records, bbs::evaluation::kMethodBbs, 8, 5, std::nullopt);
    const auto bbs_q8_m1 = cell(art.records, bbs::evaluation::kMethodBbs, 8, 1, std::nullopt);
    const auto bbs_q8_m8 = cell(art.records, bbs::evaluation::kMethodBbs, 8, 8, std::nullopt);
    const auto probing_q8 = cell(art.records, bbs::evaluation::kMethodProbingBest, 8, 0, std::nullopt);
    const auto disc_q8 = cell(art.records, bbs::evaluation::kMethodDiscriminative, 8, 0, std::nullopt);

    c.is(bbs_q8_m5.size() == 500 && probing_q8.size() == 500 && disc_q8.size() == 500,
         "500 test users evaluated per cell (got " + std::to_string(bbs_q8_m5.size()) + "/" +
             std::to_string(probing_q8.size()) + "/" + std::to_string(disc_q8.size()) + ")");

    const double med_bbs = bbs::stats::median(values(bbs_q8_m5));
    const double med_probe = bbs::stats::median(values(probing_q8));
    c.is(med_bbs - med_probe >= 1.0, "BBS (Q=8, M=5) median normalized gain " + num(med_bbs) +
                                         " dB beats probing-best " + num(med_probe) + " dB by " +
                                         num(med_bbs - med_probe) + " dB (required >= 1 dB)");

    int violations = 0;
    for (const auto& [uid, g1] : bbs_q8_m1) {
        const auto it5 = bbs_q8_m5.find(uid);
        const auto it8 = bbs_q8_m8.find(uid);
        if (it5 == bbs_q8_m5.end() || it8 == bbs_q8_m8.end() || g1 > it5->second || it5->second > it8->second) ++violations;
    }
    c.is(violations == 0, "per-user gain is non-decreasing in M over {1, 5, 8} (violations: " + std::to_string(violations) + ")");

    const auto [m5, m1] = aligned(bbs_q8_m5, bbs_q8_m1);
    const auto ci_m = bbs::stats::bootstrap_paired_median_diff(m5, m1, 2000, 4242);
    c.is(ci_m.lo > 0.0, "M=5 beats M=1 by " + num(ci_m.point) + " dB median, 95% CI [" + num(ci_m.lo) + ", " + num(ci_m.hi) +
                            "] excludes 0");

    const double med_disc = bbs::stats::median(values(disc_q8));
    c.is(med_bbs > med_disc, "BBS (Q=8, M=5) median " + num(med_bbs) + " dB strictly beats the parameter-matched regressor " +
                                 num(med_disc) + " dB");

    std::vector<double> qs, gains;
    for (int q : {4, 8, 16}) {
        for (const auto& [uid, g] : cell(art.records, bbs::evaluation::kMethodBbs, q, 5, std::nullopt)) {
            qs.push_back(static_cast<double>(q));
            gains.push_back(g);
        }
    }
    const auto sp = bbs::stats::spearman(qs, gains);
    c.is(sp.rho > 0.0 && sp.p_value < 0.05, "gain rises with Q over {4, 8, 16}: Spearman rho " + num(sp.rho) + ", p " +
                                                num(sp.p_value) + " (required rho > 0, p < 0.05)");
}

void criterion_desk_snr(const DeskArtifacts& art, Checker& c) {
    const auto g30 = cell(art.records, bbs::evaluation::kMethodBbs, 8, 5, 30.0);
    const auto g10 = cell(art.records, bbs::evaluation::kMethodBbs, 8, 5, 10.0);
    c.is(g30.size() == 500 && g10.size() == 500, "noisy-prompt cells cover 500 users (got " + std::to_string(g30.size()) +
                                                     "/" + std::to_string(g10.size()) + ")");
    const auto [a, b] = aligned(g30, g10);
    // The claim is an ordering with equality allowed, so the gate checks the
    // observed medians in order and that the bootstrap cannot refute the
    // ordering; demanding a strictly positive CI would reject a model that is
    // simply insensitive to prompt noise.
    const auto ci = bbs::stats::bootstrap_paired_median_diff(a, b, 2000, 777);
    const double med30 = bbs::stats::median(a);
    const double med10 = bbs::stats::median(b);
    c.is(ci.point >= 0.0, "median gain " + num(med30) + " dB at SNR 30 dB >= " + num(med10) + " dB at SNR 10 dB (diff " +
                              num(ci.point) + " dB)");
    c.is(ci.hi >= 0.0, "95% bootstrap CI of the difference [" + num(ci.lo) + ", " + num(ci.hi) +
                           "] does not refute the ordering (upper bound >= 0)");
}

void criterion_desk_report(const DeskArtifacts& art, Checker& c) {
    const fs::path ws = "acceptance_ws";
    const fs::path report_dir = ws / "report";
    fs::remove_all(report_dir);
    const fs::path log = ws / "report_log.txt";
    const std::string cmd =
        std::string(BBS_CLI_PATH) + " report --csv " + art.eval_csv.string() + " --out " + report_dir.string() + " > " +
        log.string() + " 2>&1";
    const int rc = std::system(cmd.c_str());
    const bool exited_ok = rc != -1 && WIFEXITED(rc) && WEXITSTATUS(rc) == 0;
    c.is(exited_ok, std::string("report command succeeds (") + BBS_CLI_PATH + " report)");
    if (!exited_ok) {
        if (fs::exists(log)) std::cout << bbs::io::slurp(log) << '\n';
        return;
    }

    const fs::path md_path = report_dir / "report.md";
    c.is(fs::exists(md_path), "report.md exists");
    const std::string md = fs::exists(md_path) ? bbs::io::slurp(md_path) : std::string();
    c.is(md.find("## Median normalized gain (dB), noiseless prompts") != std::string::npos, "gain table section present");
    c.is(md.find("## Overhead vs exhaustive sweep") != std::string::npos, "overhead table section present");
    c.is(md.find("## Median normalized gain (dB) vs prompt SNR") != std::string::npos, "SNR table section present");
    c.is(md.find("NOT desk-scale reproducible") != std::string::npos,
         "report states that published full-scale absolute numbers are NOT desk-scale reproducible");
    c.is(fs::exists(report_dir / "gain_vs_q.svg") && fs::exists(report_dir / "gain_vs_snr.svg"),
         "gain-vs-Q and gain-vs-SNR figures rendered");
}

int run_desk_group() {
    DeskArtifacts art;
    std::string build_error;
    try {
        art = build_desk_artifacts();
    } catch (const std::exception& e) {
        build_error = e.what();
        std::cout << "  [desk] artifact build failed: " << build_error << '\n';
    }
    const auto gated = [&](const std::function<void(Checker&)>& body) {
        return [&, body](Checker& c) {
            if (!build_error.empty()) {
                c.is(false, "desk artifacts unavailable: " + build_error);
                return;
            }
            body(c);
        };
    };
    int failures = 0;
    failures += run_criterion(3, "desk-scale learning: generated beams vs baselines over 500 seeded test users",
                              gated([&](Checker& c) { criterion_desk_learning(art, c); }))
                    ? 0
                    : 1;
    failures += run_criterion(4, "noisy-prompt robustness: higher prompt SNR does not hurt the median gain",
                              gated([&](Checker& c) { criterion_desk_snr(art, c); }))
                    ? 0
                    : 1;
    failures += run_criterion(5, "report renders the published table/figure structure from the desk-scale run",
                              gated([&](Checker& c) { criterion_desk_report(art, c); }))
                    ? 0
                    : 1;
    return failures;
}

}  // namespace

int main(int argc, char** argv) {
    const std::string group = (argc > 1) ? argv[1] : "all";
    if (group != "exact" && group != "network" && group != "desk" && group != "all") {
        std::cerr << "usage: bbs_acceptance [exact|network|desk|all]\n";
        return 2;
    }
    std::cout.setf(std::ios::unitbuf);
    Eigen::setNbThreads(1);

    int failures = 0;
    if (group == "exact" || group == "all") {
        failures += run_criterion(1, "exact math: latent roundtrip, diffusion algebra, beam constraints, overhead",
                                  criterion_exact)
                        ? 0
                        : 1;
    }
    if (group == "network" || group == "all") {
        failures += run_criterion(2, "network correctness: gradients, single-sample overfit, calibrated initial loss",
                                  criterion_network)
                        ? 0
                        : 1;
    }
    if (group == "desk" || group == "all") {
        failures += run_desk_group();
    }

    if (failures == 0) {
        std::cout << "acceptance: all selected criteria passed\n";
    } else {
        std::cout << "acceptance: " << failures << " criterion(s) failed\n";
    }
    return failures;
}
