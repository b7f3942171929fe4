// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The bbs authors

#pragma once

#include <Eigen/Dense>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "bbs/beams.hpp"
#include "bbs/checkpoint.hpp"
#include "bbs/common.hpp"
#include "bbs/denoiser.hpp"
#include "bbs/diffusion.hpp"
#include "bbs/latent.hpp"
#include "bbs/rng.hpp"
#include "bbs/sitegen.hpp"

namespace bbs::training {

using nlohmann::json;
using denoiser::Mat;
using denoiser::ParamView;

struct TrainConfig {
    int epochs = 60;
    int batch_size = 32;
    double learning_rate = 1e-4;
    double ema_decay = 0.995;
    int diffusion_steps = 200;
    std::string schedule = "linear";
    double beta_start = 1e-4;
    double beta_end = 0.02;
    std::uint64_t seed = 1;
    int checkpoint_interval = 10;  // epochs between periodic saves
    denoiser::DenoiserConfig net;

    void validate() const {
        require(epochs >= 1, "train config: epochs < 1");
        require(batch_size >= 1, "train config: batch_size < 1");
        require(learning_rate > 0.0, "train config: learning_rate <= 0");
        require(ema_decay > 0.0 && ema_decay < 1.0, "train config: ema_decay outside (0,1)");
        require(diffusion_steps >= 1, "train config: diffusion_steps < 1");
        require(checkpoint_interval >= 1, "train config: checkpoint_interval < 1");
        diffusion::schedule_kind_from_string(schedule);
        net.validate();
    }

    json to_json() const {
        return json{{"epochs", epochs},
                    {"batch_size", batch_size},
                    {"learning_rate", learning_rate},
                    {"ema_decay", ema_decay},
                    {"diffusion_steps", diffusion_steps},
                    {"schedule", schedule},
                    {"beta_start", beta_start},
                    {"beta_end", beta_end},
                    {"seed", seed},
                    {"checkpoint_interval", checkpoint_interval},
                    {"net", net.to_json()}};
    }

    static TrainConfig from_json(const json& j) {
        TrainConfig c;
        c.epochs = j.at("epochs").get<int>();
        c.batch_size = j.at("batch_size").get<int>();
        c.learning_rate = j.at("learning_rate").get<double>();
        c.ema_decay = j.at("ema_decay").get<double>();
        c.diffusion_steps = j.at("diffusion_steps").get<int>();
        c.schedule = j.at("schedule").get<std::string>();
        c.beta_start = j.at("beta_start").get<double>();
        c.beta_end = j.at("beta_end").get<double>();
        c.seed = j.at("seed").get<std::uint64_t>();
        c.checkpoint_interval = j.at("checkpoint_interval").get<int>();
        c.net = denoiser::DenoiserConfig::from_json(j.at("net"));
        c.validate();
        return c;
    }

    diffusion::NoiseSchedule make_noise_schedule() const {
        return diffusion::make_schedule(diffusion_steps, diffusion::schedule_kind_from_string(schedule), beta_start, beta_end);
    }
};

struct TrainingRecord {
    int epoch = 0;
    std::int64_t step = 0;
    double loss = 0.0;
    double grad_norm = 0.0;
    double wall_time = 0.0;
};

inline void append_training_csv(const std::string& path, const std::vector<TrainingRecord>& records) {
    const bool fresh = !std::ifstream(path).good();
    std::ofstream out(path, std::ios::app);
    if (!out) throw FormatError("training log: cannot open " + path);
    if (fresh) out << "epoch,step,loss,grad_norm,time_s\n";
    for (const auto& r : records) {
        out << r.epoch << ',' << r.step << ',' << r.loss << ',' << r.grad_norm << ',' << r.wall_time << '\n';
    }
}

/// Latents and conditioning prompts for the training split. Latents are in
/// model space (phases over pi, max-scaled amplitudes); prompts are noiseless
/// RSRP measurements normalized with statistics fit on this same split.
struct TrainingSet {
    Eigen::MatrixXf x0;       // 2 x (count * seq_len)
    Eigen::MatrixXf prompts;  // prompt_len x count
    latent::PromptStats stats;
    std::vector<int> user_ids;
    int seq_len = 0;

    int count() const { return static_cast<int>(user_ids.size()); }
};

inline TrainingSet build_training_set(const sitegen::SiteDataset& site, int prompt_len) {
    const auto [train_idx, test_idx] = sitegen::split_train_test(site);
    (void)test_idx;
    require(!train_idx.empty(), "build_training_set: empty training split");
    const int n = site.array.num_antennas;
    const auto codebook = beams::dft_codebook(site.array);
    const auto probing = beams::select_probing_indices(n, prompt_len);
    const beams::LinkBudget budget;

    std::vector<beams::RsrpPrompt> raw;
    raw.reserve(train_idx.size());
    for (int u : train_idx) {
        raw.push_back(beams::measure_rsrp(site.channels[static_cast<size_t>(u)], codebook, probing, budget, false));
    }
    TrainingSet set;
    set.stats = latent::fit_prompt_stats(raw);
    set.seq_len = n;
    set.user_ids.assign(train_idx.begin(), train_idx.end());
    const int count = static_cast<int>(train_idx.size());
    set.x0.resize(2, static_cast<Eigen::Index>(count) * n);
    set.prompts.resize(prompt_len, count);
    for (int i = 0; i < count; ++i) {
        const auto& ch = site.channels[static_cast<size_t>(train_idx[static_cast<size_t>(i)])];
        const latent::Mat2Xd x0 = latent::to_model_matrix(latent::to_latent(ch));
        set.x0.middleCols(static_cast<Eigen::Index>(i) * n, n) = x0.cast<float>();
        const auto norm = latent::normalize_prompt(raw[static_cast<size_t>(i)], set.stats);
        set.prompts.col(i) = norm.c.cast<float>();
    }
    return set;
}

/// Adam with bias correction; first/second moments live in the scalar type of
/// the parameters so a float checkpoint round trip is bit-exact.
template <typename S>
class Adam {
  public:
    Adam() = default;
    Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void init(const std::vector<ParamView<S>>& params) {
        m_.clear();
        v_.clear();
        for (const auto& p : params) {
            m_.push_back(Mat<S>::Zero(p.value->rows(), p.value->cols()));
            v_.push_back(Mat<S>::Zero(p.value->rows(), p.value->cols()));
        }
        t_ = 0;
    }

    void step(std::vector<ParamView<S>>& params) {
        require(m_.size() == params.size(), "adam: not initialized for this parameter set");
        ++t_;
        const S b1 = static_cast<S>(beta1_), b2 = static_cast<S>(beta2_);
        const S corr1 = static_cast<S>(1.0 - std::pow(beta1_, static_cast<double>(t_)));
        const S corr2 = static_cast<S>(1.0 - std::pow(beta2_, static_cast<double>(t_)));
        const S lr = static_cast<S>(lr_), eps = static_cast<S>(eps_);
        for (size_t i = 0; i < params.size(); ++i) {
            const Mat<S>& g = *params[i].grad;
            m_[i] = b1 * m_[i] + (S(1) - b1) * g;
            v_[i] = b2 * v_[i] + (S(1) - b2) * g.cwiseProduct(g);
            *params[i].value -= lr * (m_[i] / corr1).cwiseQuotient(((v_[i] / corr2).cwiseSqrt().array() + eps).matrix());
        }
    }

    std::int64_t steps() const { return t_; }
    void set_steps(std::int64_t t) { t_ = t; }
    std::vector<Mat<S>>& moments1() { return m_; }
    std::vector<Mat<S>>& moments2() { return v_; }

  private:
    double lr_ = 1e-4, beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
    std::int64_t t_ = 0;
    std::vector<Mat<S>> m_, v_;
};

/// Exponential moving average of parameters, used for inference by default.
template <typename S>
class Ema {
  public:
    Ema() = default;
    explicit Ema(double decay) : decay_(decay) {}

    void init(const std::vector<ParamView<S>>& params) {
        shadow_.clear();
        for (const auto& p : params) shadow_.push_back(*p.value);
    }

    void update(const std::vector<ParamView<S>>& params) {
        require(shadow_.size() == params.size(), "ema: not initialized for this parameter set");
        const S d = static_cast<S>(decay_);
        for (size_t i = 0; i < params.size(); ++i) {
            shadow_[i] = d * shadow_[i] + (S(1) - d) * (*params[i].value);
        }
    }

    std::vector<Mat<S>>& shadow() { return shadow_; }
    const std::vector<Mat<S>>& shadow() const { return shadow_; }

  private:
    double decay_ = 0.995;
    std::vector<Mat<S>> shadow_;
};

inline double mse(const Eigen::Ref<const Eigen::MatrixXf>& a, const Eigen::Ref<const Eigen::MatrixXf>& b) {
    return (a - b).cast<double>().squaredNorm() / static_cast<double>(a.size());
}

/// Owns the network, optimizer, EMA and the training RNG. Checkpoints capture
/// all of them plus the prompt statistics, so a resumed run continues the
/// exact random sequence of the unbroken one.
template <typename S = float>
class Trainer {
  public:
    Trainer(TrainConfig cfg, latent::PromptStats stats)
        : cfg_(std::move(cfg)), stats_(std::move(stats)), sched_(cfg_.make_noise_schedule()), rng_(substream(cfg_.seed, "train")) {
        cfg_.validate();
        Rng init_rng(substream(cfg_.seed, "init"));
        net_ = std::make_unique<denoiser::UNet1d<S>>(cfg_.net, init_rng);
        adam_ = Adam<S>(cfg_.learning_rate);
        adam_.init(net_->params());
        ema_ = Ema<S>(cfg_.ema_decay);
        ema_.init(net_->params());
    }

    const TrainConfig& config() const { return cfg_; }
    const latent::PromptStats& prompt_stats() const { return stats_; }
    const diffusion::NoiseSchedule& schedule() const { return sched_; }
    denoiser::UNet1d<S>& net() { return *net_; }
    Ema<S>& ema() { return ema_; }
    int epoch() const { return epoch_; }
    std::int64_t step() const { return global_step_; }

    /// One pass over the training set: fresh shuffle, per-sample uniform
    /// timestep, fresh Gaussian corruption, MSE on the noise, Adam step, EMA
    /// update. Aborts on a non-finite loss naming the batch.
    std::vector<TrainingRecord> train_epoch(const TrainingSet& data) {
        require(data.count() >= 1, "train_epoch: empty training set");
        require(cfg_.batch_size <= data.count(), "train_epoch: batch_size exceeds training set size");
        require(data.seq_len == cfg_.net.seq_len, "train_epoch: data seq_len != net seq_len");
        const int n = data.seq_len;
        const int t_max = cfg_.diffusion_steps;
        const auto wall_start = std::chrono::steady_clock::now();

        std::vector<int> order(static_cast<size_t>(data.count()));
        for (int i = 0; i < data.count(); ++i) order[static_cast<size_t>(i)] = i;
        rng_.shuffle(order);

        std::vector<TrainingRecord> records;
        ++epoch_;
        for (int start = 0; start + cfg_.batch_size <= data.count(); start += cfg_.batch_size) {
            const int b = cfg_.batch_size;
            Mat<S> x0(2, static_cast<Eigen::Index>(b) * n);
            Mat<S> z(2, static_cast<Eigen::Index>(b) * n);
            Mat<S> xt(2, static_cast<Eigen::Index>(b) * n);
            Mat<S> prompts(cfg_.net.prompt_len, b);
            std::vector<int> ts(static_cast<size_t>(b));
            for (int i = 0; i < b; ++i) {
                const int idx = order[static_cast<size_t>(start + i)];
                x0.middleCols(static_cast<Eigen::Index>(i) * n, n) = data.x0.middleCols(static_cast<Eigen::Index>(idx) * n, n).template cast<S>();
                prompts.col(i) = data.prompts.col(idx).template cast<S>();
                const int t = rng_.uniform_int(1, t_max);
                ts[static_cast<size_t>(i)] = t;
                for (int j = 0; j < n; ++j) {
                    for (int r = 0; r < 2; ++r) {
                        z(r, static_cast<Eigen::Index>(i) * n + j) = static_cast<S>(rng_.normal());
                    }
                }
                const double ab = sched_.alpha_bar(t);
                xt.middleCols(static_cast<Eigen::Index>(i) * n, n) = static_cast<S>(std::sqrt(ab)) * x0.middleCols(static_cast<Eigen::Index>(i) * n, n) +
                                                                     static_cast<S>(std::sqrt(1.0 - ab)) * z.middleCols(static_cast<Eigen::Index>(i) * n, n);
            }

            net_->zero_grad();
            Mat<S> pred = net_->forward(xt, ts, prompts, true);
            const Mat<S> diff = pred - z;
            const double loss = diff.template cast<double>().squaredNorm() / static_cast<double>(diff.size());
            if (!std::isfinite(loss)) {
                throw TrainingError("train_epoch: non-finite loss at epoch " + std::to_string(epoch_) + " batch " + std::to_string(start / b));
            }
            const Mat<S> dpred = diff * static_cast<S>(2.0 / static_cast<double>(diff.size()));
            net_->backward(dpred);
            const double gnorm = net_->grad_norm();
            adam_.step(net_->params());
            ema_.update(net_->params());
            ++global_step_;

            const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();
            records.push_back(TrainingRecord{epoch_, global_step_, loss, gnorm, elapsed});
        }
        return records;
    }

    void save_checkpoint(const std::string& path) {
        checkpoint::Checkpoint ck;
        ck.meta = json{{"kind", "bbs-denoiser"},
                       {"tool_version", std::string(kVersion)},
                       {"config", cfg_.to_json()},
                       {"epoch", epoch_},
                       {"step", global_step_},
                       {"adam_steps", adam_.steps()},
                       {"rng", rng_.serialize()},
                       {"prompt_mean", std::vector<double>(stats_.mean.data(), stats_.mean.data() + stats_.mean.size())},
                       {"prompt_std", std::vector<double>(stats_.std.data(), stats_.std.data() + stats_.std.size())}};
        auto& params = net_->params();
        for (size_t i = 0; i < params.size(); ++i) {
            ck.add("param." + params[i].name, to_f32(*params[i].value));
            ck.add("ema." + params[i].name, to_f32(ema_.shadow()[i]));
            ck.add("adam.m." + params[i].name, to_f32(adam_.moments1()[i]));
            ck.add("adam.v." + params[i].name, to_f32(adam_.moments2()[i]));
        }
        ck.save(path);
    }

    /// Rebuilds a trainer from a checkpoint. When expected is given, its JSON
    /// echo must match the stored config field for field.
    static Trainer load_checkpoint(const std::string& path, const TrainConfig* expected = nullptr) {
        checkpoint::Checkpoint ck = checkpoint::Checkpoint::load(path);
        if (!ck.meta.contains("kind") || ck.meta.at("kind") != "bbs-denoiser") {
            throw FormatError("load_checkpoint: " + path + " is not a denoiser checkpoint");
        }
        const TrainConfig cfg = TrainConfig::from_json(ck.meta.at("config"));
        if (expected != nullptr) {
            const std::string diff = checkpoint::json_field_diff(expected->to_json(), cfg.to_json());
            if (!diff.empty()) {
                throw ConfigError("load_checkpoint: config mismatch vs " + path + "\n" + diff);
            }
        }
        latent::PromptStats stats;
        const auto mean = ck.meta.at("prompt_mean").get<std::vector<double>>();
        const auto stdv = ck.meta.at("prompt_std").get<std::vector<double>>();
        stats.mean = Eigen::Map<const Eigen::VectorXd>(mean.data(), static_cast<Eigen::Index>(mean.size()));
        stats.std = Eigen::Map<const Eigen::VectorXd>(stdv.data(), static_cast<Eigen::Index>(stdv.size()));

        Trainer tr(cfg, std::move(stats));
        tr.epoch_ = ck.meta.at("epoch").get<int>();
        tr.global_step_ = ck.meta.at("step").get<std::int64_t>();
        tr.adam_.set_steps(ck.meta.at("adam_steps").get<std::int64_t>());
        tr.rng_.deserialize(ck.meta.at("rng").get<std::string>());
        auto& params = tr.net_->params();
        for (size_t i = 0; i < params.size(); ++i) {
            *params[i].value = from_f32(ck.get_f32("param." + params[i].name), *params[i].value);
            tr.ema_.shadow()[i] = from_f32(ck.get_f32("ema." + params[i].name), *params[i].value);
            tr.adam_.moments1()[i] = from_f32(ck.get_f32("adam.m." + params[i].name), *params[i].value);
            tr.adam_.moments2()[i] = from_f32(ck.get_f32("adam.v." + params[i].name), *params[i].value);
        }
        return tr;
    }

  private:
    static Eigen::MatrixXf to_f32(const Mat<S>& m) { return m.template cast<float>(); }
    static Mat<S> from_f32(const Eigen::MatrixXf& src, const Mat<S>& like) {
        if (src.rows() != like.rows() || src.cols() != like.cols()) {
            throw FormatError("load_checkpoint: array shape mismatch (" + std::to_string(src.rows()) + "x" + std::to_string(src.cols()) +
                              " vs " + std::to_string(like.rows()) + "x" + std::to_string(like.cols()) + ")");
        }
        return src.template cast<S>();
    }

    TrainConfig cfg_;
    latent::PromptStats stats_;
    diffusion::NoiseSchedule sched_;
    Rng rng_;
    std::unique_ptr<denoiser::UNet1d<S>> net_;
    Adam<S> adam_;
    Ema<S> ema_;
    int epoch_ = 0;
    std::int64_t global_step_ = 0;
};

/// Inference-side view of a training checkpoint: network weights (EMA by
/// default), schedule and prompt statistics.
struct InferenceModel {
    TrainConfig config;
    std::unique_ptr<denoiser::UNet1d<float>> net;
    std::unique_ptr<diffusion::NoiseSchedule> schedule;
    latent::PromptStats stats;
};

inline InferenceModel load_inference_model(const std::string& path, bool use_ema = true) {
    auto tr = Trainer<float>::load_checkpoint(path);
    InferenceModel m;
    m.config = tr.config();
    m.stats = tr.prompt_stats();
    m.schedule = std::make_unique<diffusion::NoiseSchedule>(tr.schedule());
    Rng dummy(0);
    m.net = std::make_unique<denoiser::UNet1d<float>>(m.config.net, dummy);
    auto& dst = m.net->params();
    auto& src = tr.net().params();
    for (size_t i = 0; i < dst.size(); ++i) {
        *dst[i].value = use_ema ? tr.ema().shadow()[i] : *src[i].value;
    }
    return m;
}

}  // namespace bbs::training
