// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The bbs authors

#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "bbs/beams.hpp"
#include "bbs/brainstorm.hpp"
#include "bbs/checkpoint.hpp"
#include "bbs/common.hpp"
#include "bbs/latent.hpp"
#include "bbs/sitegen.hpp"
#include "bbs/stats.hpp"
#include "bbs/training.hpp"

namespace bbs::evaluation {

using nlohmann::json;
namespace fs = std::filesystem;

inline constexpr const char* kMethodBbs = "BBS";
inline constexpr const char* kMethodExhaustive = "DFT-exhaustive";
inline constexpr const char* kMethodProbingBest = "DFT-probing-best";
inline constexpr const char* kMethodDiscriminative = "discriminative";
inline constexpr const char* kMethodMrt = "MRT";

inline constexpr const char* kCsvHeader = "user_id,method,Q,M,snr_db,overhead,gain_db,norm_gain_db,seed";

struct GainRecord {
    int user_id = 0;
    std::string method;
    int q = 0;
    int m = 0;
    std::optional<double> snr_db;
    int overhead = 0;
    double gain_db = 0.0;
    double norm_gain_db = 0.0;
    std::uint64_t seed = 0;
};

/// 10 log10 of the beam's gain relative to the phase-optimal MRT beam;
/// nonpositive up to roundoff for any constant-modulus beam.
inline double normalized_gain_db(const sitegen::Channel& ch, const beams::BeamformingVector& w) {
    const auto mrt = beams::mrt_beamformer(ch);
    const double ref = beams::beam_gain(ch, mrt);
    const double g = beams::beam_gain(ch, w);
    return linear_to_db(g / ref);
}

/// Best beam among the Q probing beams only; the floor every generative
/// method must beat to justify its extra overhead.
inline GainRecord baseline_probing_best(const sitegen::Channel& ch, int user_id, const beams::Codebook& codebook,
                                        const std::vector<int>& probing_indices) {
    double best = -1.0;
    for (int idx : probing_indices) {
        const double g = beams::beam_gain(ch, codebook.beams[static_cast<size_t>(idx)]);
        if (g > best) best = g;
    }
    GainRecord r;
    r.user_id = user_id;
    r.method = kMethodProbingBest;
    r.q = static_cast<int>(probing_indices.size());
    r.overhead = r.q;
    r.gain_db = linear_to_db(best);
    const auto mrt = beams::mrt_beamformer(ch);
    r.norm_gain_db = linear_to_db(best / beams::beam_gain(ch, mrt));
    return r;
}

inline std::string format_double(double v) {
    std::ostringstream os;
    os.precision(12);
    os << v;
    return os.str();
}

inline void write_gain_csv(const std::vector<GainRecord>& records, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw FormatError("write_gain_csv: cannot open " + path);
    out << kCsvHeader << '\n';
    for (const auto& r : records) {
        out << r.user_id << ',' << r.method << ',' << r.q << ',' << r.m << ',';
        if (r.snr_db) out << format_double(*r.snr_db);
        out << ',' << r.overhead << ',' << format_double(r.gain_db) << ',' << format_double(r.norm_gain_db) << ',' << r.seed << '\n';
    }
}

inline std::vector<GainRecord> read_gain_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("read_gain_csv: cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw FormatError("read_gain_csv: empty file " + path);
    if (line != kCsvHeader) throw FormatError("read_gain_csv: unexpected header in " + path + ": " + line);
    std::vector<GainRecord> records;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::string cell;
        std::istringstream ls(line);
        while (std::getline(ls, cell, ',')) f.push_back(cell);
        if (line.back() == ',') f.push_back("");
        if (f.size() != 9) throw FormatError("read_gain_csv: expected 9 fields, got " + std::to_string(f.size()) + " in: " + line);
        GainRecord r;
        r.user_id = std::stoi(f[0]);
        r.method = f[1];
        r.q = std::stoi(f[2]);
        r.m = std::stoi(f[3]);
        if (!f[4].empty()) r.snr_db = std::stod(f[4]);
        r.overhead = std::stoi(f[5]);
        r.gain_db = std::stod(f[6]);
        r.norm_gain_db = std::stod(f[7]);
        r.seed = std::stoull(f[8]);
        records.push_back(std::move(r));
    }
    return records;
}

/// Feed-forward regressor mapping a normalized prompt directly to the latent
/// sample: prompt -> hidden -> hidden -> flattened 2xN, GELU between layers,
/// trained with MSE. One deterministic output per user.
struct RegressorConfig {
    int prompt_len = 8;
    int seq_len = 32;
    int hidden = 64;
    int epochs = 60;
    int batch_size = 32;
    double learning_rate = 1e-3;
    std::uint64_t seed = 1;

    void validate() const {
        require(prompt_len >= 1 && seq_len >= 1 && hidden >= 1, "regressor config: non-positive dimension");
        require(epochs >= 1 && batch_size >= 1 && learning_rate > 0.0, "regressor config: bad training fields");
    }

    json to_json() const {
        return json{{"prompt_len", prompt_len}, {"seq_len", seq_len},           {"hidden", hidden}, {"epochs", epochs},
                    {"batch_size", batch_size}, {"learning_rate", learning_rate}, {"seed", seed}};
    }

    static RegressorConfig from_json(const json& j) {
        RegressorConfig c;
        c.prompt_len = j.at("prompt_len").get<int>();
        c.seq_len = j.at("seq_len").get<int>();
        c.hidden = j.at("hidden").get<int>();
        c.epochs = j.at("epochs").get<int>();
        c.batch_size = j.at("batch_size").get<int>();
        c.learning_rate = j.at("learning_rate").get<double>();
        c.seed = j.at("seed").get<std::uint64_t>();
        c.validate();
        return c;
    }
};

/// Largest hidden width whose two-hidden-layer MLP stays within the given
/// parameter budget, so the baseline comparison is capacity-fair.
inline int matched_hidden_width(std::int64_t budget, int prompt_len, int seq_len) {
    const double out = 2.0 * seq_len;
    const double b = prompt_len + out + 2.0;
    const double disc = b * b - 4.0 * (out - static_cast<double>(budget));
    int w = disc > 0.0 ? static_cast<int>(std::floor((-b + std::sqrt(disc)) / 2.0)) : 4;
    return std::max(w, 4);
}

class MlpRegressor {
  public:
    explicit MlpRegressor(RegressorConfig cfg) : cfg_(std::move(cfg)) {
        cfg_.validate();
        Rng rng(substream(cfg_.seed, "disc-init"));
        fc1_ = denoiser::Dense<float>(cfg_.prompt_len, cfg_.hidden, rng);
        fc2_ = denoiser::Dense<float>(cfg_.hidden, cfg_.hidden, rng);
        fc3_ = denoiser::Dense<float>(cfg_.hidden, 2 * cfg_.seq_len, rng);
        fc1_.collect("fc1", registry_);
        fc2_.collect("fc2", registry_);
        fc3_.collect("fc3", registry_);
    }

    // the registry points into member storage
    MlpRegressor(const MlpRegressor&) = delete;
    MlpRegressor& operator=(const MlpRegressor&) = delete;
    MlpRegressor(MlpRegressor&&) = delete;
    MlpRegressor& operator=(MlpRegressor&&) = delete;

    const RegressorConfig& config() const { return cfg_; }
    bool diverged() const { return diverged_; }
    const latent::PromptStats& prompt_stats() const { return stats_; }

    std::int64_t num_params() const {
        std::int64_t n = 0;
        for (const auto& p : registry_) n += p.value->size();
        return n;
    }

    Eigen::MatrixXf forward(const Eigen::MatrixXf& prompts, bool cache) {
        return fc3_.forward(g2_.forward(fc2_.forward(g1_.forward(fc1_.forward(prompts, cache), cache), cache), cache), cache);
    }

    /// MSE regression from normalized prompts to flattened latents. A
    /// non-finite loss stops training and raises the diverged flag instead of
    /// throwing, so sweeps can exclude the baseline and continue.
    double train(const training::TrainingSet& data) {
        require(data.seq_len == cfg_.seq_len, "regressor train: seq_len mismatch");
        require(data.prompts.rows() == cfg_.prompt_len, "regressor train: prompt_len mismatch");
        require(cfg_.batch_size <= data.count(), "regressor train: batch_size exceeds data");
        stats_ = data.stats;
        const int n = cfg_.seq_len;
        const int count = data.count();
        Eigen::MatrixXf targets(2 * n, count);
        for (int i = 0; i < count; ++i) {
            targets.col(i) = Eigen::Map<const Eigen::VectorXf>(data.x0.data() + static_cast<std::ptrdiff_t>(i) * 2 * n, 2 * n);
        }
        training::Adam<float> adam(cfg_.learning_rate);
        adam.init(registry_);
        Rng rng(substream(cfg_.seed, "disc-train"));
        std::vector<int> order(static_cast<size_t>(count));
        double last_loss = 0.0;
        for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
            for (int i = 0; i < count; ++i) order[static_cast<size_t>(i)] = i;
            rng.shuffle(order);
            for (int start = 0; start + cfg_.batch_size <= count; start += cfg_.batch_size) {
                const int b = cfg_.batch_size;
                Eigen::MatrixXf pb(cfg_.prompt_len, b), tb(2 * n, b);
                for (int i = 0; i < b; ++i) {
                    const int idx = order[static_cast<size_t>(start + i)];
                    pb.col(i) = data.prompts.col(idx);
                    tb.col(i) = targets.col(idx);
                }
                for (auto& p : registry_) p.grad->setZero();
                const Eigen::MatrixXf pred = forward(pb, true);
                const Eigen::MatrixXf diff = pred - tb;
                last_loss = diff.cast<double>().squaredNorm() / static_cast<double>(diff.size());
                if (!std::isfinite(last_loss)) {
                    diverged_ = true;
                    return last_loss;
                }
                backward(diff * static_cast<float>(2.0 / static_cast<double>(diff.size())));
                adam.step(registry_);
            }
        }
        return last_loss;
    }

    /// Deterministic single beam for one normalized prompt.
    beams::BeamformingVector predict_beam(const Eigen::VectorXd& normalized_prompt) {
        if (normalized_prompt.size() != cfg_.prompt_len) {
            throw DimensionError("regressor predict: prompt length mismatch");
        }
        Eigen::MatrixXf col = normalized_prompt.cast<float>();
        const Eigen::MatrixXf out = forward(col, false);
        latent::Mat2Xd m(2, cfg_.seq_len);
        for (int j = 0; j < cfg_.seq_len; ++j) {
            m(0, j) = static_cast<double>(out(2 * j, 0));
            m(1, j) = static_cast<double>(out(2 * j + 1, 0));
        }
        return latent::from_latent(latent::from_model_matrix(m));
    }

    void save(const std::string& path) {
        checkpoint::Checkpoint ck;
        ck.meta = json{{"kind", "bbs-regressor"},
                       {"tool_version", std::string(kVersion)},
                       {"config", cfg_.to_json()},
                       {"diverged", diverged_},
                       {"prompt_mean", std::vector<double>(stats_.mean.data(), stats_.mean.data() + stats_.mean.size())},
                       {"prompt_std", std::vector<double>(stats_.std.data(), stats_.std.data() + stats_.std.size())}};
        for (auto& p : registry_) ck.add("param." + p.name, *p.value);
        ck.save(path);
    }

    static std::unique_ptr<MlpRegressor> load(const std::string& path) {
        checkpoint::Checkpoint ck = checkpoint::Checkpoint::load(path);
        if (!ck.meta.contains("kind") || ck.meta.at("kind") != "bbs-regressor") {
            throw FormatError("regressor load: " + path + " is not a regressor checkpoint");
        }
        auto r = std::make_unique<MlpRegressor>(RegressorConfig::from_json(ck.meta.at("config")));
        r->diverged_ = ck.meta.at("diverged").get<bool>();
        const auto mean = ck.meta.at("prompt_mean").get<std::vector<double>>();
        const auto stdv = ck.meta.at("prompt_std").get<std::vector<double>>();
        r->stats_.mean = Eigen::Map<const Eigen::VectorXd>(mean.data(), static_cast<Eigen::Index>(mean.size()));
        r->stats_.std = Eigen::Map<const Eigen::VectorXd>(stdv.data(), static_cast<Eigen::Index>(stdv.size()));
        for (auto& p : r->registry_) {
            const auto& src = ck.get_f32("param." + p.name);
            if (src.rows() != p.value->rows() || src.cols() != p.value->cols()) {
                throw FormatError("regressor load: shape mismatch for " + p.name);
            }
            *p.value = src;
        }
        return r;
    }

  private:
    void backward(const Eigen::MatrixXf& dout) { fc1_.backward(g1_.backward(fc2_.backward(g2_.backward(fc3_.backward(dout))))); }

    RegressorConfig cfg_;
    denoiser::Dense<float> fc1_, fc2_, fc3_;
    denoiser::Gelu<float> g1_, g2_;
    std::vector<denoiser::ParamView<float>> registry_;
    latent::PromptStats stats_;
    bool diverged_ = false;
};

struct SweepSpec {
    std::vector<int> q_list{4, 8, 16};
    std::vector<int> m_list{1, 5, 8};
    std::vector<std::optional<double>> snr_list{std::nullopt};
    std::uint64_t seed = 1;
    std::string dataset_dir;
    std::string model_dir;
    int max_users = 0;  // cap on evaluated test users, 0 = all
    int chunk_chains = 1024;
    bool use_ema = true;

    void validate() const {
        require(!q_list.empty(), "sweep spec: empty Q list");
        require(!m_list.empty(), "sweep spec: empty M list");
        require(!snr_list.empty(), "sweep spec: empty SNR list");
        require(!dataset_dir.empty(), "sweep spec: dataset path missing");
        require(!model_dir.empty(), "sweep spec: model path missing");
    }
};

struct CellSummary {
    std::string method;
    int q = 0;
    int m = 0;
    std::optional<double> snr_db;
    double median_norm_gain_db = 0.0;
    double mean_norm_gain_db = 0.0;
    int count = 0;
};

inline std::vector<CellSummary> summarize_records(const std::vector<GainRecord>& records) {
    std::map<std::tuple<std::string, int, int, double>, std::vector<double>> cells;
    for (const auto& r : records) {
        const double snr_key = r.snr_db ? *r.snr_db : std::numeric_limits<double>::infinity();
        cells[{r.method, r.q, r.m, snr_key}].push_back(r.norm_gain_db);
    }
    std::vector<CellSummary> out;
    for (const auto& [key, gains] : cells) {
        CellSummary c;
        c.method = std::get<0>(key);
        c.q = std::get<1>(key);
        c.m = std::get<2>(key);
        if (std::isfinite(std::get<3>(key))) c.snr_db = std::get<3>(key);
        c.median_norm_gain_db = stats::median(gains);
        c.mean_norm_gain_db = stats::mean(gains);
        c.count = static_cast<int>(gains.size());
        out.push_back(std::move(c));
    }
    return out;
}

/// Percent change truncated toward zero at one decimal, the arithmetic used
/// by the overhead table.
inline double pct_change_1dp(double from, double to) {
    const double pct = (to - from) / from * 100.0;
    return std::trunc(pct * 10.0) / 10.0;
}

struct SweepResult {
    std::vector<GainRecord> records;
    std::vector<CellSummary> cells;
    std::vector<int> skipped_q;
    json summary;
};

inline std::string model_checkpoint_name(int q) { return "model_q" + std::to_string(q) + ".ckpt"; }
inline std::string regressor_checkpoint_name(int q) { return "disc_q" + std::to_string(q) + ".ckpt"; }

/// Full evaluation pass: reference methods for every test user, then per-Q
/// BBS and baselines. A Q whose model checkpoint is missing is reported as
/// skipped and the sweep continues. Deterministic for a fixed spec.
inline SweepResult run_sweep(const SweepSpec& spec) {
    spec.validate();
    const auto site = sitegen::load_site(spec.dataset_dir);
    const auto [train_idx, test_idx] = sitegen::split_train_test(site);
    require(!test_idx.empty(), "run_sweep: empty test split");
    const int users = (spec.max_users > 0) ? std::min<int>(spec.max_users, static_cast<int>(test_idx.size()))
                                           : static_cast<int>(test_idx.size());
    const int n = site.array.num_antennas;
    const auto codebook = beams::dft_codebook(site.array);

    SweepResult result;
    std::vector<double> mrt_gain(static_cast<size_t>(users));
    for (int i = 0; i < users; ++i) {
        const int uid = test_idx[static_cast<size_t>(i)];
        const auto& ch = site.channels[static_cast<size_t>(uid)];
        const auto mrt = beams::mrt_beamformer(ch);
        mrt_gain[static_cast<size_t>(i)] = beams::beam_gain(ch, mrt);

        GainRecord mr;
        mr.user_id = uid;
        mr.method = kMethodMrt;
        mr.gain_db = linear_to_db(mrt_gain[static_cast<size_t>(i)]);
        mr.norm_gain_db = 0.0;
        mr.seed = spec.seed;
        result.records.push_back(mr);

        const auto ex = beams::exhaustive_search(ch, codebook);
        GainRecord er;
        er.user_id = uid;
        er.method = kMethodExhaustive;
        er.q = n;
        er.overhead = n;
        er.gain_db = linear_to_db(ex.second);
        er.norm_gain_db = linear_to_db(ex.second / mrt_gain[static_cast<size_t>(i)]);
        er.seed = spec.seed;
        result.records.push_back(er);
    }

    for (int q : spec.q_list) {
        const fs::path model_path = fs::path(spec.model_dir) / model_checkpoint_name(q);
        if (!fs::exists(model_path)) {
            result.skipped_q.push_back(q);
            continue;
        }
        auto model = training::load_inference_model(model_path.string(), spec.use_ema);
        require(model.config.net.seq_len == n, "run_sweep: model seq_len != dataset antennas");
        const auto probing = beams::select_probing_indices(n, q);

        for (int i = 0; i < users; ++i) {
            const int uid = test_idx[static_cast<size_t>(i)];
            auto rec = baseline_probing_best(site.channels[static_cast<size_t>(uid)], uid, codebook, probing);
            rec.seed = spec.seed;
            result.records.push_back(rec);
        }

        std::unique_ptr<MlpRegressor> disc;
        const fs::path disc_path = fs::path(spec.model_dir) / regressor_checkpoint_name(q);
        if (fs::exists(disc_path)) {
            disc = MlpRegressor::load(disc_path.string());
        }

        std::vector<sitegen::Channel> test_channels;
        std::vector<int> test_tags;
        test_channels.reserve(static_cast<size_t>(users));
        for (int i = 0; i < users; ++i) {
            const int uid = test_idx[static_cast<size_t>(i)];
            test_channels.push_back(site.channels[static_cast<size_t>(uid)]);
            test_tags.push_back(uid);
        }

        const int m_max = *std::max_element(spec.m_list.begin(), spec.m_list.end());
        for (const auto& snr : spec.snr_list) {
            brainstorm::BrainstormConfig bcfg;
            bcfg.m = m_max;
            bcfg.q = q;
            bcfg.snr_db = snr;
            bcfg.seed = spec.seed;
            bcfg.chunk_chains = spec.chunk_chains;
            const auto bres = brainstorm::brainstorm_batch(test_channels, model, bcfg, test_tags);

            for (int m : spec.m_list) {
                for (int i = 0; i < users; ++i) {
                    const auto& br = bres[static_cast<size_t>(i)];
                    double best = br.gains[0];
                    for (int k = 1; k < m; ++k) best = std::max(best, br.gains[static_cast<size_t>(k)]);
                    GainRecord r;
                    r.user_id = test_tags[static_cast<size_t>(i)];
                    r.method = kMethodBbs;
                    r.q = q;
                    r.m = m;
                    r.snr_db = snr;
                    r.overhead = brainstorm::overhead(q, m);
                    r.gain_db = linear_to_db(best);
                    r.norm_gain_db = linear_to_db(best / mrt_gain[static_cast<size_t>(i)]);
                    r.seed = spec.seed;
                    result.records.push_back(r);
                }
            }

            if (disc && !disc->diverged()) {
                const beams::LinkBudget budget;
                for (int i = 0; i < users; ++i) {
                    const int uid = test_tags[static_cast<size_t>(i)];
                    const auto& ch = test_channels[static_cast<size_t>(i)];
                    beams::RsrpPrompt prompt;
                    if (snr) {
                        Rng prng(substream(spec.seed, "prompt", static_cast<std::uint64_t>(uid)));
                        prompt = beams::measure_rsrp(ch, codebook, probing, budget, true, &prng, snr);
                    } else {
                        prompt = beams::measure_rsrp(ch, codebook, probing, budget, false);
                    }
                    const auto beam = disc->predict_beam(latent::normalize_prompt(prompt, disc->prompt_stats()).c);
                    GainRecord r;
                    r.user_id = uid;
                    r.method = kMethodDiscriminative;
                    r.q = q;
                    r.snr_db = snr;
                    r.overhead = q;
                    r.gain_db = linear_to_db(beams::beam_gain(ch, beam));
                    r.norm_gain_db = linear_to_db(beams::beam_gain(ch, beam) / mrt_gain[static_cast<size_t>(i)]);
                    r.seed = spec.seed;
                    result.records.push_back(r);
                }
            }
        }
    }

    result.cells = summarize_records(result.records);

    json cells_json = json::array();
    for (const auto& c : result.cells) {
        json jc{{"method", c.method},
                {"Q", c.q},
                {"M", c.m},
                {"median_norm_gain_db", c.median_norm_gain_db},
                {"mean_norm_gain_db", c.mean_norm_gain_db},
                {"count", c.count}};
        if (c.snr_db) jc["snr_db"] = *c.snr_db;
        cells_json.push_back(jc);
    }

    json overhead_table = json::array();
    for (int m : spec.m_list) {
        json row{{"M", m}};
        json cols = json::array();
        for (int q : spec.q_list) {
            const int o = brainstorm::overhead(q, m);
            cols.push_back(json{{"Q", q}, {"overhead", o}, {"delta_overhead_pct", pct_change_1dp(static_cast<double>(n), static_cast<double>(o))}});
        }
        row["cells"] = cols;
        overhead_table.push_back(row);
    }

    result.summary = json{{"dataset", spec.dataset_dir},
                          {"model_dir", spec.model_dir},
                          {"seed", spec.seed},
                          {"num_antennas", n},
                          {"users_evaluated", users},
                          {"skipped_q", result.skipped_q},
                          {"cells", cells_json},
                          {"overhead_vs_exhaustive", overhead_table}};
    return result;
}

}  // namespace bbs::evaluation
