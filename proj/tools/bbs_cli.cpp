// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The bbs authors

#include <Eigen/Core>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "bbs/brainstorm.hpp"
#include "bbs/evaluation.hpp"
#include "bbs/plots.hpp"
#include "bbs/sitegen.hpp"
#include "bbs/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string iso_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string hex64(std::uint64_t v) {
    char buf[19];
    std::snprintf(buf, sizeof(buf), "0x%016llx", static_cast<unsigned long long>(v));
    return buf;
}

/// Holds .bbs.lock inside the output directory for the life of the command.
class DirLock {
  public:
    explicit DirLock(const fs::path& dir) : file_(dir / ".bbs.lock") {
        fs::create_directories(dir);
        std::FILE* f = std::fopen(file_.string().c_str(), "wx");
        if (f == nullptr) {
            throw bbs::ConfigError("output directory is locked by " + file_.string() + "; remove the lock if no other run owns it");
        }
        std::fputs(iso_now().c_str(), f);
        std::fclose(f);
    }
    ~DirLock() {
        std::error_code ec;
        fs::remove(file_, ec);
    }
    DirLock(const DirLock&) = delete;
    DirLock& operator=(const DirLock&) = delete;

  private:
    fs::path file_;
};

json load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw bbs::ConfigError("config file not found: " + path);
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw bbs::ConfigError("config file " + path + " is not valid JSON: " + e.what());
    }
}

void check_known_keys(const json& file, const json& defaults, const std::string& context) {
    for (auto it = file.begin(); it != file.end(); ++it) {
        if (!defaults.contains(it.key())) {
            throw bbs::ConfigError("unknown config key '" + context + it.key() + "'");
        }
        if (it.value().is_object() && defaults.at(it.key()).is_object()) {
            check_known_keys(it.value(), defaults.at(it.key()), context + it.key() + ".");
        }
    }
}

/// defaults < config file < explicit CLI flags; flag overrides are applied by
/// the caller after this merge.
json merge_config(json defaults, const std::string& config_path, const std::string& context) {
    if (config_path.empty()) return defaults;
    const json file = load_config_file(config_path);
    check_known_keys(file, defaults, context);
    defaults.merge_patch(file);
    return defaults;
}

void write_manifest(const fs::path& dir, const std::string& command, const json& config, std::uint64_t seed,
                    const std::vector<std::string>& inputs, const std::vector<std::string>& outputs, const std::string& started) {
    const json manifest{{"command", command},
                        {"tool_version", std::string(bbs::kVersion)},
                        {"config", config},
                        {"config_hash", hex64(bbs::fnv1a(config.dump()))},
                        {"seed", seed},
                        {"inputs", inputs},
                        {"outputs", outputs},
                        {"started_at", started},
                        {"finished_at", iso_now()}};
    std::ofstream out(dir / "run_manifest.json", std::ios::trunc);
    if (!out) throw bbs::FormatError("cannot write manifest in " + dir.string());
    out << manifest.dump(2) << '\n';
}

json geometry_to_json(const bbs::sitegen::SiteGeometrySpec& g) {
    json clusters = json::array();
    for (const auto& c : g.clusters) {
        clusters.push_back(json{{"center_deg", c.center_deg}, {"spread_deg", c.spread_deg}, {"power_db", c.power_db}});
    }
    return json{{"clusters", clusters},
                {"blockage_prob", g.blockage_prob},
                {"los_power_offset_db", g.los_power_offset_db},
                {"gain_sigma_db", g.gain_sigma_db},
                {"fov_deg", g.fov_deg},
                {"paths_per_user", g.paths_per_user},
                {"normalize_power", g.normalize_power}};
}

bbs::sitegen::SiteGeometrySpec geometry_from_json(const json& j) {
    bbs::sitegen::SiteGeometrySpec g;
    g.clusters.clear();
    for (const auto& c : j.at("clusters")) {
        g.clusters.push_back({c.at("center_deg").get<double>(), c.at("spread_deg").get<double>(), c.at("power_db").get<double>()});
    }
    g.blockage_prob = j.at("blockage_prob").get<double>();
    g.los_power_offset_db = j.at("los_power_offset_db").get<double>();
    g.gain_sigma_db = j.at("gain_sigma_db").get<double>();
    g.fov_deg = j.at("fov_deg").get<double>();
    g.paths_per_user = j.at("paths_per_user").get<int>();
    g.normalize_power = j.at("normalize_power").get<bool>();
    return g;
}

struct GenDefaults {
    int num_users;
    int num_antennas;
};

GenDefaults gen_profile(const std::string& profile) {
    if (profile == "paper") return {100000, 64};
    return {5000, 32};
}

bbs::training::TrainConfig train_profile(const std::string& profile) {
    bbs::training::TrainConfig cfg;
    if (profile == "paper") {
        cfg.epochs = 300;
        cfg.diffusion_steps = 1000;
        cfg.net.level_channels = {64, 128, 256, 512, 1024};
        cfg.net.seq_len = 64;
        cfg.net.attention_levels = -1;
    } else {
        cfg.epochs = 60;
        cfg.diffusion_steps = 200;
        cfg.net.level_channels = {32, 64, 128};
        cfg.net.seq_len = 32;
        cfg.net.attention_levels = 2;
    }
    return cfg;
}

int cmd_gen_data(const std::string& config_path, const std::string& out_dir, const std::string& profile, std::uint64_t seed,
                 bool seed_set, int num_users, int num_antennas, bool paths_jsonl) {
    const std::string started = iso_now();
    const GenDefaults prof = gen_profile(profile);

    bbs::sitegen::ArrayConfig array;
    array.num_antennas = prof.num_antennas;
    bbs::sitegen::SiteGeometrySpec geo = bbs::sitegen::default_geometry();
    json defaults{{"seed", 1},
                  {"num_users", prof.num_users},
                  {"num_antennas", array.num_antennas},
                  {"spacing_over_wavelength", array.spacing_over_wavelength},
                  {"carrier_freq_ghz", array.carrier_freq_ghz},
                  {"train_ratio", 0.8},
                  {"paths_jsonl", true},
                  {"geometry", geometry_to_json(geo)}};
    json cfg = merge_config(defaults, config_path, "");
    if (seed_set) cfg["seed"] = seed;
    if (num_users > 0) cfg["num_users"] = num_users;
    if (num_antennas > 0) cfg["num_antennas"] = num_antennas;
    if (!paths_jsonl) cfg["paths_jsonl"] = false;

    array.num_antennas = cfg.at("num_antennas").get<int>();
    array.spacing_over_wavelength = cfg.at("spacing_over_wavelength").get<double>();
    array.carrier_freq_ghz = cfg.at("carrier_freq_ghz").get<double>();
    geo = geometry_from_json(cfg.at("geometry"));

    DirLock lock(out_dir);
    auto site = bbs::sitegen::generate_synthetic_site(array, cfg.at("num_users").get<int>(), geo, cfg.at("seed").get<std::uint64_t>(),
                                                      cfg.at("train_ratio").get<double>());
    if (!cfg.at("paths_jsonl").get<bool>()) {
        for (auto& ch : site.channels) ch.paths.clear();
    }
    bbs::sitegen::save_site(site, out_dir);
    const std::uint64_t hash = bbs::io::file_hash(fs::path(out_dir) / "channels.bin");
    write_manifest(out_dir, "gen-data", cfg, cfg.at("seed").get<std::uint64_t>(), {},
                   {(fs::path(out_dir) / "manifest").string(), (fs::path(out_dir) / "channels.bin").string()}, started);
    std::cout << "generated " << site.channels.size() << " users, " << array.num_antennas << " antennas\n";
    std::cout << "dataset_hash=" << hex64(hash) << '\n';
    return 0;
}

int cmd_train(const std::string& config_path, const std::string& data_dir, const std::string& out_dir, const std::string& profile,
              std::uint64_t seed, bool seed_set, int epochs, int q, bool resume, bool skip_disc) {
    const std::string started = iso_now();
    bbs::training::TrainConfig defaults = train_profile(profile);
    json cfg_json = merge_config(defaults.to_json(), config_path, "");
    if (seed_set) cfg_json["seed"] = seed;
    if (epochs > 0) cfg_json["epochs"] = epochs;
    if (q > 0) cfg_json["net"]["prompt_len"] = q;

    const auto site = bbs::sitegen::load_site(data_dir);
    cfg_json["net"]["seq_len"] = site.array.num_antennas;
    bbs::training::TrainConfig cfg = bbs::training::TrainConfig::from_json(cfg_json);

    DirLock lock(out_dir);
    const auto set = bbs::training::build_training_set(site, cfg.net.prompt_len);
    const fs::path model_path = fs::path(out_dir) / bbs::evaluation::model_checkpoint_name(cfg.net.prompt_len);
    const fs::path log_path = fs::path(out_dir) / ("train_q" + std::to_string(cfg.net.prompt_len) + ".csv");

    std::unique_ptr<bbs::training::Trainer<float>> trainer;
    if (resume) {
        if (!fs::exists(model_path)) {
            throw bbs::ConfigError("cannot resume: checkpoint missing at " + model_path.string());
        }
        trainer = std::make_unique<bbs::training::Trainer<float>>(bbs::training::Trainer<float>::load_checkpoint(model_path.string(), &cfg));
        std::cout << "resumed at epoch " << trainer->epoch() << '\n';
    } else {
        trainer = std::make_unique<bbs::training::Trainer<float>>(cfg, set.stats);
    }

    for (int e = trainer->epoch(); e < cfg.epochs; ++e) {
        const auto records = trainer->train_epoch(set);
        bbs::training::append_training_csv(log_path.string(), records);
        double sum = 0.0;
        for (const auto& r : records) sum += r.loss;
        std::cout << "epoch " << trainer->epoch() << "/" << cfg.epochs << " mean_loss=" << sum / static_cast<double>(records.size())
                  << '\n';
        if (trainer->epoch() % cfg.checkpoint_interval == 0 || trainer->epoch() == cfg.epochs) {
            trainer->save_checkpoint(model_path.string());
        }
    }
    trainer->save_checkpoint(model_path.string());

    std::vector<std::string> outputs{model_path.string(), log_path.string()};
    if (!skip_disc) {
        bbs::evaluation::RegressorConfig rc;
        rc.prompt_len = cfg.net.prompt_len;
        rc.seq_len = cfg.net.seq_len;
        rc.hidden = bbs::evaluation::matched_hidden_width(trainer->net().num_params(), rc.prompt_len, rc.seq_len);
        rc.epochs = cfg.epochs;
        rc.batch_size = cfg.batch_size;
        rc.seed = cfg.seed;
        bbs::evaluation::MlpRegressor disc(rc);
        const double loss = disc.train(set);
        const fs::path disc_path = fs::path(out_dir) / bbs::evaluation::regressor_checkpoint_name(cfg.net.prompt_len);
        disc.save(disc_path.string());
        outputs.push_back(disc_path.string());
        std::cout << "regressor hidden=" << rc.hidden << " params=" << disc.num_params() << " final_loss=" << loss
                  << (disc.diverged() ? " (diverged)" : "") << '\n';
    }
    write_manifest(out_dir, "train", cfg.to_json(), cfg.seed, {data_dir}, outputs, started);
    return 0;
}

int cmd_infer(const std::string& model_path, const std::string& data_dir, int q, int m, std::optional<double> snr, std::uint64_t seed,
              const std::string& out_csv, int max_users) {
    if (!fs::exists(model_path)) {
        throw bbs::ConfigError("missing checkpoint: " + model_path);
    }
    auto model = bbs::training::load_inference_model(model_path);
    const auto site = bbs::sitegen::load_site(data_dir);
    const auto [train_idx, test_idx] = bbs::sitegen::split_train_test(site);
    const int users = (max_users > 0) ? std::min<int>(max_users, static_cast<int>(test_idx.size())) : static_cast<int>(test_idx.size());

    std::vector<bbs::sitegen::Channel> channels;
    std::vector<int> tags;
    for (int i = 0; i < users; ++i) {
        channels.push_back(site.channels[static_cast<size_t>(test_idx[static_cast<size_t>(i)])]);
        tags.push_back(test_idx[static_cast<size_t>(i)]);
    }

    bbs::brainstorm::BrainstormConfig bcfg;
    bcfg.m = m;
    bcfg.q = q;
    bcfg.snr_db = snr;
    bcfg.seed = seed;
    const auto results = bbs::brainstorm::brainstorm_batch(channels, model, bcfg, tags);

    const fs::path out_path(out_csv);
    if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
    std::ofstream out(out_csv, std::ios::trunc);
    if (!out) throw bbs::FormatError("cannot open " + out_csv);
    out << "user_id,Q,M,overhead,best_index,best_gain_db,norm_gain_db,beam_gains_db\n";
    for (int i = 0; i < users; ++i) {
        const auto& r = results[static_cast<size_t>(i)];
        const auto mrt = bbs::beams::mrt_beamformer(channels[static_cast<size_t>(i)]);
        const double ref = bbs::beams::beam_gain(channels[static_cast<size_t>(i)], mrt);
        out << tags[static_cast<size_t>(i)] << ',' << q << ',' << m << ',' << r.overhead << ',' << r.best_index << ','
            << bbs::evaluation::format_double(bbs::linear_to_db(r.best_gain)) << ','
            << bbs::evaluation::format_double(bbs::linear_to_db(r.best_gain / ref)) << ',';
        for (size_t k = 0; k < r.gains.size(); ++k) {
            if (k) out << ';';
            out << bbs::evaluation::format_double(bbs::linear_to_db(r.gains[k]));
        }
        out << '\n';
    }
    std::cout << "wrote " << users << " rows to " << out_csv << '\n';
    return 0;
}

int cmd_eval(const std::string& config_path, const std::string& model_dir, const std::string& data_dir, const std::string& out_dir,
             std::vector<int> q_list, std::vector<int> m_list, std::vector<double> snr_list, bool noiseless, int max_users,
             std::uint64_t seed, bool seed_set) {
    const std::string started = iso_now();
    json defaults{{"seed", 1},       {"q_list", json::array({4, 8, 16})}, {"m_list", json::array({1, 5, 8})},
                  {"snr_list", json::array()}, {"include_noiseless", true},         {"max_users", 0},
                  {"use_ema", true}};
    json cfg = merge_config(defaults, config_path, "");
    if (seed_set) cfg["seed"] = seed;
    if (!q_list.empty()) cfg["q_list"] = q_list;
    if (!m_list.empty()) cfg["m_list"] = m_list;
    if (!snr_list.empty()) cfg["snr_list"] = snr_list;
    if (!noiseless) cfg["include_noiseless"] = false;
    if (max_users > 0) cfg["max_users"] = max_users;

    bbs::evaluation::SweepSpec spec;
    spec.q_list = cfg.at("q_list").get<std::vector<int>>();
    spec.m_list = cfg.at("m_list").get<std::vector<int>>();
    spec.snr_list.clear();
    if (cfg.at("include_noiseless").get<bool>()) spec.snr_list.push_back(std::nullopt);
    for (double s : cfg.at("snr_list").get<std::vector<double>>()) spec.snr_list.push_back(s);
    spec.seed = cfg.at("seed").get<std::uint64_t>();
    spec.dataset_dir = data_dir;
    spec.model_dir = model_dir;
    spec.max_users = cfg.at("max_users").get<int>();
    spec.use_ema = cfg.at("use_ema").get<bool>();

    // fail fast when nothing can run at all
    bool any_model = false;
    for (int q : spec.q_list) {
        if (fs::exists(fs::path(model_dir) / bbs::evaluation::model_checkpoint_name(q))) any_model = true;
    }
    if (!any_model) {
        throw bbs::ConfigError("no trained model found; expected e.g. " +
                               (fs::path(model_dir) / bbs::evaluation::model_checkpoint_name(spec.q_list.front())).string());
    }

    DirLock lock(out_dir);
    const auto result = bbs::evaluation::run_sweep(spec);
    const fs::path csv_path = fs::path(out_dir) / "eval.csv";
    bbs::evaluation::write_gain_csv(result.records, csv_path.string());
    std::ofstream summary(fs::path(out_dir) / "summary.json", std::ios::trunc);
    summary << result.summary.dump(2) << '\n';
    summary.close();
    for (int q : result.skipped_q) {
        std::cout << "skipped Q=" << q << " (no checkpoint " << bbs::evaluation::model_checkpoint_name(q) << ")\n";
    }
    std::cout << "wrote " << result.records.size() << " records to " << csv_path.string() << '\n';
    write_manifest(out_dir, "eval", cfg, spec.seed, {data_dir, model_dir},
                   {csv_path.string(), (fs::path(out_dir) / "summary.json").string()}, started);
    return 0;
}

std::string md_table_row(const std::vector<std::string>& cells) {
    std::string row = "|";
    for (const auto& c : cells) row += " " + c + " |";
    return row + "\n";
}

std::string fmt_pct(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%+.1f%%", v);
    return buf;
}

std::string fmt_db(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

int cmd_report(const std::string& csv_path, const std::string& out_dir, const std::string& format) {
    const std::string started = iso_now();
    const auto records = bbs::evaluation::read_gain_csv(csv_path);
    if (records.empty()) throw bbs::FormatError("report: no records in " + csv_path);
    DirLock lock(out_dir);
    const auto fmt = (format == "ppm") ? bbs::plots::PlotFormat::ppm : bbs::plots::PlotFormat::svg;
    const auto plot_files = bbs::plots::emit_plots(csv_path, out_dir, fmt);
    const auto cells = bbs::evaluation::summarize_records(records);

    int n_antennas = 0;
    std::uint64_t seed = 0;
    for (const auto& r : records) {
        if (r.method == bbs::evaluation::kMethodExhaustive) n_antennas = std::max(n_antennas, r.q);
        seed = r.seed;
    }

    std::set<int> q_set, m_set;
    for (const auto& c : cells) {
        if (c.method == bbs::evaluation::kMethodBbs) {
            q_set.insert(c.q);
            m_set.insert(c.m);
        }
    }

    std::ostringstream md;
    md << "# Beamforming evaluation report\n\n";
    md << "Source: `" << csv_path << "`, seed " << seed << ", " << records.size() << " records.\n\n";

    md << "## Median normalized gain (dB), noiseless prompts\n\n";
    {
        std::vector<std::string> header{"method"};
        for (int q : q_set) header.push_back("Q=" + std::to_string(q));
        md << md_table_row(header);
        md << md_table_row(std::vector<std::string>(header.size(), "---"));
        auto cell_for = [&](const std::string& method, int q, int m) -> std::string {
            for (const auto& c : cells) {
                if (c.method == method && c.q == q && c.m == m && !c.snr_db) return fmt_db(c.median_norm_gain_db);
            }
            return "-";
        };
        for (int m : m_set) {
            std::vector<std::string> row{"BBS M=" + std::to_string(m)};
            for (int q : q_set) row.push_back(cell_for(bbs::evaluation::kMethodBbs, q, m));
            md << md_table_row(row);
        }
        std::vector<std::string> probe_row{"probing best"}, disc_row{"discriminative"};
        for (int q : q_set) {
            probe_row.push_back(cell_for(bbs::evaluation::kMethodProbingBest, q, 0));
            disc_row.push_back(cell_for(bbs::evaluation::kMethodDiscriminative, q, 0));
        }
        md << md_table_row(probe_row);
        md << md_table_row(disc_row);
        for (const auto& c : cells) {
            if (c.method == bbs::evaluation::kMethodExhaustive && !c.snr_db) {
                md << "\nExhaustive sweep over all " << c.q << " beams: median " << fmt_db(c.median_norm_gain_db)
                   << " dB at overhead " << c.q << ".\n";
                break;
            }
        }
    }

    md << "\n## Overhead vs exhaustive sweep (" << n_antennas << " beams)\n\n";
    {
        std::vector<std::string> header{"row"};
        for (int q : q_set) header.push_back("Q=" + std::to_string(q));
        md << md_table_row(header);
        md << md_table_row(std::vector<std::string>(header.size(), "---"));
        for (int m : m_set) {
            std::vector<std::string> orow{"O (BBS, M=" + std::to_string(m) + ")"};
            std::vector<std::string> drow{"dO (BBS, M=" + std::to_string(m) + ")"};
            for (int q : q_set) {
                const int o = bbs::brainstorm::overhead(q, m);
                orow.push_back(std::to_string(o));
                drow.push_back(fmt_pct(bbs::evaluation::pct_change_1dp(static_cast<double>(n_antennas), static_cast<double>(o))));
            }
            md << md_table_row(orow);
            md << md_table_row(drow);
        }
    }

    bool has_snr = false;
    for (const auto& c : cells) has_snr |= c.snr_db.has_value();
    if (has_snr) {
        md << "\n## Median normalized gain (dB) vs prompt SNR\n\n";
        std::set<double> snrs;
        for (const auto& c : cells) {
            if (c.snr_db) snrs.insert(*c.snr_db);
        }
        std::vector<std::string> header{"method"};
        for (double s : snrs) header.push_back(fmt_db(s) + " dB");
        md << md_table_row(header);
        md << md_table_row(std::vector<std::string>(header.size(), "---"));
        std::set<std::pair<int, int>> bbs_qm;
        for (const auto& c : cells) {
            if (c.method == bbs::evaluation::kMethodBbs && c.snr_db) bbs_qm.insert({c.q, c.m});
        }
        for (const auto& [q, m] : bbs_qm) {
            std::vector<std::string> row{"BBS Q=" + std::to_string(q) + " M=" + std::to_string(m)};
            for (double s : snrs) {
                std::string cell = "-";
                for (const auto& c : cells) {
                    if (c.method == bbs::evaluation::kMethodBbs && c.q == q && c.m == m && c.snr_db && *c.snr_db == s) {
                        cell = fmt_db(c.median_norm_gain_db);
                    }
                }
                row.push_back(cell);
            }
            md << md_table_row(row);
        }
    }

    md << "\n## Plots\n\n";
    for (const auto& p : plot_files) {
        md << "- `" << fs::path(p).filename().string() << "`\n";
    }

    md << "\n## Scope and reproducibility\n\n";
    md << "Absolute gain figures published for full-scale ray-traced deployments (headline average improvements, "
          "scenario-specific beam patterns, full-width networks trained on 100k users) are NOT desk-scale reproducible "
          "and are not targets of this run. This report reproduces the structure instead: the same figure and table "
          "layouts, trend directions (gain vs Q, gain vs SNR, gain vs M), and exact overhead accounting, all under "
          "fixed seeds. Overhead percentages follow O = Q + M for M > 1 (O = Q for M = 1) strictly; an externally "
          "quoted overhead cell that disagrees with this arithmetic (for example +0.07% where Q=64, M=5 against a "
          "64-beam sweep) is recomputed here from the rule, giving +7.8%.\n";

    const fs::path md_path = fs::path(out_dir) / "report.md";
    std::ofstream out(md_path, std::ios::trunc);
    if (!out) throw bbs::FormatError("cannot write " + md_path.string());
    out << md.str();
    out.close();
    std::vector<std::string> outputs{md_path.string()};
    outputs.insert(outputs.end(), plot_files.begin(), plot_files.end());
    write_manifest(out_dir, "report", json{{"csv", csv_path}, {"format", format}}, seed, {csv_path}, outputs, started);
    std::cout << "wrote " << md_path.string() << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"site-specific generative beamforming pipeline"};
    app.require_subcommand(1);

    std::string config_path, profile = "desk";
    std::uint64_t seed = 1;
    int threads = 1;
    app.add_option("--profile", profile, "size profile")->check(CLI::IsMember({"desk", "paper"}))->envname("BBS_PROFILE");
    auto* seed_opt = app.add_option("--seed", seed, "root seed for all substreams")->envname("BBS_SEED");
    app.add_option("--threads", threads, "worker threads for linear algebra")->envname("BBS_THREADS");
    app.add_option("--config", config_path, "JSON config file (defaults < file < flags)")->envname("BBS_CONFIG");

    auto* gen = app.add_subcommand("gen-data", "generate a synthetic clustered site dataset");
    std::string gen_out;
    int gen_users = 0, gen_antennas = 0;
    bool gen_paths = true;
    gen->add_option("--out", gen_out, "output dataset directory")->required();
    gen->add_option("--num-users", gen_users, "number of users");
    gen->add_option("--num-antennas", gen_antennas, "array size");
    gen->add_flag("--paths-jsonl,!--no-paths-jsonl", gen_paths, "also write per-user path records");

    auto* train = app.add_subcommand("train", "train the conditional denoiser on a dataset");
    std::string train_data, train_out;
    int train_epochs = 0, train_q = 0;
    bool train_resume = false, train_skip_disc = false;
    train->add_option("--data", train_data, "dataset directory")->required();
    train->add_option("--out", train_out, "checkpoint output directory")->required();
    train->add_option("--epochs", train_epochs, "training epochs");
    train->add_option("--Q,--q", train_q, "probing beam count (condition length)");
    train->add_flag("--resume", train_resume, "continue from the existing checkpoint");
    train->add_flag("--skip-disc", train_skip_disc, "skip the regression baseline");

    auto* infer = app.add_subcommand("infer", "generate beams for test users with a trained model");
    std::string infer_model, infer_data, infer_out;
    int infer_q = 8, infer_m = 5, infer_users = 0;
    double infer_snr = 0.0;
    infer->add_option("--model", infer_model, "model checkpoint file")->required();
    infer->add_option("--data", infer_data, "dataset directory")->required();
    infer->add_option("--Q,--q", infer_q, "probing beam count");
    infer->add_option("--M,--m", infer_m, "generated beams per user");
    auto* snr_opt = infer->add_option("--snr", infer_snr, "prompt SNR in dB (omit for noiseless)");
    infer->add_option("--out", infer_out, "output CSV path")->required();
    infer->add_option("--max-users", infer_users, "cap on test users");

    auto* eval = app.add_subcommand("eval", "sweep methods over the test split");
    std::string eval_model_dir, eval_data, eval_out;
    std::vector<int> eval_q, eval_m;
    std::vector<double> eval_snr;
    bool eval_noiseless = true;
    int eval_users = 0;
    eval->add_option("--model-dir", eval_model_dir, "directory with per-Q checkpoints")->required();
    eval->add_option("--data", eval_data, "dataset directory")->required();
    eval->add_option("--out", eval_out, "output directory")->required();
    eval->add_option("--q-list", eval_q, "Q values to sweep");
    eval->add_option("--m-list", eval_m, "M values to sweep");
    eval->add_option("--snr-list", eval_snr, "prompt SNR values in dB");
    eval->add_flag("--noiseless,!--no-noiseless", eval_noiseless, "include the noiseless prompt cell");
    eval->add_option("--max-users", eval_users, "cap on test users");

    auto* report = app.add_subcommand("report", "render tables and figures from an eval CSV");
    std::string report_csv, report_out, report_format = "svg";
    report->add_option("--csv", report_csv, "eval CSV file")->required();
    report->add_option("--out", report_out, "output directory")->required();
    report->add_option("--format", report_format, "plot format")->check(CLI::IsMember({"svg", "ppm"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    Eigen::setNbThreads(threads);
    const bool seed_set = seed_opt->count() > 0;

    try {
        if (gen->parsed()) {
            return cmd_gen_data(config_path, gen_out, profile, seed, seed_set, gen_users, gen_antennas, gen_paths);
        }
        if (train->parsed()) {
            return cmd_train(config_path, train_data, train_out, profile, seed, seed_set, train_epochs, train_q, train_resume,
                             train_skip_disc);
        }
        if (infer->parsed()) {
            std::optional<double> snr;
            if (snr_opt->count() > 0) snr = infer_snr;
            return cmd_infer(infer_model, infer_data, infer_q, infer_m, snr, seed, infer_out, infer_users);
        }
        if (eval->parsed()) {
            return cmd_eval(config_path, eval_model_dir, eval_data, eval_out, eval_q, eval_m, eval_snr, eval_noiseless, eval_users,
                            seed, seed_set);
        }
        if (report->parsed()) {
            return cmd_report(report_csv, report_out, report_format);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
