// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The bbs authors

#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "bbs/brainstorm.hpp"

using namespace bbs;
using namespace bbs::brainstorm;

namespace {

sitegen::SiteDataset tiny_site() {
    sitegen::ArrayConfig array;
    array.num_antennas = 16;
    return sitegen::generate_synthetic_site(array, 24, sitegen::default_geometry(), 5);
}

training::TrainConfig tiny_cfg() {
    training::TrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 8;
    cfg.learning_rate = 1e-3;
    cfg.ema_decay = 0.9;
    cfg.diffusion_steps = 10;
    cfg.seed = 7;
    cfg.net.level_channels = {4, 8};
    cfg.net.attention_heads = 2;
    cfg.net.embed_dim = 8;
    cfg.net.prompt_len = 4;
    cfg.net.seq_len = 16;
    cfg.net.attention_levels = 1;
    return cfg;
}

training::InferenceModel make_model(const sitegen::SiteDataset& site, int epochs, const std::string& tag) {
    const auto set = training::build_training_set(site, 4);
    training::Trainer<float> trainer(tiny_cfg(), set.stats);
    for (int e = 0; e < epochs; ++e) trainer.train_epoch(set);
    const auto dir = std::filesystem::path("test_tmp") / ("brainstorm_" + tag);
    std::filesystem::create_directories(dir);
    const std::string path = (dir / "model.ckpt").string();
    trainer.save_checkpoint(path);
    return training::load_inference_model(path);
}

}  // namespace

TEST_CASE("sweep overhead arithmetic") {
    CHECK(overhead(9, 5) == 14);
    CHECK(overhead(9, 1) == 9);   // the single beam rides along with the probes
    CHECK(overhead(64, 5) == 69);
    CHECK(overhead(4, 1) == 4);
    CHECK_THROWS_AS(overhead(0, 5), ConfigError);
    CHECK_THROWS_AS(overhead(4, 0), ConfigError);
}

TEST_CASE("chain start states are seeded per (user, chain)") {
    const auto a = detail::initial_noise(1, 3, 0, 4096);
    CHECK(a.rows() == 2);
    CHECK(a.cols() == 4096);

    SECTION("deterministic") {
        const auto b = detail::initial_noise(1, 3, 0, 4096);
        CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
    }
    SECTION("chain index, user and seed all separate the stream") {
        CHECK((a - detail::initial_noise(1, 3, 1, 4096)).cwiseAbs().maxCoeff() > 0.1);
        CHECK((a - detail::initial_noise(1, 4, 0, 4096)).cwiseAbs().maxCoeff() > 0.1);
        CHECK((a - detail::initial_noise(2, 3, 0, 4096)).cwiseAbs().maxCoeff() > 0.1);
    }
    SECTION("standard normal moments") {
        const double mean = a.mean();
        const double var = (a.array() - mean).square().mean();
        CHECK(std::abs(mean) < 0.05);
        CHECK(var == Catch::Approx(1.0).epsilon(0.05));
    }
}

TEST_CASE("brainstorm produces scored constant-modulus candidates") {
    const auto site = tiny_site();
    auto model = make_model(site, 0, "untrained");
    std::vector<sitegen::Channel> chans{site.channels[0], site.channels[1]};

    BrainstormConfig cfg;
    cfg.m = 5;
    cfg.q = 4;
    cfg.seed = 11;
    const auto results = brainstorm_batch(chans, model, cfg);
    REQUIRE(results.size() == 2);

    for (size_t u = 0; u < results.size(); ++u) {
        const auto& r = results[u];
        REQUIRE(r.beams.size() == 5);
        REQUIRE(r.gains.size() == 5);
        CHECK(r.overhead == 9);
        for (const auto& beam : r.beams) {
            REQUIRE(beam.w.size() == 16);
            CHECK(std::abs(beam.w.norm() - 1.0) < 1e-12);
            for (int i = 0; i < 16; ++i) {
                CHECK(std::abs(std::abs(beam.w[i]) - 0.25) < 1e-12);
            }
        }
        for (size_t i = 0; i < r.gains.size(); ++i) {
            CHECK(r.gains[i] == Catch::Approx(beams::beam_gain(chans[u], r.beams[i])).margin(1e-12));
            CHECK(r.gains[i] <= r.gains[static_cast<size_t>(r.best_index)]);
            if (static_cast<int>(i) < r.best_index) {
                CHECK(r.gains[i] < r.gains[static_cast<size_t>(r.best_index)]);  // lowest index wins ties
            }
        }
        CHECK(r.best_gain == r.gains[static_cast<size_t>(r.best_index)]);
    }

    SECTION("candidates are diverse") {
        bool distinct = false;
        for (size_t i = 1; i < results[0].gains.size(); ++i) {
            if (results[0].gains[i] != results[0].gains[0]) distinct = true;
        }
        CHECK(distinct);
    }
}

TEST_CASE("brainstorm is deterministic and chunk-size invariant") {
    const auto site = tiny_site();
    auto model = make_model(site, 0, "chunks");
    std::vector<sitegen::Channel> chans{site.channels[0], site.channels[1], site.channels[2]};

    BrainstormConfig cfg;
    cfg.m = 4;
    cfg.q = 4;
    cfg.seed = 3;
    const auto a = brainstorm_batch(chans, model, cfg);
    const auto b = brainstorm_batch(chans, model, cfg);
    BrainstormConfig tiny_chunks = cfg;
    tiny_chunks.chunk_chains = 2;
    const auto c = brainstorm_batch(chans, model, tiny_chunks);

    for (size_t u = 0; u < a.size(); ++u) {
        for (size_t i = 0; i < a[u].gains.size(); ++i) {
            CHECK(a[u].gains[i] == b[u].gains[i]);
            CHECK(a[u].gains[i] == c[u].gains[i]);
        }
        CHECK(a[u].best_index == c[u].best_index);
    }
}

TEST_CASE("early chains do not depend on the total chain count") {
    const auto site = tiny_site();
    auto model = make_model(site, 0, "prefix");
    std::vector<sitegen::Channel> chans{site.channels[0], site.channels[3]};

    BrainstormConfig small;
    small.m = 3;
    small.q = 4;
    small.seed = 21;
    BrainstormConfig large = small;
    large.m = 7;

    const auto rs = brainstorm_batch(chans, model, small);
    const auto rl = brainstorm_batch(chans, model, large);
    for (size_t u = 0; u < rs.size(); ++u) {
        for (size_t i = 0; i < 3; ++i) {
            CHECK(rs[u].gains[i] == rl[u].gains[i]);
        }
    }
}

TEST_CASE("per-user tags decouple users from batch composition") {
    const auto site = tiny_site();
    auto model = make_model(site, 0, "tags");
    std::vector<sitegen::Channel> pair{site.channels[0], site.channels[1]};

    BrainstormConfig cfg;
    cfg.m = 3;
    cfg.q = 4;
    cfg.seed = 9;
    cfg.user_id = 7;
    const auto batch = brainstorm_batch(pair, model, cfg);

    SECTION("implicit tags are user_id + position") {
        BrainstormConfig solo = cfg;
        solo.user_id = 8;
        const auto single = bbs::brainstorm::brainstorm(site.channels[1], model, solo);
        for (size_t i = 0; i < 3; ++i) {
            CHECK(batch[1].gains[i] == single.gains[i]);
        }
    }
    SECTION("explicit tags override positions") {
        const std::vector<int> ids{7, 8};
        const auto tagged = brainstorm_batch(pair, model, cfg, ids);
        for (size_t u = 0; u < 2; ++u) {
            for (size_t i = 0; i < 3; ++i) {
                CHECK(tagged[u].gains[i] == batch[u].gains[i]);
            }
        }
    }
    SECTION("tag count must match channels") {
        const std::vector<int> ids{1, 2, 3};
        CHECK_THROWS_AS(brainstorm_batch(pair, model, cfg, ids), DimensionError);
    }
}

TEST_CASE("prompt noise is controlled by the snr setting") {
    const auto site = tiny_site();
    auto model = make_model(site, 2, "snr");
    std::vector<sitegen::Channel> chans{site.channels[0]};

    BrainstormConfig clean;
    clean.m = 3;
    clean.q = 4;
    clean.seed = 13;
    BrainstormConfig noisy = clean;
    noisy.snr_db = 5.0;

    const auto a = brainstorm_batch(chans, model, clean);
    const auto b = brainstorm_batch(chans, model, noisy);
    const auto b2 = brainstorm_batch(chans, model, noisy);

    bool differs = false;
    for (size_t i = 0; i < 3; ++i) {
        if (a[0].gains[i] != b[0].gains[i]) differs = true;
        CHECK(b[0].gains[i] == b2[0].gains[i]);  // noise draw is seeded
    }
    CHECK(differs);

    BrainstormConfig reseeded = noisy;
    reseeded.seed = 14;
    const auto c = brainstorm_batch(chans, model, reseeded);
    bool seed_matters = false;
    for (size_t i = 0; i < 3; ++i) {
        if (c[0].gains[i] != b[0].gains[i]) seed_matters = true;
    }
    CHECK(seed_matters);
}

TEST_CASE("brainstorm validates the model contract") {
    const auto site = tiny_site();
    auto model = make_model(site, 0, "contract");
    std::vector<sitegen::Channel> chans{site.channels[0]};

    SECTION("prompt length mismatch names both sides") {
        BrainstormConfig cfg;
        cfg.q = 8;
        CHECK_THROWS_WITH(brainstorm_batch(chans, model, cfg),
                          Catch::Matchers::ContainsSubstring("Q=8") && Catch::Matchers::ContainsSubstring("4"));
    }
    SECTION("antenna count mismatch") {
        sitegen::ArrayConfig small;
        small.num_antennas = 8;
        auto other = sitegen::generate_synthetic_site(small, 2, sitegen::default_geometry(), 1);
        std::vector<sitegen::Channel> wrong{other.channels[0]};
        BrainstormConfig cfg;
        cfg.q = 4;
        CHECK_THROWS_WITH(brainstorm_batch(wrong, model, cfg), Catch::Matchers::ContainsSubstring("8"));
    }
    SECTION("config validation") {
        BrainstormConfig cfg;
        cfg.q = 4;
        cfg.m = 0;
        CHECK_THROWS_AS(brainstorm_batch(chans, model, cfg), ConfigError);
    }
}
