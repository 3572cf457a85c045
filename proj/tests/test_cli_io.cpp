#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "rhedge/batch_io.hpp"
#include "rhedge/checkpoint.hpp"
#include "rhedge/config.hpp"
#include "rhedge/csv_import.hpp"
#include "rhedge/manifest.hpp"
#include "rhedge/pipeline.hpp"

#include "support/oracles.hpp"

#include "json.hpp"

#include <fstream>

using namespace rhedge;
using namespace rhedge::testing;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / name;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

} // namespace

TEST_CASE("minimal configs load with the documented defaults") {
    const ExperimentConfig c = parse_config(R"({"model": {"type": "bs"}})");
    CHECK(c.model.kind() == ModelKind::BlackScholes);
    CHECK(c.model.bs().s0 == 100.0);
    CHECK(c.model.n_steps == 30);
    CHECK(std::holds_alternative<Entropic>(c.measure));
    CHECK(std::get<EuropeanCall>(c.payoff).strike == 100.0);
    CHECK(c.learning_rate == 0.005);
    CHECK(c.clean_epochs == 300); // clean baseline depth
    CHECK(c.batch_size == 10000);
    CHECK(c.evaluation.attack_tracks == std::vector<std::string>{"s"});

    const ExperimentConfig h = parse_config(R"({"model": {"type": "heston"}})");
    CHECK(std::holds_alternative<Cvar>(h.measure));
    CHECK(h.learning_rate == 0.05);
    CHECK(h.clean_epochs == 700);
    CHECK(h.evaluation.attack_tracks == std::vector<std::string>{"s", "sv"});

    const ExperimentConfig adv = parse_config(
        R"({"model": {"type": "heston"}, "train": {"adversarial_epochs": 400}})");
    CHECK(adv.clean_epochs == 300); // warm-start depth when adversarial

    const ExperimentConfig g = parse_config(R"({"model": {"type": "gad"}})");
    CHECK(std::holds_alternative<AsianPut>(g.payoff));
}

TEST_CASE("unknown keys and inconsistent configs are rejected") {
    CHECK_THROWS(parse_config(R"({"model": {"type": "bs"}, "typo": 1})"));
    CHECK_THROWS(parse_config(R"({"model": {"type": "bs", "volatility": 0.2}})"));
    CHECK_THROWS(parse_config(R"({"model": {"type": "quux"}})"));
    CHECK_THROWS(parse_config(R"({"model": {"type": "bs"}, "risk": {"type": "cvar", "alpha": 2}})"));
    CHECK_THROWS(parse_config("not json"));
    CHECK_THROWS(parse_config(R"({"version": 7, "model": {"type": "bs"}})"));

    // the SV attack needs the variance track
    const std::string sv_on_bs =
        R"({"model": {"type": "bs"}, "attack": {"tracks": "sv", "delta": 0.1}})";
    try {
        parse_config(sv_on_bs);
        FAIL("expected rejection");
    } catch (const std::invalid_argument& e) {
        CHECK(std::string(e.what()).find("variance track is absent") != std::string::npos);
    }
    CHECK_THROWS(parse_config(
        R"({"model": {"type": "bs"}, "evaluation": {"attack_tracks": ["sv"]}})"));
    CHECK_THROWS(parse_config(R"({"model": {"type": "bs"}, "gad_interval_mode": true})"));
}

TEST_CASE("config serialization round-trips") {
    const std::string text = R"({
        "model": {"type": "heston", "v0": 0.09, "correlation": -0.5},
        "payoff": {"type": "european_call", "strike": 95.0},
        "cost": {"rate": 0.005},
        "risk": {"type": "cvar", "alpha": 0.6},
        "network": {"architecture": "netrec"},
        "train": {"n_train": 5000, "clean_epochs": 10, "adversarial_epochs": 4,
                  "batch_size": 500, "learning_rate": 0.01},
        "attack": {"method": "wpgd", "delta": 0.25, "tracks": "sv", "sv_weight": 2.0,
                   "p": 3.0, "projection": "saturate"},
        "evaluation": {"delta_grid": [0, 0.1], "methods": ["wpgd"],
                       "oos_partition_sizes": [1000], "ood": {"n_specs": 4}},
        "search": {"alpha_grid": [0, 1], "delta_grid": [0.01]},
        "seeds": {"master": 777},
        "output_dir": "runs/x"
    })";
    const ExperimentConfig a = parse_config(text);
    const ExperimentConfig b = parse_config(serialize_config(a));
    CHECK(serialize_config(a) == serialize_config(b));
    CHECK(config_hash(a) == config_hash(b));
    CHECK(b.model.heston().v0 == 0.09);
    CHECK(b.attack.projection == ProjectionMode::BoundarySaturating);
    CHECK(b.attack.track_weights == std::vector<double>{1.0, 2.0});
    CHECK(b.evaluation.ood.n_specs == 4);
    CHECK(b.search.alpha_grid == std::vector<double>{0.0, 1.0});
    CHECK(b.arch == Architecture::NetRec);
}

TEST_CASE("path batch container round-trips bit for bit") {
    const auto dir = temp_dir("rhedge_io_test");
    PathBatch batch = random_batch(17, {"S", "v"}, 9, 51);
    batch.degenerate_steps = 3;
    const auto path = dir / "batch.rhpb";
    save_path_batch(batch, path, R"({"seed": 51})");

    const PathBatch loaded = load_path_batch(path);
    CHECK(loaded.n_samples == 17);
    CHECK(loaded.tracks == batch.tracks);
    CHECK(loaded.horizon_steps == 9);
    CHECK(loaded.dt == batch.dt);
    CHECK(loaded.values == batch.values);
    CHECK(loaded.degenerate_steps == 3);
    CHECK(load_batch_sidecar(path).find("seed") != std::string::npos);
    CHECK(hash_batch(loaded) == hash_batch(batch));

    std::ofstream(dir / "junk.rhpb") << "not a container";
    CHECK_THROWS(load_path_batch(dir / "junk.rhpb"));
    CHECK_THROWS(load_path_batch(dir / "missing.rhpb"));
}

TEST_CASE("checkpoints round-trip the network and optimizer state") {
    const auto dir = temp_dir("rhedge_ckpt_test");
    MarketModelSpec spec;
    spec.params = HestonParams{};
    spec.n_steps = 5;
    spec.maturity_years = 5.0 / 365.0;
    const InputLayout layout = layout_for(spec);
    HedgeNetwork net = init_network(Architecture::NetRec, layout, 5, 61, 2);
    net.omega = 0.4;
    OptimizerState opt = OptimizerState::init(net, LrSchedule{0.05, 0.5, 25});
    opt.step = 7;
    opt.m_omega = 0.1;

    const auto path = dir / "net.rhnn";
    save_checkpoint(net, &opt, path, R"({"phase": "test"})");
    const Checkpoint ck = load_checkpoint(path);
    CHECK(ck.net.arch == Architecture::NetRec);
    CHECK(ck.net.omega == 0.4);
    CHECK(ck.net.horizon == 5);
    CHECK(ck.net.layout.feature_tracks == layout.feature_tracks);
    CHECK(ck.net.layout.instrument_tracks == layout.instrument_tracks);
    REQUIRE(ck.net.layout.vswap.has_value());
    CHECK(ck.net.layout.vswap->mean_reversion == layout.vswap->mean_reversion);
    for (int t = 0; t < 5; ++t) {
        CHECK(ck.net.blocks[t].w1 == net.blocks[t].w1);
        CHECK(ck.net.blocks[t].gamma2 == net.blocks[t].gamma2);
        CHECK(ck.net.stats[t].var1 == net.stats[t].var1);
    }
    REQUIRE(ck.optimizer.has_value());
    CHECK(ck.optimizer->step == 7);
    CHECK(ck.optimizer->m_omega == 0.1);
    CHECK(ck.optimizer->schedule.decay_interval == 25);
    CHECK(load_checkpoint_manifest(path).find("phase") != std::string::npos);

    // forward parity after reload
    const PathBatch batch = simulate(spec, 8, 71);
    const DeltaArray a = forward(static_cast<const HedgeNetwork&>(net), batch);
    const DeltaArray b = forward(static_cast<const HedgeNetwork&>(ck.net), batch);
    CHECK(a.values == b.values);
}

TEST_CASE("price CSV import") {
    const auto dir = temp_dir("rhedge_csv_test");

    SUBCASE("constant series becomes constant windows at the anchor price") {
        std::ofstream os(dir / "flat.csv");
        os << "date,close\n";
        for (int d = 1; d <= 40; ++d)
            os << "2020-01-" << (d < 10 ? "0" : "") << d << ",50.0\n";
        os.close();
        const PathBatch b = import_price_csv(dir / "flat.csv", 30, 10.0);
        CHECK(b.n_samples == 40 - 30 + 1);
        CHECK(b.horizon_steps == 29);
        for (std::size_t n = 0; n < b.n_samples; ++n)
            for (std::size_t t = 0; t < 30; ++t) CHECK(b.at(n, 0, t) == 10.0);
    }
    SUBCASE("every window starts exactly at the anchor") {
        std::ofstream os(dir / "trend.csv");
        os << "date,close\n";
        for (int d = 0; d < 12; ++d)
            os << "2021-02-" << (d + 10) << "," << 100.0 + 3.0 * d << "\n";
        os.close();
        const PathBatch b = import_price_csv(dir / "trend.csv", 5, 10.0);
        CHECK(b.n_samples == 8);
        for (std::size_t n = 0; n < b.n_samples; ++n) CHECK(b.at(n, 0, 0) == 10.0);
        CHECK(b.at(0, 0, 1) == doctest::Approx(10.0 * 103.0 / 100.0).epsilon(1e-15));
    }
    SUBCASE("non-monotone dates are rejected") {
        std::ofstream os(dir / "bad_dates.csv");
        os << "2020-01-02,1\n2020-01-01,2\n";
        os.close();
        CHECK_THROWS(import_price_csv(dir / "bad_dates.csv", 2, 10.0));
    }
    SUBCASE("missing values are rejected with the line number") {
        std::ofstream os(dir / "holes.csv");
        os << "date,close\n2020-01-01,5\n2020-01-02,\n2020-01-03,6\n";
        os.close();
        try {
            import_price_csv(dir / "holes.csv", 2, 10.0);
            FAIL("expected error");
        } catch (const std::invalid_argument& e) {
            CHECK(std::string(e.what()).find("line 3") != std::string::npos);
        }
    }
    SUBCASE("series shorter than the window is rejected") {
        std::ofstream os(dir / "short.csv");
        os << "2020-01-01,5\n2020-01-02,6\n";
        os.close();
        CHECK_THROWS(import_price_csv(dir / "short.csv", 3, 10.0));
    }
}

TEST_CASE("pipeline: determinism, resume and the four report kinds") {
    const auto dir = temp_dir("rhedge_pipe_test");
    const std::string text = R"({
        "model": {"type": "heston", "n_steps": 5, "maturity_years": 0.0137},
        "train": {"n_train": 96, "n_validation": 48, "n_test": 96,
                  "clean_epochs": 3, "adversarial_epochs": 2, "batch_size": 48},
        "attack": {"delta": 0.05, "iterations": 3},
        "evaluation": {"delta_grid": [0, 0.05], "methods": ["wbpgd"],
                       "attack_tracks": ["s", "sv"], "acf_max_lag": 3,
                       "oos_partition_sizes": [48],
                       "ood": {"n_specs": 2, "paths_per_spec": 30}},
        "seeds": {"master": 4242}
    })";
    const ExperimentConfig config = parse_config(text);

    const RunManifest first = run_pipeline(config, dir / "run1");
    CHECK(std::filesystem::exists(dir / "run1" / "manifest.json"));
    CHECK(std::filesystem::exists(dir / "run1" / "data" / "train.rhpb"));
    CHECK(std::filesystem::exists(dir / "run1" / "checkpoints" / "clean.rhnn"));
    CHECK(std::filesystem::exists(dir / "run1" / "checkpoints" / "robust.rhnn"));
    CHECK(std::filesystem::exists(dir / "run1" / "report" / "attack_curve.csv"));
    CHECK(std::filesystem::exists(dir / "run1" / "report" / "oos.csv"));
    CHECK(std::filesystem::exists(dir / "run1" / "report" / "ood.csv"));
    CHECK(std::filesystem::exists(dir / "run1" / "report" / "diag_cov.csv"));
    CHECK(std::filesystem::exists(dir / "run1" / "report" / "diag_acf.csv"));

    // independent rerun in a fresh directory: byte-identical artifacts
    const RunManifest second = run_pipeline(config, dir / "run2");
    CHECK(first.artifacts == second.artifacts);
    CHECK(first.config_hash == second.config_hash);

    // rerun in place: stages are reused, hashes unchanged
    const RunManifest resumed = run_pipeline(config, dir / "run1");
    CHECK(resumed.artifacts == first.artifacts);
    bool saw_reuse = false;
    for (const auto& line : resumed.stage_log)
        saw_reuse = saw_reuse || line.find("reused") != std::string::npos;
    CHECK(saw_reuse);

    // evaluation-only plan on an existing checkpoint skips training
    ExperimentConfig eval_only = config;
    eval_only.existing_checkpoint = (dir / "run1" / "checkpoints" / "clean.rhnn").string();
    eval_only.adversarial_epochs = 0;
    eval_only.evaluation.oos_partition_sizes.clear();
    const RunManifest third = run_pipeline(eval_only, dir / "run3");
    bool skipped = false;
    for (const auto& line : third.stage_log)
        skipped = skipped || line.find("skipped") != std::string::npos;
    CHECK(skipped);
}

TEST_CASE("manifest hashing is stable") {
    const auto dir = temp_dir("rhedge_manifest_test");
    std::ofstream(dir / "a.bin") << "payload";
    const std::string h1 = hash_file(dir / "a.bin");
    const std::string h2 = hash_file(dir / "a.bin");
    CHECK(h1 == h2);
    CHECK(h1.size() == 16);

    RunManifest m;
    m.config_hash = "abc";
    m.artifacts["a.bin"] = h1;
    write_manifest(m, dir / "manifest.json");
    const auto parsed = nlohmann::json::parse(std::ifstream(dir / "manifest.json"));
    CHECK(parsed["config_hash"] == "abc");
    CHECK(parsed["artifacts"]["a.bin"] == h1);
}
