#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "rhedge/evaluation.hpp"
#include "rhedge/market_sim.hpp"
#include "rhedge/numeric.hpp"
#include "rhedge/rng.hpp"
#include "rhedge/training.hpp"

#include "support/oracles.hpp"

#include <cmath>

using namespace rhedge;
using namespace rhedge::testing;

namespace {

MarketModelSpec tiny_heston() {
    MarketModelSpec s;
    s.params = HestonParams{};
    s.n_steps = 6;
    s.maturity_years = 6.0 / 365.0;
    return s;
}

struct Fixture {
    MarketModelSpec spec = tiny_heston();
    PathBatch batch = simulate(spec, 64, 3);
    HedgeNetwork net;
    PayoffSpec payoff = EuropeanCall{100.0};
    CostSpec cost{0.0};
    RiskMeasureSpec measure = Cvar{0.5};

    Fixture() {
        const InputLayout layout = layout_for(spec);
        net = init_network(Architecture::NetSim, layout, spec.n_steps, 5, 2);
        for (auto& block : net.blocks) {
            block.w3 *= 0.01;
            block.b3.setConstant(0.1);
        }
        for (int i = 0; i < 3; ++i) forward(net, batch, RunMode::Train);
    }
};

} // namespace

TEST_CASE("evaluate_strategy") {
    Fixture f;

    SUBCASE("matches a naive per-sample oracle") {
        const DeltaArray deltas = forward(f.net, f.batch);
        const Eigen::VectorXd wealth =
            pnl(deltas, f.batch, f.payoff, f.cost, 0.0, f.net.layout.instrument_tracks);
        std::vector<double> w(wealth.data(), wealth.data() + wealth.size());
        const double expect = risk_value(f.measure, w).risk;
        CHECK(evaluate_strategy(f.net, f.batch, f.payoff, f.cost, f.measure) == expect);
    }
    SUBCASE("duplicated dataset evaluates identically") {
        std::vector<const PathBatch*> parts{&f.batch, &f.batch};
        const PathBatch twice = concat_batches(parts);
        const double a = evaluate_strategy(f.net, f.batch, f.payoff, f.cost, f.measure);
        const double b = evaluate_strategy(f.net, twice, f.payoff, f.cost, f.measure);
        CHECK(a == doctest::Approx(b).epsilon(1e-12));
    }
    SUBCASE("re-optimized omega never does worse than the trained omega") {
        const double risk = evaluate_strategy(f.net, f.batch, f.payoff, f.cost, f.measure);
        const DeltaArray deltas = forward(f.net, f.batch);
        for (double omega : {-1.0, 0.0, 0.33, 2.0}) {
            const double fixed =
                dh_loss_batch(deltas, f.batch, f.payoff, f.cost, f.measure, omega);
            CHECK(risk <= fixed + 1e-12);
        }
    }
}

TEST_CASE("attack_curve anchors its delta=0 entry to the clean risk bit for bit") {
    Fixture f;
    std::vector<AttackSpec> specs(1);
    specs[0].method = AttackMethod::Wbpgd;
    specs[0].tracks = {"S"};
    specs[0].iterations = 4;
    const std::vector<double> grid{0.0, 0.05, 0.1};
    const EvalReport report =
        attack_curve(f.net, f.batch, f.payoff, f.cost, f.measure, grid, specs, "h");
    REQUIRE(report.attack_curve.size() == 3);
    CHECK(report.attack_curve[0].delta == 0.0);
    CHECK(report.attack_curve[0].risk ==
          evaluate_strategy(f.net, f.batch, f.payoff, f.cost, f.measure));
    for (const auto& row : report.attack_curve) CHECK(row.config_hash == "h");
}

TEST_CASE("covariance_frobenius") {
    Fixture f;

    SUBCASE("identical batches are at distance zero") {
        const auto [dist, base] = covariance_frobenius(f.batch, f.batch, "S");
        CHECK(dist == 0.0);
        CHECK(base > 0.0);
    }
    SUBCASE("a common shift leaves the covariance unchanged") {
        PathBatch shifted = f.batch;
        const std::size_t s_idx = 0;
        for (std::size_t n = 0; n < shifted.n_samples; ++n)
            for (std::size_t t = 0; t < shifted.n_times(); ++t)
                shifted.at(n, s_idx, t) += 3.25;
        const auto [dist, base] = covariance_frobenius(f.batch, shifted, "S");
        CHECK(dist <= 1e-10 * base);
    }
    SUBCASE("iid noise inflates the diagonal by about s^2 sqrt(T+1)") {
        MarketModelSpec flat = tiny_heston();
        flat.params = BsParams{100.0, 0.0, 0.0};
        flat.n_steps = 14;
        flat.maturity_years = 14.0 / 365.0;
        const std::size_t n = 20000;
        const PathBatch base_batch = simulate(flat, n, 7); // deterministic paths
        PathBatch noisy = base_batch;
        const double s = 0.8;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t t = 0; t < 15; ++t)
                noisy.at(i, 0, t) += s * counter_normal(11, i, t, 0);
        const auto [dist, base_norm] = covariance_frobenius(base_batch, noisy, "S");
        (void)base_norm;
        const double expect = s * s * std::sqrt(15.0);
        CHECK(dist == doctest::Approx(expect).epsilon(0.1));
    }
    SUBCASE("fewer than two samples is rejected") {
        const PathBatch one = slice_batch(f.batch, 0, 1);
        CHECK_THROWS(covariance_frobenius(one, one, "S"));
    }
}

TEST_CASE("cumulative_acf") {
    SUBCASE("lag 0 is exactly 1") {
        std::vector<double> path(40);
        for (std::size_t t = 0; t < path.size(); ++t)
            path[t] = counter_normal(13, t, 0, 0) + 0.05 * t;
        CHECK(cumulative_acf(path, 0) == 1.0);
    }
    SUBCASE("constant paths are rejected") {
        std::vector<double> path(20, 4.2);
        CHECK_THROWS(cumulative_acf(path, 1));
    }
    SUBCASE("lag out of range is rejected") {
        std::vector<double> path{1.0, 2.0, 3.0};
        CHECK_THROWS(cumulative_acf(path, 3));
        CHECK_THROWS(cumulative_acf(path, -1));
    }
    SUBCASE("white noise at lag 1 stays near 1 within 3 SE") {
        const std::size_t len = 1000, paths = 200;
        std::vector<double> acf1(paths);
        for (std::size_t p = 0; p < paths; ++p) {
            std::vector<double> x(len);
            for (std::size_t t = 0; t < len; ++t) x[t] = counter_normal(17, p, t, 0);
            acf1[p] = cumulative_acf(x, 1);
        }
        const double mean = pairwise_mean(acf1);
        double var = 0.0;
        for (double a : acf1) var += (a - mean) * (a - mean);
        var /= static_cast<double>(paths - 1);
        const double se = std::sqrt(var / paths);
        CHECK(std::abs(mean - 1.0) < 3.0 * se + 2.0 / len);
    }
}

TEST_CASE("acf_difference averages per-path ACF deviations per lag") {
    Fixture f;
    PathBatch pert = f.batch;
    for (std::size_t n = 0; n < pert.n_samples; ++n)
        for (std::size_t t = 1; t < pert.n_times(); ++t)
            pert.at(n, 0, t) += 0.01 * counter_normal(19, n, t, 0);
    const auto diffs = acf_difference(f.batch, pert, "S", 3);
    REQUIRE(diffs.size() == 4);
    CHECK(diffs[0] == 0.0); // lag 0 is 1 for both
    for (double d : diffs) {
        CHECK(d >= 0.0);
        CHECK(std::isfinite(d));
    }
}

TEST_CASE("oos_report") {
    Fixture f;
    HedgeNetwork other = f.net;
    other.omega += 0.1;
    for (auto& b : other.blocks) b.b3.array() += 0.05;

    SUBCASE("a single partition collapses the statistics") {
        const std::vector<const HedgeNetwork*> nets{&f.net};
        const PartitionGroup g{"clean", 64, nets};
        const EvalReport r =
            oos_report(std::vector<PartitionGroup>{g}, f.batch, f.payoff, f.cost, f.measure);
        REQUIRE(r.oos.size() == 1);
        CHECK(r.oos[0].mean == r.oos[0].min);
        CHECK(r.oos[0].mean == r.oos[0].max);
        CHECK(std::isnan(r.oos[0].variance));
    }
    SUBCASE("two partitions produce honest min/mean/max") {
        const std::vector<const HedgeNetwork*> nets{&f.net, &other};
        const PartitionGroup g{"clean", 32, nets};
        const EvalReport r =
            oos_report(std::vector<PartitionGroup>{g}, f.batch, f.payoff, f.cost, f.measure);
        REQUIRE(r.oos.size() == 1);
        CHECK(r.oos[0].min <= r.oos[0].mean);
        CHECK(r.oos[0].mean <= r.oos[0].max);
        CHECK(std::isfinite(r.oos[0].variance));
    }
}

TEST_CASE("ood_report") {
    Fixture f;

    SUBCASE("identity scaling reproduces the same-distribution pool") {
        const auto specs = perturb_params_ood(f.spec, 3, 1.0, 1.0, 31);
        const std::vector<NamedStrategy> strategies{{"clean", &f.net}};
        const EvalReport r = ood_report(strategies, specs, 50, 31, f.payoff, f.cost, f.measure);
        REQUIRE(r.ood.size() == 1);

        // same seed discipline, by hand
        std::vector<PathBatch> pools;
        for (std::size_t i = 0; i < specs.size(); ++i)
            pools.push_back(simulate(f.spec, 50, 31 + i));
        std::vector<const PathBatch*> parts;
        for (const auto& p : pools) parts.push_back(&p);
        const PathBatch pool = concat_batches(parts);
        CHECK(r.ood[0].mean == evaluate_strategy(f.net, pool, f.payoff, f.cost, f.measure));
    }
    SUBCASE("one row per strategy") {
        const auto specs = perturb_params_ood(f.spec, 2, 0.9, 1.1, 33);
        HedgeNetwork other = f.net;
        other.omega += 0.2;
        const std::vector<NamedStrategy> strategies{{"a", &f.net}, {"b", &other}};
        const EvalReport r = ood_report(strategies, specs, 40, 33, f.payoff, f.cost, f.measure);
        CHECK(r.ood.size() == 2);
    }
}

TEST_CASE("EvalReport serialization and validation") {
    EvalReport r;
    r.attack_curve.push_back({"wbpgd", "s", 0.1, 2.5, "h"});
    r.oos.push_back({"clean", 5000, 2.0, 1.5, 2.5, 0.1, "h"});
    r.covariance.push_back({"wbpgd", "s", 0.1, 0.5, 386.0, "h"});
    r.acf.push_back({"wbpgd", "s", 0.1, 1, 0.001, "h"});
    CHECK_NOTHROW(r.validate());
    const std::string json_text = r.to_json();
    CHECK(json_text.find("attack_curve") != std::string::npos);

    const auto dir = std::filesystem::temp_directory_path() / "rhedge_report_test";
    std::filesystem::remove_all(dir);
    r.write_csv(dir);
    CHECK(std::filesystem::exists(dir / "attack_curve.csv"));
    CHECK(std::filesystem::exists(dir / "oos.csv"));
    CHECK(std::filesystem::exists(dir / "diag_cov.csv"));
    CHECK(std::filesystem::exists(dir / "diag_acf.csv"));
    CHECK(!std::filesystem::exists(dir / "ood.csv"));

    EvalReport bad;
    bad.oos.push_back({"x", 1, 2.0, 3.0, 1.0, 0.0, ""}); // min > mean
    CHECK_THROWS(bad.validate());
}
