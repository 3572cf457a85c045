#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "rhedge/market_sim.hpp"
#include "rhedge/objective.hpp"
#include "rhedge/rng.hpp"

#include "support/oracles.hpp"

#include <cmath>

using namespace rhedge;
using namespace rhedge::testing;

namespace {

PathBatch single_track_batch(const std::vector<std::vector<double>>& paths) {
    PathBatch b = PathBatch::zeros(paths.size(), {"S"}, paths[0].size() - 1, 1.0 / 365.0);
    for (std::size_t n = 0; n < paths.size(); ++n)
        for (std::size_t t = 0; t < paths[n].size(); ++t) b.at(n, 0, t) = paths[n][t];
    return b;
}

} // namespace

TEST_CASE("payoff anchors") {
    SUBCASE("call at the money pays nothing") {
        const auto b = single_track_batch({{100, 101, 100}});
        CHECK(payoff(EuropeanCall{100.0}, b)(0) == 0.0);
    }
    SUBCASE("call pays intrinsic value") {
        const auto b = single_track_batch({{100, 102, 105}});
        CHECK(payoff(EuropeanCall{100.0}, b)(0) == 5.0);
    }
    SUBCASE("asian put on a constant path is worthless") {
        const auto b = single_track_batch({{7, 7, 7, 7}});
        CHECK(payoff(AsianPut{}, b)(0) == 0.0);
    }
    SUBCASE("asian put averages dates 1..T") {
        const auto b = single_track_batch({{10, 8, 6, 10}});
        CHECK(payoff(AsianPut{}, b)(0) == doctest::Approx(10.0 - 8.0).epsilon(1e-15));
    }
    SUBCASE("missing track is rejected") {
        PathBatch b = PathBatch::zeros(1, {"X"}, 2, 1.0);
        CHECK_THROWS(payoff(EuropeanCall{100.0}, b));
    }
}

TEST_CASE("pnl anchors") {
    const auto b = single_track_batch({{100, 104, 98, 103}});
    const std::size_t T = 3;

    SUBCASE("zero strategy is p0 minus the claim") {
        const auto d = DeltaArray::zeros(1, 1, T);
        const auto w = pnl(d, b, EuropeanCall{100.0}, CostSpec{0.0}, 2.5);
        CHECK(w(0) == 2.5 - 3.0);
    }
    SUBCASE("buy and hold telescopes") {
        auto d = DeltaArray::zeros(1, 1, T);
        for (std::size_t t = 0; t < T; ++t) d.at(0, 0, t) = 1.0;
        const auto w = pnl(d, b, EuropeanCall{1000.0}, CostSpec{0.0}, 0.0);
        CHECK(w(0) == doctest::Approx(103.0 - 100.0).epsilon(1e-12));
    }
    SUBCASE("one round trip pays proportional costs on both trades") {
        auto d = DeltaArray::zeros(1, 1, T);
        d.at(0, 0, 0) = 1.0;
        const auto w0 = pnl(d, b, EuropeanCall{1000.0}, CostSpec{0.0}, 0.0);
        const auto w = pnl(d, b, EuropeanCall{1000.0}, CostSpec{0.005}, 0.0);
        CHECK(w0(0) - w(0) == doctest::Approx(0.005 * (100.0 + 104.0)).epsilon(1e-12));
    }
    SUBCASE("zero rate reproduces the frictionless value bit for bit") {
        auto d = DeltaArray::zeros(1, 1, T);
        d.at(0, 0, 0) = 0.7;
        d.at(0, 0, 1) = -0.3;
        d.at(0, 0, 2) = 1.1;
        const auto w = pnl(d, b, EuropeanCall{100.0}, CostSpec{0.0}, 0.0);
        double manual = 0.0;
        double prev = 0.0;
        for (std::size_t t = 0; t < T; ++t) {
            manual += d.at(0, 0, t) * (b.at(0, 0, t + 1) - b.at(0, 0, t));
            prev = d.at(0, 0, t);
        }
        (void)prev;
        manual -= 3.0;
        CHECK(w(0) == manual);
    }
    SUBCASE("shape mismatch is rejected") {
        const auto d = DeltaArray::zeros(2, 1, T);
        CHECK_THROWS(pnl(d, b, EuropeanCall{100.0}, CostSpec{0.0}, 0.0));
    }
}

TEST_CASE("OCE pointwise loss anchors") {
    CHECK(oce_pointwise_loss(Entropic{1.0}, 0.0, 0.0) == 0.0);
    CHECK(oce_pointwise_loss(Cvar{0.5}, -3.0, 1.0) == 5.0);
    CHECK(oce_pointwise_loss(Cvar{0.5}, 10.0, 1.0) == 1.0); // hinge inactive
}

TEST_CASE("OCE pointwise gradients match finite differences away from the kink") {
    for (const RiskMeasureSpec measure :
         {RiskMeasureSpec(Entropic{0.7}), RiskMeasureSpec(Cvar{0.6})}) {
        for (double z : {-2.0, -0.5, 0.4, 1.7}) {
            const double omega = 0.3;
            const OceGrad g = oce_pointwise_grad(measure, z, omega);
            const double h = 1e-6;
            const double fd_z = central_diff(
                [&](double x) { return oce_pointwise_loss(measure, x, omega); }, z, h);
            const double fd_w = central_diff(
                [&](double w) { return oce_pointwise_loss(measure, z, w); }, omega, h);
            CHECK(g.d_pnl == doctest::Approx(fd_z).epsilon(1e-6));
            CHECK(g.d_omega == doctest::Approx(fd_w).epsilon(1e-6));
        }
    }
}

TEST_CASE("risk_value solves the OCE infimum") {
    SUBCASE("constant wealth has risk -c for both measures") {
        std::vector<double> z(40, 1.75);
        CHECK(risk_value(Entropic{2.0}, z).risk == doctest::Approx(-1.75).epsilon(1e-14));
        CHECK(risk_value(Cvar{0.3}, z).risk == doctest::Approx(-1.75).epsilon(1e-14));
    }
    SUBCASE("CVaR 0.5 on {-1,-2,-3,-4} is the mean of the worst half") {
        std::vector<double> z{-1, -2, -3, -4};
        const auto rv = risk_value(Cvar{0.5}, z);
        CHECK(rv.risk == 3.5);
        CHECK(rv.omega_star == 2.0);
    }
    SUBCASE("entropic closed form matches a fine grid search") {
        std::vector<double> z(257);
        for (std::size_t i = 0; i < z.size(); ++i) z[i] = counter_normal(3, i, 0, 0) * 1.5 - 0.2;
        const auto rv = risk_value(Entropic{1.3}, z);
        const double grid = grid_oce_risk(Entropic{1.3}, z, rv.omega_star - 0.5,
                                          rv.omega_star + 0.5, 200000);
        CHECK(rv.risk == doctest::Approx(grid).epsilon(1e-6));
        CHECK(rv.risk <= grid + 1e-12);
    }
    SUBCASE("CVaR equals the brute-force tail mean when (1-alpha)N is integral") {
        for (double alpha : {0.0, 0.25, 0.5, 0.75}) {
            std::vector<double> z(160);
            for (std::size_t i = 0; i < z.size(); ++i) z[i] = counter_normal(4, i, 0, 0);
            const double direct = risk_value(Cvar{alpha}, z).risk;
            const double brute = brute_force_cvar(z, alpha);
            CHECK(direct == doctest::Approx(brute).epsilon(1e-12));
        }
    }
    SUBCASE("cash invariance within 1e-10") {
        std::vector<double> z(123);
        for (std::size_t i = 0; i < z.size(); ++i) z[i] = counter_normal(5, i, 0, 0);
        for (const RiskMeasureSpec measure :
             {RiskMeasureSpec(Entropic{0.8}), RiskMeasureSpec(Cvar{0.5})}) {
            const double base = risk_value(measure, z).risk;
            for (double c : {-3.0, 0.25, 11.0}) {
                std::vector<double> shifted = z;
                for (double& x : shifted) x += c;
                CHECK(risk_value(measure, shifted).risk ==
                      doctest::Approx(base - c).epsilon(1e-10));
            }
        }
    }
    SUBCASE("exp overflow reports the offending sample") {
        std::vector<double> z{0.0, -800.0, 1.0};
        try {
            risk_value(Entropic{1.0}, z);
            FAIL("expected overflow error");
        } catch (const std::overflow_error& e) {
            CHECK(std::string(e.what()).find("sample 1") != std::string::npos);
        }
    }
    SUBCASE("empty input is rejected") {
        CHECK_THROWS(risk_value(Cvar{0.5}, std::vector<double>{}));
    }
}

TEST_CASE("dh_loss_batch") {
    const auto spec = [] {
        MarketModelSpec s;
        s.params = BsParams{100.0, 0.0, 0.2};
        s.n_steps = 6;
        s.maturity_years = 6.0 / 365.0;
        return s;
    }();
    const PathBatch b = simulate_bs(spec, 9, 123);
    DeltaArray d = DeltaArray::zeros(9, 1, 6);
    for (std::size_t n = 0; n < 9; ++n)
        for (std::size_t t = 0; t < 6; ++t) d.at(n, 0, t) = 0.1 * counter_normal(6, n, t, 0);

    SUBCASE("single sample reduces to the pointwise loss") {
        const PathBatch one = slice_batch(b, 2, 1);
        DeltaArray d1 = DeltaArray::zeros(1, 1, 6);
        for (std::size_t t = 0; t < 6; ++t) d1.at(0, 0, t) = d.at(2, 0, t);
        const double loss =
            dh_loss_batch(d1, one, EuropeanCall{100.0}, CostSpec{0.0}, Entropic{1.0}, 0.3);
        const auto w = pnl(d1, one, EuropeanCall{100.0}, CostSpec{0.0}, 0.0);
        CHECK(loss == oce_pointwise_loss(Entropic{1.0}, w(0), 0.3));
    }
    SUBCASE("duplicated batch keeps the mean") {
        std::vector<const PathBatch*> parts{&b, &b};
        const PathBatch twice = concat_batches(parts);
        DeltaArray d2 = DeltaArray::zeros(18, 1, 6);
        for (std::size_t n = 0; n < 18; ++n)
            for (std::size_t t = 0; t < 6; ++t) d2.at(n, 0, t) = d.at(n % 9, 0, t);
        const double a =
            dh_loss_batch(d, b, EuropeanCall{100.0}, CostSpec{0.005}, Cvar{0.5}, 0.1);
        const double bb =
            dh_loss_batch(d2, twice, EuropeanCall{100.0}, CostSpec{0.005}, Cvar{0.5}, 0.1);
        CHECK(a == doctest::Approx(bb).epsilon(1e-14));
    }
    SUBCASE("matches the naive per-sample loop oracle within 1e-12") {
        for (const RiskMeasureSpec measure :
             {RiskMeasureSpec(Entropic{1.0}), RiskMeasureSpec(Cvar{0.5})}) {
            for (double eps : {0.0, 0.005}) {
                const double fast =
                    dh_loss_batch(d, b, EuropeanCall{100.0}, CostSpec{eps}, measure, 0.2);
                const double naive = naive_dh_loss(d, b, EuropeanCall{100.0}, CostSpec{eps},
                                                   measure, 0.2, {"S"});
                CHECK(fast == doctest::Approx(naive).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("spec validation") {
    CHECK_THROWS(validate(PayoffSpec(EuropeanCall{-1.0})));
    CHECK_THROWS(validate(RiskMeasureSpec(Entropic{0.0})));
    CHECK_THROWS(validate(RiskMeasureSpec(Cvar{1.0})));
    CHECK_THROWS(validate(CostSpec{-0.1}));
    CHECK_NOTHROW(validate(RiskMeasureSpec(Cvar{0.0})));
}
