#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "rhedge/market_sim.hpp"
#include "rhedge/numeric.hpp"
#include "rhedge/rng.hpp"

#include "support/oracles.hpp"

#include <cmath>

using namespace rhedge;

namespace {

MarketModelSpec bs_spec(double s0 = 100.0, double m = 0.0, double sigma = 0.2) {
    MarketModelSpec spec;
    spec.params = BsParams{s0, m, sigma};
    spec.maturity_years = 30.0 / 365.0;
    spec.n_steps = 30;
    return spec;
}

MarketModelSpec heston_spec() {
    MarketModelSpec spec;
    spec.params = HestonParams{};
    spec.maturity_years = 30.0 / 365.0;
    spec.n_steps = 30;
    return spec;
}

} // namespace

TEST_CASE("BS with zero volatility is the exact drift curve") {
    auto spec = bs_spec(100.0, 0.3, 0.0);
    const PathBatch b = simulate_bs(spec, 5, 11);
    for (std::size_t n = 0; n < 5; ++n)
        for (std::size_t t = 0; t <= 30; ++t) {
            const double expect = 100.0 * std::exp(0.3 * static_cast<double>(t) * spec.dt());
            CHECK(b.at(n, 0, t) == expect); // exact scheme, not Euler
        }
}

TEST_CASE("same seed reproduces bit-identical batches") {
    const auto spec = bs_spec();
    const PathBatch a = simulate_bs(spec, 64, 77);
    const PathBatch b = simulate_bs(spec, 64, 77);
    CHECK(a.values == b.values);
    const PathBatch c = simulate_bs(spec, 64, 78);
    CHECK(a.values != c.values);

    const auto hs = heston_spec();
    CHECK(simulate_heston(hs, 32, 5).values == simulate_heston(hs, 32, 5).values);
}

TEST_CASE("BS log-return moments match the log-normal law at 100k") {
    const double sigma = 0.2;
    const auto spec = bs_spec(100.0, 0.0, sigma);
    const std::size_t n = 100000;
    const PathBatch b = simulate_bs(spec, n, 1234);
    const double horizon = spec.maturity_years;
    std::vector<double> logret(n);
    for (std::size_t i = 0; i < n; ++i) logret[i] = std::log(b.at(i, 0, 30) / b.at(i, 0, 0));
    const double mean = pairwise_mean(logret);
    double var = 0.0;
    for (double x : logret) var += (x - mean) * (x - mean);
    var /= static_cast<double>(n - 1);

    const double expect_mean = -0.5 * sigma * sigma * horizon;
    const double expect_var = sigma * sigma * horizon;
    const double se_mean = std::sqrt(expect_var / n);
    const double se_var = expect_var * std::sqrt(2.0 / static_cast<double>(n - 1));
    CHECK(std::abs(mean - expect_mean) < 3.0 * se_mean);
    CHECK(std::abs(var - expect_var) < 3.0 * se_var);
}

TEST_CASE("rejects wrong spec variants and empty batches") {
    CHECK_THROWS(simulate_bs(heston_spec(), 10, 1));
    CHECK_THROWS(simulate_heston(bs_spec(), 10, 1));
    CHECK_THROWS(simulate_bs(bs_spec(), 0, 1));
    CHECK_THROWS(simulate_heston(heston_spec(), 0, 1));
}

TEST_CASE("Heston with zero vol-of-vol and v0=b degenerates to constant variance") {
    MarketModelSpec spec = heston_spec();
    auto p = spec.heston();
    p.vol_of_vol = 0.0;
    p.v0 = p.long_run_var;
    spec.params = p;
    const PathBatch b = simulate_heston(spec, 8, 3);
    const double dt = spec.dt();
    const double sq = std::sqrt(p.long_run_var);
    for (std::size_t n = 0; n < 8; ++n) {
        double s = p.s0;
        for (std::size_t t = 0; t <= 30; ++t) {
            CHECK(b.at(n, 1, t) == p.long_run_var);
            CHECK(b.at(n, 0, t) == doctest::Approx(s).epsilon(1e-14));
            if (t < 30) {
                const double z = counter_normal(3, n, t, 0);
                s += p.drift * s * dt + sq * s * std::sqrt(dt) * z;
            }
        }
    }
}

TEST_CASE("Heston increment correlation matches rho at 100k") {
    const auto spec = heston_spec();
    const auto& p = spec.heston();
    const std::size_t n = 100000;
    const PathBatch b = simulate_heston(spec, n, 99);
    const double dt = spec.dt();
    // Invert the Euler steps at t=0 (v0 > 0 for every sample).
    std::vector<double> w1(n), w2(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double s0 = b.at(i, 0, 0), s1 = b.at(i, 0, 1);
        const double v0 = b.at(i, 1, 0), v1 = b.at(i, 1, 1);
        w1[i] = (s1 / s0 - 1.0 - p.drift * dt) / std::sqrt(v0);
        w2[i] = (v1 - v0 - p.mean_reversion * (p.long_run_var - v0) * dt) /
                (p.vol_of_vol * std::sqrt(v0));
    }
    const double m1 = pairwise_mean(w1), m2 = pairwise_mean(w2);
    double c11 = 0, c22 = 0, c12 = 0;
    for (std::size_t i = 0; i < n; ++i) {
        c11 += (w1[i] - m1) * (w1[i] - m1);
        c22 += (w2[i] - m2) * (w2[i] - m2);
        c12 += (w1[i] - m1) * (w2[i] - m2);
    }
    const double corr = c12 / std::sqrt(c11 * c22);
    const double se = (1.0 - p.correlation * p.correlation) / std::sqrt(static_cast<double>(n));
    CHECK(std::abs(corr - p.correlation) < 3.0 * se);
}

TEST_CASE("variance swap curve hits its closed-form anchor points") {
    const auto spec = heston_spec();
    const auto& p = spec.heston();
    const std::size_t T = 30;
    const double dt = spec.dt();

    SUBCASE("constant variance path is worth b*T at every date") {
        std::vector<double> v(T + 1, p.long_run_var);
        const auto curve = variance_swap_curve(v, spec);
        for (double x : curve)
            CHECK(x == doctest::Approx(p.long_run_var * spec.maturity_years).epsilon(1e-12));
    }

    SUBCASE("terminal value equals the trapezium integral exactly") {
        std::vector<double> v(T + 1);
        for (std::size_t t = 0; t <= T; ++t) v[t] = 0.04 + 0.01 * std::sin(0.5 * t);
        const auto curve = variance_swap_curve(v, spec);
        double integral = 0.0;
        for (std::size_t t = 1; t <= T; ++t) integral += 0.5 * dt * (v[t - 1] + v[t]);
        CHECK(curve[T] == doctest::Approx(integral).epsilon(1e-12));
    }

    SUBCASE("a = 0 is rejected") {
        MarketModelSpec bad = spec;
        auto hp = bad.heston();
        hp.mean_reversion = 0.0;
        bad.params = hp;
        std::vector<double> v(T + 1, 0.04);
        CHECK_THROWS(variance_swap_curve(v, bad));
    }
}

TEST_CASE("variance swap adjoint agrees with a dense finite-difference Jacobian") {
    const auto spec = heston_spec();
    const std::size_t m = 13;
    std::vector<double> v(m), d_curve(m);
    for (std::size_t i = 0; i < m; ++i) {
        v[i] = 0.03 + 0.02 * counter_uniform(5, i, 0, 0);
        d_curve[i] = counter_normal(5, i, 0, 1);
    }
    std::vector<double> dv(m, 0.0);
    variance_swap_adjoint(d_curve, spec, dv);

    for (std::size_t k = 0; k < m; ++k) {
        const double h = 1e-7;
        auto dot_curve = [&](double vk) {
            std::vector<double> vv = v;
            vv[k] = vk;
            const auto c = variance_swap_curve(vv, spec);
            double s = 0.0;
            for (std::size_t j = 0; j < m; ++j) s += d_curve[j] * c[j];
            return s;
        };
        const double fd = (dot_curve(v[k] + h) - dot_curve(v[k] - h)) / (2.0 * h);
        CHECK(dv[k] == doctest::Approx(fd).epsilon(1e-6));
    }
}

TEST_CASE("GAD with degenerate point intervals and zero diffusion is an affine recursion") {
    MarketModelSpec spec;
    GadParams g;
    g.s0 = 10.0;
    g.a0 = {0.0, 0.0};
    g.a1 = {0.0, 0.0};
    g.b0 = {0.5, 0.5};
    g.b1 = {0.02, 0.02};
    g.gamma = 1.0;
    spec.params = g;
    spec.maturity_years = 30.0 / 365.0;
    spec.n_steps = 30;
    const double dt = spec.dt();
    const PathBatch b = simulate_gad(spec, 3, 21, false);
    double s = 10.0;
    for (std::size_t t = 0; t <= 30; ++t) {
        CHECK(b.at(1, 0, t) == doctest::Approx(s).epsilon(1e-14));
        s = s + (0.5 + 0.02 * s) * dt;
    }
    CHECK(b.degenerate_steps == 0);
}

TEST_CASE("GAD interval mode equals midpoint mode for zero-width intervals") {
    MarketModelSpec spec;
    GadParams g;
    g.s0 = 10.0;
    g.a0 = {0.2, 0.2};
    g.a1 = {0.01, 0.01};
    g.b0 = {0.1, 0.1};
    g.b1 = {0.0, 0.0};
    g.gamma = 0.8;
    spec.params = g;
    spec.n_steps = 20;
    spec.maturity_years = 20.0 / 365.0;
    const PathBatch on = simulate_gad(spec, 16, 9, true);
    const PathBatch off = simulate_gad(spec, 16, 9, false);
    CHECK(on.values == off.values);
}

TEST_CASE("GAD scaled random walk variance oracle") {
    MarketModelSpec spec;
    GadParams g;
    g.s0 = 10.0;
    g.a0 = {0.5, 0.5};
    g.a1 = {0.0, 0.0};
    g.b0 = {0.0, 0.0};
    g.b1 = {0.0, 0.0};
    g.gamma = 1.0;
    spec.params = g;
    spec.maturity_years = 0.25;
    spec.n_steps = 25;
    const std::size_t n = 100000;
    const PathBatch b = simulate_gad(spec, n, 31, false);
    std::vector<double> incr(n);
    for (std::size_t i = 0; i < n; ++i) incr[i] = b.at(i, 0, 25) - b.at(i, 0, 0);
    const double mean = pairwise_mean(incr);
    double var = 0.0;
    for (double x : incr) var += (x - mean) * (x - mean);
    var /= static_cast<double>(n - 1);
    const double expect = 0.5 * 0.5 * spec.maturity_years;
    const double se = expect * std::sqrt(2.0 / static_cast<double>(n - 1));
    CHECK(std::abs(var - expect) < 3.0 * se);
}

TEST_CASE("GAD clamps negative diffusion bases and counts them") {
    MarketModelSpec spec;
    GadParams g;
    g.s0 = 10.0;
    g.a0 = {-1.0, -1.0}; // base a0 + a1*S = -1 < 0 at every step
    g.a1 = {0.0, 0.0};
    g.b0 = {0.1, 0.1};
    g.b1 = {0.0, 0.0};
    g.gamma = 0.5;
    spec.params = g;
    spec.n_steps = 10;
    spec.maturity_years = 10.0 / 365.0;
    const PathBatch b = simulate_gad(spec, 7, 2, false);
    CHECK(b.degenerate_steps == 7 * 10);
    // zero diffusion: deterministic drift-only path
    CHECK(b.at(0, 0, 10) == doctest::Approx(10.0 + 0.1 * spec.maturity_years).epsilon(1e-12));
}

TEST_CASE("every simulated batch has constant initial columns and finite values") {
    simulate_bs(bs_spec(), 50, 4).validate(true);
    simulate_heston(heston_spec(), 50, 4).validate(true);
    MarketModelSpec gad;
    GadParams g;
    g.a0 = {0.1, 0.3};
    g.a1 = {0.0, 0.01};
    g.b0 = {0.0, 0.2};
    g.b1 = {-0.01, 0.01};
    g.gamma = 0.9;
    gad.params = g;
    simulate_gad(gad, 50, 4, true).validate(true);
}

TEST_CASE("OOD parameter perturbation") {
    const auto spec = heston_spec();

    SUBCASE("identity scaling returns exact copies") {
        const auto specs = perturb_params_ood(spec, 5, 1.0, 1.0, 17);
        CHECK(specs.size() == 5);
        for (const auto& s : specs) {
            const auto& a = s.heston();
            const auto& b = spec.heston();
            CHECK(a.v0 == b.v0);
            CHECK(a.mean_reversion == b.mean_reversion);
            CHECK(a.long_run_var == b.long_run_var);
            CHECK(a.vol_of_vol == b.vol_of_vol);
            CHECK(a.correlation == b.correlation);
            CHECK(a.drift == b.drift);
            CHECK(a.s0 == b.s0);
        }
    }

    SUBCASE("scaled parameters stay inside [0.9,1.1] of the originals") {
        const auto specs = perturb_params_ood(spec, 200, 0.9, 1.1, 18);
        const auto& b = spec.heston();
        for (const auto& s : specs) {
            const auto& a = s.heston();
            CHECK(a.s0 == b.s0); // s0 excluded
            CHECK(a.v0 >= 0.9 * b.v0);
            CHECK(a.v0 <= 1.1 * b.v0);
            CHECK(a.vol_of_vol >= 0.9 * b.vol_of_vol);
            CHECK(a.vol_of_vol <= 1.1 * b.vol_of_vol);
            CHECK(a.correlation >= -1.0);
            CHECK(a.correlation <= 1.0);
        }
    }

    SUBCASE("deterministic under a fixed seed") {
        const auto s1 = perturb_params_ood(spec, 9, 0.9, 1.1, 5);
        const auto s2 = perturb_params_ood(spec, 9, 0.9, 1.1, 5);
        for (std::size_t i = 0; i < 9; ++i)
            CHECK(s1[i].heston().vol_of_vol == s2[i].heston().vol_of_vol);
    }

    SUBCASE("GAD and bad bounds are rejected") {
        MarketModelSpec gad;
        gad.params = GadParams{};
        CHECK_THROWS(perturb_params_ood(gad, 3, 0.9, 1.1, 1));
        CHECK_THROWS(perturb_params_ood(spec, 3, 1.1, 0.9, 1));
    }
}
