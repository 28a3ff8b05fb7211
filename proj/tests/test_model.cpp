#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "dpo/errors.hpp"
#include "dpo/model.hpp"

using namespace dpo;

TEST_CASE("risk-neutral drift parameters at the baseline calibration") {
    HestonParams p;
    REQUIRE(p.kappa_q() == Catch::Approx(3.225).epsilon(1e-15));
    REQUIRE(p.theta_q() == Catch::Approx(0.026201550387596899).epsilon(1e-14));
    // invariant: kappa theta is measure-invariant
    REQUIRE(p.kappa_q() * p.theta_q() == Catch::Approx(p.kappa_x * p.theta_x).epsilon(1e-14));
}

TEST_CASE("parameter validation rejects bad inputs") {
    HestonParams p;
    p.kappa_x = -1.0;
    REQUIRE_THROWS_AS(p.validate(), ConfigError);
    p = HestonParams{};
    p.rho = 1.0;
    REQUIRE_THROWS_AS(p.validate(), ConfigError);
    p = HestonParams{};
    p.theta_x = 0.0;
    REQUIRE_THROWS_AS(p.validate(), ConfigError);
    p = HestonParams{};
    p.sigma_x = -0.1;
    REQUIRE_THROWS_AS(p.validate(), ConfigError);
    p = HestonParams{};
    p.sigma_x = 0.0;  // deterministic variance is admitted
    REQUIRE_NOTHROW(p.validate());
}

TEST_CASE("factor geometry at the baseline state") {
    HestonParams p;
    const FactorGeometry g = factor_geometry(p, 0.0169);
    REQUIRE(g.phi(0, 0) == 1.0);
    REQUIRE(g.phi(0, 1) == 0.0);
    REQUIRE(g.phi(1, 0) == Catch::Approx(-0.4).epsilon(1e-15));
    REQUIRE(g.phi(1, 1) == Catch::Approx(std::sqrt(0.84)).epsilon(1e-15));
    REQUIRE(g.sigma_s == Catch::Approx(0.13).epsilon(1e-14));
    REQUIRE(g.sigma_h == Catch::Approx(0.25 * 0.13).epsilon(1e-14));
    REQUIRE(g.lambda_vec(0) == Catch::Approx(0.52).epsilon(1e-14));
    REQUIRE(g.lambda_vec(1) == Catch::Approx(-0.923).epsilon(1e-14));
    REQUIRE(g.a_vec(0) == Catch::Approx(-0.4).epsilon(1e-15));
    REQUIRE(g.a_vec(1) == 1.0);
    REQUIRE(g.b_vec(0) == 1.0);
    REQUIRE(g.b_vec(1) == Catch::Approx(-0.4).epsilon(1e-15));
    // unit-variance shocks: each row of Phi has norm 1
    REQUIRE(g.phi.row(0).norm() == Catch::Approx(1.0).epsilon(1e-15));
    REQUIRE(g.phi.row(1).norm() == Catch::Approx(1.0).epsilon(1e-15));

    REQUIRE_THROWS_AS(factor_geometry(p, -0.1), ConfigError);
}

TEST_CASE("path simulation is deterministic and prefix-stable in path count") {
    HestonParams p;
    SimConfig small;
    small.n_paths = 20;
    small.n_steps = 12;
    small.dt = 1.0 / 12.0;
    small.horizon = 1.0;
    small.seed = 11;
    SimConfig big = small;
    big.n_paths = 40;

    const PathSet a = simulate_paths(p, small);
    const PathSet b = simulate_paths(p, small);
    const PathSet c = simulate_paths(p, big);
    REQUIRE((a.stock.array() == b.stock.array()).all());
    REQUIRE((a.variance.array() == b.variance.array()).all());
    for (int m = 0; m < small.n_paths; ++m)
        for (int i = 0; i <= small.n_steps; ++i) {
            REQUIRE(a.stock(m, i) == c.stock(m, i));
            REQUIRE(a.variance(m, i) == c.variance(m, i));
        }
    REQUIRE(a.times.size() == static_cast<std::size_t>(small.n_steps + 1));
    REQUIRE(a.times.back() == Catch::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("discounted stock is a martingale when premia vanish") {
    HestonParams p;
    p.lambda = 0.0;
    p.r = 0.0;
    SimConfig cfg;
    cfg.n_paths = 40000;
    cfg.n_steps = 20;
    cfg.dt = 0.05;
    cfg.horizon = 1.0;
    cfg.seed = 5;
    const PathSet ps = simulate_paths(p, cfg);
    double mean = 0.0, sq = 0.0;
    for (int m = 0; m < cfg.n_paths; ++m) {
        const double st = ps.stock(m, cfg.n_steps);
        mean += st;
        sq += st * st;
    }
    mean /= cfg.n_paths;
    const double se = std::sqrt((sq / cfg.n_paths - mean * mean) / cfg.n_paths);
    REQUIRE(std::abs(mean - 1.0) < 4.0 * se);
}

TEST_CASE("variance mean reverts to its long-run level") {
    HestonParams p;
    SimConfig cfg;
    cfg.n_paths = 40000;
    cfg.n_steps = 20;
    cfg.dt = 0.05;
    cfg.horizon = 1.0;
    cfg.substeps_per_dt = 4;
    cfg.seed = 6;
    cfg.x0 = 0.05;  // start well above theta_x
    const PathSet ps = simulate_paths(p, cfg);
    double mean = 0.0, sq = 0.0;
    for (int m = 0; m < cfg.n_paths; ++m) {
        const double xt = ps.variance(m, cfg.n_steps);
        mean += xt;
        sq += xt * xt;
    }
    mean /= cfg.n_paths;
    const double se = std::sqrt((sq / cfg.n_paths - mean * mean) / cfg.n_paths);
    const double exact = p.theta_x + (cfg.x0 - p.theta_x) * std::exp(-p.kappa_x * 1.0);
    // 4 standard errors plus a small first-order discretisation allowance
    REQUIRE(std::abs(mean - exact) < 4.0 * se + 2e-4);
}

TEST_CASE("zero vol-of-vol reduces variance to its deterministic recursion") {
    HestonParams p;
    p.sigma_x = 0.0;
    SimConfig cfg;
    cfg.n_paths = 3;
    cfg.n_steps = 10;
    cfg.dt = 0.1;
    cfg.horizon = 1.0;
    cfg.x0 = 0.03;
    const PathSet ps = simulate_paths(p, cfg);
    double x = cfg.x0;
    for (int i = 1; i <= cfg.n_steps; ++i) {
        x += p.kappa_x * (p.theta_x - x) * cfg.dt;
        for (int m = 0; m < cfg.n_paths; ++m)
            REQUIRE(ps.variance(m, i) == Catch::Approx(x).epsilon(1e-14));
    }
}

TEST_CASE("inner resimulation is prefix-stable in the sample count") {
    HestonParams p;
    MarketState st;
    st.t = 0.5;
    st.s = 1.1;
    st.x = 0.02;
    RngStream stream = substream(3, StreamTag::InnerSample, 4, 5);
    const auto small = step_inner(p, st, 1.0 / 60.0, 50, stream, 1);
    const auto big = step_inner(p, st, 1.0 / 60.0, 200, stream, 1);
    REQUIRE(small.size() == 50);
    REQUIRE(big.size() == 200);
    for (int k = 0; k < 50; ++k) {
        REQUIRE(small[k].s == big[k].s);
        REQUIRE(small[k].x == big[k].x);
        REQUIRE(small[k].s_f1 == big[k].s_f1);
        REQUIRE(small[k].s_f2 == big[k].s_f2);
        REQUIRE(small[k].t == Catch::Approx(st.t + 1.0 / 60.0).epsilon(1e-14));
        REQUIRE(small[k].w == st.w);
    }
}

TEST_CASE("factor assets carry unit volatility and the quoted premia") {
    // over one step, ln F1 - ln F1(0) = (r + lambda sqrt(x) - 1/2) h + dB_s;
    // with sigma_x = 0 and x pinned the increment is exactly normal
    HestonParams p;
    p.sigma_x = 0.0;
    p.theta_x = 0.04;
    MarketState st;
    st.x = 0.04;
    RngStream stream = substream(17, StreamTag::InnerSample, 0, 0);
    const double dt = 0.01;
    const auto inner = step_inner(p, st, dt, 20000, stream, 1);
    double m1 = 0.0, m2 = 0.0;
    for (const auto& s : inner) {
        const double lf = std::log(s.s_f1);
        m1 += lf;
        m2 += lf * lf;
    }
    m1 /= inner.size();
    const double var = m2 / inner.size() - m1 * m1;
    const double drift = (p.r + p.lambda * 0.2 - 0.5) * dt;
    REQUIRE(std::abs(m1 - drift) < 4.0 * std::sqrt(dt / inner.size()));
    REQUIRE(std::abs(var - dt) < 4.0 * dt * std::sqrt(2.0 / inner.size()));
}

TEST_CASE("simulation config validation") {
    SimConfig cfg;
    cfg.n_steps = 60;
    cfg.dt = 1.0 / 60.0;
    cfg.horizon = 1.0;
    REQUIRE_NOTHROW(cfg.validate());
    cfg.dt = 0.02;  // inconsistent with horizon
    REQUIRE_THROWS_AS(cfg.validate(), ConfigError);
    cfg = SimConfig{};
    cfg.n_paths = 0;
    REQUIRE_THROWS_AS(cfg.validate(), ConfigError);
    MarketState st;
    st.s = -1.0;
    REQUIRE_THROWS_AS(st.validate(), ConfigError);
}
