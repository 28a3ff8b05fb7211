#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <complex>

#include "dpo/model.hpp"
#include "dpo/oracle.hpp"
#include "dpo/pricing.hpp"

using namespace dpo;

namespace {

const HestonParams kBase;  // baseline calibration
constexpr double kX0 = 0.0169;

}  // namespace

TEST_CASE("characteristic function satisfies its normalization identities") {
    for (const double tau : {0.1, 0.5, 1.0}) {
        for (const double x : {0.0, 0.0169, 0.1}) {
            for (const double ln_s : {0.0, std::log(1.3)}) {
                CAPTURE(tau, x, ln_s);
                const std::complex<double> at_zero =
                    heston_char_fn({0.0, 0.0}, tau, kBase, x, ln_s);
                REQUIRE(std::abs(at_zero - 1.0) < 1e-14);
                // chi(-i) = E[S_T] = S e^{r tau}
                const std::complex<double> at_mi =
                    heston_char_fn({0.0, -1.0}, tau, kBase, x, ln_s);
                const double fwd = std::exp(ln_s) * std::exp(kBase.r * tau);
                REQUIRE(std::abs(at_mi - fwd) < 1e-12 * fwd);
            }
        }
    }
    REQUIRE_THROWS_AS(heston_char_fn({1.0, 0.0}, 0.0, kBase, kX0, 0.0), ConfigError);
    REQUIRE_THROWS_AS(heston_char_fn({1.0, 0.0}, 0.1, kBase, -0.1, 0.0), ConfigError);
}

TEST_CASE("transform prices match high-precision references at the baseline state") {
    // References from an independent 40-digit implementation of the same
    // probability integrals, integrated to infinity.
    struct Ref {
        double strike, tau, price, delta;
    };
    const Ref calls[] = {
        {0.95, 0.1, 0.0570385459626738965, 0.907250291959476773},
        {1.00, 0.1, 0.0195161513580084614, 0.576636406719633285},
        {1.05, 0.1, 0.00290995543834799173, 0.15040744157975896},
        {1.00, 0.5, 0.0542145554462434855, std::nan("")},
    };
    for (const Ref& ref : calls) {
        CAPTURE(ref.strike, ref.tau);
        EquityPricer pricer(kBase, ref.tau, kX0, 0.0, QuadratureConfig{});
        const PriceAndGreeks c = pricer.call(ref.strike);
        REQUIRE(c.price == Catch::Approx(ref.price).margin(1e-8));
        if (std::isfinite(ref.delta))
            REQUIRE(c.delta == Catch::Approx(ref.delta).margin(1e-7));
        // Put from the same transform satisfies parity against the reference.
        const PriceAndGreeks pt = pricer.put(ref.strike);
        const double parity_put =
            ref.price - 1.0 + ref.strike * std::exp(-kBase.r * ref.tau);
        REQUIRE(pt.price == Catch::Approx(parity_put).margin(1e-8));
    }
    EquityPricer atm(kBase, 0.1, kX0, 0.0, QuadratureConfig{});
    REQUIRE(atm.call(1.0).vega_x == Catch::Approx(0.395850423805204).margin(5e-7));
}

TEST_CASE("straddles and strangles are sums of their legs") {
    EquityPricer pricer(kBase, 0.1, kX0, 0.0, QuadratureConfig{});
    const PriceAndGreeks c = pricer.call(1.01);
    const PriceAndGreeks p = pricer.put(1.01);
    const PriceAndGreeks s = pricer.straddle(1.01);
    REQUIRE(s.price == Catch::Approx(c.price + p.price).margin(1e-14));
    REQUIRE(s.delta == Catch::Approx(c.delta + p.delta).margin(1e-14));
    REQUIRE(s.vega_x == Catch::Approx(c.vega_x + p.vega_x).margin(1e-14));
    const PriceAndGreeks lo = pricer.put(0.95);
    const PriceAndGreeks hi = pricer.call(1.05);
    const PriceAndGreeks str = pricer.strangle(0.95, 1.05);
    REQUIRE(str.price == Catch::Approx(lo.price + hi.price).margin(1e-14));
    REQUIRE(str.delta == Catch::Approx(lo.delta + hi.delta).margin(1e-14));
}

TEST_CASE("delta matches a finite-difference bump of the stock") {
    const double d = 1e-4;  // ln-spot bump
    EquityPricer base(kBase, 0.1, kX0, 0.0, QuadratureConfig{});
    EquityPricer up(kBase, 0.1, kX0, d, QuadratureConfig{});
    EquityPricer dn(kBase, 0.1, kX0, -d, QuadratureConfig{});
    for (const double k : {0.95, 1.0, 1.05}) {
        CAPTURE(k);
        const double fd =
            (up.call(k).price - dn.call(k).price) / (std::exp(d) - std::exp(-d));
        REQUIRE(base.call(k).delta == Catch::Approx(fd).margin(1e-5));
        const double fd_put =
            (up.put(k).price - dn.put(k).price) / (std::exp(d) - std::exp(-d));
        REQUIRE(base.put(k).delta == Catch::Approx(fd_put).margin(1e-5));
    }
}

TEST_CASE("variance sensitivity matches an independent repricing bump") {
    const double d = 1e-4;
    EquityPricer base(kBase, 0.1, kX0, 0.0, QuadratureConfig{});
    EquityPricer up(kBase, 0.1, kX0 + d, 0.0, QuadratureConfig{});
    EquityPricer dn(kBase, 0.1, kX0 - d, 0.0, QuadratureConfig{});
    for (const double k : {0.95, 1.0, 1.05}) {
        CAPTURE(k);
        const double fd = (up.call(k).price - dn.call(k).price) / (2.0 * d);
        REQUIRE(base.call(k).vega_x == Catch::Approx(fd).margin(2e-5));
    }
}

TEST_CASE("transform degenerates to Black-Scholes as vol-of-vol vanishes") {
    HestonParams p = kBase;
    p.sigma_x = 1e-8;
    SECTION("variance pinned at its long-run level") {
        // theta_q ~ theta_x here, so the variance path is flat at 0.0169 and
        // the equivalent lognormal volatility is 0.13.
        EquityPricer pricer(p, 0.1, p.theta_x, 0.0, QuadratureConfig{});
        for (const double k : {0.95, 1.0, 1.05}) {
            CAPTURE(k);
            const BsResult bs = bs_price(true, 1.0, k, 0.1, p.r, 0.13);
            const PriceAndGreeks c = pricer.call(k);
            REQUIRE(c.price == Catch::Approx(bs.price).margin(1e-8));
            REQUIRE(c.delta == Catch::Approx(bs.delta).margin(1e-7));
        }
    }
    SECTION("variance drifting from a displaced start") {
        // Deterministic variance integrates to the same affine average that
        // defines the squared volatility index over the option's life.
        const double x0 = 0.03;
        const double tau = 0.1;
        const double vol = std::sqrt(vix_squared(x0, p, tau));
        EquityPricer pricer(p, tau, x0, 0.0, QuadratureConfig{});
        for (const double k : {0.95, 1.0, 1.05}) {
            CAPTURE(k);
            const BsResult bs = bs_price(true, 1.0, k, tau, p.r, vol);
            REQUIRE(pricer.call(k).price == Catch::Approx(bs.price).margin(1e-8));
        }
    }
}

TEST_CASE("risk-neutral Monte Carlo reproduces transform prices") {
    // Under the pricing measure the variance parameters shift to
    // (kappa_q, theta_q) and both premia vanish; reusing the real-world
    // simulator with those inputs yields risk-neutral paths.
    HestonParams q = kBase;
    q.lambda = 0.0;
    q.lambda_x = 0.0;
    q.kappa_x = kBase.kappa_q();
    q.theta_x = kBase.theta_q();

    SimConfig cfg;
    cfg.n_paths = 200'000;
    cfg.n_steps = 6;
    cfg.dt = 1.0 / 60.0;
    cfg.horizon = 0.1;
    cfg.substeps_per_dt = 10;
    cfg.seed = 20260401;
    cfg.x0 = kX0;
    const PathSet ps = simulate_paths(q, cfg);

    const double df = std::exp(-kBase.r * 0.1);
    double call_acc = 0.0, put_acc = 0.0;
    for (int m = 0; m < cfg.n_paths; ++m) {
        const double st = ps.stock(m, cfg.n_steps);
        call_acc += std::max(st - 1.0, 0.0);
        put_acc += std::max(1.0 - st, 0.0);
    }
    const double mc_call = df * call_acc / cfg.n_paths;
    const double mc_put = df * put_acc / cfg.n_paths;

    EquityPricer pricer(kBase, 0.1, kX0, 0.0, QuadratureConfig{});
    REQUIRE(mc_call == Catch::Approx(pricer.call(1.0).price).margin(5e-4));
    REQUIRE(mc_put == Catch::Approx(pricer.put(1.0).price).margin(5e-4));
}

TEST_CASE("quadrature widens its range when the variance is tiny") {
    // At x = 0.002 the integrand decays slowly; the adaptive cutoff must
    // reproduce a reference computed on a deliberately oversized range.
    const double x = 0.002;
    QuadratureConfig wide;
    wide.u_max = 1600.0;
    wide.n_intervals = 32000;
    EquityPricer ref(kBase, 0.1, x, 0.0, wide);
    EquityPricer adaptive(kBase, 0.1, x, 0.0, QuadratureConfig{});
    for (const double k : {0.97, 1.0, 1.03}) {
        CAPTURE(k);
        const PriceAndGreeks a = adaptive.call(k);
        const PriceAndGreeks b = ref.call(k);
        REQUIRE(a.price == Catch::Approx(b.price).margin(1e-9));
        REQUIRE(a.vega_x == Catch::Approx(b.vega_x).margin(1e-5));
    }
}

TEST_CASE("delta-neutral straddle strike zeroes the combined delta") {
    EquityPricer pricer(kBase, 0.1, kX0, 0.0, QuadratureConfig{});
    const double k = pricer.delta_neutral_straddle_strike();
    REQUIRE(k == Catch::Approx(1.00808210872877312).margin(1e-9));
    REQUIRE(pricer.straddle(k).delta == Catch::Approx(0.0).margin(1e-10));
}

TEST_CASE("averaging window coefficients match the closed form") {
    const VixCoefficients c = vix_coefficients(kBase);
    REQUIRE(c.kappa_q == Catch::Approx(3.225).margin(1e-14));
    REQUIRE(c.theta_q == Catch::Approx(0.026201550387596899225).margin(1e-15));
    REQUIRE(c.a_tau == Catch::Approx(0.072200495062735608996).margin(1e-15));
    REQUIRE(c.b_tau == Catch::Approx(0.00026178717725609173158).margin(1e-18));
    REQUIRE(std::sqrt(vix_squared(kX0, kBase)) ==
            Catch::Approx(0.13427845117428659684).margin(1e-14));

    HestonParams bad = kBase;
    bad.kappa_x = 1.0;
    bad.lambda_x = -5.0;  // kappa_q = 1 - 1.25 < 0: no risk-neutral reversion
    REQUIRE_THROWS_AS(vix_coefficients(bad), ConfigError);
}

TEST_CASE("Monte Carlo squared index matches the affine expectation") {
    McPricingConfig mc;
    mc.n_paths = 100'000;
    mc.seed = 77;
    const std::vector<double> vix = simulate_vix_terminal(kX0, kBase, 0.1, mc);
    double acc = 0.0;
    for (const double v : vix) acc += v * v;
    const double mean = acc / mc.n_paths;
    REQUIRE(mean == Catch::Approx(0.0202831116328950099).margin(1.5e-4));
}

TEST_CASE("terminal index samples are deterministic and prefix-stable") {
    McPricingConfig small;
    small.n_paths = 100;
    small.seed = 31;
    McPricingConfig big = small;
    big.n_paths = 1000;
    const std::vector<double> a = simulate_vix_terminal(kX0, kBase, 0.1, small);
    const std::vector<double> b = simulate_vix_terminal(kX0, kBase, 0.1, small);
    const std::vector<double> c = simulate_vix_terminal(kX0, kBase, 0.1, big);
    REQUIRE(a == b);
    for (int m = 0; m < small.n_paths; ++m) REQUIRE(a[m] == c[m]);
}

TEST_CASE("volatility index straddle decomposes into call plus put") {
    McPricingConfig mc;
    mc.n_paths = 20'000;
    mc.seed = 99;
    MarketState state;
    state.x = kX0;
    const double k = std::sqrt(vix_squared(kX0, kBase));
    InstrumentSpec call{InstrumentKind::VixCall, k, 0.0, 0.1};
    InstrumentSpec put{InstrumentKind::VixPut, k, 0.0, 0.1};
    InstrumentSpec straddle{InstrumentKind::VixStraddle, k, 0.0, 0.1};
    const PriceAndGreeks pc = price_vix_option(call, state, kBase, mc);
    const PriceAndGreeks pp = price_vix_option(put, state, kBase, mc);
    const PriceAndGreeks ps = price_vix_option(straddle, state, kBase, mc);
    REQUIRE(ps.price == Catch::Approx(pc.price + pp.price).margin(1e-12));
    REQUIRE(ps.vega_x == Catch::Approx(pc.vega_x + pp.vega_x).margin(1e-12));
    REQUIRE(pc.delta == 0.0);
    REQUIRE(pp.delta == 0.0);
    REQUIRE(ps.delta == 0.0);
    // Higher variance lifts the index: calls gain, puts lose.
    REQUIRE(pc.vega_x > 0.0);
    REQUIRE(pp.vega_x < 0.0);
}

TEST_CASE("degenerate volatility index payoffs are rejected") {
    McPricingConfig mc;
    mc.n_paths = 5'000;
    MarketState state;
    state.x = kX0;
    InstrumentSpec hopeless{InstrumentKind::VixCall, 10.0, 0.0, 0.1};
    REQUIRE_THROWS_AS(price_vix_option(hopeless, state, kBase, mc), NumericalError);
}

TEST_CASE("exposure matrix rows carry the factor loadings") {
    MarketState state;
    state.x = kX0;
    SECTION("stock alone") {
        const SigmaMatrix sm = build_sigma({InstrumentSpec{}}, state, kBase);
        REQUIRE(sm.m.rows() == 1);
        REQUIRE(sm.m(0, 0) == Catch::Approx(std::sqrt(kX0)).margin(1e-15));
        REQUIRE(sm.m(0, 1) == 0.0);
    }
    SECTION("stock plus delta-neutral straddle") {
        InstrumentSpec straddle{InstrumentKind::Straddle, 0.0, 0.0, 0.1,
                                StrikePolicy::DeltaNeutral};
        const SigmaMatrix sm = build_sigma({InstrumentSpec{}, straddle}, state, kBase);
        REQUIRE(sm.instruments[1].strike ==
                Catch::Approx(1.00808210872877312).margin(1e-9));
        REQUIRE(sm.instruments[1].policy == StrikePolicy::Fixed);
        // Delta neutrality kills the stock-factor loading of the straddle row.
        REQUIRE(std::abs(sm.m(1, 0)) < 1e-8);
        REQUIRE(sm.m(1, 1) > 0.0);
        const FactorGeometry g = factor_geometry(kBase, kX0);
        REQUIRE(sm.m(1, 1) ==
                Catch::Approx(sm.greeks[1].vega_x * g.sigma_h / sm.greeks[1].price)
                    .margin(1e-15));
    }
    SECTION("duplicated stock is flagged as rank deficient") {
        REQUIRE_THROWS_AS(build_sigma({InstrumentSpec{}, InstrumentSpec{}}, state, kBase),
                          NumericalError);
    }
}

TEST_CASE("fixed strikes pass through strike resolution untouched") {
    MarketState state;
    state.x = kX0;
    InstrumentSpec call{InstrumentKind::Call, 1.02, 0.0, 0.1};
    const InstrumentSpec same = resolve_instrument(call, state, kBase, QuadratureConfig{});
    REQUIRE(same.strike == 1.02);
    REQUIRE(same.kind == InstrumentKind::Call);
}

TEST_CASE("malformed instrument specifications are rejected") {
    InstrumentSpec bad_strangle{InstrumentKind::Strangle, 0.95, 0.0, 0.1};
    REQUIRE_THROWS_AS(bad_strangle.validate(), ConfigError);
    InstrumentSpec neg{InstrumentKind::Call, -1.0, 0.0, 0.1};
    REQUIRE_THROWS_AS(neg.validate(), ConfigError);
    InstrumentSpec dn_call{InstrumentKind::Call, 1.0, 0.0, 0.1, StrikePolicy::DeltaNeutral};
    REQUIRE_THROWS_AS(dn_call.validate(), ConfigError);
    InstrumentSpec no_tau{InstrumentKind::Put, 1.0, 0.0, 0.0};
    REQUIRE_THROWS_AS(no_tau.validate(), ConfigError);
    InstrumentSpec stock;  // stock requires no strike or maturity
    REQUIRE_NOTHROW(stock.validate());
}

TEST_CASE("instrument dispatch prices stocks trivially") {
    MarketState state;
    state.s = 1.25;
    state.x = kX0;
    const PriceAndGreeks g = price_instrument(InstrumentSpec{}, state, kBase);
    REQUIRE(g.price == 1.25);
    REQUIRE(g.delta == 1.0);
    REQUIRE(g.vega_x == 0.0);
}
