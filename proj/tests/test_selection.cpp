#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include <Eigen/Dense>

#include "dpo/pamc.hpp"
#include "dpo/pricing.hpp"
#include "dpo/selection.hpp"

using namespace dpo;

namespace {

const HestonParams kBase;
constexpr double kX0 = 0.0169;

}  // namespace

TEST_CASE("closed-form two-asset weights agree with the generic replication") {
    MarketState state;
    state.x = kX0;
    InstrumentSpec straddle{InstrumentKind::Straddle, 0.0, 0.0, 0.1, StrikePolicy::DeltaNeutral};
    const SigmaMatrix sm = build_sigma({InstrumentSpec{}, straddle}, state, kBase);
    const FactorGeometry geom = factor_geometry(kBase, kX0);

    for (const double g_h : {0.0, -5.13264778576444275, 2.0}) {
        for (const double g_s : {0.0, 0.4}) {
            CAPTURE(g_h, g_s);
            const Eigen::Vector2d eta = optimal_exposure(geom, 4.0, g_h, g_s);
            const Eigen::VectorXd pi = exposure_to_weights(sm, eta);
            const TwoAssetWeights w =
                explicit_heston_weights(kBase, 4.0, g_h, g_s, state, sm.greeks[1]);
            REQUIRE(w.pi_s == Catch::Approx(pi(0)).margin(1e-10));
            REQUIRE(w.pi_o == Catch::Approx(pi(1)).margin(1e-10));
        }
    }
}

TEST_CASE("delta-free candidates pin the stock weight to its closed form") {
    MarketState state;
    state.x = kX0;
    // A candidate with no stock sensitivity leaves the stock weight at
    // (lambda - rho lambda_x)/(gamma (1 - rho^2)), the myopic stock demand.
    const PriceAndGreeks opt{0.05, 0.0, 0.02};
    const TwoAssetWeights w = explicit_heston_weights(kBase, 4.0, 0.0, 0.0, state, opt);
    REQUIRE(w.pi_s == Catch::Approx(0.34523809523809523810).margin(1e-12));
    REQUIRE(w.pi_o == Catch::Approx(-16.369047619047619048).margin(1e-11));
    REQUIRE(w.l1() == Catch::Approx(std::abs(w.pi_s) + std::abs(w.pi_o)).margin(1e-15));
}

TEST_CASE("candidates without variance sensitivity cannot complete the market") {
    MarketState state;
    state.x = kX0;
    const PriceAndGreeks flat{0.05, 0.4, 0.0};
    REQUIRE_THROWS_AS(explicit_heston_weights(kBase, 4.0, 0.0, 0.0, state, flat),
                      NumericalError);
    const PriceAndGreeks free_opt{0.0, 0.4, 0.02};
    REQUIRE_THROWS_AS(explicit_heston_weights(kBase, 4.0, 0.0, 0.0, state, free_opt),
                      ConfigError);
}

TEST_CASE("l1 sparsification solves hand-checkable instances") {
    Eigen::MatrixXd sigma(3, 2);
    sigma << 1.0, 0.0, 0.0, 1.0, 1.0, 1.0;
    SECTION("diagonal target picks the combined instrument alone") {
        const SparsifyResult res = sparsify_l1(sigma, Eigen::Vector2d(1.0, 1.0));
        REQUIRE(res.l1 == Catch::Approx(1.0).margin(1e-9));
        REQUIRE(res.support.size() == 1);
        REQUIRE(res.support[0] == 2);
        REQUIRE(res.pi(2) == Catch::Approx(1.0).margin(1e-9));
    }
    SECTION("anti-diagonal target needs the two axis instruments") {
        const SparsifyResult res = sparsify_l1(sigma, Eigen::Vector2d(1.0, -1.0));
        REQUIRE(res.l1 == Catch::Approx(2.0).margin(1e-9));
        REQUIRE(res.support.size() == 2);
        REQUIRE(res.pi(0) == Catch::Approx(1.0).margin(1e-9));
        REQUIRE(res.pi(1) == Catch::Approx(-1.0).margin(1e-9));
    }
    SECTION("zero target needs nothing") {
        const SparsifyResult res = sparsify_l1(sigma, Eigen::Vector2d(0.0, 0.0));
        REQUIRE(res.l1 == Catch::Approx(0.0).margin(1e-12));
        REQUIRE(res.support.empty());
    }
    SECTION("scaling a row rescales its weight inversely") {
        Eigen::MatrixXd one(1, 2);
        one << 2.0, 0.0;
        const SparsifyResult res = sparsify_l1(one, Eigen::Vector2d(1.0, 0.0));
        REQUIRE(res.l1 == Catch::Approx(0.5).margin(1e-9));
    }
    SECTION("unreachable targets are reported") {
        Eigen::MatrixXd one(1, 2);
        one << 1.0, 0.0;
        REQUIRE_THROWS_AS(sparsify_l1(one, Eigen::Vector2d(0.0, 1.0)), NumericalError);
    }
}

TEST_CASE("random instances never need more than two instruments") {
    const Prop1Report rep = verify_prop1(120, 6, 12345, 1e-8);
    REQUIRE(rep.n_instances == 120);
    REQUIRE(rep.failures == 0);
    REQUIRE(rep.max_support <= 2);
    REQUIRE(rep.max_gap <= 1e-8);
}

TEST_CASE("moneyness sweep produces well-formed replication rows") {
    MarketState state;
    state.x = kX0;
    SweepConfig cfg;
    cfg.grid = MoneynessGrid{0.98, 1.02, 0.02};
    cfg.strangle_companion = MoneynessGrid{1.00, 1.06, 0.02};
    cfg.kinds = {InstrumentKind::Call, InstrumentKind::Strangle};
    const std::vector<SweepRow> rows = sweep_moneyness(kBase, 4.0, state, cfg);
    REQUIRE(rows.size() == 6);
    for (const SweepRow& row : rows) {
        CAPTURE(to_string(row.kind), row.coord);
        REQUIRE(row.error.empty());
        REQUIRE(std::isfinite(row.l1));
        REQUIRE(row.l1 > 0.0);
        REQUIRE(row.pi_o < 0.0);  // short vega instruments against positive premia
        if (row.kind == InstrumentKind::Strangle) {
            REQUIRE(std::isfinite(row.companion_strike));
            REQUIRE(row.companion_strike >= row.coord * state.s - 1e-12);
        }
    }
    // Spot-check one call row against the direct formula.
    EquityPricer pricer(kBase, cfg.t_op, kX0, 0.0, QuadratureConfig{});
    const TwoAssetWeights w =
        explicit_heston_weights(kBase, 4.0, 0.0, 0.0, state, pricer.call(0.98));
    REQUIRE(rows[0].pi_s == Catch::Approx(w.pi_s).margin(1e-12));
    REQUIRE(rows[0].pi_o == Catch::Approx(w.pi_o).margin(1e-12));
}

TEST_CASE("volatility index candidates enter the sweep through Monte Carlo") {
    MarketState state;
    state.x = kX0;
    SweepConfig cfg;
    cfg.grid = MoneynessGrid{1.0, 1.0, 0.01};
    cfg.kinds = {InstrumentKind::VixCall};
    McPricingConfig mc;
    mc.n_paths = 4000;
    const std::vector<SweepRow> rows = sweep_moneyness(kBase, 4.0, state, cfg, {}, mc);
    REQUIRE(rows.size() == 1);
    REQUIRE(rows[0].error.empty());
    REQUIRE(rows[0].pi_o < 0.0);
    REQUIRE(std::isfinite(rows[0].l1));
}

TEST_CASE("maturity sweep searches the strangle box") {
    MarketState state;
    state.x = kX0;
    MaturitySweepConfig cfg;
    cfg.maturities = {0.1, 0.3};
    cfg.kinds = {InstrumentKind::Strangle};
    const std::vector<SweepRow> rows = sweep_maturity(kBase, 4.0, state, cfg);
    REQUIRE(rows.size() == 2);
    for (const SweepRow& row : rows) {
        CAPTURE(row.coord);
        REQUIRE(row.error.empty());
        REQUIRE(std::isfinite(row.l1));
        REQUIRE(row.companion_strike >= state.s - 1e-12);
        REQUIRE(row.companion_strike <= 1.05 * state.s + 1e-12);
    }
    MaturitySweepConfig bad;
    REQUIRE_THROWS_AS(sweep_maturity(kBase, 4.0, state, bad), ConfigError);
}

TEST_CASE("sensitivity profile reports prices and slopes across strikes") {
    MarketState state;
    state.x = kX0;
    SECTION("calls") {
        const std::vector<VegaProfileRow> rows =
            vega_profile(kBase, state, InstrumentKind::Call, 0.1,
                         MoneynessGrid{0.95, 1.05, 0.05});
        REQUIRE(rows.size() == 3);
        for (const VegaProfileRow& row : rows) {
            REQUIRE(row.error.empty());
            REQUIRE(row.vega_x > 0.0);
        }
        REQUIRE(rows[0].price > rows[1].price);
        REQUIRE(rows[1].price > rows[2].price);
    }
    SECTION("mirrored strangles") {
        const std::vector<VegaProfileRow> rows =
            vega_profile(kBase, state, InstrumentKind::Strangle, 0.1,
                         MoneynessGrid{0.95, 0.99, 0.04});
        REQUIRE(rows.size() == 2);
        for (const VegaProfileRow& row : rows) {
            REQUIRE(row.error.empty());
            REQUIRE(row.price > 0.0);
            REQUIRE(row.vega_x > 0.0);
        }
    }
    SECTION("index puts") {
        McPricingConfig mc;
        mc.n_paths = 4000;
        const std::vector<VegaProfileRow> rows =
            vega_profile(kBase, state, InstrumentKind::VixPut, 0.1,
                         MoneynessGrid{1.0, 1.0, 0.01}, {}, mc);
        REQUIRE(rows.size() == 1);
        REQUIRE(rows[0].error.empty());
        REQUIRE(rows[0].price > 0.0);
        REQUIRE(rows[0].vega_x < 0.0);
    }
}

TEST_CASE("moneyness grids enumerate inclusive endpoints") {
    const MoneynessGrid def{};
    REQUIRE(def.points().size() == 41);
    REQUIRE(def.points().front() == Catch::Approx(0.90).margin(1e-15));
    REQUIRE(def.points().back() == Catch::Approx(1.10).margin(1e-12));
    REQUIRE_THROWS_AS((MoneynessGrid{1.1, 0.9, 0.01}.validate()), ConfigError);
    REQUIRE_THROWS_AS((MoneynessGrid{0.9, 1.1, 0.0}.validate()), ConfigError);
}
