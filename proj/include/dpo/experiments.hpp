#pragma once

// Experiment layer shared by the command line tool and the test suite:
// a JSON-shaped configuration whose defaults reproduce the baseline
// calibration, one runner per verb, and deterministic CSV/JSON renderers.
// Floating point values are rendered with %.10g so identical runs produce
// byte-identical output files.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dpo/errors.hpp"
#include "dpo/model.hpp"
#include "dpo/oracle.hpp"
#include "dpo/pamc.hpp"
#include "dpo/pricing.hpp"
#include "dpo/selection.hpp"
#include "dpo/version.hpp"

namespace dpo {

enum class Verb {
    Price,
    Simulate,
    Pamc,
    SweepMoneyness,
    SweepMaturity,
    VegaProfile,
    VerifyProp1,
    CompareMethods
};

inline Verb verb_from_string(const std::string& s) {
    if (s == "price") return Verb::Price;
    if (s == "simulate") return Verb::Simulate;
    if (s == "pamc") return Verb::Pamc;
    if (s == "sweep-moneyness") return Verb::SweepMoneyness;
    if (s == "sweep-maturity") return Verb::SweepMaturity;
    if (s == "vega-profile") return Verb::VegaProfile;
    if (s == "verify-prop1") return Verb::VerifyProp1;
    if (s == "compare-methods") return Verb::CompareMethods;
    throw ConfigError("experiments: unknown verb '" + s + "'");
}

inline std::string to_string(Verb v) {
    switch (v) {
        case Verb::Price: return "price";
        case Verb::Simulate: return "simulate";
        case Verb::Pamc: return "pamc";
        case Verb::SweepMoneyness: return "sweep-moneyness";
        case Verb::SweepMaturity: return "sweep-maturity";
        case Verb::VegaProfile: return "vega-profile";
        case Verb::VerifyProp1: return "verify-prop1";
        case Verb::CompareMethods: return "compare-methods";
    }
    return "unknown";
}

inline InstrumentKind kind_from_string(const std::string& s) {
    if (s == "stock") return InstrumentKind::Stock;
    if (s == "call") return InstrumentKind::Call;
    if (s == "put") return InstrumentKind::Put;
    if (s == "straddle") return InstrumentKind::Straddle;
    if (s == "strangle") return InstrumentKind::Strangle;
    if (s == "vix_call") return InstrumentKind::VixCall;
    if (s == "vix_put") return InstrumentKind::VixPut;
    if (s == "vix_straddle") return InstrumentKind::VixStraddle;
    throw ConfigError("experiments: unknown instrument kind '" + s + "'");
}

struct ExperimentConfig {
    HestonParams params{};
    MarketState state{};
    InvestorSpec investor{};
    PamcConfig pamc{};
    QuadratureConfig quad{};
    McPricingConfig mc{};
    std::string pamc_method = "indirect";

    InstrumentSpec instrument{InstrumentKind::Straddle, 0.0, 0.0, 0.1,
                              StrikePolicy::DeltaNeutral};
    std::vector<InstrumentSpec> composition;  // defaults to stock + delta-neutral straddle

    SweepConfig sweep{};
    MaturitySweepConfig maturity_sweep{};
    std::string g_mode = "intertemporal";  // or "myopic"; sweeps' gradient source

    InstrumentKind profile_kind = InstrumentKind::Straddle;
    double profile_t_op = 0.1;
    MoneynessGrid profile_grid{};

    std::vector<double> compare_gammas = {2.0, 4.0, 6.0, 8.0};
    std::vector<int> compare_direct_steps = {60, 300};

    int prop1_instances = 500;
    int prop1_max_instruments = 6;

    std::uint64_t seed = 1;

    ExperimentConfig() {
        InstrumentSpec stock;
        stock.kind = InstrumentKind::Stock;
        composition = {stock, instrument};
        maturity_sweep.maturities.resize(20);
        for (int i = 0; i < 20; ++i) maturity_sweep.maturities[i] = 0.05 * (i + 1);
    }

    void validate() const {
        params.validate();
        state.validate();
        investor.validate();
        pamc.validate();
        quad.validate();
        mc.validate();
        if (pamc_method != "indirect" && pamc_method != "direct")
            throw ConfigError("experiments: pamc method must be 'indirect' or 'direct'");
        if (g_mode != "intertemporal" && g_mode != "myopic")
            throw ConfigError("experiments: g_mode must be 'intertemporal' or 'myopic'");
        for (const auto& inst : composition) inst.validate();
        if (composition.empty())
            throw ConfigError("experiments: composition must not be empty");
    }
};

namespace detail {

inline void require_keys(const nlohmann::json& j, const std::vector<std::string>& allowed,
                         const std::string& section) {
    if (!j.is_object()) throw ConfigError("config: section '" + section + "' must be an object");
    for (const auto& item : j.items()) {
        bool ok = false;
        for (const auto& k : allowed)
            if (item.key() == k) {
                ok = true;
                break;
            }
        if (!ok)
            throw ConfigError("config: unknown key '" + item.key() + "' in section '" + section +
                              "'");
    }
}

inline double num(const nlohmann::json& j, const std::string& key, double def) {
    if (!j.contains(key)) return def;
    if (!j.at(key).is_number()) throw ConfigError("config: '" + key + "' must be a number");
    return j.at(key).get<double>();
}

inline int integer(const nlohmann::json& j, const std::string& key, int def) {
    if (!j.contains(key)) return def;
    if (!j.at(key).is_number_integer())
        throw ConfigError("config: '" + key + "' must be an integer");
    return j.at(key).get<int>();
}

inline std::string text(const nlohmann::json& j, const std::string& key, const std::string& def) {
    if (!j.contains(key)) return def;
    if (!j.at(key).is_string()) throw ConfigError("config: '" + key + "' must be a string");
    return j.at(key).get<std::string>();
}

inline InstrumentSpec parse_instrument(const nlohmann::json& j) {
    require_keys(j, {"kind", "strike", "strike2", "maturity", "policy"}, "instrument");
    InstrumentSpec spec;
    spec.kind = kind_from_string(text(j, "kind", "straddle"));
    spec.strike = num(j, "strike", 0.0);
    spec.strike2 = num(j, "strike2", 0.0);
    spec.maturity = num(j, "maturity", 0.1);
    const std::string policy = text(j, "policy", "fixed");
    if (policy == "fixed")
        spec.policy = StrikePolicy::Fixed;
    else if (policy == "delta_neutral")
        spec.policy = StrikePolicy::DeltaNeutral;
    else
        throw ConfigError("config: unknown strike policy '" + policy + "'");
    return spec;
}

inline MoneynessGrid parse_grid(const nlohmann::json& j, const std::string& prefix,
                                MoneynessGrid def) {
    def.lo = num(j, prefix + "lo", def.lo);
    def.hi = num(j, prefix + "hi", def.hi);
    def.step = num(j, prefix + "step", def.step);
    return def;
}

}  // namespace detail

inline ExperimentConfig parse_config(const nlohmann::json& j) {
    ExperimentConfig cfg;
    detail::require_keys(j,
                         {"params", "state", "investor", "pamc", "quadrature", "mc", "instrument",
                          "composition", "sweep", "maturity_sweep", "profile", "compare", "prop1",
                          "g_mode", "seed"},
                         "top level");

    if (j.contains("params")) {
        const auto& p = j.at("params");
        detail::require_keys(
            p, {"r", "lambda", "lambda_x", "kappa_x", "theta_x", "sigma_x", "rho"}, "params");
        cfg.params.r = detail::num(p, "r", cfg.params.r);
        cfg.params.lambda = detail::num(p, "lambda", cfg.params.lambda);
        cfg.params.lambda_x = detail::num(p, "lambda_x", cfg.params.lambda_x);
        cfg.params.kappa_x = detail::num(p, "kappa_x", cfg.params.kappa_x);
        cfg.params.theta_x = detail::num(p, "theta_x", cfg.params.theta_x);
        cfg.params.sigma_x = detail::num(p, "sigma_x", cfg.params.sigma_x);
        cfg.params.rho = detail::num(p, "rho", cfg.params.rho);
    }
    if (j.contains("state")) {
        const auto& s = j.at("state");
        detail::require_keys(s, {"s", "x", "w"}, "state");
        cfg.state.s = detail::num(s, "s", cfg.state.s);
        cfg.state.x = detail::num(s, "x", cfg.state.x);
        cfg.state.w = detail::num(s, "w", cfg.state.w);
    }
    if (j.contains("investor")) {
        const auto& s = j.at("investor");
        detail::require_keys(s, {"gamma", "horizon", "w0"}, "investor");
        cfg.investor.gamma = detail::num(s, "gamma", cfg.investor.gamma);
        cfg.investor.horizon = detail::num(s, "horizon", cfg.investor.horizon);
        cfg.investor.w0 = detail::num(s, "w0", cfg.investor.w0);
    }
    if (j.contains("pamc")) {
        const auto& s = j.at("pamc");
        detail::require_keys(
            s, {"n_outer", "n_inner", "n_steps", "basis_order", "method", "w_floor",
                "substeps_per_dt"},
            "pamc");
        cfg.pamc.n_outer = detail::integer(s, "n_outer", cfg.pamc.n_outer);
        cfg.pamc.n_inner = detail::integer(s, "n_inner", cfg.pamc.n_inner);
        cfg.pamc.n_steps = detail::integer(s, "n_steps", cfg.pamc.n_steps);
        cfg.pamc.basis.order = detail::integer(s, "basis_order", cfg.pamc.basis.order);
        cfg.pamc.w_floor = detail::num(s, "w_floor", cfg.pamc.w_floor);
        cfg.pamc.substeps_per_dt = detail::integer(s, "substeps_per_dt", cfg.pamc.substeps_per_dt);
        cfg.pamc_method = detail::text(s, "method", cfg.pamc_method);
    }
    if (j.contains("quadrature")) {
        const auto& s = j.at("quadrature");
        detail::require_keys(s, {"u_min", "u_max", "n_intervals", "tol", "max_levels", "fd_step"},
                             "quadrature");
        cfg.quad.u_min = detail::num(s, "u_min", cfg.quad.u_min);
        cfg.quad.u_max = detail::num(s, "u_max", cfg.quad.u_max);
        cfg.quad.n_intervals = detail::integer(s, "n_intervals", cfg.quad.n_intervals);
        cfg.quad.tol = detail::num(s, "tol", cfg.quad.tol);
        cfg.quad.max_levels = detail::integer(s, "max_levels", cfg.quad.max_levels);
        cfg.quad.fd_step = detail::num(s, "fd_step", cfg.quad.fd_step);
    }
    if (j.contains("mc")) {
        const auto& s = j.at("mc");
        detail::require_keys(
            s, {"n_paths", "steps_per_year", "min_steps", "seed", "fd_step", "price_floor"}, "mc");
        cfg.mc.n_paths = detail::integer(s, "n_paths", cfg.mc.n_paths);
        cfg.mc.steps_per_year = detail::integer(s, "steps_per_year", cfg.mc.steps_per_year);
        cfg.mc.min_steps = detail::integer(s, "min_steps", cfg.mc.min_steps);
        if (s.contains("seed")) cfg.mc.seed = s.at("seed").get<std::uint64_t>();
        cfg.mc.fd_step = detail::num(s, "fd_step", cfg.mc.fd_step);
        cfg.mc.price_floor = detail::num(s, "price_floor", cfg.mc.price_floor);
    }
    if (j.contains("instrument")) cfg.instrument = detail::parse_instrument(j.at("instrument"));
    if (j.contains("composition")) {
        if (!j.at("composition").is_array())
            throw ConfigError("config: 'composition' must be an array");
        cfg.composition.clear();
        for (const auto& item : j.at("composition"))
            cfg.composition.push_back(detail::parse_instrument(item));
    }
    if (j.contains("sweep")) {
        const auto& s = j.at("sweep");
        detail::require_keys(s,
                             {"lo", "hi", "step", "t_op", "kinds", "companion_lo", "companion_hi",
                              "companion_step"},
                             "sweep");
        cfg.sweep.grid = detail::parse_grid(s, "", cfg.sweep.grid);
        cfg.sweep.strangle_companion =
            detail::parse_grid(s, "companion_", cfg.sweep.strangle_companion);
        cfg.sweep.t_op = detail::num(s, "t_op", cfg.sweep.t_op);
        if (s.contains("kinds")) {
            cfg.sweep.kinds.clear();
            for (const auto& k : s.at("kinds"))
                cfg.sweep.kinds.push_back(kind_from_string(k.get<std::string>()));
        }
    }
    if (j.contains("maturity_sweep")) {
        const auto& s = j.at("maturity_sweep");
        detail::require_keys(s,
                             {"maturities", "kinds", "vix_call_moneyness", "vix_put_moneyness",
                              "put_lo", "put_hi", "put_step", "call_lo", "call_hi", "call_step"},
                             "maturity_sweep");
        if (s.contains("maturities")) {
            cfg.maturity_sweep.maturities.clear();
            for (const auto& t : s.at("maturities"))
                cfg.maturity_sweep.maturities.push_back(t.get<double>());
        }
        if (s.contains("kinds")) {
            cfg.maturity_sweep.kinds.clear();
            for (const auto& k : s.at("kinds"))
                cfg.maturity_sweep.kinds.push_back(kind_from_string(k.get<std::string>()));
        }
        cfg.maturity_sweep.vix_call_moneyness =
            detail::num(s, "vix_call_moneyness", cfg.maturity_sweep.vix_call_moneyness);
        cfg.maturity_sweep.vix_put_moneyness =
            detail::num(s, "vix_put_moneyness", cfg.maturity_sweep.vix_put_moneyness);
        cfg.maturity_sweep.strangle_put =
            detail::parse_grid(s, "put_", cfg.maturity_sweep.strangle_put);
        cfg.maturity_sweep.strangle_call =
            detail::parse_grid(s, "call_", cfg.maturity_sweep.strangle_call);
    }
    if (j.contains("profile")) {
        const auto& s = j.at("profile");
        detail::require_keys(s, {"kind", "t_op", "lo", "hi", "step"}, "profile");
        cfg.profile_kind = kind_from_string(detail::text(s, "kind", "straddle"));
        cfg.profile_t_op = detail::num(s, "t_op", cfg.profile_t_op);
        cfg.profile_grid = detail::parse_grid(s, "", cfg.profile_grid);
    }
    if (j.contains("compare")) {
        const auto& s = j.at("compare");
        detail::require_keys(s, {"gammas", "direct_steps"}, "compare");
        if (s.contains("gammas")) {
            cfg.compare_gammas.clear();
            for (const auto& g : s.at("gammas")) cfg.compare_gammas.push_back(g.get<double>());
        }
        if (s.contains("direct_steps")) {
            cfg.compare_direct_steps.clear();
            for (const auto& n : s.at("direct_steps"))
                cfg.compare_direct_steps.push_back(n.get<int>());
        }
    }
    if (j.contains("prop1")) {
        const auto& s = j.at("prop1");
        detail::require_keys(s, {"instances", "max_instruments"}, "prop1");
        cfg.prop1_instances = detail::integer(s, "instances", cfg.prop1_instances);
        cfg.prop1_max_instruments =
            detail::integer(s, "max_instruments", cfg.prop1_max_instruments);
    }
    cfg.g_mode = detail::text(j, "g_mode", cfg.g_mode);
    if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
    cfg.validate();
    return cfg;
}

namespace detail {

inline nlohmann::json instrument_to_json(const InstrumentSpec& i) {
    return nlohmann::json{{"kind", dpo::to_string(i.kind)},
                          {"strike", i.strike},
                          {"strike2", i.strike2},
                          {"maturity", i.maturity},
                          {"policy", i.policy == StrikePolicy::Fixed ? "fixed" : "delta_neutral"}};
}

}  // namespace detail

// Fully resolved configuration, usable to reproduce a run exactly.
inline nlohmann::json config_to_json(const ExperimentConfig& c) {
    nlohmann::json j;
    j["params"] = {{"r", c.params.r},         {"lambda", c.params.lambda},
                   {"lambda_x", c.params.lambda_x}, {"kappa_x", c.params.kappa_x},
                   {"theta_x", c.params.theta_x},   {"sigma_x", c.params.sigma_x},
                   {"rho", c.params.rho}};
    j["state"] = {{"s", c.state.s}, {"x", c.state.x}, {"w", c.state.w}};
    j["investor"] = {{"gamma", c.investor.gamma},
                     {"horizon", c.investor.horizon},
                     {"w0", c.investor.w0}};
    j["pamc"] = {{"n_outer", c.pamc.n_outer},   {"n_inner", c.pamc.n_inner},
                 {"n_steps", c.pamc.n_steps},   {"basis_order", c.pamc.basis.order},
                 {"method", c.pamc_method},     {"w_floor", c.pamc.w_floor},
                 {"substeps_per_dt", c.pamc.substeps_per_dt}};
    j["quadrature"] = {{"u_min", c.quad.u_min},           {"u_max", c.quad.u_max},
                       {"n_intervals", c.quad.n_intervals}, {"tol", c.quad.tol},
                       {"max_levels", c.quad.max_levels},   {"fd_step", c.quad.fd_step}};
    j["mc"] = {{"n_paths", c.mc.n_paths},   {"steps_per_year", c.mc.steps_per_year},
               {"min_steps", c.mc.min_steps}, {"seed", c.mc.seed},
               {"fd_step", c.mc.fd_step},     {"price_floor", c.mc.price_floor}};
    j["instrument"] = detail::instrument_to_json(c.instrument);
    j["composition"] = nlohmann::json::array();
    for (const auto& inst : c.composition)
        j["composition"].push_back(detail::instrument_to_json(inst));
    nlohmann::json kinds = nlohmann::json::array();
    for (auto k : c.sweep.kinds) kinds.push_back(dpo::to_string(k));
    j["sweep"] = {{"lo", c.sweep.grid.lo},
                  {"hi", c.sweep.grid.hi},
                  {"step", c.sweep.grid.step},
                  {"t_op", c.sweep.t_op},
                  {"kinds", kinds},
                  {"companion_lo", c.sweep.strangle_companion.lo},
                  {"companion_hi", c.sweep.strangle_companion.hi},
                  {"companion_step", c.sweep.strangle_companion.step}};
    nlohmann::json mkinds = nlohmann::json::array();
    for (auto k : c.maturity_sweep.kinds) mkinds.push_back(dpo::to_string(k));
    j["maturity_sweep"] = {{"maturities", c.maturity_sweep.maturities},
                           {"kinds", mkinds},
                           {"vix_call_moneyness", c.maturity_sweep.vix_call_moneyness},
                           {"vix_put_moneyness", c.maturity_sweep.vix_put_moneyness},
                           {"put_lo", c.maturity_sweep.strangle_put.lo},
                           {"put_hi", c.maturity_sweep.strangle_put.hi},
                           {"put_step", c.maturity_sweep.strangle_put.step},
                           {"call_lo", c.maturity_sweep.strangle_call.lo},
                           {"call_hi", c.maturity_sweep.strangle_call.hi},
                           {"call_step", c.maturity_sweep.strangle_call.step}};
    j["profile"] = {{"kind", dpo::to_string(c.profile_kind)},
                    {"t_op", c.profile_t_op},
                    {"lo", c.profile_grid.lo},
                    {"hi", c.profile_grid.hi},
                    {"step", c.profile_grid.step}};
    j["compare"] = {{"gammas", c.compare_gammas}, {"direct_steps", c.compare_direct_steps}};
    j["prop1"] = {{"instances", c.prop1_instances}, {"max_instruments", c.prop1_max_instruments}};
    j["g_mode"] = c.g_mode;
    j["seed"] = c.seed;
    return j;
}

inline std::string fmt_g(double v) {
    if (std::isnan(v)) return "nan";
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

// Tabular result: a CSV rendering and a JSON rendering of the same rows,
// plus a free-form summary carried into the manifest.
struct RunResult {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    nlohmann::json json_rows = nlohmann::json::array();
    nlohmann::json summary;

    std::string csv() const {
        std::string out;
        for (std::size_t i = 0; i < header.size(); ++i) {
            out += header[i];
            out += (i + 1 < header.size()) ? ',' : '\n';
        }
        for (const auto& row : rows)
            for (std::size_t i = 0; i < row.size(); ++i) {
                out += row[i];
                out += (i + 1 < row.size()) ? ',' : '\n';
            }
        return out;
    }

    std::string json_text() const {
        nlohmann::json j;
        j["rows"] = json_rows;
        j["summary"] = summary;
        return j.dump(2) + "\n";
    }
};

// Value-function gradients (d/dx, d/d ln s) feeding the sweep formulas:
// zero for the myopic mode, otherwise from the affine closed form at the
// investor's horizon.
inline Eigen::Vector2d sweep_gradients(const ExperimentConfig& cfg) {
    if (cfg.g_mode == "myopic") return Eigen::Vector2d::Zero();
    const AffineCoefficients ac =
        solve_affine_coefficients(cfg.params, cfg.investor.gamma, cfg.investor.horizon);
    return Eigen::Vector2d(ac.b_at(cfg.investor.horizon), 0.0);
}

namespace detail {

inline void sweep_rows_to_result(const std::vector<SweepRow>& sweep, const std::string& coord_name,
                                 RunResult& res) {
    res.header = {coord_name, "kind", "pi_s", "pi_o", "l1", "companion_strike"};
    int errors = 0;
    for (const auto& row : sweep) {
        res.rows.push_back({fmt_g(row.coord), dpo::to_string(row.kind), fmt_g(row.pi_s),
                            fmt_g(row.pi_o), fmt_g(row.l1), fmt_g(row.companion_strike)});
        nlohmann::json jr = {{coord_name, row.coord},
                             {"kind", dpo::to_string(row.kind)},
                             {"pi_s", row.pi_s},
                             {"pi_o", row.pi_o},
                             {"l1", row.l1},
                             {"companion_strike", row.companion_strike}};
        if (!row.error.empty()) {
            jr["error"] = row.error;
            ++errors;
        }
        res.json_rows.push_back(jr);
    }
    res.summary["n_rows"] = sweep.size();
    res.summary["n_errors"] = errors;
}

}  // namespace detail

inline RunResult run_price(const ExperimentConfig& cfg) {
    const InstrumentSpec resolved =
        resolve_instrument(cfg.instrument, cfg.state, cfg.params, cfg.quad);
    const PriceAndGreeks g =
        price_instrument(resolved, cfg.state, cfg.params, cfg.quad, cfg.mc);
    RunResult res;
    res.header = {"kind", "strike", "strike2", "maturity", "price", "delta", "vega_x"};
    res.rows.push_back({dpo::to_string(resolved.kind), fmt_g(resolved.strike),
                        fmt_g(resolved.strike2), fmt_g(resolved.maturity), fmt_g(g.price),
                        fmt_g(g.delta), fmt_g(g.vega_x)});
    res.json_rows.push_back({{"kind", dpo::to_string(resolved.kind)},
                             {"strike", resolved.strike},
                             {"strike2", resolved.strike2},
                             {"maturity", resolved.maturity},
                             {"price", g.price},
                             {"delta", g.delta},
                             {"vega_x", g.vega_x}});
    res.summary["reference_spot"] = reference_spot(resolved.kind, cfg.state, cfg.params);
    return res;
}

inline RunResult run_simulate(const ExperimentConfig& cfg) {
    SimConfig sim;
    sim.n_paths = cfg.pamc.n_outer;
    sim.n_steps = cfg.pamc.n_steps;
    sim.horizon = cfg.investor.horizon;
    sim.dt = sim.horizon / sim.n_steps;
    sim.substeps_per_dt = cfg.pamc.substeps_per_dt;
    sim.seed = cfg.seed;
    sim.s0 = cfg.state.s;
    sim.x0 = cfg.state.x;
    const PathSet paths = simulate_paths(cfg.params, sim);
    RunResult res;
    res.header = {"path", "terminal_stock", "terminal_variance", "terminal_factor1",
                  "terminal_factor2"};
    const int last = sim.n_steps;
    double mean_s = 0.0;
    for (int m = 0; m < sim.n_paths; ++m) {
        res.rows.push_back({std::to_string(m), fmt_g(paths.stock(m, last)),
                            fmt_g(paths.variance(m, last)), fmt_g(paths.factor1(m, last)),
                            fmt_g(paths.factor2(m, last))});
        res.json_rows.push_back({{"path", m},
                                 {"terminal_stock", paths.stock(m, last)},
                                 {"terminal_variance", paths.variance(m, last)},
                                 {"terminal_factor1", paths.factor1(m, last)},
                                 {"terminal_factor2", paths.factor2(m, last)}});
        mean_s += paths.stock(m, last);
    }
    res.summary["mean_terminal_stock"] = mean_s / sim.n_paths;
    return res;
}

inline RunResult run_pamc_verb(const ExperimentConfig& cfg) {
    PamcConfig pc = cfg.pamc;
    pc.seed = cfg.seed;
    const PamcResult r =
        cfg.pamc_method == "direct"
            ? run_pamc_direct(cfg.params, cfg.investor, cfg.state, cfg.composition, pc, cfg.quad,
                              cfg.mc)
            : run_pamc_indirect(cfg.params, cfg.investor, cfg.state, cfg.composition, pc,
                                cfg.quad, cfg.mc);
    RunResult res;
    res.header = {"method", "eta_s", "eta_h"};
    std::vector<std::string> row = {cfg.pamc_method, fmt_g(r.eta0(0)), fmt_g(r.eta0(1))};
    nlohmann::json jr = {{"method", cfg.pamc_method},
                         {"eta_s", r.eta0(0)},
                         {"eta_h", r.eta0(1)}};
    nlohmann::json pis = nlohmann::json::array();
    for (int i = 0; i < r.pi0.size(); ++i) {
        res.header.push_back("pi_" + std::to_string(i + 1));
        row.push_back(fmt_g(r.pi0(i)));
        pis.push_back(r.pi0(i));
    }
    jr["pi"] = pis;
    res.rows.push_back(row);
    res.json_rows.push_back(jr);
    res.summary["clamp_count"] = r.diag.clamp_count;
    res.summary["bankruptcy_count"] = r.diag.bankruptcy_count;
    res.summary["rank_warnings"] = r.diag.rank_warnings;
    return res;
}

inline RunResult run_sweep_moneyness(const ExperimentConfig& cfg) {
    SweepConfig sc = cfg.sweep;
    const Eigen::Vector2d g = sweep_gradients(cfg);
    sc.g_h = g(0);
    sc.g_s = g(1);
    const std::vector<SweepRow> rows =
        sweep_moneyness(cfg.params, cfg.investor.gamma, cfg.state, sc, cfg.quad, cfg.mc);
    RunResult res;
    detail::sweep_rows_to_result(rows, "moneyness", res);
    res.summary["g_h"] = sc.g_h;
    res.summary["g_s"] = sc.g_s;
    return res;
}

inline RunResult run_sweep_maturity(const ExperimentConfig& cfg) {
    MaturitySweepConfig mcfg = cfg.maturity_sweep;
    const Eigen::Vector2d g = sweep_gradients(cfg);
    mcfg.g_h = g(0);
    mcfg.g_s = g(1);
    const std::vector<SweepRow> rows =
        sweep_maturity(cfg.params, cfg.investor.gamma, cfg.state, mcfg, cfg.quad, cfg.mc);
    RunResult res;
    detail::sweep_rows_to_result(rows, "maturity", res);
    res.summary["g_h"] = mcfg.g_h;
    res.summary["g_s"] = mcfg.g_s;
    return res;
}

inline RunResult run_vega_profile(const ExperimentConfig& cfg) {
    const std::vector<VegaProfileRow> rows =
        vega_profile(cfg.params, cfg.state, cfg.profile_kind, cfg.profile_t_op, cfg.profile_grid,
                     cfg.quad, cfg.mc);
    RunResult res;
    res.header = {"moneyness", "price", "vega_x"};
    int errors = 0;
    for (const auto& row : rows) {
        res.rows.push_back({fmt_g(row.coord), fmt_g(row.price), fmt_g(row.vega_x)});
        nlohmann::json jr = {{"moneyness", row.coord}, {"price", row.price},
                             {"vega_x", row.vega_x}};
        if (!row.error.empty()) {
            jr["error"] = row.error;
            ++errors;
        }
        res.json_rows.push_back(jr);
    }
    res.summary["kind"] = dpo::to_string(cfg.profile_kind);
    res.summary["n_errors"] = errors;
    return res;
}

inline RunResult run_verify_prop1(const ExperimentConfig& cfg) {
    const Prop1Report rep =
        verify_prop1(cfg.prop1_instances, cfg.prop1_max_instruments, cfg.seed);
    RunResult res;
    res.header = {"instances", "failures", "max_gap", "max_support"};
    res.rows.push_back({std::to_string(rep.n_instances), std::to_string(rep.failures),
                        fmt_g(rep.max_gap), std::to_string(rep.max_support)});
    res.json_rows.push_back({{"instances", rep.n_instances},
                             {"failures", rep.failures},
                             {"max_gap", rep.max_gap},
                             {"max_support", rep.max_support}});
    res.summary["pass"] = rep.failures == 0;
    return res;
}

struct CompareRow {
    double gamma = 0.0;
    std::string method;
    double pi_s = 0.0;
    double pi_o = 0.0;
    double eta_s = 0.0;
    double eta_h = 0.0;
    double wall_seconds = 0.0;
};

// All methods on the same two-instrument composition, per risk aversion.
// Exposure-matrix node caches are shared across gammas since pricing does
// not depend on the investor.
inline std::vector<CompareRow> compare_methods(const ExperimentConfig& cfg) {
    if (cfg.composition.size() != 2)
        throw ConfigError("experiments.compare_methods: composition must hold exactly 2 "
                          "instruments (stock and one option)");
    std::vector<CompareRow> rows;
    std::vector<DirectSigmaCache> caches(cfg.compare_direct_steps.size());
    const SigmaMatrix sigma0 =
        build_sigma(cfg.composition, cfg.state, cfg.params, cfg.quad, cfg.mc);

    for (double gamma : cfg.compare_gammas) {
        InvestorSpec inv = cfg.investor;
        inv.gamma = gamma;

        {
            const auto t0 = std::chrono::steady_clock::now();
            const AffineCoefficients ac =
                solve_affine_coefficients(cfg.params, gamma, inv.horizon);
            const Eigen::Vector2d eta =
                heston_complete_exposure(ac, cfg.params, 0.0, cfg.state.x);
            const Eigen::VectorXd pi = exposure_to_weights(sigma0, eta);
            CompareRow row;
            row.gamma = gamma;
            row.method = "closed_form";
            row.pi_s = pi(0);
            row.pi_o = pi(1);
            row.eta_s = eta(0);
            row.eta_h = eta(1);
            row.wall_seconds =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            rows.push_back(row);
        }

        {
            PamcConfig pc = cfg.pamc;
            pc.seed = cfg.seed;
            const PamcResult r = run_pamc_indirect(cfg.params, inv, cfg.state, cfg.composition,
                                                   pc, cfg.quad, cfg.mc);
            rows.push_back(CompareRow{gamma, "indirect", r.pi0(0), r.pi0(1), r.eta0(0), r.eta0(1),
                                      r.diag.wall_seconds});
        }

        for (std::size_t di = 0; di < cfg.compare_direct_steps.size(); ++di) {
            PamcConfig pc = cfg.pamc;
            pc.seed = cfg.seed;
            pc.n_steps = cfg.compare_direct_steps[di];
            const PamcResult r = run_pamc_direct(cfg.params, inv, cfg.state, cfg.composition, pc,
                                                 cfg.quad, cfg.mc, &caches[di]);
            rows.push_back(CompareRow{gamma,
                                      "direct_" + std::to_string(cfg.compare_direct_steps[di]),
                                      r.pi0(0), r.pi0(1), r.eta0(0), r.eta0(1),
                                      r.diag.wall_seconds});
        }
    }
    return rows;
}

inline RunResult run_compare_methods(const ExperimentConfig& cfg) {
    const std::vector<CompareRow> rows = compare_methods(cfg);
    RunResult res;
    res.header = {"gamma", "method", "pi_s", "pi_o", "eta_s", "eta_h", "wall_seconds"};
    for (const auto& r : rows) {
        res.rows.push_back({fmt_g(r.gamma), r.method, fmt_g(r.pi_s), fmt_g(r.pi_o),
                            fmt_g(r.eta_s), fmt_g(r.eta_h), fmt_g(r.wall_seconds)});
        res.json_rows.push_back({{"gamma", r.gamma},
                                 {"method", r.method},
                                 {"pi_s", r.pi_s},
                                 {"pi_o", r.pi_o},
                                 {"eta_s", r.eta_s},
                                 {"eta_h", r.eta_h},
                                 {"wall_seconds", r.wall_seconds}});
    }
    res.summary["n_rows"] = rows.size();
    return res;
}

inline RunResult run(Verb verb, const ExperimentConfig& cfg) {
    cfg.validate();
    switch (verb) {
        case Verb::Price: return run_price(cfg);
        case Verb::Simulate: return run_simulate(cfg);
        case Verb::Pamc: return run_pamc_verb(cfg);
        case Verb::SweepMoneyness: return run_sweep_moneyness(cfg);
        case Verb::SweepMaturity: return run_sweep_maturity(cfg);
        case Verb::VegaProfile: return run_vega_profile(cfg);
        case Verb::VerifyProp1: return run_verify_prop1(cfg);
        case Verb::CompareMethods: return run_compare_methods(cfg);
    }
    throw ConfigError("experiments: unhandled verb");
}

inline nlohmann::json make_manifest(Verb verb, const ExperimentConfig& cfg,
                                    const RunResult& res, const std::string& out,
                                    const std::string& format, double wall_seconds) {
    nlohmann::json m;
    m["version"] = DPO_VERSION;
    m["verb"] = to_string(verb);
    m["seed"] = cfg.seed;
    m["out"] = out;
    m["format"] = format;
    m["rows"] = res.rows.size();
    m["wall_seconds"] = wall_seconds;
    m["summary"] = res.summary;
    m["config"] = config_to_json(cfg);
    return m;
}

}  // namespace dpo
