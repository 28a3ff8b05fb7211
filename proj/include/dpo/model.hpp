#pragma once

// Heston market with tradable pure-factor assets.
//
// Real-world dynamics:
//   dS/S = (r + lambda X) dt + sqrt(X) dB^S
//   dX   = kappa_x (theta_x - X) dt + sigma_x sqrt(X) dB^X,  corr(B^S,B^X) = rho
//
// The two-factor view writes dB = Phi dZ with independent Z and
// Phi = [[1,0],[rho,sqrt(1-rho^2)]], so Phi Phi^T is the factor correlation.
// Pure-factor assets carry unit volatility and the factor risk premia
// lambda^S = lambda sqrt(X), lambda^X_p = lambda_x sqrt(X).

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dpo/errors.hpp"
#include "dpo/rng.hpp"

namespace dpo {

struct HestonParams {
    double r = 0.05;          // risk-free rate
    double lambda = 4.0;      // equity premium scale: drift excess lambda*X
    double lambda_x = -7.1;   // market price of variance risk scale
    double kappa_x = 5.0;     // variance mean-reversion speed
    double theta_x = 0.0169;  // variance long-run level
    double sigma_x = 0.25;    // volatility of variance
    double rho = -0.4;        // corr(B^S, B^X)

    // Risk-neutral variance dynamics: dX = kappa_q (theta_q - X) dt + sigma_x sqrt(X) dB^Q.
    double kappa_q() const { return kappa_x + lambda_x * sigma_x; }
    double theta_q() const { return kappa_x * theta_x / kappa_q(); }

    void validate() const {
        auto fin = [](double v) { return std::isfinite(v); };
        if (!fin(r) || !fin(lambda) || !fin(lambda_x))
            throw ConfigError("model.HestonParams: r/lambda/lambda_x must be finite");
        if (!fin(kappa_x) || kappa_x <= 0.0)
            throw ConfigError("model.HestonParams: kappa_x must be finite and > 0");
        if (!fin(theta_x) || theta_x <= 0.0)
            throw ConfigError("model.HestonParams: theta_x must be finite and > 0");
        // sigma_x = 0 is admitted as the degenerate deterministic-variance case.
        if (!fin(sigma_x) || sigma_x < 0.0)
            throw ConfigError("model.HestonParams: sigma_x must be finite and >= 0");
        if (!fin(rho) || rho <= -1.0 || rho >= 1.0)
            throw ConfigError("model.HestonParams: rho must lie in (-1,1)");
    }
};

struct MarketState {
    double t = 0.0;    // time, years
    double s = 1.0;    // stock price
    double x = 0.0169; // instantaneous variance, >= 0
    double w = 1.0;    // investor wealth
    double s_f1 = 1.0; // pure stock-factor asset
    double s_f2 = 1.0; // pure variance-factor asset

    void validate() const {
        if (!(s > 0.0) || !(s_f1 > 0.0) || !(s_f2 > 0.0))
            throw ConfigError("model.MarketState: asset prices must be > 0");
        if (!(x >= 0.0) || !std::isfinite(x))
            throw ConfigError("model.MarketState: variance must be finite and >= 0");
        if (!(w > 0.0)) throw ConfigError("model.MarketState: wealth must be > 0");
    }
};

// Loadings of the two risk factors at a given variance level.
struct FactorGeometry {
    Eigen::Matrix2d phi;        // lower-triangular factorization, Phi Phi^T = corr
    Eigen::Vector2d lambda_vec; // factor risk premia [lambda sqrt(x), lambda_x sqrt(x)]
    Eigen::Vector2d a_vec;      // variance-factor loading direction [rho, 1]
    Eigen::Vector2d b_vec;      // stock-factor loading direction [1, rho]
    double sigma_s = 0.0;       // stock diffusion sqrt(x)
    double sigma_h = 0.0;       // variance diffusion sigma_x sqrt(x)
};

inline FactorGeometry factor_geometry(const HestonParams& p, double x) {
    p.validate();
    if (!(x >= 0.0) || !std::isfinite(x))
        throw ConfigError("model.factor_geometry: variance must be finite and >= 0");
    const double sx = std::sqrt(x);
    FactorGeometry g;
    g.phi << 1.0, 0.0, p.rho, std::sqrt(1.0 - p.rho * p.rho);
    g.lambda_vec << p.lambda * sx, p.lambda_x * sx;
    g.a_vec << p.rho, 1.0;
    g.b_vec << 1.0, p.rho;
    g.sigma_s = sx;
    g.sigma_h = p.sigma_x * sx;
    return g;
}

struct SimConfig {
    int n_paths = 100;        // outer paths
    int n_steps = 60;         // rebalance intervals over the horizon
    double dt = 1.0 / 60.0;   // rebalance interval, years
    double horizon = 1.0;     // investment horizon T, years
    int substeps_per_dt = 1;  // Euler substeps inside one rebalance interval
    std::uint64_t seed = 1;
    double s0 = 1.0;
    double x0 = 0.0169;

    void validate() const {
        if (n_paths < 1 || n_steps < 1 || substeps_per_dt < 1)
            throw ConfigError("model.SimConfig: counts must be >= 1");
        if (!(dt > 0.0) || !std::isfinite(dt))
            throw ConfigError("model.SimConfig: dt must be > 0");
        if (std::abs(n_steps * dt - horizon) > 1e-12)
            throw ConfigError("model.SimConfig: n_steps * dt must equal horizon");
        if (!(s0 > 0.0) || !(x0 >= 0.0) || !std::isfinite(s0) || !std::isfinite(x0))
            throw ConfigError("model.SimConfig: require s0 > 0 and x0 >= 0");
    }
};

// Simulated outer paths on the rebalance grid. Matrices are
// n_paths x (n_steps+1); Brownian increments are n_paths x n_steps and
// aggregate the substep draws within each rebalance interval.
struct PathSet {
    std::vector<double> times;
    Eigen::MatrixXd stock;
    Eigen::MatrixXd variance;
    Eigen::MatrixXd factor1;
    Eigen::MatrixXd factor2;
    Eigen::MatrixXd dbs;
    Eigen::MatrixXd dbx;
};

namespace detail {

// One Euler substep shared by outer and inner simulation.
// State is kept as (ln S, X-tilde, ln F1, ln F2); the variance update is
// full-truncation Euler: the signed X-tilde propagates, max(X,0) feeds
// every coefficient.
struct EulerState {
    double ln_s;
    double x;
    double ln_f1;
    double ln_f2;
};

inline void euler_substep(const HestonParams& p, EulerState& st, double h, double z1, double z2,
                          double* dbs_acc = nullptr, double* dbx_acc = nullptr) {
    const double xp = st.x > 0.0 ? st.x : 0.0;
    const double sx = std::sqrt(xp);
    const double sq_h = std::sqrt(h);
    const double rho_c = std::sqrt(1.0 - p.rho * p.rho);
    const double db_s = sq_h * z1;
    const double db_x = sq_h * (p.rho * z1 + rho_c * z2);
    st.ln_s += (p.r + p.lambda * xp - 0.5 * xp) * h + sx * db_s;
    st.ln_f1 += (p.r + p.lambda * sx - 0.5) * h + db_s;
    st.ln_f2 += (p.r + p.lambda_x * sx - 0.5) * h + db_x;
    st.x += p.kappa_x * (p.theta_x - xp) * h + p.sigma_x * sx * db_x;
    if (dbs_acc) *dbs_acc += db_s;
    if (dbx_acc) *dbx_acc += db_x;
}

// Evolves a state over one rebalance interval, consuming 2 normals per substep.
inline void evolve_interval(const HestonParams& p, EulerState& st, double dt, int substeps,
                            RngStream& stream, double* dbs_acc = nullptr,
                            double* dbx_acc = nullptr) {
    const double h = dt / substeps;
    for (int k = 0; k < substeps; ++k) {
        const double z1 = stream.normal();
        const double z2 = stream.normal();
        euler_substep(p, st, h, z1, z2, dbs_acc, dbx_acc);
    }
}

// Independent substream for inner sample n of a base stream; sample n's
// draws do not depend on how many samples are taken.
inline RngStream inner_sample_stream(const RngStream& base, std::uint64_t n) {
    return RngStream{derive_key(derive_key(base.key, base.ctr), n), 0};
}

}  // namespace detail

inline PathSet simulate_paths(const HestonParams& p, const SimConfig& cfg) {
    p.validate();
    cfg.validate();

    PathSet ps;
    ps.times.resize(cfg.n_steps + 1);
    for (int i = 0; i <= cfg.n_steps; ++i) ps.times[i] = i * cfg.dt;
    ps.stock.resize(cfg.n_paths, cfg.n_steps + 1);
    ps.variance.resize(cfg.n_paths, cfg.n_steps + 1);
    ps.factor1.resize(cfg.n_paths, cfg.n_steps + 1);
    ps.factor2.resize(cfg.n_paths, cfg.n_steps + 1);
    ps.dbs.resize(cfg.n_paths, cfg.n_steps);
    ps.dbx.resize(cfg.n_paths, cfg.n_steps);

#pragma omp parallel for schedule(static)
    for (int m = 0; m < cfg.n_paths; ++m) {
        RngStream stream = substream(cfg.seed, StreamTag::OuterPath, static_cast<std::uint64_t>(m));
        detail::EulerState st{std::log(cfg.s0), cfg.x0, 0.0, 0.0};
        ps.stock(m, 0) = cfg.s0;
        ps.variance(m, 0) = cfg.x0;
        ps.factor1(m, 0) = 1.0;
        ps.factor2(m, 0) = 1.0;
        for (int i = 0; i < cfg.n_steps; ++i) {
            double dbs = 0.0, dbx = 0.0;
            detail::evolve_interval(p, st, cfg.dt, cfg.substeps_per_dt, stream, &dbs, &dbx);
            ps.stock(m, i + 1) = std::exp(st.ln_s);
            ps.variance(m, i + 1) = st.x > 0.0 ? st.x : 0.0;
            ps.factor1(m, i + 1) = std::exp(st.ln_f1);
            ps.factor2(m, i + 1) = std::exp(st.ln_f2);
            ps.dbs(m, i) = dbs;
            ps.dbx(m, i) = dbx;
        }
    }
    return ps;
}

// n_inner conditionally independent one-interval evolutions of
// (S, X, S_f1, S_f2) from a common state. Wealth is not evolved here; it
// requires an exposure choice and is handled by the portfolio layer.
inline std::vector<MarketState> step_inner(const HestonParams& p, const MarketState& state,
                                           double dt, int n_inner, RngStream stream,
                                           int substeps = 1) {
    p.validate();
    state.validate();
    if (!(dt > 0.0) || n_inner < 1 || substeps < 1)
        throw ConfigError("model.step_inner: require dt > 0, n_inner >= 1, substeps >= 1");

    std::vector<MarketState> out(n_inner);
    for (int n = 0; n < n_inner; ++n) {
        RngStream sample = detail::inner_sample_stream(stream, static_cast<std::uint64_t>(n));
        detail::EulerState st{std::log(state.s), state.x, std::log(state.s_f1),
                              std::log(state.s_f2)};
        detail::evolve_interval(p, st, dt, substeps, sample);
        MarketState ms = state;
        ms.t = state.t + dt;
        ms.s = std::exp(st.ln_s);
        ms.x = st.x > 0.0 ? st.x : 0.0;
        ms.s_f1 = std::exp(st.ln_f1);
        ms.s_f2 = std::exp(st.ln_f2);
        out[n] = ms;
    }
    return out;
}

}  // namespace dpo
