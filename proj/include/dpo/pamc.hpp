#pragma once

// Policy-approximation Monte Carlo for the dynamic portfolio problem.
//
// The value function of a CRRA investor separates as
//   V(t, w, x, ln s) = w^{1-gamma}/(1-gamma) * exp(L(t, x, ln s)),
// so the recursion only needs the wealth-free log factor L. Both method
// variants regress one-step log continuation values on a polynomial basis in
// (x, ln s) over an outer cloud of simulated states, stepping backward in
// time:
//
//  - indirect: the policy is expressed as factor exposures eta via the
//    first-order condition, the inner step trades the two unit-volatility
//    factor assets, and portfolio weights are recovered from eta only once,
//    at t = 0, through the instrument exposure matrix.
//  - direct: the policy is expressed as instrument weights pi at every node
//    via the instrument-space first-order condition; the exposure matrix is
//    rebuilt by repricing the composition at each node and instrument
//    returns over the inner step use those frozen loadings.
//
// Gradients of a fitted slice are only trusted inside the bounding box of
// the states it was fitted on; queries outside are clamped and counted.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <exception>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "dpo/errors.hpp"
#include "dpo/model.hpp"
#include "dpo/pricing.hpp"
#include "dpo/rng.hpp"

namespace dpo {

struct InvestorSpec {
    double gamma = 4.0;
    double horizon = 1.0;
    double w0 = 1.0;

    void validate() const {
        if (!(gamma > 0.0) || gamma == 1.0 || !std::isfinite(gamma))
            throw ConfigError("pamc.InvestorSpec: gamma must be > 0 and != 1");
        if (!(horizon > 0.0) || !std::isfinite(horizon))
            throw ConfigError("pamc.InvestorSpec: horizon must be > 0");
        if (!(w0 > 0.0)) throw ConfigError("pamc.InvestorSpec: initial wealth must be > 0");
    }
};

// Monomials h^a (ln s)^b with a + b <= order, graded order, h powers first.
struct PolyBasis {
    int order = 2;

    int size() const { return (order + 1) * (order + 2) / 2; }

    void validate() const {
        if (order < 1 || order > 6) throw ConfigError("pamc.PolyBasis: order must be in [1, 6]");
    }

    Eigen::VectorXd features(double h, double lns) const {
        Eigen::VectorXd f(size());
        int k = 0;
        for (int d = 0; d <= order; ++d)
            for (int a = d; a >= 0; --a)
                f(k++) = std::pow(h, a) * std::pow(lns, d - a);
        return f;
    }

    // d(features)/dh and d(features)/d(lns), in the same ordering.
    void feature_gradients(double h, double lns, Eigen::VectorXd& dh, Eigen::VectorXd& ds) const {
        dh.resize(size());
        ds.resize(size());
        int k = 0;
        for (int d = 0; d <= order; ++d)
            for (int a = d; a >= 0; --a) {
                const int b = d - a;
                dh(k) = a == 0 ? 0.0 : a * std::pow(h, a - 1) * std::pow(lns, b);
                ds(k) = b == 0 ? 0.0 : b * std::pow(h, a) * std::pow(lns, b - 1);
                ++k;
            }
    }
};

// One regression slice: polynomial in standardized (h, ln s), plus the
// bounding box of the states it was fitted on. Gradient queries clamp into
// the box; value queries extend linearly from the nearest box point, since
// flat tails would systematically shrink every upstream slope estimate.
// in_box lets callers count how often queries leave the box.
struct FittedPoly {
    PolyBasis basis;
    double mean_h = 0.0, sd_h = 1.0;
    double mean_s = 0.0, sd_s = 1.0;
    double h_min = 0.0, h_max = 0.0, s_min = 0.0, s_max = 0.0;
    Eigen::VectorXd coeffs;
    int rank = 0;
    bool fitted = false;

    bool in_box(double h, double lns) const {
        return h >= h_min && h <= h_max && lns >= s_min && lns <= s_max;
    }

    double value(double h, double lns) const {
        require_fitted();
        double hc = h, sc = lns;
        clamp(hc, sc);
        const double base =
            coeffs.dot(basis.features((hc - mean_h) / sd_h, (sc - mean_s) / sd_s));
        if (hc == h && sc == lns) return base;
        Eigen::VectorXd dh, ds;
        basis.feature_gradients((hc - mean_h) / sd_h, (sc - mean_s) / sd_s, dh, ds);
        return base + coeffs.dot(dh) / sd_h * (h - hc) + coeffs.dot(ds) / sd_s * (lns - sc);
    }

    // (dL/dh, dL/d ln s) at the clamped query point.
    Eigen::Vector2d gradient(double h, double lns) const {
        require_fitted();
        clamp(h, lns);
        Eigen::VectorXd dh, ds;
        basis.feature_gradients((h - mean_h) / sd_h, (lns - mean_s) / sd_s, dh, ds);
        return Eigen::Vector2d(coeffs.dot(dh) / sd_h, coeffs.dot(ds) / sd_s);
    }

  private:
    void require_fitted() const {
        if (!fitted) throw NumericalError("pamc.FittedPoly: evaluating an unfitted slice");
    }

    void clamp(double& h, double& lns) const {
        h = std::min(std::max(h, h_min), h_max);
        lns = std::min(std::max(lns, s_min), s_max);
    }
};

// Least-squares fit of y on the basis over states (rows of (h, ln s)).
// Columns are standardized first; a min-norm solve keeps rank-deficient
// designs (for example a deterministic-variance column) well defined.
inline FittedPoly regress_value(const Eigen::MatrixXd& states, const Eigen::VectorXd& y,
                                const PolyBasis& basis) {
    basis.validate();
    const int n = static_cast<int>(states.rows());
    if (states.cols() != 2) throw ConfigError("pamc.regress_value: states must have 2 columns");
    if (n != y.size()) throw ConfigError("pamc.regress_value: states/targets size mismatch");
    if (n <= basis.size())
        throw ConfigError("pamc.regress_value: need more samples than basis functions (" +
                          std::to_string(n) + " <= " + std::to_string(basis.size()) + ")");

    FittedPoly fp;
    fp.basis = basis;
    fp.mean_h = states.col(0).mean();
    fp.mean_s = states.col(1).mean();
    const double var_h = (states.col(0).array() - fp.mean_h).square().mean();
    const double var_s = (states.col(1).array() - fp.mean_s).square().mean();
    fp.sd_h = std::sqrt(var_h) > 1e-12 ? std::sqrt(var_h) : 1.0;
    fp.sd_s = std::sqrt(var_s) > 1e-12 ? std::sqrt(var_s) : 1.0;
    fp.h_min = states.col(0).minCoeff();
    fp.h_max = states.col(0).maxCoeff();
    fp.s_min = states.col(1).minCoeff();
    fp.s_max = states.col(1).maxCoeff();

    Eigen::MatrixXd design(n, basis.size());
    for (int i = 0; i < n; ++i)
        design.row(i) =
            basis.features((states(i, 0) - fp.mean_h) / fp.sd_h, (states(i, 1) - fp.mean_s) / fp.sd_s)
                .transpose();
    Eigen::BDCSVD<Eigen::MatrixXd> svd(design, Eigen::ComputeThinU | Eigen::ComputeThinV);
    fp.coeffs = svd.solve(y);
    fp.rank = static_cast<int>(svd.rank());
    fp.fitted = true;
    return fp;
}

// First-order condition in factor-exposure space:
//   eta = (1/gamma) (Phi Phi^T)^{-1} (Lambda + g_h sigma_h A + g_s sigma_s B),
// with A, B the factor loadings of the variance and stock shocks.
inline Eigen::Vector2d optimal_exposure(const FactorGeometry& geom, double gamma, double g_h,
                                        double g_s) {
    if (!(gamma > 0.0) || gamma == 1.0)
        throw ConfigError("pamc.optimal_exposure: gamma must be > 0 and != 1");
    const Eigen::Vector2d rhs =
        geom.lambda_vec + g_h * geom.sigma_h * geom.a_vec + g_s * geom.sigma_s * geom.b_vec;
    const double rho = geom.phi(1, 0);
    const double denom = 1.0 - rho * rho;
    return Eigen::Vector2d((rhs(0) - rho * rhs(1)) / denom, (rhs(1) - rho * rhs(0)) / denom) /
           gamma;
}

// Instrument weights replicating a target factor exposure: solve
// Sigma^T pi = eta. Square systems must be well conditioned; larger
// compositions get the min-norm solution, checked for consistency.
inline Eigen::VectorXd exposure_to_weights(const SigmaMatrix& sigma, const Eigen::Vector2d& eta) {
    const int n = static_cast<int>(sigma.m.rows());
    if (n < 1 || sigma.m.cols() != 2)
        throw ConfigError("pamc.exposure_to_weights: exposure matrix must be n x 2");
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(sigma.m,
                                          Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    const double cond = sv(0) / sv(sv.size() - 1);
    if (!(sv(sv.size() - 1) > 0.0) || cond > 1e12) {
        std::string names;
        for (const auto& inst : sigma.instruments) names += " " + to_string(inst.kind);
        throw NumericalError(
            "pamc.exposure_to_weights: composition cannot replicate the target exposure "
            "(condition " +
            std::to_string(cond) + "):" + names);
    }
    // Sigma^T pi = eta  <=>  pi in row space; min-norm via SVD of Sigma^T.
    Eigen::JacobiSVD<Eigen::MatrixXd> svd_t(sigma.m.transpose(),
                                            Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Eigen::VectorXd pi = svd_t.solve(eta);
    const double resid = (sigma.m.transpose() * pi - eta).norm();
    if (resid > 1e-8 * (1.0 + eta.norm()))
        throw NumericalError(
            "pamc.exposure_to_weights: target exposure is not attainable, residual " +
            std::to_string(resid));
    return pi;
}

// One-step transformed value estimate from inner samples:
//   L = log mean exp((1-gamma) log W_k + L_next_k) - (1-gamma) log w0,
// computed with a max shift for stability.
inline double transformed_value_sample(double gamma, double w0,
                                       const std::vector<double>& log_wealth,
                                       const std::vector<double>& continuation) {
    if (log_wealth.empty() || log_wealth.size() != continuation.size())
        throw ConfigError("pamc.transformed_value_sample: sample arrays must match and be nonempty");
    if (!(w0 > 0.0)) throw ConfigError("pamc.transformed_value_sample: w0 must be > 0");
    const double og = 1.0 - gamma;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < log_wealth.size(); ++k)
        mx = std::max(mx, og * log_wealth[k] + continuation[k]);
    double acc = 0.0;
    for (std::size_t k = 0; k < log_wealth.size(); ++k)
        acc += std::exp(og * log_wealth[k] + continuation[k] - mx);
    return mx + std::log(acc / static_cast<double>(log_wealth.size())) - og * std::log(w0);
}

struct PamcConfig {
    int n_outer = 100;
    int n_inner = 2000;
    int n_steps = 60;
    std::uint64_t seed = 1;
    PolyBasis basis{};
    double w_floor = 1e-10;  // inner-step wealth floor (bankruptcy guard)
    int substeps_per_dt = 1;

    void validate() const {
        basis.validate();
        if (n_outer <= basis.size())
            throw ConfigError("pamc.PamcConfig: n_outer must exceed the basis size");
        if (n_inner < 2 || n_steps < 1 || substeps_per_dt < 1)
            throw ConfigError("pamc.PamcConfig: counts must be positive");
        if (!(w_floor > 0.0)) throw ConfigError("pamc.PamcConfig: w_floor must be > 0");
    }
};

struct PamcDiagnostics {
    long clamp_count = 0;       // gradient/value queries outside a slice's box
    long bankruptcy_count = 0;  // inner wealth samples floored
    int rank_warnings = 0;      // rank-deficient regression slices
    double wall_seconds = 0.0;
};

struct PamcResult {
    Eigen::Vector2d eta0 = Eigen::Vector2d::Zero();
    Eigen::VectorXd pi0;
    SigmaMatrix sigma0;
    std::vector<FittedPoly> slices;  // slices[i] = fitted L_i, valid for 1 <= i < n_steps
    PamcDiagnostics diag;
};

// Exposure matrices for every outer node, reusable across investors since
// pricing does not involve gamma. Valid only for the same params,
// composition, initial state and PamcConfig shape it was filled with.
struct DirectSigmaCache {
    int n_outer = 0;
    int n_steps = 0;
    std::uint64_t seed = 0;
    std::vector<Eigen::MatrixXd> node_sigma;  // index m * n_steps + i, for i >= 1
    Eigen::MatrixXd sigma0;
    bool filled = false;
};

namespace detail {

inline PathSet simulate_outer(const HestonParams& p, const MarketState& state0,
                              const InvestorSpec& inv, const PamcConfig& cfg) {
    SimConfig sim;
    sim.n_paths = cfg.n_outer;
    sim.n_steps = cfg.n_steps;
    sim.dt = inv.horizon / cfg.n_steps;
    sim.horizon = inv.horizon;
    sim.substeps_per_dt = cfg.substeps_per_dt;
    sim.seed = cfg.seed;
    sim.s0 = state0.s;
    sim.x0 = state0.x;
    return simulate_paths(p, sim);
}

// Gradient of the next slice at (h, lns); zero for the terminal slice.
inline Eigen::Vector2d next_gradient(const std::vector<FittedPoly>& slices, int next, int n_steps,
                                     double h, double lns, long& clamps) {
    if (next >= n_steps) return Eigen::Vector2d::Zero();
    if (!slices[next].in_box(h, lns)) ++clamps;
    return slices[next].gradient(h, lns);
}

inline double next_value(const std::vector<FittedPoly>& slices, int next, int n_steps, double h,
                         double lns, long& clamps) {
    if (next >= n_steps) return 0.0;
    if (!slices[next].in_box(h, lns)) ++clamps;
    return slices[next].value(h, lns);
}

}  // namespace detail

// Indirect variant: exposures eta at every node, weights only at t = 0.
inline PamcResult run_pamc_indirect(const HestonParams& p, const InvestorSpec& inv,
                                    const MarketState& state0,
                                    const std::vector<InstrumentSpec>& composition,
                                    const PamcConfig& cfg, const QuadratureConfig& quad = {},
                                    const McPricingConfig& mc = {}) {
    p.validate();
    inv.validate();
    state0.validate();
    cfg.validate();
    const auto t_start = std::chrono::steady_clock::now();

    const double dt = inv.horizon / cfg.n_steps;
    const PathSet paths = detail::simulate_outer(p, state0, inv, cfg);

    PamcResult res;
    res.slices.resize(cfg.n_steps);
    std::vector<double> vhat(cfg.n_outer);
    Eigen::MatrixXd nodes(cfg.n_outer, 2);

    for (int i = cfg.n_steps - 1; i >= 1; --i) {
        long clamps = 0, bankrupt = 0;
#pragma omp parallel for schedule(static) reduction(+ : clamps, bankrupt)
        for (int m = 0; m < cfg.n_outer; ++m) {
            const double x = paths.variance(m, i);
            const double lns = std::log(paths.stock(m, i));
            const Eigen::Vector2d g =
                detail::next_gradient(res.slices, i + 1, cfg.n_steps, x, lns, clamps);
            const FactorGeometry geom = factor_geometry(p, x);
            const Eigen::Vector2d eta = optimal_exposure(geom, inv.gamma, g(0), g(1));

            MarketState st;
            st.t = i * dt;
            st.s = paths.stock(m, i);
            st.x = x;
            RngStream stream = substream(cfg.seed, StreamTag::InnerSample,
                                         static_cast<std::uint64_t>(m),
                                         static_cast<std::uint64_t>(i));
            const std::vector<MarketState> inner =
                step_inner(p, st, dt, cfg.n_inner, stream, cfg.substeps_per_dt);

            std::vector<double> lw(cfg.n_inner), cont(cfg.n_inner);
            for (int k = 0; k < cfg.n_inner; ++k) {
                const double r1 = inner[k].s_f1 - 1.0;
                const double r2 = inner[k].s_f2 - 1.0;
                double w = 1.0 + p.r * dt + eta(0) * (r1 - p.r * dt) + eta(1) * (r2 - p.r * dt);
                if (w < cfg.w_floor) {
                    w = cfg.w_floor;
                    ++bankrupt;
                }
                lw[k] = std::log(w);
                cont[k] = detail::next_value(res.slices, i + 1, cfg.n_steps, inner[k].x,
                                             std::log(inner[k].s), clamps);
            }
            vhat[m] = transformed_value_sample(inv.gamma, 1.0, lw, cont);
            nodes(m, 0) = x;
            nodes(m, 1) = lns;
        }
        res.diag.clamp_count += clamps;
        res.diag.bankruptcy_count += bankrupt;
        Eigen::VectorXd y = Eigen::Map<Eigen::VectorXd>(vhat.data(), cfg.n_outer);
        res.slices[i] = regress_value(nodes, y, cfg.basis);
        if (res.slices[i].rank < cfg.basis.size()) ++res.diag.rank_warnings;
    }

    long clamps0 = 0;
    const Eigen::Vector2d g0 = detail::next_gradient(res.slices, 1, cfg.n_steps, state0.x,
                                                     std::log(state0.s), clamps0);
    res.diag.clamp_count += clamps0;
    const FactorGeometry geom0 = factor_geometry(p, state0.x);
    res.eta0 = optimal_exposure(geom0, inv.gamma, g0(0), g0(1));
    if (!composition.empty()) {
        res.sigma0 = build_sigma(composition, state0, p, quad, mc);
        res.pi0 = exposure_to_weights(res.sigma0, res.eta0);
    }
    res.diag.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return res;
}

namespace detail {

// Instrument-space first-order condition at one node:
//   (Sigma Phi Phi^T Sigma^T) pi = Sigma (Lambda + g_h sigma_h A + g_s sigma_s B) / gamma.
// For two instruments this is the exact inverse; larger books get the
// min-norm solution (the system is consistent by construction).
inline Eigen::VectorXd direct_weights(const Eigen::MatrixXd& sigma, const FactorGeometry& geom,
                                      double gamma, double g_h, double g_s) {
    const Eigen::Vector2d rhs =
        geom.lambda_vec + g_h * geom.sigma_h * geom.a_vec + g_s * geom.sigma_s * geom.b_vec;
    const Eigen::Matrix2d cov = geom.phi * geom.phi.transpose();
    const Eigen::MatrixXd lhs = sigma * cov * sigma.transpose();
    const Eigen::VectorXd b = sigma * rhs / gamma;
    Eigen::BDCSVD<Eigen::MatrixXd> svd(lhs, Eigen::ComputeThinU | Eigen::ComputeThinV);
    return svd.solve(b);
}

}  // namespace detail

// Direct variant: weights pi at every node from per-node repriced exposure
// matrices; instrument returns over the inner step use the frozen loadings.
inline PamcResult run_pamc_direct(const HestonParams& p, const InvestorSpec& inv,
                                  const MarketState& state0,
                                  const std::vector<InstrumentSpec>& composition,
                                  const PamcConfig& cfg, const QuadratureConfig& quad = {},
                                  const McPricingConfig& mc = {},
                                  DirectSigmaCache* cache = nullptr) {
    p.validate();
    inv.validate();
    state0.validate();
    cfg.validate();
    if (composition.empty())
        throw ConfigError("pamc.run_pamc_direct: composition must not be empty");
    const auto t_start = std::chrono::steady_clock::now();

    const double dt = inv.horizon / cfg.n_steps;
    const PathSet paths = detail::simulate_outer(p, state0, inv, cfg);
    const int n_inst = static_cast<int>(composition.size());

    DirectSigmaCache local;
    DirectSigmaCache& sig = cache ? *cache : local;
    if (sig.filled && (sig.n_outer != cfg.n_outer || sig.n_steps != cfg.n_steps ||
                       sig.seed != cfg.seed))
        throw ConfigError("pamc.run_pamc_direct: sigma cache shape mismatch");
    if (!sig.filled) {
        sig.n_outer = cfg.n_outer;
        sig.n_steps = cfg.n_steps;
        sig.seed = cfg.seed;
        sig.node_sigma.assign(static_cast<std::size_t>(cfg.n_outer) * cfg.n_steps,
                              Eigen::MatrixXd());
        std::exception_ptr err;
#pragma omp parallel for schedule(dynamic)
        for (int m = 0; m < cfg.n_outer; ++m) {
            try {
                for (int i = 1; i < cfg.n_steps; ++i) {
                    MarketState st;
                    st.t = i * dt;
                    st.s = paths.stock(m, i);
                    st.x = paths.variance(m, i);
                    // A truncated-to-zero variance node silences every
                    // instrument; its exposure matrix is exactly zero and the
                    // weight solve below degrades to pi = 0 without pricing.
                    sig.node_sigma[static_cast<std::size_t>(m) * cfg.n_steps + i] =
                        st.x > 0.0 ? build_sigma(composition, st, p, quad, mc).m
                                   : Eigen::MatrixXd::Zero(n_inst, 2);
                }
            } catch (...) {
#pragma omp critical
                {
                    if (!err) err = std::current_exception();
                }
            }
        }
        if (err) std::rethrow_exception(err);
        sig.sigma0 = build_sigma(composition, state0, p, quad, mc).m;
        sig.filled = true;
    }

    PamcResult res;
    res.slices.resize(cfg.n_steps);
    std::vector<double> vhat(cfg.n_outer);
    Eigen::MatrixXd nodes(cfg.n_outer, 2);
    const double sq_dt = std::sqrt(dt);

    for (int i = cfg.n_steps - 1; i >= 1; --i) {
        long clamps = 0, bankrupt = 0;
#pragma omp parallel for schedule(static) reduction(+ : clamps, bankrupt)
        for (int m = 0; m < cfg.n_outer; ++m) {
            const double x = paths.variance(m, i);
            const double lns = std::log(paths.stock(m, i));
            const Eigen::Vector2d g =
                detail::next_gradient(res.slices, i + 1, cfg.n_steps, x, lns, clamps);
            const FactorGeometry geom = factor_geometry(p, x);
            const Eigen::MatrixXd& sm =
                sig.node_sigma[static_cast<std::size_t>(m) * cfg.n_steps + i];
            const Eigen::VectorXd pi = detail::direct_weights(sm, geom, inv.gamma, g(0), g(1));

            // Frozen-loading lognormal returns driven by the same shocks that
            // evolve the state.
            const Eigen::MatrixXd load = sm * geom.phi;  // n_inst x 2, shock loadings
            Eigen::VectorXd drift(n_inst);
            for (int j = 0; j < n_inst; ++j)
                drift(j) = (p.r + sm.row(j).dot(geom.lambda_vec) -
                            0.5 * load.row(j).squaredNorm()) *
                           dt;

            RngStream base = substream(cfg.seed, StreamTag::InnerSample,
                                       static_cast<std::uint64_t>(m),
                                       static_cast<std::uint64_t>(i));
            std::vector<double> lw(cfg.n_inner), cont(cfg.n_inner);
            for (int k = 0; k < cfg.n_inner; ++k) {
                RngStream stream = detail::inner_sample_stream(base, static_cast<std::uint64_t>(k));
                detail::EulerState st{lns, x, 0.0, 0.0};
                double dbs = 0.0, dbx = 0.0;
                // substeps share the step's aggregate shocks for the frozen
                // returns; the state uses the per-substep increments.
                const double h = dt / cfg.substeps_per_dt;
                for (int ss = 0; ss < cfg.substeps_per_dt; ++ss) {
                    const double z1 = stream.normal();
                    const double z2 = stream.normal();
                    detail::euler_substep(p, st, h, z1, z2, &dbs, &dbx);
                }
                const double zs1 = dbs / sq_dt;
                const double zs2 = (dbx / sq_dt - geom.phi(1, 0) * zs1) / geom.phi(1, 1);

                double w = 1.0 + p.r * dt;
                for (int j = 0; j < n_inst; ++j) {
                    const double rj =
                        std::exp(drift(j) + (load(j, 0) * zs1 + load(j, 1) * zs2) * sq_dt) - 1.0;
                    w += pi(j) * (rj - p.r * dt);
                }
                if (w < cfg.w_floor) {
                    w = cfg.w_floor;
                    ++bankrupt;
                }
                lw[k] = std::log(w);
                const double xk = st.x > 0.0 ? st.x : 0.0;
                cont[k] = detail::next_value(res.slices, i + 1, cfg.n_steps, xk, st.ln_s,
                                             clamps);
            }
            vhat[m] = transformed_value_sample(inv.gamma, 1.0, lw, cont);
            nodes(m, 0) = x;
            nodes(m, 1) = lns;
        }
        res.diag.clamp_count += clamps;
        res.diag.bankruptcy_count += bankrupt;
        Eigen::VectorXd y = Eigen::Map<Eigen::VectorXd>(vhat.data(), cfg.n_outer);
        res.slices[i] = regress_value(nodes, y, cfg.basis);
        if (res.slices[i].rank < cfg.basis.size()) ++res.diag.rank_warnings;
    }

    long clamps0 = 0;
    const Eigen::Vector2d g0 = detail::next_gradient(res.slices, 1, cfg.n_steps, state0.x,
                                                     std::log(state0.s), clamps0);
    res.diag.clamp_count += clamps0;
    const FactorGeometry geom0 = factor_geometry(p, state0.x);
    res.pi0 = detail::direct_weights(sig.sigma0, geom0, inv.gamma, g0(0), g0(1));
    res.eta0 = sig.sigma0.transpose() * res.pi0;
    res.sigma0 = build_sigma(composition, state0, p, quad, mc);
    res.diag.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return res;
}

}  // namespace dpo
