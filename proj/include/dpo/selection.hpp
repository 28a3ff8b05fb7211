#pragma once

// Instrument selection: which option, added to the stock, completes the
// market most efficiently. Efficiency is measured by the l1 norm of the
// portfolio weights that replicate the optimal factor exposure; smaller
// weights mean less notional churn for the same risk positioning.
//
// The two-instrument weights have a closed form. Given the option's price,
// delta and variance sensitivity, the option weight carries the entire
// variance-factor exposure and the stock weight covers what remains of the
// stock-factor exposure after the option's delta contribution:
//   pi_o = (O / gamma) [ (lambda_x - rho lambda)/(sigma_x (1 - rho^2)) + g_h ] / vega_x
//   pi_s = (1/gamma) [ (lambda - rho lambda_x)/(1 - rho^2) + g_s ] - pi_o (S/O) delta
// where (g_h, g_s) are the value-function gradients in (x, ln s).
//
// Larger books are sparsified by linear programming: minimizing the l1 norm
// subject to the exposure-matching equalities always admits an optimal
// vertex with at most two nonzero weights (two equality constraints, and a
// long and short position in the same instrument can never both be basic).

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "dpo/errors.hpp"
#include "dpo/model.hpp"
#include "dpo/pamc.hpp"
#include "dpo/pricing.hpp"
#include "dpo/rng.hpp"
#include "dpo/simplex.hpp"

namespace dpo {

struct TwoAssetWeights {
    double pi_s = 0.0;
    double pi_o = 0.0;
    double l1() const { return std::abs(pi_s) + std::abs(pi_o); }
};

inline constexpr double kVegaFloor = 1e-10;

inline TwoAssetWeights explicit_heston_weights(const HestonParams& p, double gamma, double g_h,
                                               double g_s, const MarketState& state,
                                               const PriceAndGreeks& opt) {
    p.validate();
    state.validate();
    if (!(gamma > 0.0) || gamma == 1.0)
        throw ConfigError("selection.explicit_heston_weights: gamma must be > 0 and != 1");
    if (!(opt.price > 0.0) || !std::isfinite(opt.price))
        throw ConfigError("selection.explicit_heston_weights: option price must be > 0");
    if (!(std::abs(opt.vega_x) > kVegaFloor))
        throw NumericalError(
            "selection.explicit_heston_weights: option has no variance sensitivity, market "
            "cannot be completed (|vega| <= " +
            std::to_string(kVegaFloor) + ")");
    const double denom = 1.0 - p.rho * p.rho;
    TwoAssetWeights w;
    w.pi_o = opt.price / gamma * ((p.lambda_x - p.rho * p.lambda) / (p.sigma_x * denom) + g_h) /
             opt.vega_x;
    w.pi_s = ((p.lambda - p.rho * p.lambda_x) / denom + g_s) / gamma -
             w.pi_o * state.s / opt.price * opt.delta;
    return w;
}

// min ||pi||_1 subject to Sigma^T pi = eta, via the split pi = alpha - beta
// with alpha, beta >= 0. The optimum is attained at a vertex, so at most two
// weights are nonzero.
struct SparsifyResult {
    Eigen::VectorXd pi;
    double l1 = 0.0;
    std::vector<int> support;  // indices with |pi_i| > tol
};

inline SparsifyResult sparsify_l1(const Eigen::MatrixXd& sigma, const Eigen::Vector2d& eta,
                                  double tol = 1e-9) {
    const int n = static_cast<int>(sigma.rows());
    if (n < 1 || sigma.cols() != 2) throw ConfigError("selection.sparsify_l1: sigma must be n x 2");
    Eigen::MatrixXd a(2, 2 * n);
    a.leftCols(n) = sigma.transpose();
    a.rightCols(n) = -sigma.transpose();
    const Eigen::VectorXd c = Eigen::VectorXd::Ones(2 * n);
    const LpResult lp = solve_lp_equality(a, eta, c, tol);
    if (!lp.feasible)
        throw NumericalError(
            "selection.sparsify_l1: target exposure is not replicable by the composition");
    SparsifyResult res;
    res.pi = lp.x.head(n) - lp.x.tail(n);
    res.l1 = lp.objective;
    for (int i = 0; i < n; ++i)
        if (std::abs(res.pi(i)) > tol) res.support.push_back(i);
    return res;
}

// Exhaustive check of the two-sparse optimality claim on random instances:
// the LP minimum must match a brute-force search over all supports of size
// at most two, and the LP support itself must have size at most two.
struct Prop1Report {
    int n_instances = 0;
    int failures = 0;
    double max_gap = 0.0;       // worst |lp - brute| over instances
    int max_support = 0;        // largest LP support seen
};

namespace detail {

inline double brute_force_min_l1(const Eigen::MatrixXd& sigma, const Eigen::Vector2d& eta) {
    const int n = static_cast<int>(sigma.rows());
    double best = std::numeric_limits<double>::infinity();
    if (eta.norm() <= 1e-12) return 0.0;
    for (int i = 0; i < n; ++i) {
        const Eigen::Vector2d col = sigma.row(i).transpose();
        const double nn = col.squaredNorm();
        if (nn <= 1e-24) continue;
        const double coef = col.dot(eta) / nn;
        if ((eta - coef * col).norm() <= 1e-10 * (1.0 + eta.norm()))
            best = std::min(best, std::abs(coef));
    }
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            Eigen::Matrix2d m;
            m.col(0) = sigma.row(i).transpose();
            m.col(1) = sigma.row(j).transpose();
            const double det = m.determinant();
            if (std::abs(det) <= 1e-12) continue;
            const Eigen::Vector2d w = m.inverse() * eta;
            best = std::min(best, std::abs(w(0)) + std::abs(w(1)));
        }
    return best;
}

}  // namespace detail

inline Prop1Report verify_prop1(int n_instances = 500, int max_instruments = 6,
                                std::uint64_t seed = 12345, double tol = 1e-8) {
    if (n_instances < 1 || max_instruments < 2)
        throw ConfigError("selection.verify_prop1: need >= 1 instance and >= 2 instruments");
    Prop1Report rep;
    rep.n_instances = n_instances;
    for (int inst = 0; inst < n_instances; ++inst) {
        RngStream stream = substream(seed, StreamTag::Generic, static_cast<std::uint64_t>(inst));
        const int n = 2 + static_cast<int>(stream.next_u64() % (max_instruments - 1));
        Eigen::MatrixXd sigma(n, 2);
        // Rejection keeps instances well posed: some pair must span both factors.
        for (int tries = 0;; ++tries) {
            for (int i = 0; i < n; ++i) {
                sigma(i, 0) = 6.0 * stream.uniform() - 3.0;
                sigma(i, 1) = 6.0 * stream.uniform() - 3.0;
            }
            double best_det = 0.0;
            for (int i = 0; i < n; ++i)
                for (int j = i + 1; j < n; ++j)
                    best_det = std::max(best_det,
                                        std::abs(sigma(i, 0) * sigma(j, 1) -
                                                 sigma(i, 1) * sigma(j, 0)));
            if (best_det > 0.1 || tries > 100) break;
        }
        const Eigen::Vector2d eta(2.0 * stream.uniform() - 1.0, 2.0 * stream.uniform() - 1.0);

        const SparsifyResult lp = sparsify_l1(sigma, eta, 1e-9);
        const double brute = detail::brute_force_min_l1(sigma, eta);
        const double gap = std::abs(lp.l1 - brute);
        rep.max_gap = std::max(rep.max_gap, gap);
        rep.max_support = std::max(rep.max_support, static_cast<int>(lp.support.size()));
        if (gap > tol || lp.support.size() > 2) ++rep.failures;
    }
    return rep;
}

// One row of a candidate sweep. coord is the moneyness (strike / reference
// spot) or the option maturity depending on the sweep. companion_strike is
// the resolved second-leg strike for strangles. Rows that fail to price
// carry the error message and NaN values.
struct SweepRow {
    double coord = 0.0;
    InstrumentKind kind = InstrumentKind::Call;
    double pi_s = std::numeric_limits<double>::quiet_NaN();
    double pi_o = std::numeric_limits<double>::quiet_NaN();
    double l1 = std::numeric_limits<double>::quiet_NaN();
    double companion_strike = std::numeric_limits<double>::quiet_NaN();
    std::string error;
};

struct MoneynessGrid {
    double lo = 0.90;
    double hi = 1.10;
    double step = 0.005;

    void validate() const {
        if (!(step > 0.0) || !(hi >= lo))
            throw ConfigError("selection.MoneynessGrid: require lo <= hi and step > 0");
    }

    std::vector<double> points() const {
        validate();
        std::vector<double> out;
        const int n = static_cast<int>(std::round((hi - lo) / step));
        for (int i = 0; i <= n; ++i) out.push_back(lo + i * step);
        return out;
    }
};

struct SweepConfig {
    MoneynessGrid grid{};
    MoneynessGrid strangle_companion{1.00, 1.05, 0.005};  // call-leg search range
    double t_op = 0.1;
    std::vector<InstrumentKind> kinds = {InstrumentKind::Call, InstrumentKind::Put,
                                         InstrumentKind::Straddle, InstrumentKind::Strangle};
    double g_h = 0.0;  // value-function gradient in x at the evaluation state
    double g_s = 0.0;  // value-function gradient in ln s
};

namespace detail {

// Equity leg cache: one pricer per sweep state, memoized per strike.
class LegCache {
  public:
    LegCache(const HestonParams& p, double tau, const MarketState& state,
             const QuadratureConfig& quad)
        : pricer_(p, tau, state.x, std::log(state.s), quad) {}

    const PriceAndGreeks& call(double k) { return get(calls_, k, true); }
    const PriceAndGreeks& put(double k) { return get(puts_, k, false); }

  private:
    const PriceAndGreeks& get(std::map<double, PriceAndGreeks>& memo, double k, bool is_call) {
        auto it = memo.find(k);
        if (it == memo.end())
            it = memo.emplace(k, is_call ? pricer_.call(k) : pricer_.put(k)).first;
        return it->second;
    }

    EquityPricer pricer_;
    std::map<double, PriceAndGreeks> calls_;
    std::map<double, PriceAndGreeks> puts_;
};

inline PriceAndGreeks combine(const PriceAndGreeks& a, const PriceAndGreeks& b) {
    return PriceAndGreeks{a.price + b.price, a.delta + b.delta, a.vega_x + b.vega_x};
}

// Best (put, call) pairing found so far in a strangle strike search.
struct StrangleBest {
    double l1 = std::numeric_limits<double>::infinity();
    double k_put = std::numeric_limits<double>::quiet_NaN();
    double k_call = std::numeric_limits<double>::quiet_NaN();
    PriceAndGreeks g;
};

inline void try_strangle(detail::LegCache& legs, const HestonParams& p, double gamma,
                         double g_h, double g_s, const MarketState& state, double k_put,
                         double k_call, StrangleBest& best) {
    const PriceAndGreeks cand = combine(legs.put(k_put), legs.call(k_call));
    const double l1 = explicit_heston_weights(p, gamma, g_h, g_s, state, cand).l1();
    if (l1 < best.l1) best = StrangleBest{l1, k_put, k_call, cand};
}

// The l1-minimizing strangle usually sits where the required stock weight
// crosses zero, and the stock-weight correction moves by delta / price per
// unit of leg delta, so the valley is far narrower than any reasonable
// strike grid. The coarse grid only brackets it; shrinking stencil passes
// around the incumbent resolve the leg strikes to ~1e-6 of spot.
constexpr int kStrangleRefineRounds = 10;

inline void refine_companion(detail::LegCache& legs, const HestonParams& p, double gamma,
                             double g_h, double g_s, const MarketState& state, double k_put,
                             double lo, double hi, double radius, StrangleBest& best) {
    lo = std::max(lo, k_put);
    for (int round = 0; round < kStrangleRefineRounds; ++round) {
        const double a = std::max(lo, best.k_call - radius);
        const double b = std::min(hi, best.k_call + radius);
        for (int i = 0; i <= 8; ++i)
            try_strangle(legs, p, gamma, g_h, g_s, state, k_put, a + (b - a) * i / 8.0, best);
        radius /= 3.0;
    }
}

inline void refine_box(detail::LegCache& legs, const HestonParams& p, double gamma, double g_h,
                       double g_s, const MarketState& state, const MoneynessGrid& put_g,
                       const MoneynessGrid& call_g, double ref, StrangleBest& best) {
    double rp = 2.0 * put_g.step * ref;
    double rc = 2.0 * call_g.step * ref;
    for (int round = 0; round < kStrangleRefineRounds; ++round) {
        const double pa = std::max(put_g.lo * ref, best.k_put - rp);
        const double pb = std::min(put_g.hi * ref, best.k_put + rp);
        const double ca = std::max(call_g.lo * ref, best.k_call - rc);
        const double cb = std::min(call_g.hi * ref, best.k_call + rc);
        for (int i = 0; i <= 6; ++i)
            for (int j = 0; j <= 6; ++j) {
                const double kp = pa + (pb - pa) * i / 6.0;
                const double kc = ca + (cb - ca) * j / 6.0;
                if (kc >= kp)
                    try_strangle(legs, p, gamma, g_h, g_s, state, kp, kc, best);
            }
        rp /= 3.0;
        rc /= 3.0;
    }
}

}  // namespace detail

// Weights required from (stock, candidate) across a strike grid, one row per
// (moneyness, kind). Strangles hold the put leg at the grid moneyness and
// search the companion call strike for the smallest l1; moneyness points
// with no admissible companion produce no strangle row.
inline std::vector<SweepRow> sweep_moneyness(const HestonParams& p, double gamma,
                                             const MarketState& state, const SweepConfig& cfg,
                                             const QuadratureConfig& quad = {},
                                             const McPricingConfig& mc = {}) {
    p.validate();
    state.validate();
    cfg.grid.validate();
    cfg.strangle_companion.validate();
    if (!(cfg.t_op > 0.0)) throw ConfigError("selection.sweep_moneyness: t_op must be > 0");

    std::vector<SweepRow> rows;
    detail::LegCache legs(p, cfg.t_op, state, quad);
    const std::vector<double> points = cfg.grid.points();
    const std::vector<double> companions = cfg.strangle_companion.points();

    for (InstrumentKind kind : cfg.kinds) {
        const double ref = reference_spot(kind, state, p);
        for (double m : points) {
            // A put leg above the whole companion range leaves no strangle
            // candidate at this moneyness; the row is absent, not an error.
            if (kind == InstrumentKind::Strangle && m > cfg.strangle_companion.hi + 1e-12)
                continue;
            SweepRow row;
            row.coord = m;
            row.kind = kind;
            try {
                const double k = m * ref;
                PriceAndGreeks g;
                if (kind == InstrumentKind::Call) {
                    g = legs.call(k);
                } else if (kind == InstrumentKind::Put) {
                    g = legs.put(k);
                } else if (kind == InstrumentKind::Straddle) {
                    g = detail::combine(legs.call(k), legs.put(k));
                } else if (kind == InstrumentKind::Strangle) {
                    detail::StrangleBest best;
                    detail::try_strangle(legs, p, gamma, cfg.g_h, cfg.g_s, state, k,
                                         std::max(k, cfg.strangle_companion.lo * ref), best);
                    for (double mc2 : companions) {
                        const double k2 = mc2 * ref;
                        if (k2 >= k)
                            detail::try_strangle(legs, p, gamma, cfg.g_h, cfg.g_s, state, k,
                                                 k2, best);
                    }
                    detail::refine_companion(legs, p, gamma, cfg.g_h, cfg.g_s, state, k,
                                             cfg.strangle_companion.lo * ref,
                                             cfg.strangle_companion.hi * ref,
                                             2.0 * cfg.strangle_companion.step * ref, best);
                    g = best.g;
                    row.companion_strike = best.k_call;
                } else if (is_vix_kind(kind)) {
                    InstrumentSpec spec;
                    spec.kind = kind;
                    spec.strike = k;
                    spec.maturity = cfg.t_op;
                    g = price_vix_option(spec, state, p, mc);
                } else {
                    throw ConfigError("selection.sweep_moneyness: unsupported kind " +
                                      to_string(kind));
                }
                const TwoAssetWeights w =
                    explicit_heston_weights(p, gamma, cfg.g_h, cfg.g_s, state, g);
                row.pi_s = w.pi_s;
                row.pi_o = w.pi_o;
                row.l1 = w.l1();
            } catch (const std::exception& e) {
                row.error = e.what();
            }
            rows.push_back(std::move(row));
        }
    }
    return rows;
}

struct MaturitySweepConfig {
    std::vector<double> maturities;  // option maturities to scan
    std::vector<InstrumentKind> kinds = {InstrumentKind::Strangle, InstrumentKind::VixCall,
                                         InstrumentKind::VixPut};
    double vix_call_moneyness = 1.05;
    double vix_put_moneyness = 0.95;
    MoneynessGrid strangle_put{0.95, 1.00, 0.0125};
    MoneynessGrid strangle_call{1.00, 1.05, 0.0125};
    double g_h = 0.0;
    double g_s = 0.0;
};

// Weights required from (stock, candidate) as the candidate maturity moves.
// Strangle legs are searched over a small strike box; VIX options sit at
// fixed moneyness of the current VIX level.
inline std::vector<SweepRow> sweep_maturity(const HestonParams& p, double gamma,
                                            const MarketState& state,
                                            const MaturitySweepConfig& cfg,
                                            const QuadratureConfig& quad = {},
                                            const McPricingConfig& mc = {}) {
    p.validate();
    state.validate();
    if (cfg.maturities.empty())
        throw ConfigError("selection.sweep_maturity: empty maturity grid");
    for (double t : cfg.maturities)
        if (!(t > 0.0)) throw ConfigError("selection.sweep_maturity: maturities must be > 0");

    std::vector<SweepRow> rows;
    for (double t_op : cfg.maturities) {
        detail::LegCache legs(p, t_op, state, quad);
        for (InstrumentKind kind : cfg.kinds) {
            const double ref = reference_spot(kind, state, p);
            SweepRow row;
            row.coord = t_op;
            row.kind = kind;
            try {
                PriceAndGreeks g;
                if (kind == InstrumentKind::Strangle) {
                    detail::StrangleBest best;
                    for (double mp : cfg.strangle_put.points())
                        for (double mcall : cfg.strangle_call.points())
                            if (mcall >= mp)
                                detail::try_strangle(legs, p, gamma, cfg.g_h, cfg.g_s, state,
                                                     mp * ref, mcall * ref, best);
                    if (!std::isfinite(best.l1))
                        throw NumericalError(
                            "selection.sweep_maturity: no admissible strangle combination");
                    detail::refine_box(legs, p, gamma, cfg.g_h, cfg.g_s, state,
                                       cfg.strangle_put, cfg.strangle_call, ref, best);
                    g = best.g;
                    row.companion_strike = best.k_call;
                } else if (kind == InstrumentKind::Straddle) {
                    g = detail::combine(legs.call(ref), legs.put(ref));
                } else if (kind == InstrumentKind::Call) {
                    g = legs.call(ref);
                } else if (kind == InstrumentKind::Put) {
                    g = legs.put(ref);
                } else if (is_vix_kind(kind)) {
                    InstrumentSpec spec;
                    spec.kind = kind;
                    spec.maturity = t_op;
                    if (kind == InstrumentKind::VixCall)
                        spec.strike = cfg.vix_call_moneyness * ref;
                    else if (kind == InstrumentKind::VixPut)
                        spec.strike = cfg.vix_put_moneyness * ref;
                    else
                        spec.strike = ref;
                    g = price_vix_option(spec, state, p, mc);
                } else {
                    throw ConfigError("selection.sweep_maturity: unsupported kind " +
                                      to_string(kind));
                }
                const TwoAssetWeights w =
                    explicit_heston_weights(p, gamma, cfg.g_h, cfg.g_s, state, g);
                row.pi_s = w.pi_s;
                row.pi_o = w.pi_o;
                row.l1 = w.l1();
            } catch (const std::exception& e) {
                row.error = e.what();
            }
            rows.push_back(std::move(row));
        }
    }
    return rows;
}

struct VegaProfileRow {
    double coord = 0.0;
    double price = std::numeric_limits<double>::quiet_NaN();
    double vega_x = std::numeric_limits<double>::quiet_NaN();
    std::string error;
};

// Price and variance sensitivity of one candidate kind across a strike grid.
inline std::vector<VegaProfileRow> vega_profile(const HestonParams& p, const MarketState& state,
                                                InstrumentKind kind, double t_op,
                                                const MoneynessGrid& grid,
                                                const QuadratureConfig& quad = {},
                                                const McPricingConfig& mc = {}) {
    p.validate();
    state.validate();
    if (!(t_op > 0.0)) throw ConfigError("selection.vega_profile: t_op must be > 0");
    std::vector<VegaProfileRow> rows;
    const double ref = reference_spot(kind, state, p);
    for (double m : grid.points()) {
        VegaProfileRow row;
        row.coord = m;
        try {
            InstrumentSpec spec;
            spec.kind = kind;
            spec.maturity = t_op;
            spec.strike = m * ref;
            if (kind == InstrumentKind::Strangle) {
                spec.strike = m * ref;       // put leg
                spec.strike2 = (2.0 - m) * ref;  // mirrored call leg
            }
            const PriceAndGreeks g = price_instrument(spec, state, p, quad, mc);
            row.price = g.price;
            row.vega_x = g.vega_x;
        } catch (const std::exception& e) {
            row.error = e.what();
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace dpo
