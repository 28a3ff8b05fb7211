#pragma once

// Risk-neutral pricing of the completing instruments.
//
// Equity options use the Heston characteristic function under the pricing
// measure, where the variance process has shifted coefficients
// kappa_q = kappa_x + lambda_x sigma_x and theta_q = kappa_x theta_x / kappa_q.
// Prices come from the two-probability representation
//   C = S P1 - K e^{-r tau} P2,
// each P an integral over u in [u_min, u_max] evaluated with composite
// Simpson quadrature and node-doubling refinement. The characteristic
// function uses the branch-stable ("little trap") formulation, with exact
// algebraic identities replacing the cancellation-prone beta - d terms so
// that the vol-of-vol -> 0 limit stays accurate.
//
// VIX^2 is the tau_vix-average of expected risk-neutral variance, affine in
// the current variance. VIX options are priced by Monte Carlo on the
// risk-neutral variance process; their Greeks use common-random-number
// central differences and the delta is identically zero.

#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "dpo/errors.hpp"
#include "dpo/model.hpp"
#include "dpo/rng.hpp"

namespace dpo {

enum class InstrumentKind { Stock, Call, Put, Straddle, Strangle, VixCall, VixPut, VixStraddle };

enum class StrikePolicy { Fixed, DeltaNeutral };

inline std::string to_string(InstrumentKind k) {
    switch (k) {
        case InstrumentKind::Stock: return "stock";
        case InstrumentKind::Call: return "call";
        case InstrumentKind::Put: return "put";
        case InstrumentKind::Straddle: return "straddle";
        case InstrumentKind::Strangle: return "strangle";
        case InstrumentKind::VixCall: return "vix_call";
        case InstrumentKind::VixPut: return "vix_put";
        case InstrumentKind::VixStraddle: return "vix_straddle";
    }
    return "unknown";
}

inline bool is_vix_kind(InstrumentKind k) {
    return k == InstrumentKind::VixCall || k == InstrumentKind::VixPut ||
           k == InstrumentKind::VixStraddle;
}

inline bool is_equity_option_kind(InstrumentKind k) {
    return k == InstrumentKind::Call || k == InstrumentKind::Put ||
           k == InstrumentKind::Straddle || k == InstrumentKind::Strangle;
}

// strike2 is the call-leg strike of a strangle; unused otherwise.
// A DeltaNeutral policy (straddles only) resolves the strike at the pricing
// state so the combined delta vanishes; maturity is time to expiry, held
// constant by rolling.
struct InstrumentSpec {
    InstrumentKind kind = InstrumentKind::Stock;
    double strike = 0.0;
    double strike2 = 0.0;
    double maturity = 0.1;
    StrikePolicy policy = StrikePolicy::Fixed;

    void validate() const {
        if (kind == InstrumentKind::Stock) return;
        if (!(maturity > 0.0) || !std::isfinite(maturity))
            throw ConfigError("pricing.InstrumentSpec: maturity must be > 0");
        if (policy == StrikePolicy::DeltaNeutral) {
            if (kind != InstrumentKind::Straddle)
                throw ConfigError(
                    "pricing.InstrumentSpec: delta-neutral policy applies to straddles only");
            return;
        }
        const double floor = is_vix_kind(kind) ? 0.0 : 0.0;
        if (!(strike >= floor) || !std::isfinite(strike) ||
            (is_equity_option_kind(kind) && !(strike > 0.0)))
            throw ConfigError("pricing.InstrumentSpec: invalid strike");
        if (kind == InstrumentKind::Strangle && (!(strike2 > 0.0) || !std::isfinite(strike2)))
            throw ConfigError("pricing.InstrumentSpec: strangle needs a call-leg strike2 > 0");
    }
};

struct PriceAndGreeks {
    double price = 0.0;
    double delta = 0.0;   // dO/dS
    double vega_x = 0.0;  // dO/dX
};

struct QuadratureConfig {
    double u_min = 1e-8;
    double u_max = 200.0;
    int n_intervals = 2000;  // base Simpson intervals (nodes = n_intervals + 1)
    double tol = 1e-9;       // node-doubling convergence tolerance on price
    int max_levels = 6;      // refinement doublings before reporting failure
    double fd_step = 1e-5;   // central-difference step in X for vega_x

    void validate() const {
        if (!(u_min > 0.0) || !(u_max > u_min))
            throw ConfigError("pricing.QuadratureConfig: require 0 < u_min < u_max");
        if (n_intervals < 2 || n_intervals % 2 != 0)
            throw ConfigError("pricing.QuadratureConfig: n_intervals must be even and >= 2");
        if (!(tol > 0.0) || max_levels < 1 || !(fd_step > 0.0))
            throw ConfigError("pricing.QuadratureConfig: invalid tolerance settings");
    }
};

struct McPricingConfig {
    int n_paths = 100'000;
    int steps_per_year = 365;
    int min_steps = 16;
    std::uint64_t seed = 9001;
    double fd_step = 1e-5;       // central-difference step in X0 (common random numbers)
    double price_floor = 1e-12;  // below this the payoff is considered degenerate

    void validate() const {
        if (n_paths < 1 || steps_per_year < 1 || min_steps < 1)
            throw ConfigError("pricing.McPricingConfig: counts must be >= 1");
        if (!(fd_step > 0.0) || !(price_floor >= 0.0))
            throw ConfigError("pricing.McPricingConfig: invalid step/floor");
    }
};

inline constexpr double kVixWindow = 30.0 / 365.0;

// VIX^2(x) = (a_tau x + b_tau) / tau under the risk-neutral variance dynamics.
struct VixCoefficients {
    double tau = kVixWindow;
    double a_tau = 0.0;
    double b_tau = 0.0;
    double kappa_q = 0.0;
    double theta_q = 0.0;
};

inline VixCoefficients vix_coefficients(const HestonParams& p, double tau = kVixWindow) {
    p.validate();
    if (!(tau > 0.0)) throw ConfigError("pricing.vix_coefficients: tau must be > 0");
    const double kq = p.kappa_q();
    if (!(kq > 0.0))
        throw ConfigError("pricing.vix_coefficients: risk-neutral mean reversion must be > 0");
    VixCoefficients c;
    c.tau = tau;
    c.kappa_q = kq;
    c.theta_q = p.theta_q();
    c.a_tau = (1.0 - std::exp(-kq * tau)) / kq;
    c.b_tau = c.theta_q * (tau - c.a_tau);
    return c;
}

inline double vix_squared(double x, const HestonParams& p, double tau = kVixWindow) {
    if (!(x >= 0.0)) throw ConfigError("pricing.vix_squared: variance must be >= 0");
    const VixCoefficients c = vix_coefficients(p, tau);
    return (c.a_tau * x + c.b_tau) / c.tau;
}

// Moneyness is quoted against the natural spot of the underlying: the stock
// price for equity options, the current VIX level for VIX options.
inline double reference_spot(InstrumentKind kind, const MarketState& state,
                             const HestonParams& p) {
    if (is_vix_kind(kind)) return std::sqrt(vix_squared(state.x, p));
    return state.s;
}

// Characteristic function of ln S_{t+tau} under the pricing measure,
// chi(u) = E^Q[exp(i u ln S_{t+tau})], for complex u.
namespace detail {

struct CharFnParts {
    std::complex<double> c;  // strike- and state-independent exponent part
    std::complex<double> d;  // coefficient of the current variance x
};

inline CharFnParts heston_cf_parts(std::complex<double> u, double tau, const HestonParams& p) {
    using cd = std::complex<double>;
    const cd iu(-u.imag(), u.real());  // i*u
    const double sig = p.sigma_x;
    const double kq = p.kappa_q();
    const double tq = p.theta_q();
    const cd beta = cd(kq, 0.0) - p.rho * sig * iu;
    const cd q = u * u + iu;  // u^2 + i u
    const cd d = std::sqrt(beta * beta + sig * sig * q);
    const cd bpd = beta + d;
    // beta - d = -sig^2 q / (beta + d): exact, avoids cancellation as sig -> 0.
    const cd g = -sig * sig * q / (bpd * bpd);
    const cd a = std::exp(-d * tau);

    const cd d_coef = -q / bpd * (1.0 - a) / (1.0 - g * a);

    // C = i u r tau + (kq tq / sig^2) [ (beta - d) tau - 2 log((1-g a)/(1-g)) ]
    cd c = iu * p.r * tau - kq * tq * q * tau / bpd;
    if (std::abs(g) < 1e-6) {
        // log((1-g a)/(1-g)) = g (1-a) + g^2 (1-a^2)/2 + O(g^3); divide by sig^2
        // through g/sig^2 = -q/(beta+d)^2 so sigma_x = 0 stays finite.
        const cd g_over_s2 = -q / (bpd * bpd);
        c -= 2.0 * kq * tq * (g_over_s2 * (1.0 - a) + g_over_s2 * g * (1.0 - a * a) * 0.5);
    } else {
        c -= 2.0 * kq * tq / (sig * sig) * std::log((1.0 - g * a) / (1.0 - g));
    }
    return CharFnParts{c, d_coef};
}

}  // namespace detail

inline std::complex<double> heston_char_fn(std::complex<double> u, double tau,
                                           const HestonParams& p, double x, double ln_s) {
    p.validate();
    if (!(tau > 0.0)) throw ConfigError("pricing.heston_char_fn: tau must be > 0");
    if (!(x >= 0.0)) throw ConfigError("pricing.heston_char_fn: variance must be >= 0");
    const detail::CharFnParts parts = detail::heston_cf_parts(u, tau, p);
    const std::complex<double> iu(-u.imag(), u.real());
    return std::exp(parts.c + parts.d * x + iu * ln_s);
}

// Equity option pricer with cached quadrature grids at one (tau, S) and a
// family of variance values. The characteristic-function coefficient arrays
// are computed once per refinement level; strike evaluations and the
// variance bumps used for vega_x reuse the identical grid.
class EquityPricer {
  public:
    EquityPricer(const HestonParams& p, double tau, double x, double ln_s,
                 const QuadratureConfig& quad = {})
        : p_(p), tau_(tau), x_(x), ln_s_(ln_s), quad_(quad) {
        p_.validate();
        quad_.validate();
        if (!(tau > 0.0) || !std::isfinite(tau))
            throw ConfigError("pricing.EquityPricer: maturity must be > 0");
        if (!(x >= 0.0) || !std::isfinite(x))
            throw ConfigError("pricing.EquityPricer: variance must be >= 0");
        if (!(p_.kappa_q() > 0.0))
            throw ConfigError("pricing.EquityPricer: risk-neutral mean reversion must be > 0");
        fd_h_ = std::min(quad_.fd_step, x_ > 0.0 ? 0.5 * x_ : quad_.fd_step);
        if (!(fd_h_ > 0.0)) fd_h_ = quad_.fd_step;
        // The integrand envelope decays like exp(Re C + Re D x); at small x the
        // D-term contributes little and the configured cutoff can truncate a
        // still-material tail. Extend the cutoff until the envelope is below
        // 1e-13 at the endpoint, widening the base grid to keep its spacing.
        u_max_eff_ = quad_.u_max;
        n_base_ = quad_.n_intervals;
        const double x_low = std::max(0.0, x_ - fd_h_);
        const double cap = 64.0 * quad_.u_max;
        while (tail_log_envelope(u_max_eff_, x_low) > -30.0) {
            if (u_max_eff_ >= cap)
                throw NumericalError(
                    "pricing.EquityPricer: characteristic function tail does not decay "
                    "within the extended integration range");
            u_max_eff_ *= 2.0;
            n_base_ *= 2;
        }
    }

    PriceAndGreeks call(double strike) const { return price_one(strike, true); }
    PriceAndGreeks put(double strike) const { return price_one(strike, false); }

    PriceAndGreeks straddle(double strike) const {
        const PriceAndGreeks c = call(strike);
        const PriceAndGreeks pt = put(strike);
        return PriceAndGreeks{c.price + pt.price, c.delta + pt.delta, c.vega_x + pt.vega_x};
    }

    PriceAndGreeks strangle(double put_strike, double call_strike) const {
        const PriceAndGreeks pt = put(put_strike);
        const PriceAndGreeks c = call(call_strike);
        return PriceAndGreeks{c.price + pt.price, c.delta + pt.delta, c.vega_x + pt.vega_x};
    }

    // Strike at which the straddle delta 2 P1 - 1 vanishes. P1 is strictly
    // decreasing in the strike, so Newton iteration on ln K converges from
    // the forward-adjusted initial guess.
    double delta_neutral_straddle_strike() const {
        const int level = converged_level(std::exp(ln_s_) * std::exp(p_.r * tau_), x_);
        double ln_k = ln_s_ + (p_.r + 0.5 * x_) * tau_;
        for (int it = 0; it < 100; ++it) {
            const auto [p1, dens] = p1_and_density(level, ln_k, x_);
            const double g = 2.0 * p1 - 1.0;
            if (std::abs(g) < 1e-13) return std::exp(ln_k);
            const double gp = -2.0 * dens;
            if (!(gp < 0.0))
                throw NumericalError(
                    "pricing.delta_neutral_straddle_strike: non-decreasing delta profile");
            double step = g / gp;
            step = std::max(-0.5, std::min(0.5, step));
            ln_k -= step;
        }
        throw NumericalError("pricing.delta_neutral_straddle_strike: Newton did not converge");
    }

    double maturity() const { return tau_; }
    double variance() const { return x_; }

  private:
    struct Level {
        std::vector<double> u;
        std::vector<double> w;  // Simpson weights
        std::vector<std::complex<double>> c1, d1;  // chi(u - i) exponent parts
        std::vector<std::complex<double>> c2, d2;  // chi(u) exponent parts
        bool built = false;
    };

    // log |chi| at the integration endpoint, taken over both transform
    // variants and evaluated at the lowest variance the pricer will see.
    double tail_log_envelope(double u_end, double xv) const {
        const detail::CharFnParts f2 = detail::heston_cf_parts({u_end, 0.0}, tau_, p_);
        const detail::CharFnParts f1 = detail::heston_cf_parts({u_end, -1.0}, tau_, p_);
        const double e2 = f2.c.real() + f2.d.real() * xv;
        const double e1 = f1.c.real() + f1.d.real() * xv;
        return std::max(e1, e2);
    }

    const Level& level_grid(int level) const {
        if (level >= static_cast<int>(levels_.size())) levels_.resize(level + 1);
        Level& lv = levels_[level];
        if (lv.built) return lv;
        const int n = n_base_ << level;
        const double h = (u_max_eff_ - quad_.u_min) / n;
        lv.u.resize(n + 1);
        lv.w.resize(n + 1);
        lv.c1.resize(n + 1);
        lv.d1.resize(n + 1);
        lv.c2.resize(n + 1);
        lv.d2.resize(n + 1);
        for (int j = 0; j <= n; ++j) {
            lv.u[j] = quad_.u_min + j * h;
            lv.w[j] = (j == 0 || j == n) ? h / 3.0 : (j % 2 == 1 ? 4.0 * h / 3.0 : 2.0 * h / 3.0);
            const std::complex<double> u2(lv.u[j], 0.0);
            const std::complex<double> u1(lv.u[j], -1.0);
            const detail::CharFnParts f2 = detail::heston_cf_parts(u2, tau_, p_);
            const detail::CharFnParts f1 = detail::heston_cf_parts(u1, tau_, p_);
            lv.c2[j] = f2.c;
            lv.d2[j] = f2.d;
            lv.c1[j] = f1.c;
            lv.d1[j] = f1.d;
        }
        lv.built = true;
        return lv;
    }

    // P1 and P2 at a given refinement level for variance value xv.
    std::array<double, 2> p1p2(int level, double ln_k, double xv) const {
        const Level& lv = level_grid(level);
        const double r_tau = p_.r * tau_;
        double s1 = 0.0, s2 = 0.0;
        const std::size_t n = lv.u.size();
        for (std::size_t j = 0; j < n; ++j) {
            const double u = lv.u[j];
            const std::complex<double> iu(0.0, u);
            const std::complex<double> phase(0.0, u * (ln_s_ - ln_k));
            // chi(u - i) includes exp((i u + 1) ln s); dividing by the forward
            // S e^{r tau} leaves exp(i u ln s - r tau).
            const std::complex<double> e1 =
                std::exp(lv.c1[j] + lv.d1[j] * xv + phase - r_tau);
            const std::complex<double> e2 = std::exp(lv.c2[j] + lv.d2[j] * xv + phase);
            if (!std::isfinite(e1.real()) || !std::isfinite(e2.real()))
                throw NumericalError(
                    "pricing.price_equity_option: characteristic function overflow at u = " +
                    std::to_string(u));
            s1 += lv.w[j] * (e1 / iu).real();
            s2 += lv.w[j] * (e2 / iu).real();
        }
        return {0.5 + s1 / std::numbers::pi, 0.5 + s2 / std::numbers::pi};
    }

    // P1 plus the ln-strike density term used by the delta-neutral solve.
    std::array<double, 2> p1_and_density(int level, double ln_k, double xv) const {
        const Level& lv = level_grid(level);
        const double r_tau = p_.r * tau_;
        double s1 = 0.0, dens = 0.0;
        const std::size_t n = lv.u.size();
        for (std::size_t j = 0; j < n; ++j) {
            const double u = lv.u[j];
            const std::complex<double> iu(0.0, u);
            const std::complex<double> phase(0.0, u * (ln_s_ - ln_k));
            const std::complex<double> e1 =
                std::exp(lv.c1[j] + lv.d1[j] * xv + phase - r_tau);
            s1 += lv.w[j] * (e1 / iu).real();
            dens += lv.w[j] * e1.real();
        }
        return {0.5 + s1 / std::numbers::pi, dens / std::numbers::pi};
    }

    double call_price_at(int level, double strike, double xv) const {
        const auto [p1, p2] = p1p2(level, std::log(strike), xv);
        const double s = std::exp(ln_s_);
        return s * p1 - strike * std::exp(-p_.r * tau_) * p2;
    }

    // Smallest level at which doubling the node count moves the price less
    // than the tolerance.
    int converged_level(double strike, double xv) const {
        double prev = call_price_at(0, strike, xv);
        for (int level = 1; level <= quad_.max_levels; ++level) {
            const double cur = call_price_at(level, strike, xv);
            if (std::abs(cur - prev) < quad_.tol) return level;
            prev = cur;
        }
        throw NumericalError(
            "pricing.price_equity_option: quadrature did not converge within refinement budget");
    }

    PriceAndGreeks price_one(double strike, bool is_call) const {
        if (!(strike > 0.0) || !std::isfinite(strike))
            throw ConfigError("pricing.price_equity_option: strike must be > 0");
        const int level = converged_level(strike, x_);
        const double s = std::exp(ln_s_);
        const double df = std::exp(-p_.r * tau_);
        const auto [p1, p2] = p1p2(level, std::log(strike), x_);
        const double call_px = s * p1 - strike * df * p2;

        // vega_x: central difference in variance on the identical grid.
        const double up = call_price_at(level, strike, x_ + fd_h_);
        const double dn = call_price_at(level, strike, x_ - fd_h_ >= 0.0 ? x_ - fd_h_ : 0.0);
        const double lo = x_ - fd_h_ >= 0.0 ? x_ - fd_h_ : 0.0;
        const double vega = (up - dn) / (x_ + fd_h_ - lo);

        PriceAndGreeks out;
        if (is_call) {
            out.price = call_px;
            out.delta = p1;
            out.vega_x = vega;
        } else {
            // parity: P = C - S + K e^{-r tau}; vega is parity-invariant.
            out.price = call_px - s + strike * df;
            out.delta = p1 - 1.0;
            out.vega_x = vega;
        }
        if (!std::isfinite(out.price))
            throw NumericalError("pricing.price_equity_option: non-finite price");
        return out;
    }

    HestonParams p_;
    double tau_;
    double x_;
    double ln_s_;
    QuadratureConfig quad_;
    double fd_h_ = 1e-5;
    double u_max_eff_ = 0.0;
    int n_base_ = 0;
    mutable std::vector<Level> levels_;
};

// Resolves a delta-neutral straddle to its concrete strike at this state.
inline InstrumentSpec resolve_instrument(const InstrumentSpec& inst, const MarketState& state,
                                         const HestonParams& p, const QuadratureConfig& quad) {
    inst.validate();
    if (inst.policy != StrikePolicy::DeltaNeutral) return inst;
    EquityPricer pricer(p, inst.maturity, state.x, std::log(state.s), quad);
    InstrumentSpec resolved = inst;
    resolved.strike = pricer.delta_neutral_straddle_strike();
    resolved.policy = StrikePolicy::Fixed;
    return resolved;
}

inline PriceAndGreeks price_equity_option(const InstrumentSpec& inst, const MarketState& state,
                                          const HestonParams& p,
                                          const QuadratureConfig& quad = {}) {
    state.validate();
    const InstrumentSpec spec = resolve_instrument(inst, state, p, quad);
    if (!is_equity_option_kind(spec.kind))
        throw ConfigError("pricing.price_equity_option: not an equity option kind: " +
                          to_string(spec.kind));
    EquityPricer pricer(p, spec.maturity, state.x, std::log(state.s), quad);
    switch (spec.kind) {
        case InstrumentKind::Call: return pricer.call(spec.strike);
        case InstrumentKind::Put: return pricer.put(spec.strike);
        case InstrumentKind::Straddle: return pricer.straddle(spec.strike);
        default: return pricer.strangle(spec.strike, spec.strike2);
    }
}

// Terminal VIX samples under the risk-neutral variance dynamics, one
// counter-based substream per path. Exposed so tests can reuse the exact
// paths behind price_vix_option.
inline std::vector<double> simulate_vix_terminal(double x0, const HestonParams& p, double t_op,
                                                 const McPricingConfig& mc) {
    p.validate();
    mc.validate();
    if (!(x0 >= 0.0)) throw ConfigError("pricing.simulate_vix_terminal: variance must be >= 0");
    if (!(t_op > 0.0)) throw ConfigError("pricing.simulate_vix_terminal: maturity must be > 0");
    const VixCoefficients vc = vix_coefficients(p);
    const int n_steps =
        std::max(mc.min_steps, static_cast<int>(std::ceil(t_op * mc.steps_per_year)));
    const double h = t_op / n_steps;
    std::vector<double> out(mc.n_paths);
#pragma omp parallel for schedule(static)
    for (int m = 0; m < mc.n_paths; ++m) {
        RngStream stream = substream(mc.seed, StreamTag::VixPricing, static_cast<std::uint64_t>(m));
        double x = x0;
        for (int i = 0; i < n_steps; ++i) {
            const double xp = x > 0.0 ? x : 0.0;
            x += vc.kappa_q * (vc.theta_q - xp) * h +
                 p.sigma_x * std::sqrt(xp) * std::sqrt(h) * stream.normal();
        }
        const double xt = x > 0.0 ? x : 0.0;
        out[m] = std::sqrt((vc.a_tau * xt + vc.b_tau) / vc.tau);
    }
    return out;
}

namespace detail {

inline double vix_payoff(InstrumentKind kind, double vix, double k) {
    switch (kind) {
        case InstrumentKind::VixCall: return vix > k ? vix - k : 0.0;
        case InstrumentKind::VixPut: return k > vix ? k - vix : 0.0;
        default: return std::abs(vix - k);  // straddle
    }
}

}  // namespace detail

inline PriceAndGreeks price_vix_option(const InstrumentSpec& inst, const MarketState& state,
                                       const HestonParams& p, const McPricingConfig& mc = {}) {
    inst.validate();
    state.validate();
    mc.validate();
    if (!is_vix_kind(inst.kind))
        throw ConfigError("pricing.price_vix_option: not a VIX option kind: " +
                          to_string(inst.kind));

    const double h = std::min(mc.fd_step, state.x > 0.0 ? 0.5 * state.x : mc.fd_step);
    const double disc = std::exp(-p.r * inst.maturity);
    // Common random numbers: the same substreams drive the base level and
    // both variance bumps.
    const std::vector<double> base = simulate_vix_terminal(state.x, p, inst.maturity, mc);
    const std::vector<double> up = simulate_vix_terminal(state.x + h, p, inst.maturity, mc);
    const double lo = state.x - h >= 0.0 ? state.x - h : 0.0;
    const std::vector<double> dn = simulate_vix_terminal(lo, p, inst.maturity, mc);

    double acc = 0.0, acc_up = 0.0, acc_dn = 0.0;
    for (int m = 0; m < mc.n_paths; ++m) {
        acc += detail::vix_payoff(inst.kind, base[m], inst.strike);
        acc_up += detail::vix_payoff(inst.kind, up[m], inst.strike);
        acc_dn += detail::vix_payoff(inst.kind, dn[m], inst.strike);
    }
    PriceAndGreeks out;
    out.price = disc * acc / mc.n_paths;
    out.delta = 0.0;  // VIX payoffs do not depend on the stock
    out.vega_x = disc * (acc_up - acc_dn) / mc.n_paths / (state.x + h - lo);
    if (!(out.price > mc.price_floor))
        throw NumericalError("pricing.price_vix_option: degenerate payoff, price " +
                             std::to_string(out.price) + " below floor for strike " +
                             std::to_string(inst.strike));
    return out;
}

inline PriceAndGreeks price_instrument(const InstrumentSpec& inst, const MarketState& state,
                                       const HestonParams& p, const QuadratureConfig& quad = {},
                                       const McPricingConfig& mc = {}) {
    if (inst.kind == InstrumentKind::Stock) return PriceAndGreeks{state.s, 1.0, 0.0};
    if (is_vix_kind(inst.kind)) return price_vix_option(inst, state, p, mc);
    return price_equity_option(inst, state, p, quad);
}

// Volatility exposure matrix: row i holds instrument i's loadings on the two
// risk factors, [dO/dS * S * sigma_s / O, dO/dX * sigma_h / O].
struct SigmaMatrix {
    Eigen::MatrixXd m;  // n x 2
    std::vector<InstrumentSpec> instruments;  // strikes resolved
    std::vector<PriceAndGreeks> greeks;
    double min_singular_value = 0.0;
};

inline SigmaMatrix build_sigma(const std::vector<InstrumentSpec>& instruments,
                               const MarketState& state, const HestonParams& p,
                               const QuadratureConfig& quad = {}, const McPricingConfig& mc = {}) {
    if (instruments.empty()) throw ConfigError("pricing.build_sigma: empty composition");
    state.validate();
    const FactorGeometry geom = factor_geometry(p, state.x);

    SigmaMatrix sm;
    const int n = static_cast<int>(instruments.size());
    sm.m.resize(n, 2);
    sm.instruments.reserve(n);
    sm.greeks.reserve(n);
    for (int i = 0; i < n; ++i) {
        const InstrumentSpec spec = resolve_instrument(instruments[i], state, p, quad);
        sm.instruments.push_back(spec);
        if (spec.kind == InstrumentKind::Stock) {
            sm.greeks.push_back(PriceAndGreeks{state.s, 1.0, 0.0});
            sm.m(i, 0) = geom.sigma_s;
            sm.m(i, 1) = 0.0;
            continue;
        }
        const PriceAndGreeks g = price_instrument(spec, state, p, quad, mc);
        sm.greeks.push_back(g);
        if (!(std::abs(g.price) > 0.0) || !std::isfinite(g.price))
            throw NumericalError("pricing.build_sigma: zero or non-finite price for " +
                                 to_string(spec.kind));
        sm.m(i, 0) = g.delta * state.s * geom.sigma_s / g.price;
        sm.m(i, 1) = g.vega_x * geom.sigma_h / g.price;
    }

    Eigen::JacobiSVD<Eigen::MatrixXd> svd(sm.m);
    const auto& sv = svd.singularValues();
    sm.min_singular_value = sv(sv.size() - 1);
    if (n >= 2 && !(sm.min_singular_value > 1e-12 * sv(0)))
        throw NumericalError(
            "pricing.build_sigma: incomplete-market composition, exposure matrix is rank "
            "deficient");
    return sm;
}

}  // namespace dpo
