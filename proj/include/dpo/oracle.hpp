#pragma once

// Closed-form references used to validate the Monte Carlo machinery:
// Black-Scholes prices, the myopic (Merton) exposure, and the complete-market
// optimal exposure for the Heston investor obtained from the affine value
// function ansatz.
//
// The value function W^{1-gamma}/(1-gamma) * exp(A(tau) + B(tau) X) solves the
// HJB equation iff
//   B'(tau) = c0 + c1 B + c2 B^2,              B(0) = 0
//   A'(tau) = (1-gamma) r + kappa_x theta_x B, A(0) = 0
// with
//   c0 = (1-gamma)/(2 gamma) * (lambda^2 - 2 rho lambda lambda_x + lambda_x^2)/(1-rho^2)
//   c1 = (1-gamma)/gamma * sigma_x lambda_x - kappa_x
//   c2 = sigma_x^2 / (2 gamma)
// and the optimal exposure is
//   eta(t,x) = (1/gamma) (Phi Phi^T)^{-1} (Lambda(x) + B(T-t) sigma_x sqrt(x) [rho,1]^T).

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dpo/errors.hpp"
#include "dpo/model.hpp"

namespace dpo {

inline double norm_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

struct BsResult {
    double price = 0.0;
    double delta = 0.0;
};

// European option under geometric Brownian motion with volatility vol.
inline BsResult bs_price(bool is_call, double s, double k, double tau, double r, double vol) {
    if (!(s > 0.0) || !(k > 0.0) || !(tau > 0.0) || !(vol >= 0.0))
        throw ConfigError("oracle.bs_price: require s,k,tau > 0 and vol >= 0");
    BsResult res;
    const double df = std::exp(-r * tau);
    if (vol <= 0.0) {
        const double fwd = s / df;
        if (is_call) {
            res.price = df * std::max(fwd - k, 0.0);
            res.delta = fwd > k ? 1.0 : 0.0;
        } else {
            res.price = df * std::max(k - fwd, 0.0);
            res.delta = fwd < k ? -1.0 : 0.0;
        }
        return res;
    }
    const double sq = vol * std::sqrt(tau);
    const double d1 = (std::log(s / k) + (r + 0.5 * vol * vol) * tau) / sq;
    const double d2 = d1 - sq;
    if (is_call) {
        res.price = s * norm_cdf(d1) - k * df * norm_cdf(d2);
        res.delta = norm_cdf(d1);
    } else {
        res.price = k * df * norm_cdf(-d2) - s * norm_cdf(-d1);
        res.delta = norm_cdf(d1) - 1.0;
    }
    return res;
}

// Myopic exposure: zero value-function gradients.
inline Eigen::Vector2d merton_exposure(const HestonParams& p, double gamma, double x) {
    p.validate();
    if (!(gamma > 0.0) || gamma == 1.0)
        throw ConfigError("oracle.merton_exposure: gamma must be > 0 and != 1");
    if (!(x >= 0.0)) throw ConfigError("oracle.merton_exposure: variance must be >= 0");
    const double sx = std::sqrt(x);
    const double denom = gamma * (1.0 - p.rho * p.rho);
    return Eigen::Vector2d((p.lambda - p.rho * p.lambda_x) * sx / denom,
                           (p.lambda_x - p.rho * p.lambda) * sx / denom);
}

// Coefficient functions of the exponential-affine value function, sampled on
// the adaptive integrator's knots with stored derivatives for cubic Hermite
// interpolation at arbitrary tau in [0, horizon].
struct AffineCoefficients {
    double gamma = 4.0;
    double horizon = 1.0;
    std::vector<double> tau;
    std::vector<double> a;
    std::vector<double> b;
    std::vector<double> a_prime;
    std::vector<double> b_prime;

    double interp(const std::vector<double>& v, const std::vector<double>& vp, double t) const {
        if (!(t >= 0.0 && t <= horizon + 1e-12))
            throw ConfigError("oracle.AffineCoefficients: tau outside [0, horizon]");
        if (t <= tau.front()) return v.front();
        if (t >= tau.back()) return v.back();
        std::size_t lo = 0, hi = tau.size() - 1;
        while (hi - lo > 1) {
            const std::size_t mid = (lo + hi) / 2;
            (tau[mid] <= t ? lo : hi) = mid;
        }
        const double h = tau[lo + 1] - tau[lo];
        const double u = (t - tau[lo]) / h;
        const double h00 = (1.0 + 2.0 * u) * (1.0 - u) * (1.0 - u);
        const double h10 = u * (1.0 - u) * (1.0 - u);
        const double h01 = u * u * (3.0 - 2.0 * u);
        const double h11 = u * u * (u - 1.0);
        return h00 * v[lo] + h10 * h * vp[lo] + h01 * v[lo + 1] + h11 * h * vp[lo + 1];
    }

    double b_at(double t) const { return interp(b, b_prime, t); }
    double a_at(double t) const { return interp(a, a_prime, t); }
};

namespace detail {

struct RiccatiRhs {
    double c0, c1, c2, ra, ka;
    // y = (B, A)
    Eigen::Vector2d operator()(const Eigen::Vector2d& y) const {
        return Eigen::Vector2d(c0 + c1 * y[0] + c2 * y[0] * y[0], ra + ka * y[0]);
    }
};

}  // namespace detail

// Integrates the affine coefficient ODEs with an adaptive Cash-Karp RK45
// scheme, absolute tolerance 1e-10. Finite-time blow-up (possible for small
// gamma) is reported with the approximate blow-up time.
inline AffineCoefficients solve_affine_coefficients(const HestonParams& p, double gamma,
                                                    double horizon, double abs_tol = 1e-10) {
    p.validate();
    if (!(gamma > 0.0) || gamma == 1.0)
        throw ConfigError("oracle.solve_affine_coefficients: gamma must be > 0 and != 1");
    if (!(horizon > 0.0))
        throw ConfigError("oracle.solve_affine_coefficients: horizon must be > 0");

    const double one_m_g = 1.0 - gamma;
    const double rho2 = p.rho * p.rho;
    detail::RiccatiRhs rhs{
        one_m_g / (2.0 * gamma) *
            (p.lambda * p.lambda - 2.0 * p.rho * p.lambda * p.lambda_x + p.lambda_x * p.lambda_x) /
            (1.0 - rho2),
        one_m_g / gamma * p.sigma_x * p.lambda_x - p.kappa_x,
        p.sigma_x * p.sigma_x / (2.0 * gamma),
        one_m_g * p.r,
        p.kappa_x * p.theta_x};

    // Cash-Karp tableau.
    static const double ba[6][5] = {{0, 0, 0, 0, 0},
                                    {1.0 / 5, 0, 0, 0, 0},
                                    {3.0 / 40, 9.0 / 40, 0, 0, 0},
                                    {3.0 / 10, -9.0 / 10, 6.0 / 5, 0, 0},
                                    {-11.0 / 54, 5.0 / 2, -70.0 / 27, 35.0 / 27, 0},
                                    {1631.0 / 55296, 175.0 / 512, 575.0 / 13824,
                                     44275.0 / 110592, 253.0 / 4096}};
    static const double c5[6] = {37.0 / 378, 0, 250.0 / 621, 125.0 / 594, 0, 512.0 / 1771};
    static const double c4[6] = {2825.0 / 27648, 0,           18575.0 / 48384,
                                 13525.0 / 55296, 277.0 / 14336, 1.0 / 4};

    AffineCoefficients out;
    out.gamma = gamma;
    out.horizon = horizon;

    Eigen::Vector2d y(0.0, 0.0);
    double t = 0.0;
    const double max_step = 1e-3;  // keeps Hermite interpolation error far below abs_tol
    double h = max_step;
    auto push = [&](double tt, const Eigen::Vector2d& yy) {
        const Eigen::Vector2d d = rhs(yy);
        out.tau.push_back(tt);
        out.b.push_back(yy[0]);
        out.a.push_back(yy[1]);
        out.b_prime.push_back(d[0]);
        out.a_prime.push_back(d[1]);
    };
    push(0.0, y);

    int guard = 0;
    while (t < horizon) {
        if (++guard > 10'000'000)
            throw NumericalError("oracle.solve_affine_coefficients: step count exceeded");
        if (h > horizon - t) h = horizon - t;
        Eigen::Vector2d k[6];
        k[0] = rhs(y);
        for (int s = 1; s < 6; ++s) {
            Eigen::Vector2d ys = y;
            for (int j = 0; j < s; ++j) ys += h * ba[s][j] * k[j];
            k[s] = rhs(ys);
        }
        Eigen::Vector2d y5 = y, y4 = y;
        for (int s = 0; s < 6; ++s) {
            y5 += h * c5[s] * k[s];
            y4 += h * c4[s] * k[s];
        }
        const double err = (y5 - y4).cwiseAbs().maxCoeff();
        if (err <= abs_tol || h <= 1e-14) {
            t += h;
            y = y5;
            if (!std::isfinite(y[0]) || std::abs(y[0]) > 1e10)
                throw NumericalError(
                    "oracle.solve_affine_coefficients: coefficient blow-up near tau = " +
                    std::to_string(t));
            push(t, y);
        }
        const double scale =
            err > 0.0 ? 0.9 * std::pow(abs_tol / err, 0.2) : 5.0;
        h *= std::min(5.0, std::max(0.2, scale));
        h = std::min(h, max_step);
    }
    return out;
}

// Optimal complete-market exposure at (t, x) from the affine solution.
inline Eigen::Vector2d heston_complete_exposure(const AffineCoefficients& coeffs,
                                                const HestonParams& p, double t, double x) {
    p.validate();
    if (!(t >= 0.0 && t <= coeffs.horizon))
        throw ConfigError("oracle.heston_complete_exposure: t outside [0, horizon]");
    if (!(x >= 0.0)) throw ConfigError("oracle.heston_complete_exposure: variance must be >= 0");
    const double tau = coeffs.horizon - t;
    const double bval = coeffs.b_at(tau);
    const double sx = std::sqrt(x);
    const double g1 = p.lambda * sx + bval * p.sigma_x * sx * p.rho;
    const double g2 = p.lambda_x * sx + bval * p.sigma_x * sx;
    const double denom = coeffs.gamma * (1.0 - p.rho * p.rho);
    return Eigen::Vector2d((g1 - p.rho * g2) / denom, (g2 - p.rho * g1) / denom);
}

}  // namespace dpo
