#pragma once

// Counter-based random number generation.
//
// Every draw is a pure function of (key, counter), so any (path, step,
// inner-sample) substream can be regenerated independently of execution
// order. Results are therefore identical under any degree of parallelism,
// and changing the number of inner samples never perturbs other streams.

#include <cmath>
#include <cstdint>
#include <numbers>

#include "dpo/errors.hpp"

namespace dpo {

inline constexpr std::uint64_t kRngGamma = 0x9e3779b97f4a7c15ULL;

// SplitMix64 finalizer (Stafford mix13): bijective avalanche on 64 bits.
inline std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Key-derivation chain: order-sensitive combination of stream identifiers.
inline std::uint64_t derive_key(std::uint64_t key, std::uint64_t id) {
    return mix64(key + kRngGamma * (id + 1));
}

// Inverse standard normal CDF, p in (0,1). Acklam's rational approximation
// polished with one Halley step against erfc; absolute error < 1e-15.
inline double inverse_normal_cdf(double p) {
    if (!(p > 0.0 && p < 1.0)) throw NumericalError("rng.inverse_normal_cdf: p outside (0,1)");

    static constexpr double a[6] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                    -2.759285104469687e+02, 1.383577518672690e+02,
                                    -3.066479806614716e+01, 2.506628277459239e+00};
    static constexpr double b[5] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                    -1.556989798598866e+02, 6.680131188771972e+01,
                                    -1.328068155288572e+01};
    static constexpr double c[6] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                    -2.400758277161838e+00, -2.549732539343734e+00,
                                    4.374664141464968e+00,  2.938163982698783e+00};
    static constexpr double d[4] = {7.784695709041462e-03, 3.224671290700398e-01,
                                    2.445134137142996e+00, 3.754408661907416e+00};
    constexpr double p_low = 0.02425;

    double x;
    if (p < p_low) {
        const double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= 1.0 - p_low) {
        const double q = p - 0.5;
        const double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        const double q = std::sqrt(-2.0 * std::log(1.0 - p));
        x = -((((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
              ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0));
    }

    const double e = 0.5 * std::erfc(-x / std::numbers::sqrt2) - p;
    const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
    return x - u / (1.0 + 0.5 * x * u);
}

// One independent substream. Draws advance the counter only; copying a
// stream replays it.
struct RngStream {
    std::uint64_t key = 0;
    std::uint64_t ctr = 0;

    std::uint64_t next_u64() { return mix64(key + kRngGamma * ++ctr); }

    // Uniform on the open interval (0,1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53 + 0x1.0p-54; }

    double normal() { return inverse_normal_cdf(uniform()); }
};

// Substreams for the simulation layers. Tags separate purposes so that,
// e.g., inner resimulation draws never alias outer path draws.
enum class StreamTag : std::uint64_t { OuterPath = 1, InnerSample = 2, VixPricing = 3, Generic = 4 };

inline RngStream substream(std::uint64_t seed, StreamTag tag, std::uint64_t id0 = 0,
                           std::uint64_t id1 = 0, std::uint64_t id2 = 0) {
    std::uint64_t k = derive_key(seed, static_cast<std::uint64_t>(tag));
    k = derive_key(k, id0);
    k = derive_key(k, id1);
    k = derive_key(k, id2);
    return RngStream{k, 0};
}

}  // namespace dpo
