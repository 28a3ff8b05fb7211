#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "dpo/errors.hpp"
#include "dpo/rng.hpp"

using namespace dpo;

namespace {

double norm_cdf_ref(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

}  // namespace

TEST_CASE("substreams are deterministic and independent of call order") {
    RngStream a = substream(42, StreamTag::OuterPath, 7);
    RngStream b = substream(42, StreamTag::OuterPath, 7);
    for (int i = 0; i < 100; ++i) REQUIRE(a.next_u64() == b.next_u64());

    RngStream c = substream(42, StreamTag::OuterPath, 8);
    RngStream d = substream(42, StreamTag::InnerSample, 7);
    RngStream e = substream(43, StreamTag::OuterPath, 7);
    RngStream base = substream(42, StreamTag::OuterPath, 7);
    REQUIRE(base.next_u64() != c.next_u64());
    REQUIRE(base.next_u64() != d.next_u64());
    REQUIRE(base.next_u64() != e.next_u64());
}

TEST_CASE("substream ids beyond the first distinguish streams") {
    RngStream a = substream(1, StreamTag::InnerSample, 3, 4, 5);
    RngStream b = substream(1, StreamTag::InnerSample, 3, 4, 6);
    RngStream c = substream(1, StreamTag::InnerSample, 3, 5, 5);
    REQUIRE(a.next_u64() != b.next_u64());
    REQUIRE(a.next_u64() != c.next_u64());
}

TEST_CASE("uniform draws lie strictly inside (0, 1)") {
    RngStream s = substream(99, StreamTag::Generic);
    for (int i = 0; i < 100000; ++i) {
        const double u = s.uniform();
        REQUIRE(u > 0.0);
        REQUIRE(u < 1.0);
    }
}

TEST_CASE("inverse normal cdf round-trips against erfc") {
    // interior grid plus far tails
    const double ps[] = {1e-12, 1e-8, 1e-4, 0.01, 0.1,  0.25, 0.5,
                         0.75,  0.9,  0.99, 1.0 - 1e-4, 1.0 - 1e-8};
    for (double p : ps) {
        const double z = inverse_normal_cdf(p);
        REQUIRE(std::abs(norm_cdf_ref(z) - p) <= 1e-12 * std::max(1.0, std::abs(p)) + 1e-15);
    }
    REQUIRE(inverse_normal_cdf(0.5) == Catch::Approx(0.0).margin(1e-15));
    // frozen quantile: Phi^{-1}(0.975)
    REQUIRE(std::abs(inverse_normal_cdf(0.975) - 1.959963984540054) < 1e-12);
}

TEST_CASE("inverse normal cdf rejects arguments outside (0, 1)") {
    REQUIRE_THROWS_AS(inverse_normal_cdf(0.0), NumericalError);
    REQUIRE_THROWS_AS(inverse_normal_cdf(1.0), NumericalError);
    REQUIRE_THROWS_AS(inverse_normal_cdf(-0.3), NumericalError);
}

TEST_CASE("normal draws have the right first two moments") {
    RngStream s = substream(2024, StreamTag::Generic, 1);
    const int n = 400000;
    double sum = 0.0, sum2 = 0.0;
    for (int i = 0; i < n; ++i) {
        const double z = s.normal();
        sum += z;
        sum2 += z * z;
    }
    const double mean = sum / n;
    const double var = sum2 / n - mean * mean;
    REQUIRE(std::abs(mean) < 4.0 / std::sqrt(static_cast<double>(n)));
    REQUIRE(std::abs(var - 1.0) < 4.0 * std::sqrt(2.0 / n));
}

TEST_CASE("distinct counters give decorrelated normals") {
    RngStream s = substream(7, StreamTag::Generic);
    const int n = 200000;
    double acc = 0.0;
    double prev = s.normal();
    for (int i = 0; i < n; ++i) {
        const double cur = s.normal();
        acc += prev * cur;
        prev = cur;
    }
    REQUIRE(std::abs(acc / n) < 4.0 / std::sqrt(static_cast<double>(n)));
}
