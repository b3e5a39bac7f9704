#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "splitree/rng.hpp"
#include "splitree/stats.hpp"

using namespace splitree;

TEST_CASE("philox4x32-10 known-answer vectors") {
    // Random123 kat_vectors, philox4x32 R=10
    auto v = philox4x32({0, 0, 0, 0}, {0, 0});
    CHECK(v[0] == 0x6627e8d5u);
    CHECK(v[1] == 0xe169c58du);
    CHECK(v[2] == 0xbc57ac4cu);
    CHECK(v[3] == 0x9b00dbd8u);

    v = philox4x32({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u},
                   {0xa4093822u, 0x299f31d0u});
    CHECK(v[0] == 0xd16cfe09u);
    CHECK(v[1] == 0x94fdccebu);
    CHECK(v[2] == 0x5001e420u);
    CHECK(v[3] == 0x24126ea1u);

    v = philox4x32({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu},
                   {0xffffffffu, 0xffffffffu});
    CHECK(v[0] == 0x408f276du);
    CHECK(v[1] == 0x41c83b0eu);
    CHECK(v[2] == 0xa20bc7c6u);
}

TEST_CASE("streams are deterministic and distinct") {
    RngStream a(42, 7), b(42, 7), c(42, 8), d(43, 7);
    bool distinct_stream = false, distinct_seed = false;
    for (int i = 0; i < 64; ++i) {
        const auto x = a.next_u64();
        CHECK(x == b.next_u64());
        if (x != c.next_u64()) distinct_stream = true;
        if (x != d.next_u64()) distinct_seed = true;
    }
    CHECK(distinct_stream);
    CHECK(distinct_seed);
}

TEST_CASE("uniform lands in [0,1) with the right mean") {
    RngStream rng(1, 0);
    double sum = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double u = rng.uniform();
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
        sum += u;
    }
    const double mean = sum / n;
    CHECK(std::abs(mean - 0.5) < 4.0 / std::sqrt(12.0 * n));
}

TEST_CASE("exponential passes KS") {
    RngStream rng(5, 3);
    std::vector<double> xs(20000);
    for (auto& x : xs) x = rng.exponential(2.5);
    const auto res = ks_exponential(xs, 2.5);
    CHECK(res.p_value > 0.001);
}

TEST_CASE("poisson mean and variance, small and chunked") {
    RngStream rng(9, 1);
    for (const double mean : {0.0, 0.3, 4.0, 75.0}) {
        const int n = 40000;
        double s = 0.0, s2 = 0.0;
        for (int i = 0; i < n; ++i) {
            const double k = double(rng.poisson(mean));
            s += k;
            s2 += k * k;
        }
        const double m = s / n;
        const double var = s2 / n - m * m;
        if (mean == 0.0) {
            CHECK(m == 0.0);
            continue;
        }
        CHECK(std::abs(m - mean) < 4.0 * std::sqrt(mean / n));
        CHECK(std::abs(var - mean) < 6.0 * mean / std::sqrt(double(n)));
    }
}
