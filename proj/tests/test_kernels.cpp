#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>
#include <vector>

#include "splitree/fourier.hpp"
#include "splitree/kernels.hpp"

using namespace splitree;

namespace {

std::vector<double> random_vec(std::size_t n, std::uint32_t seed) {
    std::mt19937 gen(seed);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    std::vector<double> v(n);
    for (auto& x : v) x = dist(gen);
    return v;
}

}  // namespace

TEST_CASE("dot_rev matches index-reversed scalar dot") {
    const auto a = random_vec(257, 1);
    auto b = random_vec(257, 2);
    const double got = kernels::scalar_backend().dot_rev(a.data(), b.data(),
                                                         a.size());
    double want = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        want += a[i] * b[a.size() - 1 - i];
    CHECK(got == doctest::Approx(want).epsilon(1e-14));
}

TEST_CASE("backends agree on every kernel") {
    const auto backends = kernels::available_backends();
    for (const std::size_t n : {0ul, 1ul, 3ul, 4ul, 17ul, 1024ul, 4097ul}) {
        const auto a = random_vec(n, std::uint32_t(10 + n));
        const auto b = random_vec(n, std::uint32_t(20 + n));
        const auto& ref = kernels::scalar_backend();
        const double dot0 = ref.dot(a.data(), b.data(), n);
        const double rev0 = ref.dot_rev(a.data(), b.data(), n);
        const double sum0 = ref.sum(a.data(), n);
        const double ssq0 = ref.sum_sq(a.data(), n);
        for (const auto& name : backends) {
            kernels::set_backend(name);
            const auto& k = kernels::active_backend();
            CHECK(k.dot(a.data(), b.data(), n) ==
                  doctest::Approx(dot0).epsilon(1e-12));
            CHECK(k.dot_rev(a.data(), b.data(), n) ==
                  doctest::Approx(rev0).epsilon(1e-12));
            CHECK(k.sum(a.data(), n) == doctest::Approx(sum0).epsilon(1e-12));
            CHECK(k.sum_sq(a.data(), n) ==
                  doctest::Approx(ssq0).epsilon(1e-12));
        }
    }
}

TEST_CASE("unknown backend rejected") {
    CHECK_THROWS_AS(kernels::set_backend("never-heard-of-it"),
                    std::invalid_argument);
}

TEST_CASE("fft matches naive dft") {
    const std::size_t n = 64;
    std::vector<std::complex<double>> x(n);
    std::mt19937 gen(7);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    for (auto& v : x) v = {dist(gen), dist(gen)};
    auto y = x;
    fft_pow2(y);
    for (std::size_t k = 0; k < n; k += 7) {
        std::complex<double> want = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double ang = -2.0 * 3.14159265358979323846 * double(j) *
                               double(k) / double(n);
            want += x[j] * std::complex<double>(std::cos(ang), std::sin(ang));
        }
        CHECK(std::abs(y[k] - want) < 1e-10);
    }
    CHECK_THROWS_AS(fft_pow2(x.data(), 48), std::invalid_argument);
}

TEST_CASE("trapezoid integrates a linear function exactly") {
    std::vector<double> f{0.0, 0.5, 1.0, 1.5, 2.0};
    CHECK(kernels::trapezoid(f, 0.5) == doctest::Approx(2.0));
}
