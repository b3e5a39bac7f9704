#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

// Arithmetic inner loops shared by the scale-function solver, the
// quadrature routines and the Monte Carlo accumulators. Each kernel has a
// scalar reference implementation and (on x86-64) an AVX2+FMA variant;
// the backend is picked once at startup from CPU features and can be
// overridden for equivalence testing.

namespace splitree::kernels {

struct Backend {
    const char* name;
    double (*dot)(const double*, const double*, std::size_t);
    // dot with the second operand reversed: sum_i a[i] * b[n-1-i]
    double (*dot_rev)(const double*, const double*, std::size_t);
    double (*sum)(const double*, std::size_t);
    double (*sum_sq)(const double*, std::size_t);
};

const Backend& scalar_backend();
const Backend& active_backend();

// Names of backends usable on this machine ("scalar" always; "avx2" when
// the CPU supports AVX2 and FMA).
std::vector<std::string> available_backends();

// Force a backend by name. Throws std::invalid_argument for unknown or
// unavailable names. Intended for tests.
void set_backend(const std::string& name);

inline double dot(std::span<const double> a, std::span<const double> b) {
    return active_backend().dot(a.data(), b.data(), a.size());
}

inline double dot_rev(std::span<const double> a, std::span<const double> b) {
    return active_backend().dot_rev(a.data(), b.data(), a.size());
}

inline double sum(std::span<const double> a) {
    return active_backend().sum(a.data(), a.size());
}

inline double sum_sq(std::span<const double> a) {
    return active_backend().sum_sq(a.data(), a.size());
}

// Composite trapezoid rule on uniformly spaced samples.
inline double trapezoid(std::span<const double> f, double h) {
    if (f.size() < 2) return 0.0;
    return h * (sum(f) - 0.5 * (f.front() + f.back()));
}

}  // namespace splitree::kernels
