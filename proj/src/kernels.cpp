#include "splitree/kernels.hpp"

#include <stdexcept>

#if defined(__x86_64__)
#include <immintrin.h>
#endif

namespace splitree::kernels {

namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

double dot_rev_scalar(const double* a, const double* b, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[n - 1 - i];
    return acc;
}

double sum_scalar(const double* a, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += a[i];
    return acc;
}

double sum_sq_scalar(const double* a, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += a[i] * a[i];
    return acc;
}

constexpr Backend kScalar{"scalar", dot_scalar, dot_rev_scalar, sum_scalar,
                          sum_sq_scalar};

#if defined(__x86_64__)

__attribute__((target("avx2,fma"))) double hadd(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    return _mm_cvtsd_f64(_mm_add_sd(lo, _mm_unpackhi_pd(lo, lo)));
}

__attribute__((target("avx2,fma"))) double dot_avx2(const double* a,
                                                    const double* b,
                                                    std::size_t n) {
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i),
                               acc0);
        acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4),
                               _mm256_loadu_pd(b + i + 4), acc1);
    }
    double acc = hadd(_mm256_add_pd(acc0, acc1));
    for (; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

__attribute__((target("avx2,fma"))) double dot_rev_avx2(const double* a,
                                                        const double* b,
                                                        std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d va = _mm256_loadu_pd(a + i);
        __m256d vb = _mm256_loadu_pd(b + n - 4 - i);
        vb = _mm256_permute4x64_pd(vb, 0x1B);  // reverse lanes
        acc = _mm256_fmadd_pd(va, vb, acc);
    }
    double r = hadd(acc);
    for (; i < n; ++i) r += a[i] * b[n - 1 - i];
    return r;
}

__attribute__((target("avx2,fma"))) double sum_avx2(const double* a,
                                                    std::size_t n) {
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        acc0 = _mm256_add_pd(acc0, _mm256_loadu_pd(a + i));
        acc1 = _mm256_add_pd(acc1, _mm256_loadu_pd(a + i + 4));
    }
    double acc = hadd(_mm256_add_pd(acc0, acc1));
    for (; i < n; ++i) acc += a[i];
    return acc;
}

__attribute__((target("avx2,fma"))) double sum_sq_avx2(const double* a,
                                                       std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d v = _mm256_loadu_pd(a + i);
        acc = _mm256_fmadd_pd(v, v, acc);
    }
    double r = hadd(acc);
    for (; i < n; ++i) r += a[i] * a[i];
    return r;
}

constexpr Backend kAvx2{"avx2", dot_avx2, dot_rev_avx2, sum_avx2, sum_sq_avx2};

bool avx2_supported() {
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
}

#endif  // __x86_64__

const Backend* g_active = nullptr;

const Backend* detect() {
#if defined(__x86_64__)
    if (avx2_supported()) return &kAvx2;
#endif
    return &kScalar;
}

}  // namespace

const Backend& scalar_backend() { return kScalar; }

const Backend& active_backend() {
    if (!g_active) g_active = detect();
    return *g_active;
}

std::vector<std::string> available_backends() {
    std::vector<std::string> out{"scalar"};
#if defined(__x86_64__)
    if (avx2_supported()) out.emplace_back("avx2");
#endif
    return out;
}

void set_backend(const std::string& name) {
    if (name == "scalar") {
        g_active = &kScalar;
        return;
    }
#if defined(__x86_64__)
    if (name == "avx2" && avx2_supported()) {
        g_active = &kAvx2;
        return;
    }
#endif
    throw std::invalid_argument("unknown or unavailable kernel backend: " +
                                name);
}

}  // namespace splitree::kernels
