#pragma once

#include <complex>
#include <cstddef>
#include <vector>

namespace splitree {

// In-place iterative radix-2 FFT, X_k = sum_j x_j e^{-2*pi*i*j*k/n}.
// n must be a power of two.
void fft_pow2(std::complex<double>* x, std::size_t n);

inline void fft_pow2(std::vector<std::complex<double>>& x) {
    fft_pow2(x.data(), x.size());
}

inline bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

inline std::size_t next_pow2(std::size_t n) {
    std::size_t p = 1;
    while (p < n) p <<= 1;
    return p;
}

}  // namespace splitree
