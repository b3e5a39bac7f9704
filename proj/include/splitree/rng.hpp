#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>

// Counter-based random number generation (Philox4x32-10, Salmon et al.,
// SC 2011). Every Monte Carlo replica owns an independent stream keyed by
// (seed, stream id), so replica r of a run is reproducible regardless of
// how replicas are distributed over workers.

namespace splitree {

namespace detail {
constexpr std::uint32_t kPhiloxM0 = 0xD2511F53u;
constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57u;
constexpr std::uint32_t kPhiloxW0 = 0x9E3779B9u;
constexpr std::uint32_t kPhiloxW1 = 0xBB67AE85u;
}  // namespace detail

inline std::array<std::uint32_t, 4> philox4x32(
    std::array<std::uint32_t, 4> ctr, std::array<std::uint32_t, 2> key) {
    using namespace detail;
    for (int round = 0; round < 10; ++round) {
        if (round > 0) {
            key[0] += kPhiloxW0;
            key[1] += kPhiloxW1;
        }
        const std::uint64_t p0 = std::uint64_t(kPhiloxM0) * ctr[0];
        const std::uint64_t p1 = std::uint64_t(kPhiloxM1) * ctr[2];
        ctr = {std::uint32_t(p1 >> 32) ^ ctr[1] ^ key[0], std::uint32_t(p1),
               std::uint32_t(p0 >> 32) ^ ctr[3] ^ key[1], std::uint32_t(p0)};
    }
    return ctr;
}

class RngStream {
  public:
    RngStream(std::uint64_t seed, std::uint64_t stream)
        : key_{std::uint32_t(seed), std::uint32_t(seed >> 32)},
          stream_(stream) {}

    std::uint64_t next_u64() {
        if (pos_ >= 2) refill();
        return buf_[pos_++];
    }

    // Uniform on [0, 1) with 53 random bits.
    double uniform() {
        return double(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) {
        return lo + (hi - lo) * uniform();
    }

    double exponential(double rate) {
        // -log(1-U) with U in [0,1); argument stays in (0,1].
        return -std::log1p(-uniform()) / rate;
    }

    // Exact Poisson sampling (Knuth product method, chunked for large
    // means so the running product never underflows).
    std::uint64_t poisson(double mean) {
        std::uint64_t total = 0;
        while (mean > 32.0) {
            total += poisson_small(32.0);
            mean -= 32.0;
        }
        return total + poisson_small(mean);
    }

    std::uint64_t stream_id() const { return stream_; }

  private:
    std::uint64_t poisson_small(double mean) {
        if (mean <= 0.0) return 0;
        const double limit = std::exp(-mean);
        std::uint64_t k = 0;
        double prod = uniform();
        while (prod > limit) {
            ++k;
            prod *= uniform();
        }
        return k;
    }

    void refill() {
        const auto out = philox4x32(
            {std::uint32_t(block_), std::uint32_t(block_ >> 32),
             std::uint32_t(stream_), std::uint32_t(stream_ >> 32)},
            key_);
        buf_[0] = out[0] | (std::uint64_t(out[1]) << 32);
        buf_[1] = out[2] | (std::uint64_t(out[3]) << 32);
        ++block_;
        pos_ = 0;
    }

    std::array<std::uint32_t, 2> key_;
    std::uint64_t stream_;
    std::uint64_t block_ = 0;
    std::array<std::uint64_t, 2> buf_{};
    int pos_ = 2;
};

}  // namespace splitree
