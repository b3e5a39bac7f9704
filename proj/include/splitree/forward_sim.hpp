#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "splitree/cpp_sim.hpp"
#include "splitree/model.hpp"
#include "splitree/rng.hpp"

// Forward-in-time splitting-tree simulation: individuals carry sampled
// lifetimes, give birth at Poisson rate b and mutate at Poisson rate
// theta; children inherit the parent's current type. Serves as an
// independent cross-validation oracle for the CPP construction.

namespace splitree {

struct ForwardResult {
    SpectrumSample spectrum;
    bool survived = false;
    bool overflowed = false;
    std::uint64_t total_born = 0;
};

// cap bounds the total number of individuals ever created (which bounds
// the alive population); exceeding it aborts with the overflow flag set.
ForwardResult simulate_forward(const ModelParams& params, double t,
                               std::uint64_t cap, RngStream& rng);

struct DescentCounts {
    // counts[i] = individuals alive at checkpoints[i] with at least one
    // descendant (including themselves) alive at the horizon T.
    std::vector<std::uint32_t> counts;
    bool survived = false;  // population alive at T
    bool overflowed = false;
    std::uint64_t total_born = 0;
};

DescentCounts infinite_descent_counts(const ModelParams& params,
                                      std::span<const double> checkpoints,
                                      double T, std::uint64_t cap,
                                      RngStream& rng);

// Residual lifetimes (death - t) of the individuals alive at t; the first
// entry is the individual first crossed by the contour of the truncated
// tree. Empty when the population is extinct at t.
std::vector<double> residual_lifetimes(const ModelParams& params, double t,
                                       RngStream& rng,
                                       std::uint64_t cap = 10'000'000);

}  // namespace splitree
