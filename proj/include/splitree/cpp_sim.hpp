#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "splitree/rng.hpp"
#include "splitree/scale.hpp"

namespace splitree {

// Genealogy of the population alive at the horizon: branch depths
// H_0 = t, H_1..H_{N-1} in (0, t).
struct CoalescentPointProcess {
    double horizon = 0.0;
    std::vector<double> depths;
    std::uint32_t size() const { return std::uint32_t(depths.size()); }
};

// Poissonian mutations, grouped by branch (CSR layout); within a branch
// depths are stored in decreasing order, ready for the partition sweep.
// A depth a means calendar time t - a.
struct MutationSet {
    std::vector<std::uint32_t> offsets;  // size branches + 1
    std::vector<double> depths;
    std::size_t total() const { return depths.size(); }
};

// One realization: population size, ancestral-type carriers, and the
// non-ancestral family-size histogram (k, count) with k ascending.
struct SpectrumSample {
    std::uint32_t population = 0;
    std::uint32_t clonal = 0;
    std::vector<std::pair<std::uint32_t, std::uint32_t>> families;

    std::uint32_t families_of_size(std::uint32_t k) const;
    // clonal + sum k * A(k) == population
    bool conserved() const;
};

struct BranchDraw {
    bool exceeds = false;  // H > horizon
    double depth = 0.0;
};

// Branch depth law P(H > s) = 1/W(s), truncated at the horizon: returns
// EXCEEDS when the inverting uniform falls at or below 1/W(t).
BranchDraw sample_branch(const ScaleGrid& grid, double t, RngStream& rng);

// i.i.d. branches until the first EXCEEDS; H_0 = t deterministically.
CoalescentPointProcess sample_cpp(const ScaleGrid& grid, double t,
                                  RngStream& rng);

// Per-branch Poisson(theta * length) counts with i.i.d. uniform depths;
// branch 0 has length t, branch i >= 1 has length H_i.
MutationSet scatter_mutations(const CoalescentPointProcess& cpp, double theta,
                              RngStream& rng);

// Left-to-right sweep over leaves maintaining the pile of lineage
// mutations ordered by depth. Reusable to avoid per-call allocations.
class PartitionExtractor {
  public:
    SpectrumSample operator()(const CoalescentPointProcess& cpp,
                              const MutationSet& muts);

  private:
    std::vector<std::pair<double, std::uint32_t>> pile_;
    std::vector<std::uint32_t> family_size_;
    std::vector<std::uint32_t> hist_;
};

SpectrumSample extract_partition(const CoalescentPointProcess& cpp,
                                 const MutationSet& muts);

struct GraftResult {
    CoalescentPointProcess tree;
    std::uint32_t lower_count = 0;  // N^{(t)}_{t-a}
};

// Prop 5.1 construction: a lower CPP on (t-a, t) with branch law
// P(Hhat > s) = W(a)/W(s+a), with i.i.d. sub-CPPs of height a grafted
// above each lower branch.
GraftResult graft(const ScaleGrid& grid, double a, double t, RngStream& rng);

struct LowerJointSample {
    std::uint32_t population = 0;  // N^{(t)}_{t-a}
    std::uint32_t clonal = 0;      // Z_0^{(t)}(a)
};

// Samples the lower tree alone and scatters mutations on its branches
// (depths in (a, t)); clonal = lower leaves without a mutation on their
// lower lineage. a == t gives the full-tree pair (N_t, Z_0(t)).
LowerJointSample sample_lower_joint(const ScaleGrid& grid, double a, double t,
                                    double theta, RngStream& rng);

}  // namespace splitree
