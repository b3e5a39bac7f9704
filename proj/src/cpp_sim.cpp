#include "splitree/cpp_sim.hpp"

#include <algorithm>
#include <stdexcept>

namespace splitree {

std::uint32_t SpectrumSample::families_of_size(std::uint32_t k) const {
    for (const auto& [size, count] : families)
        if (size == k) return count;
    return 0;
}

bool SpectrumSample::conserved() const {
    std::uint64_t total = clonal;
    for (const auto& [size, count] : families)
        total += std::uint64_t(size) * count;
    return total == population;
}

BranchDraw sample_branch(const ScaleGrid& grid, double t, RngStream& rng) {
    const double u = rng.uniform();
    const double inv_wt = 1.0 / grid.value_at(t);
    if (u <= inv_wt) return {true, 0.0};  // tie resolves to EXCEEDS
    return {false, grid.inverse_at(1.0 / u)};
}

CoalescentPointProcess sample_cpp(const ScaleGrid& grid, double t,
                                  RngStream& rng) {
    if (!(t > 0)) throw std::invalid_argument("horizon must be > 0");
    CoalescentPointProcess cpp;
    cpp.horizon = t;
    cpp.depths.push_back(t);
    const double inv_wt = 1.0 / grid.value_at(t);
    for (;;) {
        const double u = rng.uniform();
        if (u <= inv_wt) break;
        cpp.depths.push_back(grid.inverse_at(1.0 / u));
    }
    return cpp;
}

MutationSet scatter_mutations(const CoalescentPointProcess& cpp, double theta,
                              RngStream& rng) {
    if (!(theta >= 0)) throw std::invalid_argument("theta must be >= 0");
    MutationSet muts;
    muts.offsets.resize(cpp.depths.size() + 1, 0);
    if (theta == 0.0) return muts;
    for (std::size_t i = 0; i < cpp.depths.size(); ++i) {
        const double len = cpp.depths[i];
        const std::uint64_t n = rng.poisson(theta * len);
        const std::size_t begin = muts.depths.size();
        for (std::uint64_t j = 0; j < n; ++j)
            muts.depths.push_back(rng.uniform() * len);
        std::sort(muts.depths.begin() + std::ptrdiff_t(begin),
                  muts.depths.end(), std::greater<double>());
        muts.offsets[i + 1] = std::uint32_t(muts.depths.size());
    }
    return muts;
}

SpectrumSample PartitionExtractor::operator()(
    const CoalescentPointProcess& cpp, const MutationSet& muts) {
    const std::size_t n = cpp.depths.size();
    pile_.clear();
    family_size_.assign(muts.total(), 0);

    SpectrumSample out;
    out.population = std::uint32_t(n);

    for (std::size_t i = 0; i < n; ++i) {
        const double len = cpp.depths[i];
        if (i > 0)
            while (!pile_.empty() && pile_.back().first < len)
                pile_.pop_back();
        for (std::uint32_t m = muts.offsets[i]; m < muts.offsets[i + 1]; ++m) {
            const double depth = muts.depths[m];
            if (depth >= len)
                throw std::invalid_argument(
                    "mutation depth must be below branch length");
            pile_.emplace_back(depth, m);
        }
        if (pile_.empty())
            ++out.clonal;
        else
            ++family_size_[pile_.back().second];
    }

    std::uint32_t max_size = 0;
    for (const auto s : family_size_) max_size = std::max(max_size, s);
    hist_.assign(max_size + 1, 0);
    for (const auto s : family_size_)
        if (s > 0) ++hist_[s];
    for (std::uint32_t k = 1; k <= max_size; ++k)
        if (hist_[k] > 0) out.families.emplace_back(k, hist_[k]);
    return out;
}

SpectrumSample extract_partition(const CoalescentPointProcess& cpp,
                                 const MutationSet& muts) {
    PartitionExtractor extractor;
    return extractor(cpp, muts);
}

GraftResult graft(const ScaleGrid& grid, double a, double t, RngStream& rng) {
    if (!(a > 0 && a < t)) throw std::invalid_argument("graft needs 0 < a < t");
    const double wa = grid.value_at(a);
    const double exceed_p = wa / grid.value_at(t);

    // lower branch values in (0, t-a), law P(Hhat > s) = W(a)/W(s+a)
    std::vector<double> lower{t - a};
    for (;;) {
        const double u = rng.uniform();
        if (u <= exceed_p) break;
        lower.push_back(grid.inverse_at(wa / u) - a);
    }

    GraftResult res;
    res.lower_count = std::uint32_t(lower.size());
    res.tree.horizon = t;
    for (const double hat : lower) {
        res.tree.depths.push_back(hat + a);
        const auto sub = sample_cpp(grid, a, rng);
        res.tree.depths.insert(res.tree.depths.end(), sub.depths.begin() + 1,
                               sub.depths.end());
    }
    return res;
}

LowerJointSample sample_lower_joint(const ScaleGrid& grid, double a, double t,
                                    double theta, RngStream& rng) {
    if (!(a > 0 && a <= t))
        throw std::invalid_argument("sample_lower_joint needs 0 < a <= t");

    CoalescentPointProcess lower;
    if (a == t) {
        lower = sample_cpp(grid, t, rng);
    } else {
        lower.horizon = t - a;
        lower.depths.push_back(t - a);
        const double wa = grid.value_at(a);
        const double exceed_p = wa / grid.value_at(t);
        for (;;) {
            const double u = rng.uniform();
            if (u <= exceed_p) break;
            lower.depths.push_back(grid.inverse_at(wa / u) - a);
        }
    }
    const auto muts = scatter_mutations(lower, theta, rng);
    const auto sample = extract_partition(lower, muts);
    return {sample.population, sample.clonal};
}

}  // namespace splitree
