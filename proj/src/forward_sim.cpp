#include "splitree/forward_sim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <unordered_map>

namespace splitree {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Shared depth-first walk. Each individual's life is simulated as a race
// between the pending birth and mutation clocks against the fixed death
// time; children are visited recursively, consuming the stream in a
// deterministic order.
struct SpectrumWalk {
    const ModelParams& params;
    double horizon;
    std::uint64_t cap;
    RngStream& rng;
    std::uint64_t born = 0;
    bool overflow = false;
    std::uint64_t next_type = 1;
    std::vector<std::uint64_t> alive_types;

    void visit(double birth, std::uint64_t type) {
        if (overflow) return;
        if (++born > cap) {
            overflow = true;
            return;
        }
        const double death = birth + params.lifespan.sample(rng);
        const double end = std::min(death, horizon);
        const double theta = params.mutation_rate;
        double tb = birth + rng.exponential(params.birth_rate);
        double tm = theta > 0 ? birth + rng.exponential(theta) : kInf;
        while (std::min(tb, tm) < end) {
            if (tb <= tm) {
                visit(tb, type);
                if (overflow) return;
                tb += rng.exponential(params.birth_rate);
            } else {
                type = next_type++;
                tm += rng.exponential(theta);
            }
        }
        if (death > horizon) alive_types.push_back(type);
    }
};

struct DescentWalk {
    const ModelParams& params;
    std::span<const double> checkpoints;
    double horizon;
    std::uint64_t cap;
    RngStream& rng;
    std::uint64_t born = 0;
    bool overflow = false;
    std::vector<std::uint32_t> counts;

    bool visit(double birth) {
        if (overflow) return false;
        if (++born > cap) {
            overflow = true;
            return false;
        }
        const double death = birth + params.lifespan.sample(rng);
        const double end = std::min(death, horizon);
        bool has_descent = death > horizon;
        double tb = birth + rng.exponential(params.birth_rate);
        while (tb < end) {
            if (visit(tb)) has_descent = true;
            if (overflow) return false;
            tb += rng.exponential(params.birth_rate);
        }
        if (has_descent)
            for (std::size_t i = 0; i < checkpoints.size(); ++i)
                if (birth <= checkpoints[i] && checkpoints[i] < death)
                    ++counts[i];
        return has_descent;
    }
};

struct TreeNode {
    double birth, death;
    std::vector<std::uint32_t> children;
};

struct TreeWalk {
    const ModelParams& params;
    double horizon;
    std::uint64_t cap;
    RngStream& rng;
    bool overflow = false;
    std::vector<TreeNode> nodes;

    std::uint32_t visit(double birth) {
        if (nodes.size() >= cap) {
            overflow = true;
            return 0;
        }
        const std::uint32_t id = std::uint32_t(nodes.size());
        nodes.push_back({birth, birth + params.lifespan.sample(rng), {}});
        const double end = std::min(nodes[id].death, horizon);
        double tb = birth + rng.exponential(params.birth_rate);
        while (tb < end && !overflow) {
            const std::uint32_t child = visit(tb);
            nodes[id].children.push_back(child);
            tb += rng.exponential(params.birth_rate);
        }
        return id;
    }
};

// First alive individual in contour order: the contour descends from the
// top of a life segment and explores children from the latest birth down.
std::int64_t contour_first(const std::vector<TreeNode>& nodes,
                           std::uint32_t i, double t) {
    if (nodes[i].death > t) return i;
    const auto& kids = nodes[i].children;
    for (auto it = kids.rbegin(); it != kids.rend(); ++it) {
        const auto r = contour_first(nodes, *it, t);
        if (r >= 0) return r;
    }
    return -1;
}

}  // namespace

ForwardResult simulate_forward(const ModelParams& params, double t,
                               std::uint64_t cap, RngStream& rng) {
    if (!(t > 0)) throw std::invalid_argument("horizon must be > 0");
    if (cap == 0) throw std::invalid_argument("cap must be > 0");
    SpectrumWalk walk{params, t, cap, rng};
    walk.visit(0.0, 0);

    ForwardResult res;
    res.total_born = walk.born;
    res.overflowed = walk.overflow;
    if (walk.overflow) return res;

    res.survived = !walk.alive_types.empty();
    res.spectrum.population = std::uint32_t(walk.alive_types.size());
    std::unordered_map<std::uint64_t, std::uint32_t> family;
    for (const auto ty : walk.alive_types) ++family[ty];
    std::uint32_t max_size = 0;
    for (const auto& [ty, size] : family)
        if (ty != 0) max_size = std::max(max_size, size);
    std::vector<std::uint32_t> hist(max_size + 1, 0);
    for (const auto& [ty, size] : family) {
        if (ty == 0)
            res.spectrum.clonal = size;
        else
            ++hist[size];
    }
    for (std::uint32_t k = 1; k <= max_size; ++k)
        if (hist[k] > 0) res.spectrum.families.emplace_back(k, hist[k]);
    return res;
}

DescentCounts infinite_descent_counts(const ModelParams& params,
                                      std::span<const double> checkpoints,
                                      double T, std::uint64_t cap,
                                      RngStream& rng) {
    for (const double c : checkpoints)
        if (!(c < T))
            throw std::invalid_argument("checkpoints must precede horizon");
    DescentWalk walk{params, checkpoints, T, cap, rng};
    walk.counts.assign(checkpoints.size(), 0);
    const bool survived = walk.visit(0.0);

    DescentCounts res;
    res.total_born = walk.born;
    res.overflowed = walk.overflow;
    if (walk.overflow) return res;
    res.survived = survived;
    res.counts = std::move(walk.counts);
    return res;
}

std::vector<double> residual_lifetimes(const ModelParams& params, double t,
                                       RngStream& rng, std::uint64_t cap) {
    if (!(t > 0)) throw std::invalid_argument("horizon must be > 0");
    TreeWalk walk{params, t, cap, rng};
    walk.visit(0.0);
    if (walk.overflow) throw std::runtime_error("residual_lifetimes overflow");

    const auto first = contour_first(walk.nodes, 0, t);
    std::vector<double> out;
    if (first < 0) return out;
    out.push_back(walk.nodes[std::size_t(first)].death - t);
    for (std::size_t i = 0; i < walk.nodes.size(); ++i) {
        if (std::int64_t(i) == first) continue;
        const auto& node = walk.nodes[i];
        if (node.birth <= t && node.death > t) out.push_back(node.death - t);
    }
    return out;
}

}  // namespace splitree
