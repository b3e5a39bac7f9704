#include "splitree/model.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace splitree {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();

double parse_number(std::string_view s) {
    std::size_t pos = 0;
    double v = std::stod(std::string(s), &pos);
    if (pos != s.size()) throw std::invalid_argument("bad number in lifespan spec");
    return v;
}
}  // namespace

LifespanDistribution LifespanDistribution::exponential(double rate) {
    if (!(rate > 0)) throw std::invalid_argument("exponential rate must be > 0");
    return {Kind::exponential, rate, 0.0};
}

LifespanDistribution LifespanDistribution::deterministic(double value) {
    if (!(value > 0)) throw std::invalid_argument("deterministic lifespan must be > 0");
    return {Kind::deterministic, value, 0.0};
}

LifespanDistribution LifespanDistribution::uniform(double lo, double hi) {
    if (!(lo >= 0) || !(hi > lo)) throw std::invalid_argument("uniform lifespan needs 0 <= lo < hi");
    return {Kind::uniform, lo, hi};
}

LifespanDistribution LifespanDistribution::immortal() {
    return {Kind::immortal, 0.0, 0.0};
}

LifespanDistribution LifespanDistribution::parse(std::string_view spec) {
    if (spec == "immortal") return immortal();
    const auto colon = spec.find(':');
    if (colon == std::string_view::npos)
        throw std::invalid_argument("bad lifespan spec: " + std::string(spec));
    const auto head = spec.substr(0, colon);
    const auto args = spec.substr(colon + 1);
    if (head == "exp") return exponential(parse_number(args));
    if (head == "fixed") return deterministic(parse_number(args));
    if (head == "uniform") {
        const auto comma = args.find(',');
        if (comma == std::string_view::npos)
            throw std::invalid_argument("uniform lifespan needs lo,hi");
        return uniform(parse_number(args.substr(0, comma)),
                       parse_number(args.substr(comma + 1)));
    }
    throw std::invalid_argument("bad lifespan spec: " + std::string(spec));
}

double LifespanDistribution::survival(double s) const {
    switch (kind_) {
        case Kind::exponential: return std::exp(-a_ * s);
        case Kind::deterministic: return s < a_ ? 1.0 : 0.0;
        case Kind::uniform:
            if (s <= a_) return 1.0;
            if (s >= b_) return 0.0;
            return (b_ - s) / (b_ - a_);
        case Kind::immortal: return 1.0;
    }
    return 0.0;
}

double LifespanDistribution::laplace(double x) const {
    if (x == 0.0) return 1.0;
    switch (kind_) {
        case Kind::exponential: return a_ / (a_ + x);
        case Kind::deterministic: return std::exp(-x * a_);
        case Kind::uniform:
            return (std::exp(-x * a_) - std::exp(-x * b_)) / (x * (b_ - a_));
        case Kind::immortal: return 0.0;
    }
    return 0.0;
}

double LifespanDistribution::laplace_v_moment(double x) const {
    switch (kind_) {
        case Kind::exponential: return a_ / ((a_ + x) * (a_ + x));
        case Kind::deterministic: return a_ * std::exp(-x * a_);
        case Kind::uniform: {
            if (x == 0.0) return mean();
            const double lo = a_, hi = b_;
            return (std::exp(-x * lo) * (1.0 + x * lo) -
                    std::exp(-x * hi) * (1.0 + x * hi)) /
                   (x * x * (hi - lo));
        }
        case Kind::immortal: return x > 0 ? 0.0 : kInf;
    }
    return 0.0;
}

double LifespanDistribution::mean() const {
    switch (kind_) {
        case Kind::exponential: return 1.0 / a_;
        case Kind::deterministic: return a_;
        case Kind::uniform: return 0.5 * (a_ + b_);
        case Kind::immortal: return kInf;
    }
    return 0.0;
}

double LifespanDistribution::sample(RngStream& rng) const {
    switch (kind_) {
        case Kind::exponential: return rng.exponential(a_);
        case Kind::deterministic: return a_;
        case Kind::uniform: return rng.uniform(a_, b_);
        case Kind::immortal: return kInf;
    }
    return 0.0;
}

std::string LifespanDistribution::to_string() const {
    switch (kind_) {
        case Kind::exponential: return "exp:" + std::to_string(a_);
        case Kind::deterministic: return "fixed:" + std::to_string(a_);
        case Kind::uniform:
            return "uniform:" + std::to_string(a_) + "," + std::to_string(b_);
        case Kind::immortal: return "immortal";
    }
    return "";
}

ModelParams::ModelParams(double b, double theta, LifespanDistribution v)
    : birth_rate(b), mutation_rate(theta), lifespan(v) {
    if (!(b > 0)) throw std::invalid_argument("birth rate must be > 0");
    if (!(theta >= 0)) throw std::invalid_argument("mutation rate must be >= 0");
}

double psi(const ModelParams& params, double x) {
    if (x == 0.0) return 0.0;
    return x - params.birth_rate * (1.0 - params.lifespan.laplace(x));
}

double psi_theta(const ModelParams& params, double x) {
    const double theta = params.mutation_rate;
    if (x == 0.0) return 0.0;
    return x * psi(params, x + theta) / (x + theta);
}

double psi_derivative(const ModelParams& params, double x) {
    return 1.0 - params.birth_rate * params.lifespan.laplace_v_moment(x);
}

double malthusian_alpha(const ModelParams& params) {
    if (!(params.mean_offspring() > 1.0)) return 0.0;
    // psi is convex with psi(0)=0 and psi'(0) < 0 here, so the positive
    // root is bracketed once psi turns positive.
    double lo = 1e-9, hi = 1.0;
    while (psi(params, hi) <= 0.0) {
        lo = hi;
        hi *= 2.0;
        if (hi > 1e12) throw std::runtime_error("alpha bracket failed");
    }
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (psi(params, mid) > 0.0)
            hi = mid;
        else
            lo = mid;
        if (hi - lo <= 1e-12 * hi) break;
    }
    return 0.5 * (lo + hi);
}

double clonal_alpha(const ModelParams& params) {
    const double alpha = malthusian_alpha(params);
    return alpha > params.mutation_rate ? alpha - params.mutation_rate : 0.0;
}

}  // namespace splitree
