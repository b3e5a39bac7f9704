#pragma once

#include <string>
#include <string_view>

#include "splitree/rng.hpp"

namespace splitree {

// Lifespan law P_V on (0, inf]. Four closed-form families; each supplies
// the survival function, the Laplace transform and its first moment
// variant E[V e^{-xV}], the mean, and an exact sampler.
class LifespanDistribution {
  public:
    enum class Kind { exponential, deterministic, uniform, immortal };

    static LifespanDistribution exponential(double rate);
    static LifespanDistribution deterministic(double value);
    static LifespanDistribution uniform(double lo, double hi);
    static LifespanDistribution immortal();

    // Spec strings: "exp:<d>", "fixed:<v>", "uniform:<lo>,<hi>", "immortal".
    static LifespanDistribution parse(std::string_view spec);

    double survival(double s) const;         // P(V > s)
    double laplace(double x) const;          // E[e^{-xV}]
    double laplace_v_moment(double x) const; // E[V e^{-xV}]
    double mean() const;                     // +inf for immortal
    double sample(RngStream& rng) const;
    std::string to_string() const;
    Kind kind() const { return kind_; }

  private:
    LifespanDistribution(Kind k, double a, double b) : kind_(k), a_(a), b_(b) {}
    Kind kind_;
    double a_, b_;
};

struct ModelParams {
    double birth_rate;
    double mutation_rate;
    LifespanDistribution lifespan;

    ModelParams(double b, double theta, LifespanDistribution v);

    // b * E[V]; the tree is supercritical iff this exceeds 1.
    double mean_offspring() const {
        return birth_rate * lifespan.mean();
    }
};

// Laplace exponent of the contour process, psi(x) = x - b(1 - E[e^{-xV}]).
double psi(const ModelParams& params, double x);

// Clonal exponent psi_theta(x) = x psi(x + theta) / (x + theta); equals the
// exponent built from the lifespan min(V, Exp(theta)).
double psi_theta(const ModelParams& params, double x);

// psi'(x) = 1 - b E[V e^{-xV}].
double psi_derivative(const ModelParams& params, double x);

// Largest root of psi on [0, inf): 0 unless b E[V] > 1, else the unique
// positive root (bracket doubling + bisection to 1e-12 relative).
double malthusian_alpha(const ModelParams& params);

// Largest root of psi_theta: max(alpha - theta, 0).
double clonal_alpha(const ModelParams& params);

}  // namespace splitree
