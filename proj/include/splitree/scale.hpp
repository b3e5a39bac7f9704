#pragma once

#include <memory>
#include <vector>

#include "splitree/model.hpp"

namespace splitree {

// Tabulated scale function W (or its clonal variant W_theta) on a uniform
// grid, with an exponential tail extension beyond the horizon when the
// generating exponent has a positive root.
struct ScaleGrid {
    double step = 0.0;
    double horizon = 0.0;
    std::vector<double> values;   // W[0..M], W[0] = 1, nondecreasing
    double alpha = 0.0;           // largest root of the generating exponent
    double psi_prime_alpha = 0.0; // derivative of that exponent at alpha
    double tail_coefficient = 0.0;  // values.back(), anchor of the tail
    bool clonal = false;
    double theta = 0.0;

    // Linear interpolation on [0, horizon]; exponential extension beyond.
    double value_at(double s) const;
    // Inverse of value_at for y >= 1; exact within a grid cell, analytic
    // on the tail.
    double inverse_at(double y) const;
};

// Solves the renewal form of the scale-function identity,
//   W(t) = 1 + int_0^t W(t-s) b S(s) ds,
// by trapezoidal marching, where S(s) = P(V > s) for the plain tree and
// S(s) = e^{-theta s} P(V > s) for the clonal tree. (The Laplace identity
// int e^{-xt} W(t) dt = 1/psi(x) pins this down; see laplace_of_scale.)
ScaleGrid build_scale_grid(const ModelParams& params, double h, double T,
                           bool clonal);

// Spec-named wrappers around the ScaleGrid members.
double eval_W(const ScaleGrid& grid, double s);
double invert_W(const ScaleGrid& grid, double y);

// Numerical int_0^inf e^{-xs} W(s) ds: trapezoid over the grid plus the
// analytic tail of the exponential extension. Equals 1/psi(x) for
// x > alpha.
double laplace_of_scale(const ScaleGrid& grid, double x);

// Mean population size f(t) = E[N_t] (renewal equation) and the survival
// probability P(N_t > 0) = f(t)/W(t), tabulated on the same grid as W.
class SurvivalCurve {
  public:
    SurvivalCurve(const ModelParams& params, const ScaleGrid& grid);
    double mean_population_at(double t) const;  // f(t)
    double survival_at(double t) const;         // f(t)/W(t)

  private:
    ScaleGrid w_;
    std::vector<double> f_;
};

// One-shot helper; builds the renewal grid each call.
double survival_prob(const ModelParams& params, const ScaleGrid& grid,
                     double t);

// Limit constants c_k = int_0^inf theta e^{-theta s} / W_theta(s)^2
// (1 - 1/W_theta(s))^{k-1} ds for k = 1..K. The integral is truncated
// where the analytic bound theta e^{-theta s} integrates below tol.
std::vector<double> clonal_constants(const ModelParams& params, int K,
                                     double tol, double h = 1e-3);

}  // namespace splitree
