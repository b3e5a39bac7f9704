#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace splitree {

// Regularized incomplete gamma functions (series / continued fraction).
double gamma_p(double a, double x);  // P(a, x)
double gamma_q(double a, double x);  // Q(a, x) = 1 - P(a, x)

// Survival function of the chi-square distribution with dof degrees.
double chi2_sf(double x, double dof);

// Asymptotic Kolmogorov distribution survival Q_KS applied to a one-sample
// statistic d from n observations (Stephens' effective sample size).
double ks_sf(double d, std::uint64_t n);

struct GofResult {
    double statistic = 0.0;
    double dof = 0.0;
    double p_value = 1.0;
};

// Chi-square GOF of observed counts against given cell probabilities.
// Cells are pooled left to right so every expected count is >= 5; the
// remaining probability mass and the observed_tail count form a final
// pooled cell.
GofResult gof_counts(std::span<const std::uint64_t> observed,
                     std::span<const double> probabilities,
                     double tail_probability, std::uint64_t observed_tail = 0);

// GOF of a count histogram (index = value - 1 for supports on {1,2,...})
// against geometric(p) on {1, 2, ...}.
GofResult gof_geometric(std::span<const std::uint64_t> histogram, double p,
                        std::uint64_t observed_tail = 0);

// Two-sample chi-square homogeneity test on aligned histograms, with
// pooling so each pooled cell has total count >= 10.
GofResult two_sample_counts(std::span<const std::uint64_t> a,
                            std::span<const std::uint64_t> b);

// One-sample KS statistic of sorted uniforms-transformed data, i.e. the
// caller supplies cdf values F(x_i); returns max |F_n - F|.
double ks_statistic_from_cdf(std::span<const double> sorted_cdf_values);

// KS test of samples against Exp(rate).
GofResult ks_exponential(std::vector<double> samples, double rate);

// z-score (estimate - theory) / se; se == 0 maps exact agreement to 0.
double welch_z(double estimate, double se, double theory);

}  // namespace splitree
