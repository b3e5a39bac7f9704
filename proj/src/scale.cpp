#include "splitree/scale.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "splitree/kernels.hpp"

namespace splitree {

namespace {

// March the second-kind Volterra equation
//   y(t) = g(t) + int_0^t y(t-s) K(s) ds
// on the uniform grid by the trapezoid rule. K[0] enters implicitly.
std::vector<double> volterra_march(const std::vector<double>& g,
                                   const std::vector<double>& kernel,
                                   double h) {
    const std::size_t m = g.size() - 1;
    std::vector<double> y(m + 1);
    y[0] = g[0];
    const double pivot = 1.0 - 0.5 * h * kernel[0];
    for (std::size_t k = 1; k <= m; ++k) {
        double conv = kernels::dot_rev({&kernel[1], k - 1}, {&y[1], k - 1});
        conv += 0.5 * y[0] * kernel[k];
        y[k] = (g[k] + h * conv) / pivot;
    }
    return y;
}

std::vector<double> sampled_kernel(const ModelParams& params, double h,
                                   std::size_t m, bool clonal) {
    std::vector<double> kernel(m + 1);
    const double theta = params.mutation_rate;
    for (std::size_t j = 0; j <= m; ++j) {
        const double s = h * double(j);
        double v = params.birth_rate * params.lifespan.survival(s);
        if (clonal) v *= std::exp(-theta * s);
        kernel[j] = v;
    }
    return kernel;
}

}  // namespace

ScaleGrid build_scale_grid(const ModelParams& params, double h, double T,
                           bool clonal) {
    if (!(h > 0)) throw std::invalid_argument("grid step must be > 0");
    if (!(T >= h)) throw std::invalid_argument("grid horizon must be >= step");
    const double cells = T / h;
    if (cells > 1e7) throw std::invalid_argument("grid too large (T/h > 1e7)");

    const std::size_t m = std::size_t(std::llround(cells));
    const auto kernel = sampled_kernel(params, h, m, clonal);

    ScaleGrid grid;
    grid.step = h;
    grid.horizon = h * double(m);
    grid.clonal = clonal;
    grid.theta = clonal ? params.mutation_rate : 0.0;
    grid.values = volterra_march(std::vector<double>(m + 1, 1.0), kernel, h);

    if (clonal) {
        grid.alpha = clonal_alpha(params);
        if (grid.alpha > 0) {
            // psi_theta'(alpha_theta) where psi_theta(alpha_theta) = 0.
            const double a = grid.alpha, th = params.mutation_rate;
            grid.psi_prime_alpha =
                a * psi_derivative(params, a + th) / (a + th);
        }
    } else {
        grid.alpha = malthusian_alpha(params);
        if (grid.alpha > 0)
            grid.psi_prime_alpha = psi_derivative(params, grid.alpha);
    }
    grid.tail_coefficient = grid.values.back();
    return grid;
}

double ScaleGrid::value_at(double s) const {
    if (!(s >= 0)) throw std::domain_error("scale function needs s >= 0");
    if (s >= horizon) {
        if (s == horizon) return values.back();
        if (!(alpha > 0))
            throw std::domain_error("tail extension requires supercritical");
        return tail_coefficient * std::exp(alpha * (s - horizon));
    }
    const double pos = s / step;
    const std::size_t i = std::min(std::size_t(pos), values.size() - 2);
    const double frac = pos - double(i);
    return values[i] + frac * (values[i + 1] - values[i]);
}

double ScaleGrid::inverse_at(double y) const {
    if (!(y >= 1.0)) throw std::domain_error("scale inverse needs y >= 1");
    if (y == 1.0) return 0.0;
    if (y > values.back()) {
        if (!(alpha > 0))
            throw std::domain_error("tail extension requires supercritical");
        return horizon + std::log(y / tail_coefficient) / alpha;
    }
    const auto it = std::lower_bound(values.begin(), values.end(), y);
    const std::size_t i = std::size_t(it - values.begin());
    if (i == 0) return 0.0;
    const double lo = values[i - 1], hi = values[i];
    const double frac = hi > lo ? (y - lo) / (hi - lo) : 0.0;
    return step * (double(i - 1) + frac);
}

double eval_W(const ScaleGrid& grid, double s) { return grid.value_at(s); }
double invert_W(const ScaleGrid& grid, double y) { return grid.inverse_at(y); }

double laplace_of_scale(const ScaleGrid& grid, double x) {
    if (!(x > grid.alpha))
        throw std::domain_error("Laplace transform needs x > alpha");
    const std::size_t m = grid.values.size() - 1;
    std::vector<double> f(m + 1);
    for (std::size_t j = 0; j <= m; ++j)
        f[j] = std::exp(-x * grid.step * double(j)) * grid.values[j];
    double integral = kernels::trapezoid(f, grid.step);
    // tail: int_T^inf e^{-xs} W(T) e^{alpha(s-T)} ds
    integral += grid.tail_coefficient * std::exp(-x * grid.horizon) /
                (x - grid.alpha);
    return integral;
}

SurvivalCurve::SurvivalCurve(const ModelParams& params, const ScaleGrid& grid)
    : w_(grid) {
    const std::size_t m = grid.values.size() - 1;
    const auto kernel = sampled_kernel(params, grid.step, m, grid.clonal);
    std::vector<double> g(m + 1);
    for (std::size_t j = 0; j <= m; ++j)
        g[j] = params.lifespan.survival(grid.step * double(j));
    f_ = volterra_march(g, kernel, grid.step);
}

double SurvivalCurve::mean_population_at(double t) const {
    if (!(t >= 0) || t > w_.horizon)
        throw std::domain_error("time outside renewal grid");
    const double pos = t / w_.step;
    const std::size_t i = std::min(std::size_t(pos), f_.size() - 2);
    const double frac = pos - double(i);
    return f_[i] + frac * (f_[i + 1] - f_[i]);
}

double SurvivalCurve::survival_at(double t) const {
    return mean_population_at(t) / w_.value_at(t);
}

double survival_prob(const ModelParams& params, const ScaleGrid& grid,
                     double t) {
    return SurvivalCurve(params, grid).survival_at(t);
}

std::vector<double> clonal_constants(const ModelParams& params, int K,
                                     double tol, double h) {
    const double theta = params.mutation_rate;
    if (!(theta > 0))
        throw std::domain_error("c_k undefined without mutations");
    if (K < 1) throw std::invalid_argument("K must be >= 1");
    if (!(tol > 0)) throw std::invalid_argument("tol must be > 0");

    // Integrand is bounded by theta e^{-theta s}; truncate where the bound
    // integrates below tol.
    const double T = std::max(-std::log(tol) / theta, 4.0 * h);
    const auto grid = build_scale_grid(params, h, T, true);

    const std::size_t m = grid.values.size() - 1;
    std::vector<double> base(m + 1), xpow(m + 1), x(m + 1);
    for (std::size_t j = 0; j <= m; ++j) {
        const double s = h * double(j);
        const double w = grid.values[j];
        base[j] = theta * std::exp(-theta * s) / (w * w);
        x[j] = 1.0 - 1.0 / w;
        xpow[j] = 1.0;
    }
    std::vector<double> c(std::size_t(K));
    std::vector<double> integrand(m + 1);
    for (int k = 1; k <= K; ++k) {
        for (std::size_t j = 0; j <= m; ++j) integrand[j] = base[j] * xpow[j];
        c[std::size_t(k - 1)] = kernels::trapezoid(integrand, h);
        if (k < K)
            for (std::size_t j = 0; j <= m; ++j) xpow[j] *= x[j];
    }
    return c;
}

}  // namespace splitree
