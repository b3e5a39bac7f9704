#pragma once

#include <complex>
#include <map>
#include <memory>
#include <span>
#include <vector>

#include "splitree/model.hpp"
#include "splitree/scale.hpp"

namespace splitree {

struct ConfigurationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Shared state for the closed-form evaluators: the two scale grids plus
// quadrature and series-extraction controls.
struct MomentContext {
    ModelParams params;
    std::shared_ptr<const ScaleGrid> grid_w;
    std::shared_ptr<const ScaleGrid> grid_w_theta;
    int quad_nodes = 400;          // nodes of outer time integrals
    double series_radius = 0.99;   // extraction radius, in (0,1)
    int series_length = 256;       // minimum extraction length (power of 2)
    int series_length_cap = 2048;  // refuse extractions beyond this
    double pmf_tail_quantile = 1e-10;
    double negative_clamp = 1e-10;

    MomentContext(ModelParams p, std::shared_ptr<const ScaleGrid> w,
                  std::shared_ptr<const ScaleGrid> w_theta);
};

// Builds both grids with horizon 1.5 * t_max.
MomentContext make_context(const ModelParams& params, double t_max,
                           double h = 1e-3, int quad_nodes = 400);

// P_t(N_t = k) = (1/W(t))(1 - 1/W(t))^{k-1}, k >= 1.
double pmf_population(const MomentContext& ctx, int k, double t);

// Eq (2.3): P_t(Z_0(t) = k), including the atom at k = 0.
double pmf_clonal(const MomentContext& ctx, int k, double t);

// Thm 5.2: E_t[A(k,t)] by trapezoidal quadrature on the W_theta grid.
double mean_spectrum(const MomentContext& ctx, int k, double t);

// Eq (5.6): joint pgf of (N^{(t)}_{t-a}, Z_0^{(t)}(a)) for the lower tree
// with base a >= 0 and span s > 0 (t = a + s). v = 1 is handled by the
// analytic limit; |u| at or beyond the geometric pole raises
// std::domain_error.
std::complex<double> joint_pgf(const MomentContext& ctx, double base,
                               double span, std::complex<double> u,
                               std::complex<double> v);

struct JointPmf {
    int n_max = 0;
    std::vector<double> p;  // (n_max+1)^2 row-major; p[n][z], n=0 row zero

    double at(int n, int z) const {
        if (n < 0 || z < 0 || n > n_max || z > n_max) return 0.0;
        return p[std::size_t(n) * std::size_t(n_max + 1) + std::size_t(z)];
    }
    std::vector<double> marginal_n() const;
    std::vector<double> marginal_z() const;
    double total_mass() const;
};

// Two-dimensional coefficient extraction of Eq (5.6) on scaled roots of
// unity; n_max is the geometric (1 - tail_quantile) quantile.
JointPmf joint_pmf(const MomentContext& ctx, double a, double t);

// z-indexed reductions of the same pgf: Pz[z] = P(Z = z) and
// phi[z] = E[N 1_{Z=z}], via one-dimensional extraction at u = 1.
struct LowerMarginals {
    std::vector<double> pz;
    std::vector<double> phi;
};
LowerMarginals lower_tree_marginals(const MomentContext& ctx, double a,
                                    double t);

// E[N(N-1)...(N-r+1)] for N geometric on {1,2,...} with parameter p.
double geometric_factorial_moment(double p, int r);

struct EngineTables;

// Memoizing evaluator for the order-two formulas; tables are built
// single-threaded per horizon t and shared read-only afterwards.
class MomentEngine {
  public:
    explicit MomentEngine(MomentContext ctx);
    ~MomentEngine();
    const MomentContext& context() const { return ctx_; }

    // Prop 5.3 / Eq (5.4): E_t[A(k,t) 1_{Z_0(t)=l}], k >= 1, l >= 0.
    double mixed_mean(int k, int l, double t);

    // Thms 3.1/3.2 at total order 2: E_t[A(k,t)A(l,t)] for k != l,
    // E_t[A(k)(A(k)-1)] for k = l.
    double second_order(int k, int l, double t);

    // Eq (5.7): E_t[A(k,t) N_t].
    double product_with_population(int k, double t);

    double covariance(int k, int l, double t);

  private:
    EngineTables& tables_for(double t);
    MomentContext ctx_;
    std::unique_ptr<EngineTables> tables_;
};

// Prop 6.1 leading term: W(t)^{|n|} |n|!/prod n_i! prod c_{k_i}^{n_i}.
double asymptotic_factorial_moment(const MomentContext& ctx,
                                   std::span<const int> ks,
                                   std::span<const int> ns, double t);

// Thm 3.3 / Thm 7.4 limit-law parameters: e^{-alpha t} A(k,t) ->
// Exp(1) * c_k / psi'(alpha) on non-extinction.
struct LlnDescriptor {
    double alpha = 0.0;
    double psi_prime_alpha = 0.0;
    std::vector<double> scaled_constants;  // c_k / psi'(alpha)
};
LlnDescriptor lln_descriptor(const MomentContext& ctx, int kmax);

}  // namespace splitree
