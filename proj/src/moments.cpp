#include "splitree/moments.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "splitree/fourier.hpp"
#include "splitree/kernels.hpp"

namespace splitree {

namespace {

using cplx = std::complex<double>;

// Number of geometric(p) trials needed to cover all but `quantile` mass.
int geometric_quantile(double p, double quantile) {
    if (p >= 1.0) return 1;
    const double n = std::log(quantile) / std::log1p(-p);
    return std::max(1, int(std::ceil(n)));
}

// Evaluator of Eq (5.6) for the lower tree with base a and span s:
// Wtilde(x) = W(x + a)/W(a) sampled on quad_nodes trapezoid nodes.
struct LowerPgf {
    double theta, span, ets;
    double what_s = 1.0;
    std::vector<double> what, weights, eth;
    double int_w = 0.0;    // int_0^s Wtilde e^{-theta r} dr
    double int_dw = 0.0;   // int_0^s Wtilde(Wtilde - 1) e^{-theta r} dr

    LowerPgf(const MomentContext& ctx, double a, double s)
        : theta(ctx.params.mutation_rate), span(s),
          ets(std::exp(-theta * s)) {
        const auto& w = *ctx.grid_w;
        const int q = ctx.quad_nodes;
        const double wa = w.value_at(a);
        what.resize(std::size_t(q) + 1);
        weights.resize(std::size_t(q) + 1);
        eth.resize(std::size_t(q) + 1);
        const double dr = s / double(q);
        for (int j = 0; j <= q; ++j) {
            const double r = dr * double(j);
            what[std::size_t(j)] = w.value_at(a + r) / wa;
            eth[std::size_t(j)] = std::exp(-theta * r);
            weights[std::size_t(j)] = (j == 0 || j == q) ? 0.5 * dr : dr;
        }
        what_s = what.back();
        for (std::size_t j = 0; j < what.size(); ++j) {
            int_w += weights[j] * what[j] * eth[j];
            int_dw += weights[j] * what[j] * (what[j] - 1.0) * eth[j];
        }
    }

    // Wtilde(x, u) = Wtilde/(Wtilde - u(Wtilde - 1))
    cplx what_u(double wv, cplx u) const {
        return wv / (wv - u * (wv - 1.0));
    }

    // Wtilde_theta(s, u) = e^{-theta s} Wtilde(s,u)
    //                      + theta int_0^s Wtilde(r,u) e^{-theta r} dr
    cplx wtheta_u(cplx u) const {
        cplx acc = 0.0;
        for (std::size_t j = 0; j < what.size(); ++j)
            acc += weights[j] * eth[j] * what_u(what[j], u);
        return ets * what_u(what_s, u) + theta * acc;
    }

    bool at_pole(cplx u) const {
        return std::abs(u * (1.0 - 1.0 / what_s)) >= 1.0 - 1e-12;
    }

    cplx eval(cplx u, cplx gs, cplx wt, cplx v) const {
        if (std::abs(v - 1.0) < 1e-12) return u * gs / what_s;
        const cplx y = v / (1.0 - v);
        return u * (gs / what_s) * (1.0 - ets * gs / (y + wt));
    }

    cplx eval(cplx u, cplx v) const {
        const cplx gs = what_u(what_s, u);
        if (std::abs(v - 1.0) < 1e-12) return u * gs / what_s;
        return eval(u, gs, wtheta_u(u), v);
    }

    // F(1, v) and d/du F(u, v) at u = 1 (real-parameter closed forms).
    void at_u1(cplx v, cplx& f, cplx& df) const {
        const double A = ets * what_s + theta * int_w;
        const double B = ets * what_s * (what_s - 1.0) + theta * int_dw;
        if (std::abs(v - 1.0) < 1e-12) {
            f = 1.0;
            df = what_s;
            return;
        }
        const cplx y = v / (1.0 - v);
        const cplx e = 1.0 - ets * what_s / (y + A);
        f = e;
        df = what_s * e -
             ets * what_s * ((what_s - 1.0) * (y + A) - B) / ((y + A) * (y + A));
    }
};

int extraction_length(const MomentContext& ctx, int n_max) {
    const auto m = next_pow2(std::size_t(std::max(ctx.series_length, n_max + 9)));
    if (int(m) > ctx.series_length_cap)
        throw ConfigurationError(
            "series extraction length exceeds cap (aliasing bound not "
            "attainable); reduce the horizon or raise series_length_cap");
    return int(m);
}

double clamp_coefficient(double v, double /*clamp*/) {
    // negative round-off maps to 0; the normalization tests catch any
    // negativity beyond round-off scale
    return v < 0.0 ? 0.0 : v;
}

}  // namespace

MomentContext::MomentContext(ModelParams p, std::shared_ptr<const ScaleGrid> w,
                             std::shared_ptr<const ScaleGrid> w_theta)
    : params(std::move(p)), grid_w(std::move(w)),
      grid_w_theta(std::move(w_theta)) {
    if (!grid_w || !grid_w_theta)
        throw std::invalid_argument("moment context needs both grids");
    if (!(series_radius > 0.0 && series_radius < 1.0))
        throw std::invalid_argument("series radius must be in (0,1)");
}

MomentContext make_context(const ModelParams& params, double t_max, double h,
                           int quad_nodes) {
    const double T = std::max(1.5 * t_max, t_max + h);
    auto w = std::make_shared<ScaleGrid>(build_scale_grid(params, h, T, false));
    auto wt = std::make_shared<ScaleGrid>(build_scale_grid(params, h, T, true));
    MomentContext ctx(params, std::move(w), std::move(wt));
    ctx.quad_nodes = quad_nodes;
    return ctx;
}

double pmf_population(const MomentContext& ctx, int k, double t) {
    if (k < 1) throw std::invalid_argument("population pmf needs k >= 1");
    const double p = 1.0 / ctx.grid_w->value_at(t);
    return p * std::pow(1.0 - p, k - 1);
}

double pmf_clonal(const MomentContext& ctx, int k, double t) {
    if (k < 0) throw std::invalid_argument("clonal pmf needs k >= 0");
    const double theta = ctx.params.mutation_rate;
    const double w = ctx.grid_w->value_at(t);
    const double wt = ctx.grid_w_theta->value_at(t);
    const double ratio = std::exp(-theta * t) * w / wt;
    if (k == 0) return 1.0 - ratio;
    return (ratio / wt) * std::pow(1.0 - 1.0 / wt, k - 1);
}

double mean_spectrum(const MomentContext& ctx, int k, double t) {
    if (k < 1) throw std::invalid_argument("mean spectrum needs k >= 1");
    const double theta = ctx.params.mutation_rate;
    if (theta == 0.0) return 0.0;
    const auto& wt = *ctx.grid_w_theta;
    if (t > wt.horizon) throw std::domain_error("t outside grid horizon");
    const double h = wt.step;
    const std::size_t full = std::size_t(t / h + 1e-9);
    std::vector<double> f(full + 1);
    for (std::size_t j = 0; j <= full; ++j) {
        const double s = h * double(j);
        const double w = wt.values[j];
        f[j] = theta * std::exp(-theta * s) / (w * w) *
               std::pow(1.0 - 1.0 / w, k - 1);
    }
    double integral = kernels::trapezoid(f, h);
    const double rest = t - h * double(full);
    if (rest > 1e-12) {
        const double w = wt.value_at(t);
        const double f_end = theta * std::exp(-theta * t) / (w * w) *
                             std::pow(1.0 - 1.0 / w, k - 1);
        integral += 0.5 * rest * (f.back() + f_end);
    }
    return ctx.grid_w->value_at(t) * integral;
}

std::complex<double> joint_pgf(const MomentContext& ctx, double base,
                               double span, std::complex<double> u,
                               std::complex<double> v) {
    if (!(base >= 0) || !(span > 0))
        throw std::invalid_argument("joint_pgf needs base >= 0, span > 0");
    LowerPgf pgf(ctx, base, span);
    if (pgf.at_pole(u))
        throw std::domain_error("joint_pgf evaluated at or beyond its pole");
    return pgf.eval(u, v);
}

std::vector<double> JointPmf::marginal_n() const {
    std::vector<double> out(std::size_t(n_max) + 1, 0.0);
    for (int n = 0; n <= n_max; ++n)
        for (int z = 0; z <= n_max; ++z) out[std::size_t(n)] += at(n, z);
    return out;
}

std::vector<double> JointPmf::marginal_z() const {
    std::vector<double> out(std::size_t(n_max) + 1, 0.0);
    for (int n = 0; n <= n_max; ++n)
        for (int z = 0; z <= n_max; ++z) out[std::size_t(z)] += at(n, z);
    return out;
}

double JointPmf::total_mass() const {
    double s = 0.0;
    for (const double v : p) s += v;
    return s;
}

JointPmf joint_pmf(const MomentContext& ctx, double a, double t) {
    if (!(a >= 0) || !(a < t))
        throw std::invalid_argument("joint_pmf needs 0 <= a < t");
    const double p_geo = ctx.grid_w->value_at(a) / ctx.grid_w->value_at(t);
    const int n_max = geometric_quantile(p_geo, ctx.pmf_tail_quantile);
    const int m = extraction_length(ctx, n_max);
    const double r = ctx.series_radius;

    LowerPgf pgf(ctx, a, t - a);

    // Grid of F(r w^j, r w^k), rows indexed by u.
    std::vector<cplx> grid(std::size_t(m) * std::size_t(m));
    std::vector<cplx> us(std::size_t(m)), vs(std::size_t(m));
    for (int j = 0; j < m; ++j) {
        const double ang = 2.0 * std::numbers::pi * double(j) / double(m);
        us[std::size_t(j)] = r * cplx(std::cos(ang), std::sin(ang));
        vs[std::size_t(j)] = us[std::size_t(j)];
    }
    for (int j = 0; j < m; ++j) {
        const cplx u = us[std::size_t(j)];
        const cplx gs = pgf.what_u(pgf.what_s, u);
        const cplx wt = pgf.wtheta_u(u);
        cplx* row = grid.data() + std::size_t(j) * std::size_t(m);
        for (int k = 0; k < m; ++k) row[k] = pgf.eval(u, gs, wt, vs[std::size_t(k)]);
    }

    // 2D DFT: rows (u -> n), then columns (v -> z).
    for (int j = 0; j < m; ++j)
        fft_pow2(grid.data() + std::size_t(j) * std::size_t(m), std::size_t(m));
    std::vector<cplx> col(std::size_t(m));
    for (int k = 0; k <= n_max; ++k) {
        for (int j = 0; j < m; ++j)
            col[std::size_t(j)] = grid[std::size_t(j) * std::size_t(m) + std::size_t(k)];
        fft_pow2(col.data(), std::size_t(m));
        for (int j = 0; j < m; ++j)
            grid[std::size_t(j) * std::size_t(m) + std::size_t(k)] = col[std::size_t(j)];
    }

    JointPmf out;
    out.n_max = n_max;
    out.p.assign(std::size_t(n_max + 1) * std::size_t(n_max + 1), 0.0);
    const double scale = 1.0 / (double(m) * double(m));
    double rn = r;  // r^n
    for (int n = 1; n <= n_max; ++n, rn *= r) {
        double rnz = rn;  // r^{n+z}
        for (int z = 0; z <= n_max; ++z, rnz *= r) {
            const double v =
                grid[std::size_t(n) * std::size_t(m) + std::size_t(z)].real() *
                scale / rnz;
            out.p[std::size_t(n) * std::size_t(n_max + 1) + std::size_t(z)] =
                clamp_coefficient(v, ctx.negative_clamp);
        }
    }
    return out;
}

LowerMarginals lower_tree_marginals(const MomentContext& ctx, double a,
                                    double t) {
    if (!(a >= 0) || !(a < t))
        throw std::invalid_argument("marginals need 0 <= a < t");
    const double p_geo = ctx.grid_w->value_at(a) / ctx.grid_w->value_at(t);
    const int z_max = geometric_quantile(p_geo, ctx.pmf_tail_quantile);
    const int m = extraction_length(ctx, z_max);
    const double r = ctx.series_radius;

    LowerPgf pgf(ctx, a, t - a);
    std::vector<cplx> f(std::size_t(m)), df(std::size_t(m));
    for (int k = 0; k < m; ++k) {
        const double ang = 2.0 * std::numbers::pi * double(k) / double(m);
        const cplx v = r * cplx(std::cos(ang), std::sin(ang));
        pgf.at_u1(v, f[std::size_t(k)], df[std::size_t(k)]);
    }
    fft_pow2(f);
    fft_pow2(df);

    LowerMarginals out;
    out.pz.resize(std::size_t(z_max) + 1);
    out.phi.resize(std::size_t(z_max) + 1);
    double rz = 1.0;
    for (int z = 0; z <= z_max; ++z, rz *= r) {
        out.pz[std::size_t(z)] = clamp_coefficient(
            f[std::size_t(z)].real() / (double(m) * rz), ctx.negative_clamp);
        out.phi[std::size_t(z)] = clamp_coefficient(
            df[std::size_t(z)].real() / (double(m) * rz), ctx.negative_clamp);
    }
    return out;
}

double geometric_factorial_moment(double p, int r) {
    if (!(p > 0.0) || p > 1.0)
        throw std::domain_error("geometric parameter must be in (0,1]");
    if (r < 1) throw std::invalid_argument("order must be >= 1");
    double fact = 1.0;
    for (int i = 2; i <= r; ++i) fact *= double(i);
    return fact * std::pow(1.0 - p, r - 1) / std::pow(p, r);
}

// ---------------------------------------------------------------------
// MomentEngine

struct EngineTables {
    double t = -1.0;
    int q = 0;
    double dt = 0.0;
    std::vector<double> nodes;

    // top-level reductions of joint_pmf(a_i, t)
    bool top_built = false;
    std::vector<std::vector<double>> top_pz, top_phi;

    // full-tree reductions of joint_pmf(0, a_i)
    bool full_built = false;
    std::vector<std::vector<double>> full_phi;

    // g tables: per node, rows l = 0..g_lmax of length z_cap+1
    int g_lmax = -1;
    int z_cap = 0;
    std::vector<std::vector<double>> g;

    // prefix mean_spectrum per k sampled at the nodes
    std::map<int, std::vector<double>> spectrum_at_nodes;

    // nested pair reductions U[l](j, i) = T_l(a_j, a_i), j <= i
    std::map<int, std::vector<double>> pair_tables;

    double node_weight(int i) const {
        return (i == 0 || i == q) ? 0.5 * dt : dt;
    }
    double inner_weight(int j, int i) const {
        return (j == 0 || j == i) ? 0.5 * dt : dt;
    }
};

MomentEngine::MomentEngine(MomentContext ctx) : ctx_(std::move(ctx)) {}
MomentEngine::~MomentEngine() = default;

EngineTables& MomentEngine::tables_for(double t) {
    if (!(t > 0)) throw std::invalid_argument("horizon must be > 0");
    if (tables_ && tables_->t == t) return *tables_;
    tables_ = std::make_unique<Tables>();
    tables_->t = t;
    tables_->q = ctx_.quad_nodes;
    tables_->dt = t / double(tables_->q);
    tables_->nodes.resize(std::size_t(tables_->q) + 1);
    for (int i = 0; i <= tables_->q; ++i)
        tables_->nodes[std::size_t(i)] = tables_->dt * double(i);
    const double p0 = 1.0 / ctx_.grid_w->value_at(t);
    tables_->z_cap = geometric_quantile(p0, ctx_.pmf_tail_quantile);
    return *tables_;
}

namespace {

// T_l = E[(N - Z) g_l(Z)] + E[Z g_l(Z - 1)] from z-indexed reductions.
double combine_reduction(const std::vector<double>& pz,
                         const std::vector<double>& phi,
                         const std::vector<double>& g_row) {
    double acc = 0.0;
    const std::size_t zs = std::min(pz.size(), g_row.size());
    for (std::size_t z = 0; z < zs; ++z) {
        const double zp = double(z) * pz[z];
        acc += (phi[z] - zp) * g_row[z];
        if (z > 0) acc += zp * g_row[z - 1];
    }
    // g_l(z-1) entries beyond the g row end are zero by construction of
    // the row length (z_cap covers the pmf quantile).
    for (std::size_t z = zs; z < pz.size(); ++z)
        if (z > 0 && z - 1 < g_row.size())
            acc += double(z) * pz[z] * g_row[z - 1];
    return acc;
}

}  // namespace

namespace {

void build_g_tables(const MomentContext& ctx, EngineTables& tb, int l_max) {
    if (tb.g_lmax >= l_max) return;
    const int zc = tb.z_cap;
    tb.g.assign(tb.nodes.size(), {});
    for (std::size_t i = 0; i < tb.nodes.size(); ++i) {
        const double a = tb.nodes[i];
        std::vector<double> x(std::size_t(l_max) + 1);
        for (int l = 0; l <= l_max; ++l)
            x[std::size_t(l)] = pmf_clonal(ctx, l, a);
        // g[l*(zc+1) + z] = P(sum of z i.i.d. clonal counts at time a = l)
        auto& g = tb.g[i];
        g.assign(std::size_t(l_max + 1) * std::size_t(zc + 1), 0.0);
        std::vector<double> cur(std::size_t(l_max) + 1, 0.0), nxt(cur);
        cur[0] = 1.0;
        g[0] = 1.0;  // l = 0, z = 0
        for (int z = 1; z <= zc; ++z) {
            std::fill(nxt.begin(), nxt.end(), 0.0);
            for (int l = 0; l <= l_max; ++l) {
                const double c = cur[std::size_t(l)];
                if (c == 0.0) continue;
                for (int j = 0; j + l <= l_max; ++j)
                    nxt[std::size_t(l + j)] += c * x[std::size_t(j)];
            }
            std::swap(cur, nxt);
            for (int l = 0; l <= l_max; ++l)
                g[std::size_t(l) * std::size_t(zc + 1) + std::size_t(z)] =
                    cur[std::size_t(l)];
        }
    }
    tb.g_lmax = l_max;
}

std::vector<double> g_row(const EngineTables& tb, std::size_t node, int l) {
    const int zc = tb.z_cap;
    const auto& g = tb.g[node];
    const auto* begin = g.data() + std::size_t(l) * std::size_t(zc + 1);
    return std::vector<double>(begin, begin + zc + 1);
}

void build_top_tables(const MomentContext& ctx, EngineTables& tb) {
    if (tb.top_built) return;
    tb.top_pz.resize(tb.nodes.size());
    tb.top_phi.resize(tb.nodes.size());
    for (std::size_t i = 0; i < tb.nodes.size(); ++i) {
        const double a = tb.nodes[i];
        if (i + 1 == tb.nodes.size()) {
            tb.top_pz[i] = {0.0, 1.0};   // span 0: N = Z = 1
            tb.top_phi[i] = {0.0, 1.0};
        } else {
            const auto pmf = joint_pmf(ctx, a, tb.t);
            auto& pz = tb.top_pz[i];
            auto& phi = tb.top_phi[i];
            pz.assign(std::size_t(pmf.n_max) + 1, 0.0);
            phi.assign(std::size_t(pmf.n_max) + 1, 0.0);
            for (int n = 1; n <= pmf.n_max; ++n)
                for (int z = 0; z <= pmf.n_max; ++z) {
                    const double v = pmf.at(n, z);
                    pz[std::size_t(z)] += v;
                    phi[std::size_t(z)] += double(n) * v;
                }
        }
    }
    tb.top_built = true;
}

void build_full_tables(const MomentContext& ctx, EngineTables& tb) {
    if (tb.full_built) return;
    tb.full_phi.resize(tb.nodes.size());
    for (std::size_t i = 0; i < tb.nodes.size(); ++i) {
        const double a = tb.nodes[i];
        if (i == 0) {
            tb.full_phi[i] = {0.0, 1.0};  // N_0 = Z_0(0) = 1
        } else {
            const auto pmf = joint_pmf(ctx, 0.0, a);
            auto& phi = tb.full_phi[i];
            phi.assign(std::size_t(pmf.n_max) + 1, 0.0);
            for (int n = 1; n <= pmf.n_max; ++n)
                for (int z = 0; z <= pmf.n_max; ++z)
                    phi[std::size_t(z)] += double(n) * pmf.at(n, z);
        }
    }
    tb.full_built = true;
}

void build_pair_tables(const MomentContext& ctx, EngineTables& tb,
                       int l) {
    if (tb.pair_tables.count(l)) return;
    build_g_tables(ctx, tb, std::max(l, tb.g_lmax));
    const std::size_t nn = tb.nodes.size();
    std::vector<double> u(nn * nn, 0.0);
    for (std::size_t i = 1; i < nn; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            double val;
            if (j == i) {
                val = l == 0 ? 1.0 : 0.0;  // degenerate span: N = Z = 1
            } else {
                const auto red =
                    lower_tree_marginals(ctx, tb.nodes[j], tb.nodes[i]);
                val = combine_reduction(red.pz, red.phi, g_row(tb, j, l));
            }
            u[j * nn + i] = val;
        }
    }
    tb.pair_tables.emplace(l, std::move(u));
}

const std::vector<double>& spectrum_nodes(const MomentContext& ctx,
                                          EngineTables& tb, int k) {
    auto it = tb.spectrum_at_nodes.find(k);
    if (it != tb.spectrum_at_nodes.end()) return it->second;
    // one prefix pass over the fine grid, then sampled at the nodes
    const auto& wt = *ctx.grid_w_theta;
    const double theta = ctx.params.mutation_rate;
    const double h = wt.step;
    const std::size_t fine = std::max<std::size_t>(std::size_t(tb.t / h + 1e-9), 1);
    std::vector<double> prefix(fine + 1, 0.0);
    const double w0 = wt.values[0];
    double prev = theta / (w0 * w0) * std::pow(1.0 - 1.0 / w0, k - 1);
    for (std::size_t j = 1; j <= fine; ++j) {
        const double s = h * double(j);
        const double w = wt.values[j];
        const double cur = theta * std::exp(-theta * s) / (w * w) *
                           std::pow(1.0 - 1.0 / w, k - 1);
        prefix[j] = prefix[j - 1] + 0.5 * h * (prev + cur);
        prev = cur;
    }
    std::vector<double> out(tb.nodes.size());
    for (std::size_t i = 0; i < tb.nodes.size(); ++i) {
        const double a = tb.nodes[i];
        const double pos = a / h;
        const std::size_t c = std::min(std::size_t(pos), fine - 1);
        const double frac = pos - double(c);
        const double integral =
            prefix[c] + frac * (prefix[c + 1] - prefix[c]);
        out[i] = ctx.grid_w->value_at(a) * integral;
    }
    return tb.spectrum_at_nodes.emplace(k, std::move(out)).first->second;
}

}  // namespace

double MomentEngine::mixed_mean(int k, int l, double t) {
    if (k < 1 || l < 0)
        throw std::invalid_argument("mixed_mean needs k >= 1, l >= 0");
    if (ctx_.params.mutation_rate == 0.0) return 0.0;
    auto& tb = tables_for(t);
    build_top_tables(ctx_, tb);
    build_g_tables(ctx_, tb, std::max(l, tb.g_lmax));
    const double theta = ctx_.params.mutation_rate;
    double acc = 0.0;
    for (std::size_t i = 0; i < tb.nodes.size(); ++i) {
        const double pk = pmf_clonal(ctx_, k, tb.nodes[i]);
        if (pk == 0.0) continue;
        const double term =
            combine_reduction(tb.top_pz[i], tb.top_phi[i], g_row(tb, i, l));
        acc += tb.node_weight(int(i)) * pk * term;
    }
    return theta * acc;
}

double MomentEngine::second_order(int k, int l, double t) {
    if (k < 1 || l < 1)
        throw std::invalid_argument("second_order needs k, l >= 1");
    if (ctx_.params.mutation_rate == 0.0) return 0.0;
    auto& tb = tables_for(t);
    build_pair_tables(ctx_, tb, k);
    build_pair_tables(ctx_, tb, l);
    const auto& ms_k = spectrum_nodes(ctx_, tb, k);
    const auto& ms_l = spectrum_nodes(ctx_, tb, l);
    const auto& u_k = tb.pair_tables.at(k);
    const auto& u_l = tb.pair_tables.at(l);
    const double theta = ctx_.params.mutation_rate;
    const double w_t = ctx_.grid_w->value_at(t);
    const std::size_t nn = tb.nodes.size();

    // clonal pmf values at the nodes for both indices
    std::vector<double> pk(nn), pl(nn);
    for (std::size_t j = 0; j < nn; ++j) {
        pk[j] = pmf_clonal(ctx_, k, tb.nodes[j]);
        pl[j] = pmf_clonal(ctx_, l, tb.nodes[j]);
    }

    double acc = 0.0;
    for (std::size_t i = 0; i < nn; ++i) {
        const double w_a = ctx_.grid_w->value_at(tb.nodes[i]);
        const double p_geo = w_a / w_t;
        const double e1 = 1.0 / p_geo;
        const double e2 = geometric_factorial_moment(p_geo, 2);
        // nested mixed means over [0, a_i]:
        //   E_a[A(l) 1_{Z=k}] uses pmf_clonal(l) x T_k, and symmetrically.
        double mm_lk = 0.0, mm_kl = 0.0;
        if (i > 0) {
            for (std::size_t j = 0; j <= i; ++j) {
                const double w = tb.inner_weight(int(j), int(i));
                mm_lk += w * pl[j] * u_k[j * nn + i];
                mm_kl += w * pk[j] * u_l[j * nn + i];
            }
            mm_lk *= theta;
            mm_kl *= theta;
        }
        const double integrand =
            e2 * (pk[i] * ms_l[i] + pl[i] * ms_k[i]) + e1 * (mm_lk + mm_kl);
        acc += tb.node_weight(int(i)) * integrand;
    }
    return theta * acc;
}

double MomentEngine::product_with_population(int k, double t) {
    if (k < 1) throw std::invalid_argument("k must be >= 1");
    if (ctx_.params.mutation_rate == 0.0) return 0.0;
    auto& tb = tables_for(t);
    build_full_tables(ctx_, tb);
    const double theta = ctx_.params.mutation_rate;
    const double w_t = ctx_.grid_w->value_at(t);
    double acc = 0.0;
    for (std::size_t i = 0; i < tb.nodes.size(); ++i) {
        const double a = tb.nodes[i];
        const double w_a = ctx_.grid_w->value_at(a);
        const double p_geo = w_a / w_t;
        const double e1 = 1.0 / p_geo;
        const double e2 = geometric_factorial_moment(p_geo, 2);
        const auto& phi = tb.full_phi[i];
        const double enz =
            std::size_t(k) < phi.size() ? phi[std::size_t(k)] : 0.0;
        acc += tb.node_weight(int(i)) *
               (e2 * w_a * pmf_clonal(ctx_, k, a) + e1 * enz);
    }
    return theta * acc;
}

double MomentEngine::covariance(int k, int l, double t) {
    const double mk = mean_spectrum(ctx_, k, t);
    const double ml = mean_spectrum(ctx_, l, t);
    double second = second_order(k, l, t);
    if (k == l) second += mk;  // E[A^2] = E[A(A-1)] + E[A]
    return second - mk * ml;
}

double asymptotic_factorial_moment(const MomentContext& ctx,
                                   std::span<const int> ks,
                                   std::span<const int> ns, double t) {
    if (ks.size() != ns.size() || ks.empty())
        throw std::invalid_argument("ks and ns must align and be nonempty");
    if (!(ctx.grid_w->alpha > 0))
        throw std::domain_error("requires supercritical");
    int total = 0, kmax = 0;
    for (std::size_t i = 0; i < ks.size(); ++i) {
        if (ns[i] < 1 || ks[i] < 1)
            throw std::invalid_argument("orders and sizes must be >= 1");
        total += ns[i];
        kmax = std::max(kmax, ks[i]);
    }
    const auto c = clonal_constants(ctx.params, kmax, 1e-9);
    double value = 1.0;
    for (int i = 2; i <= total; ++i) value *= double(i);  // |n|!
    for (std::size_t i = 0; i < ks.size(); ++i) {
        double fact = 1.0;
        for (int j = 2; j <= ns[i]; ++j) fact *= double(j);
        value /= fact;
        value *= std::pow(c[std::size_t(ks[i] - 1)], ns[i]);
    }
    return value * std::pow(ctx.grid_w->value_at(t), total);
}

LlnDescriptor lln_descriptor(const MomentContext& ctx, int kmax) {
    if (!(ctx.grid_w->alpha > 0))
        throw std::domain_error("requires supercritical");
    if (!(ctx.params.mutation_rate > 0))
        throw std::domain_error("requires mutations");
    LlnDescriptor d;
    d.alpha = ctx.grid_w->alpha;
    d.psi_prime_alpha = ctx.grid_w->psi_prime_alpha;
    const auto c = clonal_constants(ctx.params, kmax, 1e-9);
    d.scaled_constants.resize(c.size());
    for (std::size_t i = 0; i < c.size(); ++i)
        d.scaled_constants[i] = c[i] / d.psi_prime_alpha;
    return d;
}

}  // namespace splitree
