#include "splitree/harness.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <sstream>
#include <stdexcept>

#include "splitree/kernels.hpp"

namespace splitree {

namespace {

// stream-id namespaces keep the checks independent of battery composition
constexpr std::uint64_t stream_ns(std::uint64_t check_id) {
    return check_id << 44;
}

constexpr std::uint64_t kNsCppGof = stream_ns(1);
constexpr std::uint64_t kNsFwdGof = stream_ns(2);
constexpr std::uint64_t kNsClonal = stream_ns(3);
constexpr std::uint64_t kNsMean = stream_ns(4);
constexpr std::uint64_t kNsOrder2 = stream_ns(5);
constexpr std::uint64_t kNsJoint = stream_ns(6);
constexpr std::uint64_t kNsFwdMoments = stream_ns(7);
constexpr std::uint64_t kNsGraft = stream_ns(8);
constexpr std::uint64_t kNsGraftDirect = stream_ns(9);
constexpr std::uint64_t kNsDescent = stream_ns(10);
constexpr std::uint64_t kNsYule = stream_ns(11);
constexpr std::uint64_t kNsL2 = stream_ns(12);  // +ladder index
constexpr std::uint64_t kNsAsym = stream_ns(20); // +0 small, +1 large
constexpr std::uint64_t kNsConverge = stream_ns(24);

ComparisonReport p_report(std::string name, const GofResult& gof,
                          std::uint64_t replicas) {
    ComparisonReport r;
    r.quantity = std::move(name);
    r.estimate = gof.statistic;
    r.p_value = gof.p_value;
    r.replicas = replicas;
    r.pass = gof.p_value > kPThreshold;
    return r;
}

ComparisonReport z_report(std::string name, double theory, const MeanAcc& acc) {
    ComparisonReport r;
    r.quantity = std::move(name);
    r.theory = theory;
    r.estimate = acc.mean();
    r.se = acc.se();
    r.z = welch_z(r.estimate, r.se, theory);
    r.replicas = acc.n;
    r.pass = std::abs(r.z) < kZThreshold;
    return r;
}

}  // namespace

// ----------------------------------------------------------------------
// CSV

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string report_csv(const std::vector<ComparisonReport>& reports) {
    std::string out = "quantity,theory,estimate,se,z,p_value,replicas,pass\n";
    for (const auto& r : reports) {
        out += r.quantity;
        out += ',';
        out += format_double(r.theory);
        out += ',';
        out += format_double(r.estimate);
        out += ',';
        out += format_double(r.se);
        out += ',';
        out += format_double(r.z);
        out += ',';
        out += format_double(r.p_value);
        out += ',';
        out += std::to_string(r.replicas);
        out += ',';
        out += r.pass ? "1" : "0";
        out += '\n';
    }
    return out;
}

std::vector<ComparisonReport> parse_report_csv(const std::string& text) {
    std::vector<ComparisonReport> out;
    std::istringstream in(text);
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string field;
        ComparisonReport r;
        std::getline(ls, r.quantity, ',');
        std::getline(ls, field, ',');
        r.theory = std::strtod(field.c_str(), nullptr);
        std::getline(ls, field, ',');
        r.estimate = std::strtod(field.c_str(), nullptr);
        std::getline(ls, field, ',');
        r.se = std::strtod(field.c_str(), nullptr);
        std::getline(ls, field, ',');
        r.z = std::strtod(field.c_str(), nullptr);
        std::getline(ls, field, ',');
        r.p_value = std::strtod(field.c_str(), nullptr);
        std::getline(ls, field, ',');
        r.replicas = std::strtoull(field.c_str(), nullptr, 10);
        std::getline(ls, field, ',');
        r.pass = field == "1";
        out.push_back(std::move(r));
    }
    return out;
}

bool all_pass(const std::vector<ComparisonReport>& reports) {
    for (const auto& r : reports)
        if (!r.pass) return false;
    return true;
}

// ----------------------------------------------------------------------
// Harness

Harness::Harness(ModelParams params, double t, double grid_step, int workers)
    : params_(params), t_(t), workers_(std::max(1, workers)),
      ctx_(make_context(params, t, grid_step)),
      engine_(ctx_) {}

const SurvivalCurve& Harness::survival() {
    if (!survival_) survival_.emplace(params_, *ctx_.grid_w);
    return *survival_;
}

SpectrumSample Harness::sample_replica(std::uint64_t seed,
                                       std::uint64_t replica) {
    RngStream rng(seed, kNsMean + replica);
    const auto cpp = sample_cpp(grid_w(), t_, rng);
    const auto muts = scatter_mutations(cpp, params_.mutation_rate, rng);
    return extract_partition(cpp, muts);
}

namespace {

struct PopulationAcc {
    HistAcc hist;
    void merge(const PopulationAcc& o) { hist.merge(o.hist); }
};

struct ForwardPopAcc {
    HistAcc hist;  // conditional on survival
    std::uint64_t total = 0, survived = 0, overflowed = 0;
    void merge(const ForwardPopAcc& o) {
        hist.merge(o.hist);
        total += o.total;
        survived += o.survived;
        overflowed += o.overflowed;
    }
};

}  // namespace

std::vector<ComparisonReport> Harness::population_law_checks(
    std::uint64_t cpp_reps, std::uint64_t fwd_reps, std::uint64_t seed) {
    const double p_geo = 1.0 / grid_w().value_at(t_);
    const std::size_t cap = 2048;

    auto cpp_acc = run_replicas<PopulationAcc>(
        cpp_reps, seed, kNsCppGof, workers_,
        [&](std::uint64_t, RngStream& rng, PopulationAcc& acc) {
            acc.hist.ensure(cap);
            const auto cpp = sample_cpp(grid_w(), t_, rng);
            acc.hist.add(cpp.size() - 1);
        });

    auto fwd_acc = run_replicas<ForwardPopAcc>(
        fwd_reps, seed, kNsFwdGof, workers_,
        [&](std::uint64_t, RngStream& rng, ForwardPopAcc& acc) {
            acc.hist.ensure(cap);
            const auto res = simulate_forward(params_, t_, 1'000'000, rng);
            ++acc.total;
            if (res.overflowed) {
                ++acc.overflowed;
                return;
            }
            if (res.survived) {
                ++acc.survived;
                acc.hist.add(res.spectrum.population - 1);
            }
        });

    std::vector<ComparisonReport> out;
    out.push_back(p_report(
        "cpp_population_geometric_gof",
        gof_geometric(cpp_acc.hist.counts, p_geo, cpp_acc.hist.overflow),
        cpp_reps));
    out.push_back(p_report(
        "forward_population_geometric_gof",
        gof_geometric(fwd_acc.hist.counts, p_geo, fwd_acc.hist.overflow),
        fwd_acc.survived));
    out.push_back(p_report(
        "cpp_vs_forward_population_two_sample",
        two_sample_counts(cpp_acc.hist.counts, fwd_acc.hist.counts),
        cpp_reps + fwd_acc.survived));
    return out;
}

ComparisonReport Harness::clonal_pmf_check(int kmax, std::uint64_t reps,
                                           std::uint64_t seed) {
    auto acc = run_replicas<PopulationAcc>(
        reps, seed, kNsClonal, workers_,
        [&](std::uint64_t, RngStream& rng, PopulationAcc& acc) {
            acc.hist.ensure(1024);
            const auto cpp = sample_cpp(grid_w(), t_, rng);
            const auto muts =
                scatter_mutations(cpp, params_.mutation_rate, rng);
            PartitionExtractor extract;
            acc.hist.add(extract(cpp, muts).clonal);
        });

    std::vector<std::uint64_t> obs(std::size_t(kmax) + 1, 0);
    std::uint64_t tail = acc.hist.overflow;
    for (std::size_t i = 0; i < acc.hist.counts.size(); ++i) {
        if (i <= std::size_t(kmax))
            obs[i] = acc.hist.counts[i];
        else
            tail += acc.hist.counts[i];
    }
    std::vector<double> probs(std::size_t(kmax) + 1);
    double mass = 0.0;
    for (int k = 0; k <= kmax; ++k) {
        probs[std::size_t(k)] = pmf_clonal(ctx_, k, t_);
        mass += probs[std::size_t(k)];
    }
    return p_report("clonal_pmf_gof_theta=" +
                        format_double(params_.mutation_rate),
                    gof_counts(obs, probs, 1.0 - mass, tail), reps);
}

namespace {

struct SpectrumMeanAcc {
    static constexpr int kMax = 8;
    MeanAcc a[kMax];
    void merge(const SpectrumMeanAcc& o) {
        for (int i = 0; i < kMax; ++i) a[i].merge(o.a[i]);
    }
};

}  // namespace

// sum_{k<=K} k E[A(k,t)] plus the closed-form geometric tail of the
// series, which collapses to W(t)(1 - e^{-theta t}) as K -> inf.
static double spectrum_series_identity(const MomentContext& ctx, double t,
                                       int K) {
    double partial = 0.0;
    for (int k = 1; k <= K; ++k)
        partial += double(k) * mean_spectrum(ctx, k, t);
    // tail: W(t) int theta e^{-theta a} / W_th^2 sum_{k>K} k x^{k-1} da,
    // sum_{k>K} k x^{k-1} = ((K+1) x^K (1-x) + x^{K+1}) / (1-x)^2
    const auto& wt = *ctx.grid_w_theta;
    const double theta = ctx.params.mutation_rate;
    const double h = wt.step;
    const std::size_t fine = std::size_t(t / h + 1e-9);
    std::vector<double> f(fine + 1);
    for (std::size_t j = 0; j <= fine; ++j) {
        const double s = h * double(j);
        const double w = wt.values[j];
        const double x = 1.0 - 1.0 / w;
        const double one_minus = 1.0 / w;
        const double tail_sum =
            (double(K + 1) * std::pow(x, K) * one_minus + std::pow(x, K + 1)) /
            (one_minus * one_minus);
        f[j] = theta * std::exp(-theta * s) / (w * w) * tail_sum;
    }
    const double tail = kernels::trapezoid(f, h);
    return partial + ctx.grid_w->value_at(t) * tail;
}

std::vector<ComparisonReport> Harness::mean_spectrum_checks(
    int kmax, std::uint64_t reps, std::uint64_t seed) {
    if (kmax > SpectrumMeanAcc::kMax)
        throw std::invalid_argument("kmax too large for accumulator");
    auto acc = run_replicas<SpectrumMeanAcc>(
        reps, seed, kNsMean, workers_,
        [&](std::uint64_t, RngStream& rng, SpectrumMeanAcc& acc) {
            const auto cpp = sample_cpp(grid_w(), t_, rng);
            const auto muts =
                scatter_mutations(cpp, params_.mutation_rate, rng);
            PartitionExtractor extract;
            const auto s = extract(cpp, muts);
            for (int k = 1; k <= kmax; ++k)
                acc.a[k - 1].add(double(s.families_of_size(std::uint32_t(k))));
        });

    std::vector<ComparisonReport> out;
    for (int k = 1; k <= kmax; ++k)
        out.push_back(z_report("mean_spectrum_k=" + std::to_string(k),
                               mean_spectrum(ctx_, k, t_), acc.a[k - 1]));

    // deterministic series identity, partial sum + analytic tail
    const double w_t = grid_w().value_at(t_);
    const double target =
        w_t * (1.0 - std::exp(-params_.mutation_rate * t_));
    const double series = spectrum_series_identity(ctx_, t_, 200);
    ComparisonReport id;
    id.quantity = "mean_spectrum_series_identity";
    id.theory = target;
    id.estimate = series;
    id.pass = std::abs(series - target) < 1e-3;
    out.push_back(id);
    return out;
}

namespace {

struct Order2Acc {
    MeanAcc a1, a2;
    MeanAcc a11, a12, a22;           // A1(A1-1), A1A2, A2(A2-1)
    MeanAcc az[2][3];                // A_k 1_{Z0=l}, k in {1,2}, l in {0,1,2}
    MeanAcc an1, an2;                // A_k N
    std::uint64_t conservation_failures = 0;
    void merge(const Order2Acc& o) {
        a1.merge(o.a1);
        a2.merge(o.a2);
        a11.merge(o.a11);
        a12.merge(o.a12);
        a22.merge(o.a22);
        for (int k = 0; k < 2; ++k)
            for (int l = 0; l < 3; ++l) az[k][l].merge(o.az[k][l]);
        an1.merge(o.an1);
        an2.merge(o.an2);
        conservation_failures += o.conservation_failures;
    }
};

}  // namespace

std::vector<ComparisonReport> Harness::order2_checks(std::uint64_t reps,
                                                     std::uint64_t seed) {
    auto acc = run_replicas<Order2Acc>(
        reps, seed, kNsOrder2, workers_,
        [&](std::uint64_t, RngStream& rng, Order2Acc& acc) {
            const auto cpp = sample_cpp(grid_w(), t_, rng);
            const auto muts =
                scatter_mutations(cpp, params_.mutation_rate, rng);
            PartitionExtractor extract;
            const auto s = extract(cpp, muts);
            if (!s.conserved()) ++acc.conservation_failures;
            const double a1 = s.families_of_size(1);
            const double a2 = s.families_of_size(2);
            const double n = s.population;
            acc.a1.add(a1);
            acc.a2.add(a2);
            acc.a11.add(a1 * (a1 - 1.0));
            acc.a12.add(a1 * a2);
            acc.a22.add(a2 * (a2 - 1.0));
            for (int l = 0; l < 3; ++l) {
                const double ind = s.clonal == std::uint32_t(l) ? 1.0 : 0.0;
                acc.az[0][l].add(a1 * ind);
                acc.az[1][l].add(a2 * ind);
            }
            acc.an1.add(a1 * n);
            acc.an2.add(a2 * n);
        });

    std::vector<ComparisonReport> out;
    for (int k = 1; k <= 2; ++k)
        for (int l = 0; l <= 2; ++l)
            out.push_back(z_report(
                "mixed_mean_k=" + std::to_string(k) + "_l=" + std::to_string(l),
                engine_.mixed_mean(k, l, t_), acc.az[k - 1][l]));

    out.push_back(z_report("second_order_k=1_l=1",
                           engine_.second_order(1, 1, t_), acc.a11));
    out.push_back(z_report("second_order_k=1_l=2",
                           engine_.second_order(1, 2, t_), acc.a12));
    out.push_back(z_report("second_order_k=2_l=2",
                           engine_.second_order(2, 2, t_), acc.a22));

    ComparisonReport sym;
    sym.quantity = "second_order_symmetry";
    sym.theory = engine_.second_order(1, 2, t_);
    sym.estimate = engine_.second_order(2, 1, t_);
    sym.pass = sym.theory == sym.estimate;
    out.push_back(sym);

    out.push_back(z_report("product_with_population_k=1",
                           engine_.product_with_population(1, t_), acc.an1));
    out.push_back(z_report("product_with_population_k=2",
                           engine_.product_with_population(2, t_), acc.an2));

    ComparisonReport cons;
    cons.quantity = "conservation_violations";
    cons.theory = 0.0;
    cons.estimate = double(acc.conservation_failures);
    cons.replicas = reps;
    cons.pass = acc.conservation_failures == 0;
    out.push_back(cons);

    out.push_back(mixed_partition_check(1, 1e-4));
    out.push_back(mixed_partition_check(2, 1e-4));
    return out;
}

ComparisonReport Harness::mixed_partition_check(int k, double rel_tol) {
    // sum over l up to the Z0 pmf tail quantile
    double mass = 0.0;
    int lmax = 0;
    while (mass < 1.0 - ctx_.pmf_tail_quantile && lmax < 400) {
        mass += pmf_clonal(ctx_, lmax, t_);
        ++lmax;
    }
    double total = 0.0;
    for (int l = 0; l <= lmax; ++l) total += engine_.mixed_mean(k, l, t_);
    const double target = mean_spectrum(ctx_, k, t_);
    ComparisonReport r;
    r.quantity = "mixed_mean_partition_k=" + std::to_string(k);
    r.theory = target;
    r.estimate = total;
    r.pass = std::abs(total - target) <= rel_tol * std::abs(target);
    return r;
}

namespace {

struct JointAcc {
    std::vector<std::uint64_t> table;  // (n_max+1)^2
    std::uint64_t outside = 0, total = 0;
    int n_max = 0;
    void init(int nmax) {
        n_max = nmax;
        table.assign(std::size_t(nmax + 1) * std::size_t(nmax + 1), 0);
    }
    void add(std::uint32_t n, std::uint32_t z) {
        ++total;
        if (int(n) <= n_max && int(z) <= n_max)
            ++table[std::size_t(n) * std::size_t(n_max + 1) + z];
        else
            ++outside;
    }
    void merge(const JointAcc& o) {
        if (table.empty()) init(o.n_max);
        for (std::size_t i = 0; i < o.table.size(); ++i) table[i] += o.table[i];
        outside += o.outside;
        total += o.total;
    }
};

}  // namespace

std::vector<ComparisonReport> Harness::joint_pmf_checks(
    double a, std::uint64_t reps, std::uint64_t seed, double tv_threshold,
    double marginal_tol) {
    const auto pmf = joint_pmf(ctx_, a, t_);

    auto acc = run_replicas<JointAcc>(
        reps, seed, kNsJoint, workers_,
        [&](std::uint64_t, RngStream& rng, JointAcc& acc) {
            if (acc.table.empty()) acc.init(pmf.n_max);
            const auto s = sample_lower_joint(grid_w(), a, t_,
                                              params_.mutation_rate, rng);
            acc.add(s.population, s.clonal);
        });

    double tv = double(acc.outside) / double(acc.total);
    double theory_mass = 0.0;
    for (int n = 0; n <= pmf.n_max; ++n)
        for (int z = 0; z <= pmf.n_max; ++z) {
            const double emp =
                double(acc.table[std::size_t(n) * std::size_t(pmf.n_max + 1) +
                                 std::size_t(z)]) /
                double(acc.total);
            tv += std::abs(emp - pmf.at(n, z));
            theory_mass += pmf.at(n, z);
        }
    tv += 1.0 - theory_mass;  // extracted mass beyond the table
    tv *= 0.5;

    std::vector<ComparisonReport> out;
    ComparisonReport tvr;
    tvr.quantity = "joint_pmf_tv_a=" + format_double(a);
    tvr.estimate = tv;
    tvr.theory = tv_threshold;
    tvr.replicas = reps;
    tvr.pass = tv < tv_threshold;
    out.push_back(tvr);

    const double p_geo = grid_w().value_at(a) / grid_w().value_at(t_);
    const auto marg = pmf.marginal_n();
    double worst = 0.0;
    double q = 1.0;
    for (int n = 1; n <= pmf.n_max; ++n) {
        const double geo = p_geo * q;
        q *= 1.0 - p_geo;
        worst = std::max(worst, std::abs(marg[std::size_t(n)] - geo));
    }
    ComparisonReport mr;
    mr.quantity = "joint_pmf_marginal_error";
    mr.estimate = worst;
    mr.theory = marginal_tol;
    mr.pass = worst < marginal_tol;
    out.push_back(mr);

    ComparisonReport nm;
    nm.quantity = "joint_pmf_total_mass";
    nm.theory = 1.0;
    nm.estimate = pmf.total_mass();
    nm.pass = std::abs(nm.estimate - 1.0) < 1e-6;
    out.push_back(nm);
    return out;
}

namespace {

struct ForwardMomentAcc {
    MeanAcc n_all;
    std::uint64_t total = 0, survived = 0, overflowed = 0;
    void merge(const ForwardMomentAcc& o) {
        n_all.merge(o.n_all);
        total += o.total;
        survived += o.survived;
        overflowed += o.overflowed;
    }
};

}  // namespace

std::vector<ComparisonReport> Harness::forward_moment_checks(
    std::uint64_t reps, std::uint64_t seed) {
    auto acc = run_replicas<ForwardMomentAcc>(
        reps, seed, kNsFwdMoments, workers_,
        [&](std::uint64_t, RngStream& rng, ForwardMomentAcc& acc) {
            const auto res = simulate_forward(params_, t_, 1'000'000, rng);
            ++acc.total;
            if (res.overflowed) {
                ++acc.overflowed;
                return;
            }
            if (res.survived) ++acc.survived;
            acc.n_all.add(double(res.spectrum.population));
        });

    std::vector<ComparisonReport> out;
    const double p_theory = survival().survival_at(t_);
    const double p_hat = double(acc.survived) / double(acc.total);
    ComparisonReport sr;
    sr.quantity = "forward_survival_fraction";
    sr.theory = p_theory;
    sr.estimate = p_hat;
    sr.se = std::sqrt(p_theory * (1.0 - p_theory) / double(acc.total));
    sr.z = welch_z(p_hat, sr.se, p_theory);
    sr.replicas = acc.total;
    sr.pass = std::abs(sr.z) < kZThreshold;
    out.push_back(sr);

    out.push_back(z_report("forward_mean_population",
                           survival().mean_population_at(t_), acc.n_all));
    return out;
}

namespace {

struct GraftAcc {
    HistAcc n_hist, lower_hist;
    void merge(const GraftAcc& o) {
        n_hist.merge(o.n_hist);
        lower_hist.merge(o.lower_hist);
    }
};

}  // namespace

std::vector<ComparisonReport> Harness::graft_checks(double a,
                                                    std::uint64_t reps,
                                                    std::uint64_t seed) {
    auto grafted = run_replicas<GraftAcc>(
        reps, seed, kNsGraft, workers_,
        [&](std::uint64_t, RngStream& rng, GraftAcc& acc) {
            acc.n_hist.ensure(2048);
            acc.lower_hist.ensure(1024);
            const auto res = graft(grid_w(), a, t_, rng);
            acc.n_hist.add(res.tree.size() - 1);
            acc.lower_hist.add(res.lower_count - 1);
        });
    auto direct = run_replicas<PopulationAcc>(
        reps, seed, kNsGraftDirect, workers_,
        [&](std::uint64_t, RngStream& rng, PopulationAcc& acc) {
            acc.hist.ensure(2048);
            acc.hist.add(sample_cpp(grid_w(), t_, rng).size() - 1);
        });

    std::vector<ComparisonReport> out;
    out.push_back(
        p_report("graft_vs_direct_two_sample",
                 two_sample_counts(grafted.n_hist.counts, direct.hist.counts),
                 2 * reps));
    const double p_lower = grid_w().value_at(a) / grid_w().value_at(t_);
    out.push_back(p_report("graft_lower_count_geometric_gof",
                           gof_geometric(grafted.lower_hist.counts, p_lower,
                                         grafted.lower_hist.overflow),
                           reps));
    return out;
}

namespace {

struct DescentAcc {
    HistAcc hist;  // count-1, conditional on survival at T
    std::uint64_t total = 0, survived = 0, overflowed = 0;
    void merge(const DescentAcc& o) {
        hist.merge(o.hist);
        total += o.total;
        survived += o.survived;
        overflowed += o.overflowed;
    }
};

struct YuleAcc {
    std::vector<double> counts;  // surviving runs, replica order
    std::uint64_t total = 0, overflowed = 0;
    void merge(const YuleAcc& o) {
        counts.insert(counts.end(), o.counts.begin(), o.counts.end());
        total += o.total;
        overflowed += o.overflowed;
    }
};

}  // namespace

ComparisonReport Harness::descent_gof_check(double t_check, double horizon,
                                            std::uint64_t reps,
                                            std::uint64_t seed,
                                            std::uint64_t cap) {
    const auto grid =
        build_scale_grid(params_, ctx_.grid_w->step, 1.2 * horizon, false);
    const double checkpoints[] = {t_check};
    auto acc = run_replicas<DescentAcc>(
        reps, seed, kNsDescent, workers_,
        [&](std::uint64_t, RngStream& rng, DescentAcc& acc) {
            acc.hist.ensure(4096);
            const auto res = infinite_descent_counts(params_, checkpoints,
                                                     horizon, cap, rng);
            ++acc.total;
            if (res.overflowed) {
                ++acc.overflowed;
                return;
            }
            if (res.survived) {
                ++acc.survived;
                acc.hist.add(res.counts[0] - 1);
            }
        });
    const double p_geo =
        grid.value_at(horizon - t_check) / grid.value_at(horizon);
    return p_report(
        "descent_count_geometric_gof_t=" + format_double(t_check),
        gof_geometric(acc.hist.counts, p_geo, acc.hist.overflow),
        acc.survived);
}

ComparisonReport Harness::yule_limit_ks_check(double t_check, double horizon,
                                              std::uint64_t surviving,
                                              std::uint64_t seed,
                                              std::uint64_t cap) {
    const double alpha = malthusian_alpha(params_);
    if (!(alpha > 0)) throw std::domain_error("requires supercritical");

    // allow for the survival fraction plus slack; extinct runs are cheap
    const auto grid =
        build_scale_grid(params_, ctx_.grid_w->step, 1.2 * horizon, false);
    const SurvivalCurve curve(params_, grid);
    const double p_surv = curve.survival_at(horizon);
    const std::uint64_t total =
        std::uint64_t(double(surviving) / p_surv * 1.08) + 512;

    const double checkpoints[] = {t_check};
    auto acc = run_replicas<YuleAcc>(
        total, seed, kNsYule, workers_,
        [&](std::uint64_t, RngStream& rng, YuleAcc& acc) {
            const auto res = infinite_descent_counts(params_, checkpoints,
                                                     horizon, cap, rng);
            ++acc.total;
            if (res.overflowed) {
                ++acc.overflowed;
                return;
            }
            if (res.survived) acc.counts.push_back(double(res.counts[0]));
        });

    ComparisonReport r;
    r.quantity = "descent_yule_limit_ks_t=" + format_double(t_check);
    if (acc.counts.size() < surviving) {
        r.pass = false;
        r.replicas = acc.counts.size();
        return r;
    }
    acc.counts.resize(surviving);
    const double scale = std::exp(-alpha * t_check);
    for (auto& c : acc.counts) c *= scale;
    const auto ks = ks_exponential(std::move(acc.counts), 1.0);
    r.estimate = ks.statistic;
    r.p_value = ks.p_value;
    r.replicas = surviving;
    r.pass = ks.p_value > kPThreshold;
    return r;
}

std::vector<ComparisonReport> Harness::lln_l2_trend_check(
    const std::vector<double>& ladder, std::uint64_t reps,
    std::uint64_t seed) {
    const double alpha = malthusian_alpha(params_);
    if (!(alpha > 0)) throw std::domain_error("requires supercritical");
    const double c1 = clonal_constants(params_, 1, 1e-9)[0];

    std::vector<ComparisonReport> out;
    double prev = 0.0;
    bool decreasing = true;
    for (std::size_t i = 0; i < ladder.size(); ++i) {
        const double t = ladder[i];
        const auto grid =
            build_scale_grid(params_, ctx_.grid_w->step, 1.5 * t, false);
        auto acc = run_replicas<MeanAcc>(
            reps, seed, kNsL2 + (std::uint64_t(i) << 32), workers_,
            [&](std::uint64_t, RngStream& rng, MeanAcc& acc) {
                const auto cpp = sample_cpp(grid, t, rng);
                const auto muts =
                    scatter_mutations(cpp, params_.mutation_rate, rng);
                PartitionExtractor extract;
                const auto s = extract(cpp, muts);
                const double x = std::exp(-alpha * t) *
                                 (c1 * double(s.population) -
                                  double(s.families_of_size(1)));
                acc.add(x * x);
            });
        ComparisonReport r;
        r.quantity = "lln_l2_error_t=" + format_double(t);
        r.estimate = acc.mean();
        r.se = acc.se();
        r.replicas = reps;
        if (i > 0 && !(acc.mean() < prev)) decreasing = false;
        prev = acc.mean();
        r.pass = true;
        out.push_back(r);
    }
    ComparisonReport trend;
    trend.quantity = "lln_l2_error_strictly_decreasing";
    trend.pass = decreasing;
    trend.estimate = decreasing ? 1.0 : 0.0;
    trend.theory = 1.0;
    out.push_back(trend);
    return out;
}

namespace {

struct AsymAcc {
    MeanAcc a1, a2, a1_sq, a1a2, scaled_n;
    void merge(const AsymAcc& o) {
        a1.merge(o.a1);
        a2.merge(o.a2);
        a1_sq.merge(o.a1_sq);
        a1a2.merge(o.a1a2);
        scaled_n.merge(o.scaled_n);
    }
};

}  // namespace

std::vector<ComparisonReport> Harness::asymptotic_checks(
    double t_small, double t_large, std::uint64_t reps_small,
    std::uint64_t reps_large, std::uint64_t seed) {
    const double alpha = malthusian_alpha(params_);
    if (!(alpha > 0)) throw std::domain_error("requires supercritical");
    const auto c = clonal_constants(params_, 2, 1e-9);

    struct RunOut {
        double w = 0;
        AsymAcc acc;
        double surv = 0, mean_pop = 0;
    };
    auto run_at = [&](double t, std::uint64_t reps,
                      std::uint64_t ns) -> RunOut {
        RunOut out;
        const auto grid =
            build_scale_grid(params_, ctx_.grid_w->step, 1.5 * t, false);
        const SurvivalCurve curve(params_, grid);
        out.w = grid.value_at(t);
        out.surv = curve.survival_at(t);
        out.mean_pop = curve.mean_population_at(t);
        const double scale = std::exp(-alpha * t);
        out.acc = run_replicas<AsymAcc>(
            reps, seed, ns, workers_,
            [&](std::uint64_t, RngStream& rng, AsymAcc& acc) {
                const auto cpp = sample_cpp(grid, t, rng);
                const auto muts =
                    scatter_mutations(cpp, params_.mutation_rate, rng);
                PartitionExtractor extract;
                const auto s = extract(cpp, muts);
                const double a1 = s.families_of_size(1);
                const double a2 = s.families_of_size(2);
                acc.a1.add(a1);
                acc.a2.add(a2);
                acc.a1_sq.add(a1 * a1);
                acc.a1a2.add(a1 * a2);
                acc.scaled_n.add(scale * double(s.population));
            });
        return out;
    };

    const auto small = run_at(t_small, reps_small, kNsAsym);
    const auto large = run_at(t_large, reps_large, kNsAsym + 1);

    auto cov_ratio = [&](const RunOut& r) {
        const double var =
            r.acc.a1_sq.mean() - r.acc.a1.mean() * r.acc.a1.mean();
        return var / (r.w * r.w * c[0] * c[0]);
    };

    std::vector<ComparisonReport> out;
    ComparisonReport trend;
    trend.quantity = "cov_ratio_trend_t=" + format_double(t_small) + "_vs_" +
                     format_double(t_large);
    trend.theory = std::abs(cov_ratio(small) - 1.0);
    trend.estimate = std::abs(cov_ratio(large) - 1.0);
    trend.pass = trend.estimate < trend.theory;
    out.push_back(trend);

    // Prop 6.1 at order (1,1): prediction 2 W(t)^2 c_1^2 for E[A(1)^2]
    const int ks[] = {1, 1};
    const int ns[] = {1, 1};
    // build a context on the large-t grid for the prediction
    MomentContext big_ctx = ctx_;
    {
        auto grid = std::make_shared<ScaleGrid>(build_scale_grid(
            params_, ctx_.grid_w->step, 1.5 * t_large, false));
        big_ctx.grid_w = grid;
    }
    out.push_back(z_report("prop61_order11_t=" + format_double(t_large),
                           asymptotic_factorial_moment(big_ctx, ks, ns,
                                                       t_large),
                           large.acc.a1_sq));

    // conditional mean of e^{-alpha t} N_t vs the survival-ratio form
    const double p_nonex = params_.lifespan.laplace(alpha);
    const double psi_prime = psi_derivative(params_, alpha);
    const double theory =
        (1.0 / psi_prime) * p_nonex / large.surv;
    out.push_back(z_report("scaled_population_mean_t=" +
                               format_double(t_large),
                           theory, large.acc.scaled_n));
    return out;
}

// ----------------------------------------------------------------------
// Battery

std::vector<ComparisonReport> run_validation(const ExperimentConfig& config) {
    const auto& p = config.params;
    const double alpha = malthusian_alpha(p);
    const bool mutating = p.mutation_rate > 0;

    auto enabled = [&](const std::string& name) {
        if (config.checks.empty()) return true;
        for (const auto& c : config.checks)
            if (name.rfind(c, 0) == 0) return true;
        return false;
    };

    std::vector<std::string> planned;
    planned.push_back("population_law");
    if (mutating) {
        planned.push_back("clonal_pmf");
        planned.push_back("mean_spectrum");
        planned.push_back("order2");
        planned.push_back("joint_pmf");
        planned.push_back("graft");
    }
    planned.push_back("forward_moments");
    if (alpha > 0) {
        planned.push_back("descent");
        planned.push_back("yule_limit");
        if (mutating) {
            planned.push_back("lln_l2");
            planned.push_back("asymptotics");
        }
    }

    std::vector<ComparisonReport> reports;
    if (config.replicas == 0) {  // dry run: planned checks only
        for (const auto& name : planned) {
            ComparisonReport r;
            r.quantity = name;
            r.replicas = 0;
            reports.push_back(r);
        }
        return reports;
    }

    Harness h(p, config.t, config.grid_step, config.workers);
    const std::uint64_t reps = config.replicas;
    const std::uint64_t seed = config.seed;

    auto append = [&](std::vector<ComparisonReport> rs) {
        for (auto& r : rs) reports.push_back(std::move(r));
    };

    if (enabled("population_law"))
        append(h.population_law_checks(reps, reps, seed));
    if (mutating && enabled("clonal_pmf"))
        reports.push_back(h.clonal_pmf_check(6, reps, seed));
    if (mutating && enabled("mean_spectrum"))
        append(h.mean_spectrum_checks(6, reps, seed));
    if (mutating && enabled("order2")) append(h.order2_checks(reps, seed));
    if (mutating && enabled("joint_pmf"))
        append(h.joint_pmf_checks(0.5 * config.t, std::max<std::uint64_t>(reps / 2, 1000),
                                  seed, 0.02, 1e-6));
    if (mutating && enabled("graft"))
        append(h.graft_checks(0.5 * config.t,
                              std::max<std::uint64_t>(reps / 2, 1000), seed));
    if (enabled("forward_moments"))
        append(h.forward_moment_checks(reps, seed));

    if (alpha > 0) {
        if (enabled("descent"))
            reports.push_back(h.descent_gof_check(
                config.t, 2.5 * config.t, std::max<std::uint64_t>(reps / 2, 1000),
                seed, config.forward_cap));
        if (enabled("yule_limit"))
            reports.push_back(h.yule_limit_ks_check(
                6.0 / alpha, 12.0 / alpha,
                std::max<std::uint64_t>(reps / 10, 1000), seed,
                config.forward_cap));
        if (mutating && enabled("lln_l2"))
            append(h.lln_l2_trend_check(
                {3.0 / alpha, 5.0 / alpha, 7.0 / alpha},
                std::max<std::uint64_t>(reps / 8, 1000), seed));
        if (mutating && enabled("asymptotics"))
            append(h.asymptotic_checks(4.0 / alpha, 8.0 / alpha, reps,
                                       std::max<std::uint64_t>(reps / 2, 1000),
                                       seed));
    }
    return reports;
}

std::vector<ConvergenceRow> convergence_study(const ExperimentConfig& config) {
    const auto& p = config.params;
    const double alpha = malthusian_alpha(p);
    if (!(alpha > 0))
        throw std::domain_error("convergence study rejects subcritical parameters");
    const bool mutating = p.mutation_rate > 0;
    const double c1 = mutating ? clonal_constants(p, 1, 1e-9)[0] : 0.0;
    const double psi_prime = psi_derivative(p, alpha);
    const double p_nonex = p.lifespan.laplace(alpha);

    std::vector<double> ladder = config.times;
    if (ladder.empty()) ladder = {3.0 / alpha, 5.0 / alpha, 7.0 / alpha};

    struct RowAcc {
        MeanAcc scaled_n, scaled_a1, l2;
        std::vector<double> ks_samples;
        void merge(const RowAcc& o) {
            scaled_n.merge(o.scaled_n);
            scaled_a1.merge(o.scaled_a1);
            l2.merge(o.l2);
            ks_samples.insert(ks_samples.end(), o.ks_samples.begin(),
                              o.ks_samples.end());
        }
    };

    std::vector<ConvergenceRow> rows;
    for (std::size_t i = 0; i < ladder.size(); ++i) {
        const double t = ladder[i];
        const auto grid = build_scale_grid(p, config.grid_step, 1.5 * t, false);
        const SurvivalCurve curve(p, grid);
        const double scale = std::exp(-alpha * t);
        auto acc = run_replicas<RowAcc>(
            config.replicas, config.seed,
            kNsConverge + (std::uint64_t(i) << 32), config.workers,
            [&](std::uint64_t, RngStream& rng, RowAcc& acc) {
                const auto cpp = sample_cpp(grid, t, rng);
                acc.scaled_n.add(scale * double(cpp.size()));
                acc.ks_samples.push_back(psi_prime * scale *
                                         double(cpp.size()));
                if (mutating) {
                    const auto muts =
                        scatter_mutations(cpp, p.mutation_rate, rng);
                    PartitionExtractor extract;
                    const auto s = extract(cpp, muts);
                    const double a1 = s.families_of_size(1);
                    acc.scaled_a1.add(scale * a1);
                    const double x = scale * (c1 * double(cpp.size()) - a1);
                    acc.l2.add(x * x);
                }
            });

        ConvergenceRow row;
        row.t = t;
        row.replicas = config.replicas;
        row.scaled_n_mean = acc.scaled_n.mean();
        if (mutating) {
            row.scaled_a1_mean = acc.scaled_a1.mean();
            row.l2_error = acc.l2.mean();
        }
        // KS against Exp with the survival-corrected mean
        const double mean_corr = p_nonex / curve.survival_at(t);
        std::sort(acc.ks_samples.begin(), acc.ks_samples.end());
        for (auto& x : acc.ks_samples) x = -std::expm1(-x / mean_corr);
        row.ks_stat = ks_statistic_from_cdf(acc.ks_samples);
        rows.push_back(row);
    }
    return rows;
}

std::string convergence_csv(const std::vector<ConvergenceRow>& rows) {
    std::string out =
        "t,replicas,scaled_n_mean,scaled_a1_mean,l2_error,ks_stat\n";
    for (const auto& r : rows) {
        out += format_double(r.t);
        out += ',';
        out += std::to_string(r.replicas);
        out += ',';
        out += format_double(r.scaled_n_mean);
        out += ',';
        out += format_double(r.scaled_a1_mean);
        out += ',';
        out += format_double(r.l2_error);
        out += ',';
        out += format_double(r.ks_stat);
        out += '\n';
    }
    return out;
}

}  // namespace splitree
