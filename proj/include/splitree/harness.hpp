#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "splitree/cpp_sim.hpp"
#include "splitree/forward_sim.hpp"
#include "splitree/moments.hpp"
#include "splitree/stats.hpp"

namespace splitree {

// ----------------------------------------------------------------------
// Replica-parallel runner. Replicas are processed in fixed-size blocks;
// per-block accumulators are merged in block order afterwards, so pooled
// results are bit-identical for any worker count. Acc needs a default
// constructor and merge(const Acc&).

constexpr std::uint64_t kReplicaBlock = 4096;

template <class Acc, class Fn>
Acc run_replicas(std::uint64_t replicas, std::uint64_t seed,
                 std::uint64_t stream_base, int workers, Fn&& body) {
    const std::uint64_t nblocks = (replicas + kReplicaBlock - 1) / kReplicaBlock;
    std::vector<Acc> partial(std::size_t(nblocks));
    std::atomic<std::uint64_t> next{0};
    auto work = [&] {
        for (;;) {
            const std::uint64_t b = next.fetch_add(1);
            if (b >= nblocks) return;
            Acc acc;
            const std::uint64_t lo = b * kReplicaBlock;
            const std::uint64_t hi = std::min(replicas, lo + kReplicaBlock);
            for (std::uint64_t r = lo; r < hi; ++r) {
                RngStream rng(seed, stream_base + r);
                body(r, rng, acc);
            }
            partial[std::size_t(b)] = std::move(acc);
        }
    };
    if (workers <= 1 || nblocks <= 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        const int count = std::min<std::uint64_t>(std::uint64_t(workers), nblocks);
        pool.reserve(std::size_t(count));
        for (int w = 0; w < count; ++w) pool.emplace_back(work);
        for (auto& th : pool) th.join();
    }
    Acc total;
    for (auto& p : partial) total.merge(p);
    return total;
}

// Mean / standard-error accumulator.
struct MeanAcc {
    double sum = 0.0, sum_sq = 0.0;
    std::uint64_t n = 0;
    void add(double x) {
        sum += x;
        sum_sq += x * x;
        ++n;
    }
    void merge(const MeanAcc& o) {
        sum += o.sum;
        sum_sq += o.sum_sq;
        n += o.n;
    }
    double mean() const { return n ? sum / double(n) : 0.0; }
    double variance() const {
        if (n < 2) return 0.0;
        const double m = mean();
        return std::max(0.0, (sum_sq - double(n) * m * m) / double(n - 1));
    }
    double se() const { return n ? std::sqrt(variance() / double(n)) : 0.0; }
};

// Count histogram with a fixed cap; values beyond the cap land in the
// overflow cell.
struct HistAcc {
    std::vector<std::uint64_t> counts;
    std::uint64_t overflow = 0;
    std::uint64_t total = 0;
    void ensure(std::size_t cap) {
        if (counts.size() < cap) counts.resize(cap, 0);
    }
    void add(std::uint64_t v) {
        if (v < counts.size())
            ++counts[std::size_t(v)];
        else
            ++overflow;
        ++total;
    }
    void merge(const HistAcc& o) {
        if (counts.size() < o.counts.size()) counts.resize(o.counts.size(), 0);
        for (std::size_t i = 0; i < o.counts.size(); ++i)
            counts[i] += o.counts[i];
        overflow += o.overflow;
        total += o.total;
    }
};

// ----------------------------------------------------------------------
// Reports

struct ComparisonReport {
    std::string quantity;
    double theory = NAN;
    double estimate = NAN;
    double se = NAN;
    double z = NAN;
    double p_value = NAN;
    std::uint64_t replicas = 0;
    bool pass = true;
};

std::string format_double(double v);  // round-trippable %.17g
std::string report_csv(const std::vector<ComparisonReport>& reports);
std::vector<ComparisonReport> parse_report_csv(const std::string& text);
bool all_pass(const std::vector<ComparisonReport>& reports);

// Battery-wide thresholds: |z| < 4 and p > 0.001.
constexpr double kZThreshold = 4.0;
constexpr double kPThreshold = 0.001;

// ----------------------------------------------------------------------
// Experiment configuration (CLI `validate` / `converge`)

struct ExperimentConfig {
    ModelParams params;
    double t = 2.0;
    std::vector<double> times;  // ladder for converge; defaults from t
    std::uint64_t replicas = 200'000;
    std::uint64_t seed = 1;
    int workers = 1;
    double grid_step = 1e-3;
    std::uint64_t forward_cap = 1'000'000;
    std::vector<std::string> checks;  // empty = full battery
};

// ----------------------------------------------------------------------
// Check harness shared by `validate` and the acceptance suite. All checks
// are deterministic functions of (params, t, sizes, seed); stream ids are
// namespaced per check so checks are independent of battery composition.

class Harness {
  public:
    Harness(ModelParams params, double t, double grid_step = 1e-3,
            int workers = 1);

    const MomentContext& ctx() const { return ctx_; }
    const ScaleGrid& grid_w() const { return *ctx_.grid_w; }
    MomentEngine& engine() { return engine_; }
    int workers() const { return workers_; }

    // Geometric law of N_t: CPP GOF, forward GOF (conditional on
    // survival), and the two-sample comparison.
    std::vector<ComparisonReport> population_law_checks(std::uint64_t cpp_reps,
                                                        std::uint64_t fwd_reps,
                                                        std::uint64_t seed);

    // Eq (2.3) clonal pmf GOF for k in {0..kmax}.
    ComparisonReport clonal_pmf_check(int kmax, std::uint64_t reps,
                                      std::uint64_t seed);

    // Thm 5.2 means for k = 1..kmax plus the series identity
    // sum_k k E[A(k)] = W(t)(1 - e^{-theta t}).
    std::vector<ComparisonReport> mean_spectrum_checks(int kmax,
                                                       std::uint64_t reps,
                                                       std::uint64_t seed);

    // Prop 5.3 mixed means, Thm 3.1/3.2 second-order moments, Eq (5.7)
    // products, for k, l in {1, 2}; shares one Monte Carlo run.
    std::vector<ComparisonReport> order2_checks(std::uint64_t reps,
                                                std::uint64_t seed);

    // Partition-of-unity: sum_l mixed_mean(k, l, t) = mean_spectrum(k, t).
    ComparisonReport mixed_partition_check(int k, double rel_tol);

    // Eq (5.6): total-variation distance between the extracted joint pmf
    // and simulated lower-tree pairs at base a, plus the geometric
    // marginal identity.
    std::vector<ComparisonReport> joint_pmf_checks(double a,
                                                   std::uint64_t reps,
                                                   std::uint64_t seed,
                                                   double tv_threshold,
                                                   double marginal_tol);

    // Forward simulator: survival fraction vs renewal quotient and
    // unconditioned E[N_t] vs f(t).
    std::vector<ComparisonReport> forward_moment_checks(std::uint64_t reps,
                                                        std::uint64_t seed);

    // Prop 5.1 checks: grafted tree vs direct CPP (two-sample), and the
    // geometric law of the lower count.
    std::vector<ComparisonReport> graft_checks(double a, std::uint64_t reps,
                                               std::uint64_t seed);

    // Section 7 and asymptotics ------------------------------------------

    // (11a) N^{(T)}_t geometric GOF from forward runs.
    ComparisonReport descent_gof_check(double t_check, double horizon,
                                       std::uint64_t reps, std::uint64_t seed,
                                       std::uint64_t cap);

    // (11b) KS of e^{-alpha t} N^{(T)}_t against Exp(1), conditional on
    // survival at T, using the first `surviving` surviving runs.
    ComparisonReport yule_limit_ks_check(double t_check, double horizon,
                                         std::uint64_t surviving,
                                         std::uint64_t seed,
                                         std::uint64_t cap);

    // (11c) normalized L2 error e^{-2 alpha t} E[(c1 N_t - A(1,t))^2]
    // strictly decreasing across the ladder.
    std::vector<ComparisonReport> lln_l2_trend_check(
        const std::vector<double>& ladder, std::uint64_t reps,
        std::uint64_t seed);

    // (11d) conditional mean of e^{-alpha t} N_t against
    // (1/psi'(alpha)) P(Non-ex)/P(N_t > 0); at `t_check`, reusing a
    // dedicated run.
    // (10) Prop 5.7 covariance ratio trend and the Prop 6.1 prediction.
    std::vector<ComparisonReport> asymptotic_checks(double t_small,
                                                    double t_large,
                                                    std::uint64_t reps_small,
                                                    std::uint64_t reps_large,
                                                    std::uint64_t seed);

    // Determinism helper: samples one spectrum replica bit-exactly.
    SpectrumSample sample_replica(std::uint64_t seed, std::uint64_t replica);

  private:
    ModelParams params_;
    double t_;
    int workers_;
    MomentContext ctx_;
    MomentEngine engine_;
    std::optional<SurvivalCurve> survival_;
    const SurvivalCurve& survival();
};

// Full battery (CLI `validate`).
std::vector<ComparisonReport> run_validation(const ExperimentConfig& config);

// Convergence study rows (CLI `converge`).
struct ConvergenceRow {
    double t = 0.0;
    std::uint64_t replicas = 0;
    double scaled_n_mean = NAN;   // e^{-alpha t} N_t, conditional on N_t>0
    double scaled_a1_mean = NAN;  // e^{-alpha t} A(1,t)
    double l2_error = NAN;        // e^{-2 alpha t} E[(c1 N_t - A(1,t))^2]
    double ks_stat = NAN;         // psi'(a) e^{-alpha t} N_t vs corrected Exp
};
std::vector<ConvergenceRow> convergence_study(const ExperimentConfig& config);
std::string convergence_csv(const std::vector<ConvergenceRow>& rows);

}  // namespace splitree
