// splitree: simulation and closed-form evaluation of the allele frequency
// spectrum of splitting trees with neutral Poissonian mutations.
//
// Subcommands: scale | simulate | forward | moments | limits | validate |
// converge. Exit codes: 0 success, 1 usage/configuration error,
// 2 validation failure.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "splitree/harness.hpp"

using namespace splitree;

namespace {

struct GlobalOpts {
    double b = 2.0;
    double theta = 0.5;
    std::string lifespan = "exp:1";
    std::uint64_t seed = 1;
    std::uint64_t reps = 200'000;
    std::string out;
    double grid_step = 1e-3;
    double horizon = 0.0;  // 0 = auto
    int workers = 1;

    ModelParams params() const {
        return {b, theta, LifespanDistribution::parse(lifespan)};
    }
};

void add_global(CLI::App* cmd, GlobalOpts& g) {
    cmd->add_option("--b", g.b, "birth rate");
    cmd->add_option("--theta", g.theta, "mutation rate");
    cmd->add_option("--lifespan", g.lifespan,
                    "lifespan spec: exp:<d> | fixed:<v> | uniform:<lo>,<hi> "
                    "| immortal");
    cmd->add_option("--seed", g.seed, "master seed");
    cmd->add_option("--reps", g.reps, "replica count");
    cmd->add_option("--out", g.out, "output file or directory");
    cmd->add_option("--grid-step", g.grid_step, "scale grid step");
    cmd->add_option("--horizon", g.horizon, "scale grid horizon (0 = auto)");
    cmd->add_option("--workers", g.workers, "worker threads");
}

void write_output(const std::string& path, const std::string& content) {
    if (path.empty()) {
        std::fputs(content.c_str(), stdout);
        return;
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << content;
}

std::string spectrum_row(std::uint64_t replica, const SpectrumSample& s) {
    std::string row = std::to_string(replica);
    row += ',';
    row += std::to_string(s.population);
    row += ',';
    row += std::to_string(s.clonal);
    for (const auto& [k, count] : s.families) {
        row += ',';
        row += std::to_string(k);
        row += ':';
        row += std::to_string(count);
    }
    row += '\n';
    return row;
}

struct RowsAcc {
    std::string rows;
    void merge(const RowsAcc& o) { rows += o.rows; }
};

int cmd_scale(const GlobalOpts& g, double t_max) {
    const auto params = g.params();
    const double T = g.horizon > 0 ? g.horizon : 1.5 * t_max;
    const auto w = build_scale_grid(params, g.grid_step, T, false);
    const auto wt = build_scale_grid(params, g.grid_step, T, true);
    const SurvivalCurve curve(params, w);
    std::string out = "t,W,W_theta,f,survival\n";
    for (std::size_t j = 0; j < w.values.size(); ++j) {
        const double t = w.step * double(j);
        out += format_double(t);
        out += ',';
        out += format_double(w.values[j]);
        out += ',';
        out += format_double(wt.values[j]);
        out += ',';
        out += format_double(curve.mean_population_at(t));
        out += ',';
        out += format_double(curve.survival_at(t));
        out += '\n';
    }
    write_output(g.out, out);
    return 0;
}

int cmd_simulate(const GlobalOpts& g, double t) {
    const auto params = g.params();
    const double T = g.horizon > 0 ? g.horizon : 1.5 * t;
    const auto grid = build_scale_grid(params, g.grid_step, T, false);
    auto acc = run_replicas<RowsAcc>(
        g.reps, g.seed, 0, g.workers,
        [&](std::uint64_t r, RngStream& rng, RowsAcc& acc) {
            const auto cpp = sample_cpp(grid, t, rng);
            const auto muts = scatter_mutations(cpp, params.mutation_rate, rng);
            PartitionExtractor extract;
            acc.rows += spectrum_row(r, extract(cpp, muts));
        });
    write_output(g.out, "replica,N,Z0,spectrum\n" + acc.rows);
    return 0;
}

int cmd_forward(const GlobalOpts& g, double t, std::uint64_t cap) {
    const auto params = g.params();
    auto acc = run_replicas<RowsAcc>(
        g.reps, g.seed, 0, g.workers,
        [&](std::uint64_t r, RngStream& rng, RowsAcc& acc) {
            const auto res = simulate_forward(params, t, cap, rng);
            std::string row = std::to_string(r);
            row += ',';
            row += std::to_string(res.spectrum.population);
            row += ',';
            row += std::to_string(res.spectrum.clonal);
            row += ',';
            row += res.survived ? '1' : '0';
            row += ',';
            row += res.overflowed ? '1' : '0';
            for (const auto& [k, count] : res.spectrum.families) {
                row += ',';
                row += std::to_string(k);
                row += ':';
                row += std::to_string(count);
            }
            row += '\n';
            acc.rows += row;
        });
    write_output(g.out, "replica,N,Z0,survived,overflowed,spectrum\n" +
                            acc.rows);
    return 0;
}

int cmd_moments(const GlobalOpts& g, double t, int kmax, int order) {
    const auto params = g.params();
    MomentContext ctx = make_context(params, t, g.grid_step);
    MomentEngine engine(ctx);
    std::string out = "quantity,k,l,t,value\n";
    auto emit = [&](const std::string& q, int k, int l, double v) {
        out += q;
        out += ',';
        out += k >= 0 ? std::to_string(k) : "";
        out += ',';
        out += l >= 0 ? std::to_string(l) : "";
        out += ',';
        out += format_double(t);
        out += ',';
        out += format_double(v);
        out += '\n';
    };
    for (int k = 1; k <= kmax; ++k)
        emit("mean_spectrum", k, -1, mean_spectrum(ctx, k, t));
    if (order >= 2) {
        for (int k = 1; k <= kmax; ++k)
            for (int l = k; l <= kmax; ++l) {
                emit("second_order", k, l, engine.second_order(k, l, t));
                emit("covariance", k, l, engine.covariance(k, l, t));
            }
        for (int k = 1; k <= kmax; ++k)
            emit("product_with_population", k, -1,
                 engine.product_with_population(k, t));
    }
    write_output(g.out, out);
    return 0;
}

int cmd_limits(const GlobalOpts& g, int kmax) {
    const auto params = g.params();
    MomentContext ctx = make_context(params, 1.0, g.grid_step);
    const auto d = lln_descriptor(ctx, kmax);
    const auto c = clonal_constants(params, kmax, 1e-9);
    std::string out = "quantity,k,value\n";
    out += "alpha,," + format_double(d.alpha) + "\n";
    out += "psi_prime_alpha,," + format_double(d.psi_prime_alpha) + "\n";
    for (int k = 1; k <= kmax; ++k)
        out += "c_k," + std::to_string(k) + "," +
               format_double(c[std::size_t(k - 1)]) + "\n";
    write_output(g.out, out);
    return 0;
}

int cmd_validate(const GlobalOpts& g, double t,
                 const std::vector<std::string>& checks, std::uint64_t cap) {
    ExperimentConfig config{g.params()};
    config.t = t;
    config.replicas = g.reps;
    config.seed = g.seed;
    config.workers = g.workers;
    config.grid_step = g.grid_step;
    config.forward_cap = cap;
    config.checks = checks;
    const auto reports = run_validation(config);
    write_output(g.out, report_csv(reports));
    return all_pass(reports) ? 0 : 2;
}

int cmd_converge(const GlobalOpts& g, std::vector<double> ts) {
    ExperimentConfig config{g.params()};
    config.times = std::move(ts);
    config.replicas = g.reps;
    config.seed = g.seed;
    config.workers = g.workers;
    config.grid_step = g.grid_step;
    const auto rows = convergence_study(config);
    write_output(g.out, convergence_csv(rows));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"splitting-tree frequency spectrum toolkit"};
    app.require_subcommand(1);
    app.set_config("--config", "", "flat key=value config file");
    app.allow_config_extras(true);

    GlobalOpts g;
    double t = 2.0;
    double t_max = 10.0;
    int kmax = 6;
    int order = 1;
    std::uint64_t cap = 1'000'000;
    std::vector<double> ladder;
    std::vector<std::string> checks;

    auto* scale = app.add_subcommand("scale", "tabulate W, W_theta, f");
    add_global(scale, g);
    scale->add_option("--t", t_max, "largest time of interest");

    auto* simulate = app.add_subcommand("simulate", "CPP replicas -> CSV");
    add_global(simulate, g);
    simulate->add_option("--t", t, "horizon");

    auto* forward = app.add_subcommand("forward", "forward replicas -> CSV");
    add_global(forward, g);
    forward->add_option("--t", t, "horizon");
    forward->add_option("--cap", cap, "population cap");

    auto* moments = app.add_subcommand("moments", "closed-form moments");
    add_global(moments, g);
    moments->add_option("--t", t, "horizon");
    moments->add_option("--kmax", kmax, "largest family size");
    moments->add_option("--order", order, "1 or 2")
        ->check(CLI::Range(1, 2));

    auto* limits = app.add_subcommand("limits", "alpha, psi'(alpha), c_k");
    add_global(limits, g);
    limits->add_option("--kmax", kmax, "number of constants");

    auto* validate = app.add_subcommand("validate", "theory-vs-MC battery");
    add_global(validate, g);
    validate->add_option("--t", t, "horizon");
    validate->add_option("--cap", cap, "population cap");
    validate->add_option("--checks", checks, "check name prefixes");

    auto* converge = app.add_subcommand("converge", "convergence study");
    add_global(converge, g);
    converge->add_option("--t-ladder", ladder, "time ladder");

    CLI11_PARSE(app, argc, argv);

    try {
        if (scale->parsed()) return cmd_scale(g, t_max);
        if (simulate->parsed()) return cmd_simulate(g, t);
        if (forward->parsed()) return cmd_forward(g, t, cap);
        if (moments->parsed()) return cmd_moments(g, t, kmax, order);
        if (limits->parsed()) return cmd_limits(g, kmax);
        if (validate->parsed()) return cmd_validate(g, t, checks, cap);
        if (converge->parsed()) return cmd_converge(g, ladder);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
