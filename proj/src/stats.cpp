#include "splitree/stats.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace splitree {

namespace {

double gamma_p_series(double a, double x) {
    double term = 1.0 / a;
    double sum = term;
    double ap = a;
    for (int i = 0; i < 1000; ++i) {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if (std::abs(term) < std::abs(sum) * 1e-16) break;
    }
    return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

double gamma_q_cf(double a, double x) {
    // Lentz continued fraction for Q(a, x).
    const double tiny = 1e-300;
    double b = x + 1.0 - a;
    double c = 1.0 / tiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i < 1000; ++i) {
        const double an = -double(i) * (double(i) - a);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < 1e-16) break;
    }
    return h * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

}  // namespace

double gamma_p(double a, double x) {
    if (!(a > 0) || x < 0) throw std::domain_error("gamma_p domain");
    if (x == 0) return 0.0;
    if (x < a + 1.0) return gamma_p_series(a, x);
    return 1.0 - gamma_q_cf(a, x);
}

double gamma_q(double a, double x) {
    if (!(a > 0) || x < 0) throw std::domain_error("gamma_q domain");
    if (x == 0) return 1.0;
    if (x < a + 1.0) return 1.0 - gamma_p_series(a, x);
    return gamma_q_cf(a, x);
}

double chi2_sf(double x, double dof) { return gamma_q(0.5 * dof, 0.5 * x); }

double ks_sf(double d, std::uint64_t n) {
    const double sn = std::sqrt(double(n));
    const double lambda = (sn + 0.12 + 0.11 / sn) * d;
    double sum = 0.0;
    for (int j = 1; j <= 100; ++j) {
        const double term =
            std::exp(-2.0 * double(j) * double(j) * lambda * lambda);
        sum += (j % 2 == 1 ? term : -term);
        if (term < 1e-18) break;
    }
    return std::clamp(2.0 * sum, 0.0, 1.0);
}

GofResult gof_counts(std::span<const std::uint64_t> observed,
                     std::span<const double> probabilities,
                     double tail_probability, std::uint64_t observed_tail) {
    if (observed.size() != probabilities.size())
        throw std::invalid_argument("gof_counts size mismatch");
    std::uint64_t n = observed_tail;
    for (const auto o : observed) n += o;
    if (n < 100) throw std::invalid_argument("gof needs >= 100 samples");

    // pool cells left to right until expected >= 5
    std::vector<double> exp_pooled;
    std::vector<double> obs_pooled;
    double e_acc = 0.0, o_acc = 0.0;
    for (std::size_t i = 0; i < observed.size(); ++i) {
        e_acc += probabilities[i] * double(n);
        o_acc += double(observed[i]);
        if (e_acc >= 5.0) {
            exp_pooled.push_back(e_acc);
            obs_pooled.push_back(o_acc);
            e_acc = o_acc = 0.0;
        }
    }
    e_acc += tail_probability * double(n);
    o_acc += double(observed_tail);
    if (e_acc >= 5.0 || exp_pooled.empty()) {
        exp_pooled.push_back(e_acc);
        obs_pooled.push_back(o_acc);
    } else {
        exp_pooled.back() += e_acc;
        obs_pooled.back() += o_acc;
    }

    GofResult res;
    for (std::size_t i = 0; i < exp_pooled.size(); ++i) {
        const double diff = obs_pooled[i] - exp_pooled[i];
        res.statistic += diff * diff / exp_pooled[i];
    }
    res.dof = double(exp_pooled.size()) - 1.0;
    res.p_value = res.dof > 0 ? chi2_sf(res.statistic, res.dof) : 1.0;
    return res;
}

GofResult gof_geometric(std::span<const std::uint64_t> histogram, double p,
                        std::uint64_t observed_tail) {
    if (!(p > 0) || !(p <= 1)) throw std::domain_error("geometric p in (0,1]");
    std::vector<double> probs(histogram.size());
    double q = 1.0;  // P(N > k) running tail
    for (std::size_t k = 0; k < histogram.size(); ++k) {
        probs[k] = p * q;
        q *= (1.0 - p);
    }
    return gof_counts(histogram, probs, q, observed_tail);
}

GofResult two_sample_counts(std::span<const std::uint64_t> a,
                            std::span<const std::uint64_t> b) {
    const std::size_t cells = std::max(a.size(), b.size());
    std::uint64_t na = 0, nb = 0;
    for (const auto v : a) na += v;
    for (const auto v : b) nb += v;
    if (na < 100 || nb < 100)
        throw std::invalid_argument("two-sample test needs >= 100 each");

    std::vector<double> oa_pooled, ob_pooled;
    double oa = 0, ob = 0;
    for (std::size_t i = 0; i < cells; ++i) {
        oa += i < a.size() ? double(a[i]) : 0.0;
        ob += i < b.size() ? double(b[i]) : 0.0;
        if (oa + ob >= 10.0) {
            oa_pooled.push_back(oa);
            ob_pooled.push_back(ob);
            oa = ob = 0;
        }
    }
    if (oa + ob > 0) {
        if (oa_pooled.empty()) {
            oa_pooled.push_back(oa);
            ob_pooled.push_back(ob);
        } else {
            oa_pooled.back() += oa;
            ob_pooled.back() += ob;
        }
    }

    GofResult res;
    const double totals = double(na + nb);
    for (std::size_t i = 0; i < oa_pooled.size(); ++i) {
        const double rowsum = oa_pooled[i] + ob_pooled[i];
        const double ea = rowsum * double(na) / totals;
        const double eb = rowsum * double(nb) / totals;
        if (ea > 0) res.statistic += (oa_pooled[i] - ea) * (oa_pooled[i] - ea) / ea;
        if (eb > 0) res.statistic += (ob_pooled[i] - eb) * (ob_pooled[i] - eb) / eb;
    }
    res.dof = double(oa_pooled.size()) - 1.0;
    res.p_value = res.dof > 0 ? chi2_sf(res.statistic, res.dof) : 1.0;
    return res;
}

double ks_statistic_from_cdf(std::span<const double> sorted_cdf_values) {
    const double n = double(sorted_cdf_values.size());
    double d = 0.0;
    for (std::size_t i = 0; i < sorted_cdf_values.size(); ++i) {
        const double f = sorted_cdf_values[i];
        d = std::max(d, std::max(double(i + 1) / n - f, f - double(i) / n));
    }
    return d;
}

GofResult ks_exponential(std::vector<double> samples, double rate) {
    if (samples.size() < 10)
        throw std::invalid_argument("ks needs >= 10 samples");
    std::sort(samples.begin(), samples.end());
    for (auto& x : samples) x = -std::expm1(-rate * x);
    GofResult res;
    res.statistic = ks_statistic_from_cdf(samples);
    res.p_value = ks_sf(res.statistic, samples.size());
    return res;
}

double welch_z(double estimate, double se, double theory) {
    if (se == 0.0) return estimate == theory ? 0.0 : INFINITY;
    return (estimate - theory) / se;
}

}  // namespace splitree
