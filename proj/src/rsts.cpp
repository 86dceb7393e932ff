#include "icelab/rsts.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "icelab/capacity.hpp"

namespace icelab {

PathOutcome sample_killed_time(const PathSimulator& sim, std::size_t rate, const Point& x0, Stream& rng,
                               std::optional<double> observe_time) {
    if (rate >= sim.rates().size()) throw std::invalid_argument("clock rate index out of range");
    RunOptions run;
    run.clock = Clock{rate, rng.exponential()};
    run.observe_time = observe_time;
    return sim.run(x0, rng, run);
}

KilledTime sample_killed_time_inversion(const PathSimulator& sim, std::size_t rate, const Point& x0, Stream& rng) {
    if (rate >= sim.rates().size()) throw std::invalid_argument("clock rate index out of range");
    const double level = 1.0 - rng.uniform();  // 1 - r, r ~ U[0,1)
    std::vector<TracePoint> trace;
    RunOptions run;
    run.trace = &trace;
    const PathOutcome out = sim.run(x0, rng, run);
    const RateMeasure& h = *sim.rates()[rate];
    const std::vector<double> a = accumulate_rate(trace, h);

    for (std::size_t k = 1; k < trace.size(); ++k) {
        if (std::exp(-a[k]) > level) continue;
        // S is continuous and decreasing on [t_{k-1}, t_k]: bisect S(t) = level
        const double t0 = trace[k - 1].t;
        const double slope = h(trace[k - 1].x);
        double lo = t0;
        double hi = trace[k].t;
        for (int it = 0; it < 200 && hi - lo > 1e-15 * std::max(1.0, hi); ++it) {
            const double mid = 0.5 * (lo + hi);
            if (std::exp(-(a[k - 1] + slope * (mid - t0))) <= level) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        return {true, hi};
    }
    return {false, out.time};
}

EmpiricalLaw::EmpiricalLaw(std::vector<double> samples) : sorted_(std::move(samples)) {
    if (sorted_.empty()) throw std::invalid_argument("empirical law needs at least one sample");
    for (double v : sorted_) {
        if (std::isnan(v)) throw std::invalid_argument("empirical law sample is NaN");
    }
    std::sort(sorted_.begin(), sorted_.end());
}

double EmpiricalLaw::cdf(double t) const {
    const auto it = std::upper_bound(sorted_.begin(), sorted_.end(), t);
    return static_cast<double>(it - sorted_.begin()) / static_cast<double>(sorted_.size());
}

double EmpiricalLaw::cdf_stderr(double t) const {
    const double p = cdf(t);
    return std::sqrt(p * (1.0 - p) / static_cast<double>(sorted_.size()));
}

double EmpiricalLaw::quantile(double p) const {
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("quantile level must lie in [0, 1]");
    const double n = static_cast<double>(sorted_.size());
    const std::size_t k = static_cast<std::size_t>(std::max(0.0, std::ceil(p * n) - 1.0));
    return sorted_[std::min(k, sorted_.size() - 1)];
}

namespace {

Estimate mean_of(const std::vector<double>& v) {
    const double n = static_cast<double>(v.size());
    const double m = std::accumulate(v.begin(), v.end(), 0.0) / n;
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    const double var = v.size() > 1 ? ss / (n - 1.0) : 0.0;
    return {m, std::sqrt(var / n)};
}

}  // namespace

Estimate EmpiricalLaw::laplace(double lambda) const {
    std::vector<double> v(sorted_.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::isinf(sorted_[i]) ? 0.0 : std::exp(-lambda * sorted_[i]);
    return mean_of(v);
}

Estimate EmpiricalLaw::mean() const { return mean_of(sorted_); }

EmpiricalLaw empirical_law(std::vector<double> samples) { return EmpiricalLaw(std::move(samples)); }

StableTestSuite StableTestSuite::standard(int dim, const Box& region, double t_max, const std::vector<double>& lambdas,
                                          double t0) {
    check_dim(dim);
    if (!(t_max > 0.0) || !std::isfinite(t_max)) throw std::invalid_argument("stable suite needs a finite horizon");
    StableTestSuite s;
    s.t0 = t0;
    auto add_f = [&](std::string name, std::function<double(double)> f) {
        if (s.f.size() >= 8) return;
        s.f_names.push_back(std::move(name));
        s.f.push_back(std::move(f));
        s.f_sup.push_back(1.0);
    };
    for (double lambda : lambdas) {
        add_f("exp" + std::to_string(lambda), [lambda](double t) { return std::exp(-lambda * t); });
    }
    const double w = t_max / 12.0;
    for (int k = 1; k <= 5; ++k) {
        const double q = t_max * k / 6.0;
        add_f("ramp" + std::to_string(k), [q, w](double t) { return std::clamp((q + 0.5 * w - t) / w, 0.0, 1.0); });
    }

    auto add_h = [&](std::string name, std::function<double(const Point&)> h) {
        if (s.h.size() >= 8) return;
        s.h_names.push_back(std::move(name));
        s.h.push_back(std::move(h));
    };
    const Point mid = region.center();
    add_h("all", [](const Point&) { return 1.0; });
    for (int i = 0; i < dim; ++i) {
        add_h("half" + std::to_string(i + 1), [i, m = mid[i]](const Point& x) { return x[i] < m ? 1.0 : 0.0; });
    }
    add_h("region", [region](const Point& x) { return region.contains(x) ? 1.0 : 0.0; });
    for (int q = 0; q < 4; ++q) {
        Box b = region;
        for (int i = 0; i < 2; ++i) {
            if ((q >> i) & 1) {
                b.lower[i] = mid[i];
            } else {
                b.upper[i] = mid[i];
            }
        }
        add_h("quadrant" + std::to_string(q), [b](const Point& x) { return b.contains(x) ? 1.0 : 0.0; });
    }
    return s;
}

std::vector<double> StableTestSuite::evaluate_h(const Point& x) const {
    std::vector<double> v(h.size());
    for (std::size_t j = 0; j < h.size(); ++j) v[j] = h[j](x);
    return v;
}

double StableTestSuite::tail_bound() const {
    const double kept = (1.0 - std::ldexp(1.0, -static_cast<int>(f.size()))) *
                        (1.0 - std::ldexp(1.0, -static_cast<int>(h.size())));
    return 1.0 - kept;
}

StableEnsemble make_ensemble(const std::vector<PathOutcome>& outcomes, const StableTestSuite& suite, double t_max) {
    StableEnsemble e;
    e.times.reserve(outcomes.size());
    e.h.reserve(outcomes.size());
    for (const auto& o : outcomes) {
        if (!o.observed) throw std::invalid_argument("ensemble outcome has no observation at t0");
        e.times.push_back(o.event == Event::horizon ? t_max : std::min(o.time, t_max));
        e.h.push_back(suite.evaluate_h(*o.observed));
    }
    return e;
}

namespace {

void check_ensemble(const StableEnsemble& e, const StableTestSuite& suite) {
    if (e.times.empty()) throw std::invalid_argument("stable metric needs nonempty ensembles");
    if (e.h.size() != e.times.size()) throw std::invalid_argument("ensemble has mismatched H and time counts");
    for (const auto& row : e.h) {
        if (row.size() != suite.size_h()) throw std::invalid_argument("ensemble H dimension does not match the suite");
    }
}

}  // namespace

StableMetric stable_metric_estimate(const StableEnsemble& a, const StableEnsemble& b, const StableTestSuite& suite) {
    check_ensemble(a, suite);
    check_ensemble(b, suite);
    const std::size_t ni = suite.size_f();
    const std::size_t nj = suite.size_h();
    const std::size_t terms = ni * nj;

    auto term = [&](const StableEnsemble& e, std::size_t k, std::size_t i, std::size_t j) {
        return e.h[k][j] * suite.f[i](e.times[k]) / suite.f_sup[i];
    };
    auto means = [&](const StableEnsemble& e) {
        std::vector<double> m(terms, 0.0);
        std::vector<double> fv(ni);
        for (std::size_t k = 0; k < e.times.size(); ++k) {
            for (std::size_t i = 0; i < ni; ++i) fv[i] = suite.f[i](e.times[k]) / suite.f_sup[i];
            for (std::size_t i = 0; i < ni; ++i)
                for (std::size_t j = 0; j < nj; ++j) m[i * nj + j] += e.h[k][j] * fv[i];
        }
        for (double& v : m) v /= static_cast<double>(e.times.size());
        return m;
    };
    const auto ma = means(a);
    const auto mb = means(b);
    std::vector<double> weight(terms);
    StableMetric out;
    for (std::size_t i = 0; i < ni; ++i)
        for (std::size_t j = 0; j < nj; ++j) {
            const double w = std::ldexp(1.0, -static_cast<int>(i + j + 2));
            const double d = ma[i * nj + j] - mb[i * nj + j];
            out.value += w * std::abs(d);
            weight[i * nj + j] = d >= 0.0 ? w : -w;
        }
    // stderr of the signed linear combination sum_ij sign(D_ij) w_ij D_ij
    auto variance = [&](const StableEnsemble& e) {
        const double n = static_cast<double>(e.times.size());
        std::vector<double> z(e.times.size(), 0.0);
        for (std::size_t k = 0; k < e.times.size(); ++k)
            for (std::size_t i = 0; i < ni; ++i)
                for (std::size_t j = 0; j < nj; ++j) z[k] += weight[i * nj + j] * term(e, k, i, j);
        const double m = std::accumulate(z.begin(), z.end(), 0.0) / n;
        double ss = 0.0;
        for (double v : z) ss += (v - m) * (v - m);
        return e.times.size() > 1 ? ss / (n - 1.0) / n : 0.0;
    };
    out.stderr_ = std::sqrt(variance(a) + variance(b));
    out.tail_bound = suite.tail_bound();
    return out;
}

double kolmogorov_tail(double lambda) {
    if (lambda <= 0.0) return 1.0;
    if (lambda < 0.2) return 1.0;
    double sum = 0.0;
    for (int k = 1; k <= 200; ++k) {
        const double term = std::exp(-2.0 * k * k * lambda * lambda);
        sum += (k % 2 == 1 ? 2.0 : -2.0) * term;
        if (term < 1e-16) break;
    }
    return std::clamp(sum, 0.0, 1.0);
}

KsResult ks_two_sample(std::vector<double> a, std::vector<double> b) {
    if (a.empty() || b.empty()) throw std::invalid_argument("KS test needs nonempty samples");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    std::size_t i = 0;
    std::size_t j = 0;
    KsResult r;
    double fa_at = 0.0;
    double fb_at = 0.0;
    while (i < a.size() || j < b.size()) {
        // advance through every copy of the next value in both samples
        const double v = j >= b.size() || (i < a.size() && a[i] <= b[j]) ? a[i] : b[j];
        while (i < a.size() && a[i] == v) ++i;
        while (j < b.size() && b[j] == v) ++j;
        const double fa = static_cast<double>(i) / na;
        const double fb = static_cast<double>(j) / nb;
        if (std::abs(fa - fb) > r.statistic) {
            r.statistic = std::abs(fa - fb);
            r.location = v;
            fa_at = fa;
            fb_at = fb;
        }
    }
    const double en = std::sqrt(na * nb / (na + nb));
    r.p_value = kolmogorov_tail((en + 0.12 + 0.11 / en) * r.statistic);
    const double binomial = std::sqrt(fa_at * (1.0 - fa_at) / na + fb_at * (1.0 - fb_at) / nb);
    // sd of the null Kolmogorov law is ~0.26 / en
    r.stderr_ = std::max(binomial, 0.26 / en);
    return r;
}

KsResult ks_one_sample(std::vector<double> a, const std::function<double(double)>& cdf) {
    if (a.empty()) throw std::invalid_argument("KS test needs a nonempty sample");
    std::sort(a.begin(), a.end());
    const double n = static_cast<double>(a.size());
    KsResult r;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double f = cdf(a[i]);
        const double d = std::max(static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n);
        if (d > r.statistic) {
            r.statistic = d;
            r.location = a[i];
        }
    }
    const double en = std::sqrt(n);
    r.p_value = kolmogorov_tail((en + 0.12 + 0.11 / en) * r.statistic);
    r.stderr_ = 0.26 / en;
    return r;
}

HittingBound hitting_bound_check(const Box& start, const ObstacleSet& w, double b, double alpha, std::size_t n_paths,
                                 std::uint64_t seed, unsigned workers) {
    if (!(alpha > 0.0)) throw std::invalid_argument("hitting bound needs alpha > 0");
    if (!(b > 0.0)) throw std::invalid_argument("hitting bound needs a positive time b");
    if (w.dim() != 3 || start.dim != 3) throw std::invalid_argument("hitting bound check is implemented for d = 3");
    HittingBound out;
    const StartLaw law = StartLaw::uniform(start);
    double cap = 0.0;
    for (const auto& ball : w.balls()) cap += ball_capacity_alpha(3, ball.radius, alpha);
    out.rhs = std::exp(alpha * b) * (law.sup_density() / alpha) * cap;
    if (w.empty()) return out;

    DiffusionSpec spec;
    spec.dim = 3;
    spec.t_max = b;
    spec.dt = b / 100.0;
    const PathSimulator sim(spec, Domain::full_space(3), std::make_shared<ObstacleSet>(w));
    BatchOptions batch;
    batch.seed = seed;
    batch.workers = workers;
    const auto outcomes = batch_simulate(sim, law, n_paths, batch);
    std::size_t hits = 0;
    for (const auto& o : outcomes) hits += o.event == Event::hit_obstacle ? 1 : 0;
    const double n = static_cast<double>(n_paths);
    const double p = static_cast<double>(hits) / n;
    out.lhs = {p, std::sqrt(p * (1.0 - p) / n)};
    out.satisfied = out.lhs.value <= out.rhs + 3.0 * out.lhs.stderr_;
    return out;
}

}  // namespace icelab
