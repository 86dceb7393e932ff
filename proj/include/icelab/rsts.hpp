#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "icelab/geometry.hpp"
#include "icelab/obstacles.hpp"
#include "icelab/paths.hpp"
#include "icelab/rates.hpp"
#include "icelab/rng.hpp"

namespace icelab {

struct Estimate {
    double value = 0.0;
    double stderr_ = 0.0;
};

/// tau = first t with A_t >= e, e ~ Exp(1), A the functional of sim.rates()[rate].
/// A killed path reports Event::clock_kill; otherwise the outcome of the
/// underlying path (horizon when A_{T_max} < e).
PathOutcome sample_killed_time(const PathSimulator& sim, std::size_t rate, const Point& x0, Stream& rng,
                               std::optional<double> observe_time = std::nullopt);

/// Same law through the survival process: r ~ U(0,1) and
/// tau = inf{t : exp(-A_t) <= 1 - r}, located by bisection on the recorded
/// path. Returns (killed, tau ^ stop).
struct KilledTime {
    bool killed = false;
    double time = 0.0;
};
KilledTime sample_killed_time_inversion(const PathSimulator& sim, std::size_t rate, const Point& x0, Stream& rng);

/// Right-continuous empirical CDF of tau ^ T_max samples.
class EmpiricalLaw {
public:
    explicit EmpiricalLaw(std::vector<double> samples);

    std::size_t size() const { return sorted_.size(); }
    const std::vector<double>& sorted() const { return sorted_; }
    double cdf(double t) const;
    /// Standard error of cdf(t) as a binomial proportion.
    double cdf_stderr(double t) const;
    double quantile(double p) const;
    /// E[exp(-lambda tau)].
    Estimate laplace(double lambda) const;
    Estimate mean() const;

private:
    std::vector<double> sorted_;
};

EmpiricalLaw empirical_law(std::vector<double> samples);

/// tau samples paired with the conditioning functionals H_j(X_{t0}).
struct StableEnsemble {
    std::vector<double> times;
    std::vector<std::vector<double>> h;  // h[k][j]
};

struct StableTestSuite {
    std::vector<std::string> f_names;
    std::vector<std::function<double(double)>> f;
    std::vector<double> f_sup;
    std::vector<std::string> h_names;
    std::vector<std::function<double(const Point&)>> h;
    double t0 = 0.25;

    /// e^{-lambda t} for each lambda, ramps smoothing 1{t <= q} for each q,
    /// truncated to 8 functions; H: 1, half-spaces {x_i < mid_i}, the region
    /// itself and quadrant boxes of it, truncated to 8.
    static StableTestSuite standard(int dim, const Box& region, double t_max,
                                    const std::vector<double>& lambdas = {0.5, 1.0, 2.0}, double t0 = 0.25);

    std::size_t size_f() const { return f.size(); }
    std::size_t size_h() const { return h.size(); }
    std::vector<double> evaluate_h(const Point& x) const;
    /// Weight mass of the terms dropped by truncating the double sum.
    double tail_bound() const;
};

StableEnsemble make_ensemble(const std::vector<PathOutcome>& outcomes, const StableTestSuite& suite, double t_max);

struct StableMetric {
    double value = 0.0;
    double stderr_ = 0.0;
    double tail_bound = 0.0;
};

/// Truncated rho = sum_{i,j} 2^{-(i+j)} |E_A[H_j f_i(tau)] - E_B[H_j f_i(tau)]| / ||f_i||.
StableMetric stable_metric_estimate(const StableEnsemble& a, const StableEnsemble& b, const StableTestSuite& suite);

struct KsResult {
    double statistic = 0.0;
    double p_value = 1.0;
    double stderr_ = 0.0;  ///< first-order sampling error of the statistic
    double location = 0.0; ///< where the sup is attained
};

/// Asymptotic Kolmogorov distribution tail P(K > lambda).
double kolmogorov_tail(double lambda);
KsResult ks_two_sample(std::vector<double> a, std::vector<double> b);
KsResult ks_one_sample(std::vector<double> a, const std::function<double(double)>& cdf);

struct HittingBound {
    Estimate lhs;
    double rhs = 0.0;
    bool satisfied = true;
};

/// P_pi(D_W <= b) against e^{alpha b} (||p||_sup / alpha) sum_i Cap_alpha(B_i),
/// with pi the uniform law on `start` (d = 3).
HittingBound hitting_bound_check(const Box& start, const ObstacleSet& w, double b, double alpha, std::size_t n_paths,
                                 std::uint64_t seed, unsigned workers = 0);

}  // namespace icelab
