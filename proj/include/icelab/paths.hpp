#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "icelab/geometry.hpp"
#include "icelab/obstacles.hpp"
#include "icelab/rates.hpp"
#include "icelab/rng.hpp"

namespace icelab {

/// sphere: exact exit moves from the largest ball around X on which nothing
/// changes (no obstacle, no domain face, constant rates and integrands).
/// euler: Gaussian steps with the adaptive size rule below.
enum class Scheme { sphere, euler };
std::string to_string(Scheme s);
Scheme scheme_from_string(const std::string& name);

/// Brownian motion with generator Delta: X_{t+h} = X_t + sqrt(2h) Z.
struct DiffusionSpec {
    int dim = 3;
    Scheme scheme = Scheme::sphere;
    double dt = 1e-3;        ///< base step where obstacles, rates or integrands live; for the
                             ///< sphere scheme a varying field is frozen over balls with mean exit time dt
    double dt_far = 0.0;     ///< step cap away from all of them; 0 means dt
    double t_max = 1.0;      ///< horizon
    double shrink = 0.5;     ///< s (euler): near a feature at distance r, steps have rms size s r
    double hit_tolerance = 1e-3;  ///< entrance is declared within this fraction of the feature size

    void validate() const;
    double far_cap() const { return dt_far > 0.0 ? dt_far : dt; }
};

/// The integrand of a discounted functional
///   int_0^stop exp(-alpha t - A^d_t) f(X_t) dt   (optionally d A^a_t instead of dt)
/// where A^d and A^a are accumulated rate functionals selected by index.
struct Integrand {
    std::string id = "f";
    double alpha = 0.0;
    Field f;
    bool constant = false;            ///< constant f imposes no step constraint
    std::optional<Box> support;       ///< where f may be nonzero; nullopt = everywhere
    std::optional<std::size_t> damp_rate;
    std::optional<std::size_t> against_rate;
};

enum class Event { hit_obstacle, exit_domain, clock_kill, horizon };
std::string to_string(Event e);

struct PathOutcome {
    Event event = Event::horizon;
    double time = 0.0;
    Point terminal{0.0, 0.0, 0.0};
    std::vector<double> rate_integrals;  ///< A_stop, one per rate
    std::vector<double> integrals;       ///< one per integrand
    std::optional<Point> observed;       ///< X at the observation time
    std::size_t steps = 0;
};

struct TracePoint {
    double t;
    Point x;
};

/// Stop when the additive functional of rates[rate] reaches threshold.
struct Clock {
    std::size_t rate = 0;
    double threshold = kInf;
};

struct RunOptions {
    std::optional<Clock> clock;
    /// Record X at this time; the free path is continued past any earlier stop.
    std::optional<double> observe_time;
    std::vector<TracePoint>* trace = nullptr;
};

/// Stops at the first of: entrance into the obstacles (within eps_hit),
/// exit from the domain, the clock, T_max. Rate and integrand functionals
/// use left-endpoint values, integrated exactly in time over each step.
///
/// Euler: steps min(dt, (s * dist)^2 / (2 d)), dist the distance to the
/// nearest obstacle, domain face or soft-rate feature; away from every active
/// region the cap relaxes from dt up to dt_far.
///
/// Sphere: the path jumps to the exit point of the ball B(X, R), with the
/// exit time drawn from its exact law. R is the obstacle clearance, the
/// distance to the domain boundary, and the radius on which every rate and
/// integrand is constant; where a field varies at X it is frozen over a ball
/// of radius sqrt(2 d dt) (or eps_soft at an obstacle-rate surface). A
/// checkpoint (observation time, clock, T_max) inside a move places X at the
/// exact conditional law of the motion killed on the sphere.
class PathSimulator {
public:
    PathSimulator(DiffusionSpec spec, Domain domain, std::shared_ptr<const Target> obstacles,
                  std::vector<RatePtr> rates = {}, std::vector<Integrand> integrands = {});

    PathOutcome run(const Point& x0, Stream& rng, const RunOptions& options = {}) const;

    const DiffusionSpec& spec() const { return spec_; }
    const Domain& domain() const { return domain_; }
    const std::vector<RatePtr>& rates() const { return rates_; }
    const std::vector<Integrand>& integrands() const { return integrands_; }
    const Target* obstacles() const { return obstacles_.get(); }

private:
    double step_size(const Point& x, double d_obs, double d_dom) const;
    PathOutcome run_euler(const Point& x0, Stream& rng, const RunOptions& options) const;
    PathOutcome run_sphere(const Point& x0, Stream& rng, const RunOptions& options) const;

    DiffusionSpec spec_;
    Domain domain_;
    std::shared_ptr<const Target> obstacles_;
    std::vector<RatePtr> rates_;
    std::vector<Integrand> integrands_;

    double eps_hit_ = 0.0;
    double eps_exit_ = 0.0;
    std::vector<std::size_t> soft_rates_;
    std::vector<double> eps_soft_;
    std::vector<Box> active_boxes_;
    bool active_everywhere_ = false;
    double step_scale_ = 0.0;  // s^2 / (2 d)
    double rho_dt_ = 0.0;      // sqrt(2 d dt)
    std::vector<double> rate_floor_;
};

PathOutcome simulate_path(const DiffusionSpec& spec, const Domain& domain, std::shared_ptr<const Target> obstacles,
                          const Point& x0, const std::vector<RatePtr>& rates,
                          const std::vector<Integrand>& integrands, Stream& rng, const RunOptions& options = {});

/// Law of the starting point.
struct StartLaw {
    enum class Kind { point, uniform_box, uniform_sphere };
    Kind kind = Kind::point;
    Point x{0.0, 0.0, 0.0};
    Box box;
    double radius = 0.0;

    static StartLaw at(const Point& p);
    static StartLaw uniform(const Box& b);
    static StartLaw sphere(const Point& center, double r);

    Point sample(Stream& rng, int dim) const;
    /// sup of the Lebesgue density; +inf for singular laws.
    double sup_density() const;
};

struct BatchOptions {
    std::uint64_t seed = 1;
    /// Extra stream coordinates, e.g. (n, environment), mixed into every path key.
    std::vector<std::uint64_t> stream_ids;
    unsigned workers = 0;
    /// Run an Exp(1) clock on this rate (sample_killed_time semantics).
    std::optional<std::size_t> clock_rate;
    std::optional<double> observe_time;
};

/// Key of path k's private stream.
std::uint64_t path_stream_key(const BatchOptions& options, std::size_t k);

/// n_paths independent paths; path k uses the stream keyed by
/// (seed, stream_ids, k), so outcomes do not depend on the worker count.
std::vector<PathOutcome> batch_simulate(const PathSimulator& sim, const StartLaw& start, std::size_t n_paths,
                                        const BatchOptions& options);

/// A_{t_k} = sum_{i<k} h(x_i) (t_{i+1} - t_i) along a recorded trajectory.
std::vector<double> accumulate_rate(std::span<const TracePoint> trajectory, const RateMeasure& h);

void write_trajectory_csv(std::span<const TracePoint> trajectory, int dim, const std::string& path);

}  // namespace icelab
