#include "icelab/paths.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>

#include "icelab/ball_exit.hpp"
#include "icelab/parallel.hpp"

namespace icelab {

void DiffusionSpec::validate() const {
    check_dim(dim);
    if (!(dt > 0.0)) throw std::invalid_argument("diffusion step dt must be positive");
    if (dt_far < 0.0) throw std::invalid_argument("far-field step cap must be nonnegative");
    if (!(t_max > 0.0)) throw std::invalid_argument("horizon t_max must be positive");
    if (!(shrink > 0.0 && shrink < 1.0)) throw std::invalid_argument("step shrink factor must lie in (0, 1)");
    if (!(hit_tolerance > 0.0 && hit_tolerance < 1.0)) {
        throw std::invalid_argument("hit tolerance must lie in (0, 1)");
    }
}

std::string to_string(Scheme s) { return s == Scheme::sphere ? "sphere" : "euler"; }

Scheme scheme_from_string(const std::string& name) {
    if (name == "sphere") return Scheme::sphere;
    if (name == "euler") return Scheme::euler;
    throw std::invalid_argument("unknown path scheme '" + name + "' (expected sphere or euler)");
}

std::string to_string(Event e) {
    switch (e) {
        case Event::hit_obstacle: return "hit";
        case Event::exit_domain: return "exit";
        case Event::clock_kill: return "clock";
        case Event::horizon: return "horizon";
    }
    return "?";
}

PathSimulator::PathSimulator(DiffusionSpec spec, Domain domain, std::shared_ptr<const Target> obstacles,
                             std::vector<RatePtr> rates, std::vector<Integrand> integrands)
    : spec_(spec),
      domain_(std::move(domain)),
      obstacles_(std::move(obstacles)),
      rates_(std::move(rates)),
      integrands_(std::move(integrands)) {
    spec_.validate();
    if (domain_.dim() != spec_.dim) throw std::invalid_argument("domain and diffusion dimensions differ");
    if (obstacles_ && obstacles_->dim() != spec_.dim) {
        throw std::invalid_argument("obstacle and diffusion dimensions differ");
    }
    step_scale_ = spec_.shrink * spec_.shrink / (2.0 * spec_.dim);
    rho_dt_ = std::sqrt(2.0 * spec_.dim * spec_.dt);

    if (obstacles_ && !obstacles_->empty()) {
        eps_hit_ = spec_.hit_tolerance * obstacles_->feature_size();
        active_boxes_.push_back(obstacles_->bounding_box());
    }
    switch (domain_.kind()) {
        case Domain::Kind::full_space: break;
        case Domain::Kind::box: {
            double side = kInf;
            for (int i = 0; i < spec_.dim; ++i) {
                side = std::min(side, domain_.bounds().upper[i] - domain_.bounds().lower[i]);
            }
            eps_exit_ = spec_.hit_tolerance * side;
            break;
        }
        case Domain::Kind::ball: eps_exit_ = spec_.hit_tolerance * domain_.ball_radius(); break;
    }
    for (std::size_t r = 0; r < rates_.size(); ++r) {
        if (!rates_[r]) throw std::invalid_argument("null rate measure");
        const auto& rate = *rates_[r];
        rate_floor_.push_back(std::isfinite(rate.feature_size()) ? spec_.hit_tolerance * rate.feature_size()
                                                                 : rho_dt_);
        if (rate.is_constant()) continue;
        if (const auto box = rate.support()) {
            active_boxes_.push_back(*box);
        } else {
            active_everywhere_ = true;
        }
        if (std::isfinite(rate.feature_size())) {
            soft_rates_.push_back(r);
            eps_soft_.push_back(spec_.hit_tolerance * rate.feature_size());
        }
    }
    for (const auto& g : integrands_) {
        if (!g.f) throw std::invalid_argument("integrand without a function");
        if (g.damp_rate && *g.damp_rate >= rates_.size()) throw std::invalid_argument("damping rate index out of range");
        if (g.against_rate && *g.against_rate >= rates_.size()) {
            throw std::invalid_argument("integrator rate index out of range");
        }
        if (g.constant) continue;
        if (g.support) {
            active_boxes_.push_back(*g.support);
        } else {
            active_everywhere_ = true;
        }
    }
}

double PathSimulator::step_size(const Point& x, double d_obs, double d_dom) const {
    double local = kInf;
    if (eps_hit_ > 0.0) local = std::min(local, std::max(d_obs, eps_hit_));
    if (eps_exit_ > 0.0) local = std::min(local, std::max(d_dom, eps_exit_));
    for (std::size_t k = 0; k < soft_rates_.size(); ++k) {
        local = std::min(local, std::max(rates_[soft_rates_[k]]->feature_distance(x), eps_soft_[k]));
    }
    const double dt_local = step_scale_ * local * local;

    const double far = std::max(spec_.far_cap(), spec_.dt);
    double cap = far;
    if (active_everywhere_) {
        cap = spec_.dt;
    } else if (!active_boxes_.empty()) {
        double d_act = kInf;
        for (const auto& box : active_boxes_) d_act = std::min(d_act, box.distance_outside(x));
        cap = d_act <= 0.0 ? spec_.dt : std::clamp(step_scale_ * d_act * d_act, spec_.dt, far);
    }
    return std::min(dt_local, cap);
}

PathOutcome PathSimulator::run(const Point& x0, Stream& rng, const RunOptions& options) const {
    if (!all_finite(x0)) throw std::invalid_argument("starting point has non-finite coordinates");
    PathOutcome out = spec_.scheme == Scheme::sphere ? run_sphere(x0, rng, options) : run_euler(x0, rng, options);
    if (options.observe_time && !out.observed) {
        // the underlying free motion keeps running after the stop
        Point y = out.terminal;
        const double gap = *options.observe_time - out.time;
        if (gap > 0.0) {
            const double sd = std::sqrt(2.0 * gap);
            for (int i = 0; i < spec_.dim; ++i) y[i] += sd * rng.normal();
        }
        out.observed = y;
    }
    return out;
}

PathOutcome PathSimulator::run_sphere(const Point& x0, Stream& rng, const RunOptions& options) const {
    const std::size_t n_rates = rates_.size();
    const int dim = spec_.dim;
    PathOutcome out;
    out.rate_integrals.assign(n_rates, 0.0);
    out.integrals.assign(integrands_.size(), 0.0);
    const UnitBallExit& law = UnitBallExit::get(dim);

    Point x = x0;
    for (int i = dim; i < kMaxDim; ++i) x[i] = 0.0;
    double t = 0.0;
    const bool has_obstacles = eps_hit_ > 0.0;
    const bool bounded = eps_exit_ > 0.0;
    double d_obs = has_obstacles ? obstacles_->clearance(x) : kInf;
    double d_dom = domain_.boundary_distance(x);
    auto& A = out.rate_integrals;
    std::vector<double> h(n_rates, 0.0);
    std::vector<double> fx(integrands_.size(), 0.0);

    const std::optional<double> t_obs = options.observe_time;
    bool observed = false;
    if (t_obs && *t_obs <= 0.0) {
        out.observed = x;
        observed = true;
    }
    if (options.trace) options.trace->push_back({t, x});

    auto finish = [&](Event e) {
        out.event = e;
        out.time = t;
        out.terminal = x;
    };

    if (has_obstacles && d_obs <= eps_hit_) {
        finish(Event::hit_obstacle);
        return out;
    }
    if (bounded && d_dom <= eps_exit_) {
        finish(Event::exit_domain);
        return out;
    }
    for (;;) {
        if (t >= spec_.t_max) {
            finish(Event::horizon);
            return out;
        }
        double radius = std::min(d_obs, d_dom);
        for (std::size_t r = 0; r < n_rates; ++r) {
            const RateMeasure& rate = *rates_[r];
            h[r] = rate(x);
            if (h[r] < 0.0) throw std::domain_error("rate density " + rate.id() + " is negative");
            if (!rate.is_constant()) radius = std::min(radius, std::max(rate.flat_radius(x), rate_floor_[r]));
        }
        for (std::size_t j = 0; j < integrands_.size(); ++j) {
            const Integrand& g = integrands_[j];
            fx[j] = g.f(x);
            if (g.constant) continue;
            const double flat = g.support && !g.support->contains(x) ? g.support->distance_outside(x) : 0.0;
            radius = std::min(radius, std::max(flat, rho_dt_));
        }

        const bool obs_pending = t_obs && !observed;
        double t_check = spec_.t_max;
        if (obs_pending) t_check = std::min(t_check, *t_obs);
        double t_kill = kInf;
        if (options.clock) {
            const std::size_t c = options.clock->rate;
            if (h[c] > 0.0) t_kill = t + std::max(0.0, options.clock->threshold - A[c]) / h[c];
        }
        const double t_event = std::min(t_check, t_kill);
        const double tau = std::isfinite(radius) ? radius * radius * law.sample_time(rng) : kInf;
        const bool exits = t + tau < t_event;
        const double u = exits ? tau : t_event - t;

        for (std::size_t j = 0; j < integrands_.size(); ++j) {
            const Integrand& g = integrands_[j];
            if (fx[j] == 0.0) continue;
            const double hd = g.damp_rate ? h[*g.damp_rate] : 0.0;
            const double ad = g.damp_rate ? A[*g.damp_rate] : 0.0;
            const double lam = g.alpha + hd;
            const double len = lam > 0.0 ? -std::expm1(-lam * u) / lam : u;
            const double mult = g.against_rate ? h[*g.against_rate] : 1.0;
            out.integrals[j] += fx[j] * mult * std::exp(-g.alpha * t - ad) * len;
        }
        for (std::size_t r = 0; r < n_rates; ++r) A[r] += h[r] * u;

        if (exits) {
            const Point e = uniform_direction(dim, rng);
            for (int i = 0; i < dim; ++i) x[i] += radius * e[i];
            t += tau;
        } else if (u > 0.0) {
            if (std::isfinite(radius)) {
                const double rho = radius * law.sample_radius_given_survival(u / (radius * radius), rng);
                const Point e = uniform_direction(dim, rng);
                for (int i = 0; i < dim; ++i) x[i] += rho * e[i];
            } else {
                const double sd = std::sqrt(2.0 * u);
                for (int i = 0; i < dim; ++i) x[i] += sd * rng.normal();
            }
            t = t_event;
        } else {
            t = t_event;
        }
        ++out.steps;
        if (!all_finite(x)) throw std::runtime_error("path produced non-finite coordinates");
        if (options.trace) options.trace->push_back({t, x});

        if (!exits) {
            if (t_kill <= t_check) {
                A[options.clock->rate] = options.clock->threshold;
                finish(Event::clock_kill);
                return out;
            }
            if (obs_pending && t_check == *t_obs) {
                out.observed = x;
                observed = true;
            }
        }
        if (has_obstacles) {
            d_obs = obstacles_->clearance(x);
            if (d_obs <= eps_hit_) {
                finish(Event::hit_obstacle);
                return out;
            }
        }
        if (bounded) {
            d_dom = domain_.boundary_distance(x);
            if (d_dom <= eps_exit_) {
                finish(Event::exit_domain);
                return out;
            }
        }
    }
}

PathOutcome PathSimulator::run_euler(const Point& x0, Stream& rng, const RunOptions& options) const {
    const std::size_t n_rates = rates_.size();
    PathOutcome out;
    out.rate_integrals.assign(n_rates, 0.0);
    out.integrals.assign(integrands_.size(), 0.0);

    Point x = x0;
    for (int i = spec_.dim; i < kMaxDim; ++i) x[i] = 0.0;
    double t = 0.0;
    const bool has_obstacles = eps_hit_ > 0.0;
    const bool bounded = eps_exit_ > 0.0;
    double d_obs = has_obstacles ? obstacles_->clearance(x) : kInf;
    double d_dom = domain_.boundary_distance(x);
    auto& A = out.rate_integrals;
    std::vector<double> h(n_rates, 0.0);

    const std::optional<double> t_obs = options.observe_time;
    bool observed = false;
    if (t_obs && *t_obs <= 0.0) {
        out.observed = x;
        observed = true;
    }
    if (options.trace) options.trace->push_back({t, x});

    auto finish = [&](Event e) {
        out.event = e;
        out.time = t;
        out.terminal = x;
    };

    if (has_obstacles && d_obs <= eps_hit_) {
        finish(Event::hit_obstacle);
    } else if (bounded && d_dom <= eps_exit_) {
        finish(Event::exit_domain);
    } else {
        for (;;) {
            if (t >= spec_.t_max) {
                finish(Event::horizon);
                break;
            }
            double dt = step_size(x, d_obs, d_dom);
            const double remaining = spec_.t_max - t;
            bool to_end = false;
            bool to_obs = false;
            if (dt >= remaining) {
                dt = remaining;
                to_end = true;
            }
            if (t_obs && !observed && *t_obs > t && dt >= *t_obs - t) {
                dt = *t_obs - t;
                to_obs = true;
                to_end = to_end && dt >= remaining;
            }

            for (std::size_t r = 0; r < n_rates; ++r) {
                h[r] = (*rates_[r])(x);
                if (h[r] < 0.0) throw std::domain_error("rate density " + rates_[r]->id() + " is negative");
            }
            double dt_eff = dt;
            bool killed = false;
            if (options.clock) {
                const std::size_t c = options.clock->rate;
                const double need = options.clock->threshold - A[c];
                if (h[c] > 0.0 && h[c] * dt >= need) {
                    dt_eff = std::max(0.0, need / h[c]);
                    killed = true;
                }
            }
            for (std::size_t j = 0; j < integrands_.size(); ++j) {
                const Integrand& g = integrands_[j];
                const double fx = g.f(x);
                if (fx == 0.0) continue;
                const double hd = g.damp_rate ? h[*g.damp_rate] : 0.0;
                const double ad = g.damp_rate ? A[*g.damp_rate] : 0.0;
                const double lam = g.alpha + hd;
                const double len = lam > 0.0 ? -std::expm1(-lam * dt_eff) / lam : dt_eff;
                const double mult = g.against_rate ? h[*g.against_rate] : 1.0;
                out.integrals[j] += fx * mult * std::exp(-g.alpha * t - ad) * len;
            }
            for (std::size_t r = 0; r < n_rates; ++r) A[r] += h[r] * dt_eff;
            if (killed) {
                t += dt_eff;
                A[options.clock->rate] = options.clock->threshold;
                finish(Event::clock_kill);
                break;
            }

            const double sd = std::sqrt(2.0 * dt);
            for (int i = 0; i < spec_.dim; ++i) x[i] += sd * rng.normal();
            t = to_obs ? *t_obs : (to_end ? spec_.t_max : t + dt);
            ++out.steps;
            if (!all_finite(x)) throw std::runtime_error("path produced non-finite coordinates");
            if (options.trace) options.trace->push_back({t, x});
            if (to_obs) {
                out.observed = x;
                observed = true;
            }
            if (has_obstacles) {
                d_obs = obstacles_->clearance(x);
                if (d_obs <= eps_hit_) {
                    finish(Event::hit_obstacle);
                    break;
                }
            }
            if (bounded) {
                d_dom = domain_.boundary_distance(x);
                if (d_dom <= eps_exit_) {
                    finish(Event::exit_domain);
                    break;
                }
            }
        }
    }
    return out;
}

PathOutcome simulate_path(const DiffusionSpec& spec, const Domain& domain, std::shared_ptr<const Target> obstacles,
                          const Point& x0, const std::vector<RatePtr>& rates,
                          const std::vector<Integrand>& integrands, Stream& rng, const RunOptions& options) {
    const PathSimulator sim(spec, domain, std::move(obstacles), rates, integrands);
    return sim.run(x0, rng, options);
}

StartLaw StartLaw::at(const Point& p) {
    StartLaw s;
    s.kind = Kind::point;
    s.x = p;
    return s;
}

StartLaw StartLaw::uniform(const Box& b) {
    StartLaw s;
    s.kind = Kind::uniform_box;
    s.box = b;
    return s;
}

StartLaw StartLaw::sphere(const Point& center, double r) {
    if (!(r > 0.0)) throw std::invalid_argument("start sphere radius must be positive");
    StartLaw s;
    s.kind = Kind::uniform_sphere;
    s.x = center;
    s.radius = r;
    return s;
}

Point StartLaw::sample(Stream& rng, int dim) const {
    switch (kind) {
        case Kind::point: return x;
        case Kind::uniform_box: {
            Point p{0.0, 0.0, 0.0};
            for (int i = 0; i < dim; ++i) p[i] = box.lower[i] + (box.upper[i] - box.lower[i]) * rng.uniform();
            return p;
        }
        case Kind::uniform_sphere: {
            Point g{0.0, 0.0, 0.0};
            double len = 0.0;
            do {
                for (int i = 0; i < dim; ++i) g[i] = rng.normal();
                len = norm(g);
            } while (len == 0.0);
            Point p = x;
            for (int i = 0; i < dim; ++i) p[i] += radius * g[i] / len;
            return p;
        }
    }
    return x;
}

double StartLaw::sup_density() const { return kind == Kind::uniform_box ? 1.0 / box.volume() : kInf; }

std::uint64_t path_stream_key(const BatchOptions& options, std::size_t k) {
    std::uint64_t key = derive_seed(options.seed, {tag(StreamTag::paths)});
    for (std::uint64_t id : options.stream_ids) key = derive_seed(key, {id});
    return derive_seed(key, {static_cast<std::uint64_t>(k)});
}

std::vector<PathOutcome> batch_simulate(const PathSimulator& sim, const StartLaw& start, std::size_t n_paths,
                                        const BatchOptions& options) {
    if (n_paths < 1) throw std::invalid_argument("batch needs at least one path");
    if (options.clock_rate && *options.clock_rate >= sim.rates().size()) {
        throw std::invalid_argument("clock rate index out of range");
    }
    std::vector<PathOutcome> outcomes(n_paths);
    const int dim = sim.spec().dim;
    parallel_for(n_paths, options.workers, [&](std::size_t k) {
        const std::uint64_t key = path_stream_key(options, k);
        Stream rng(key);
        const Point x0 = start.sample(rng, dim);
        RunOptions run;
        if (options.clock_rate) {
            // the threshold has its own stream, so runs with and without a clock share their increments
            Stream side(derive_seed(key, {tag(StreamTag::misc)}));
            run.clock = Clock{*options.clock_rate, side.exponential()};
        }
        run.observe_time = options.observe_time;
        outcomes[k] = sim.run(x0, rng, run);
    });
    return outcomes;
}

std::vector<double> accumulate_rate(std::span<const TracePoint> trajectory, const RateMeasure& h) {
    std::vector<double> a(trajectory.size(), 0.0);
    for (std::size_t k = 0; k + 1 < trajectory.size(); ++k) {
        const double value = h(trajectory[k].x);
        if (value < 0.0) throw std::domain_error("rate density " + h.id() + " is negative");
        a[k + 1] = a[k] + value * (trajectory[k + 1].t - trajectory[k].t);
    }
    return a;
}

void write_trajectory_csv(std::span<const TracePoint> trajectory, int dim, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out.precision(17);
    out << 't';
    for (int i = 0; i < dim; ++i) out << ",x" << (i + 1);
    out << '\n';
    for (const auto& p : trajectory) {
        out << p.t;
        for (int i = 0; i < dim; ++i) out << ',' << p.x[i];
        out << '\n';
    }
}

}  // namespace icelab
