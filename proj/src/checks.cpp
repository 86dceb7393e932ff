#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "icelab/capacity.hpp"
#include "icelab/energy.hpp"
#include "icelab/harness.hpp"
#include "icelab/rsts.hpp"
#include "icelab/solvers.hpp"

namespace icelab {

double green_kernel_quadrature(int dim, double alpha, double r) {
    check_dim(dim);
    if (!(r > 0.0) || !(alpha > 0.0)) throw std::invalid_argument("quadrature needs r > 0 and alpha > 0");
    // t = e^s; the integrand decays double-exponentially at both ends, so the
    // trapezoidal rule converges geometrically in the step
    const double h = 1.0 / 64.0;
    const double lo = std::log(r * r) - 12.0;
    const double hi = std::log(60.0 / alpha + r * r);
    double sum = 0.0;
    for (double s = lo; s <= hi; s += h) {
        const double t = std::exp(s);
        const double p = std::pow(4.0 * kPi * t, -0.5 * dim) * std::exp(-r * r / (4.0 * t));
        sum += std::exp(-alpha * t) * p * t;
    }
    return sum * h;
}

namespace {

void add(ExperimentResult& r, int n, int env, std::string metric, double value, double se = 0.0) {
    r.stats.push_back({n, env, std::move(metric), value, se});
}

void write_rows(const std::string& dir, const ExperimentResult& res) {
    if (dir.empty()) return;
    std::filesystem::create_directories(dir);
    std::ofstream out(std::filesystem::path(dir) / "stats.csv");
    if (!out) throw std::runtime_error("cannot write stats.csv");
    out << "n,env,metric,value,stderr\n";
    for (const auto& r : res.stats) {
        out << r.n << ',' << r.env << ',' << r.metric << ',' << format_number(r.value) << ',' << format_number(r.stderr_)
            << '\n';
    }
}

}  // namespace

ExperimentResult run_capacity(const CapacityOptions& o) {
    const auto started = std::chrono::steady_clock::now();
    ExperimentResult res;
    res.kind = "capacity";

    for (std::size_t i = 0; i < o.radii.size(); ++i) {
        const double r = o.radii[i];
        const ObstacleSet ball(3, {{{0.0, 0.0, 0.0}, r}});
        CapacityMcSettings s;
        s.n_paths = o.paths;
        s.seed = derive_seed(o.seed, {tag(StreamTag::capacity), i});
        s.workers = o.workers;
        const CapacityEstimate est = estimate_capacity_mc(ball, {0.0, 0.0, 0.0}, s);
        const double exact = ball_capacity_classical(3, r);
        add(res, 0, static_cast<int>(i), "ball_radius", r);
        add(res, 0, static_cast<int>(i), "ball_capacity_mc", est.value, est.stderr_);
        add(res, 0, static_cast<int>(i), "ball_capacity_exact", exact);
        add(res, 0, static_cast<int>(i), "ball_capacity_z", est.stderr_ > 0 ? (est.value - exact) / est.stderr_ : 0.0);
    }

    // Green kernel at 20 log-spaced separations
    const GreenKernel k{3, 1.0};
    double worst_rel = 0.0;
    for (int i = 0; i < 20; ++i) {
        const double r = 1e-3 * std::pow(3000.0, i / 19.0);
        const double q = green_kernel_quadrature(3, 1.0, r);
        worst_rel = std::max(worst_rel, std::abs(green_kernel_radial(k, r) - q) / q);
    }
    add(res, 0, -1, "green_max_rel_error", worst_rel);
    double ratio_lo = kInf;
    double ratio_hi = 0.0;
    for (int i = 1; i <= 200; ++i) {
        const double r = 0.1 * i / 200.0;
        const double ratio = green_kernel_radial(k, r) * 4.0 * kPi * r;
        ratio_lo = std::min(ratio_lo, ratio);
        ratio_hi = std::max(ratio_hi, ratio);
    }
    add(res, 0, -1, "green_ratio_min", ratio_lo);
    add(res, 0, -1, "green_ratio_max", ratio_hi);

    // hitting bound on random configurations in the unit cube
    Stream cfg_rng(derive_seed(o.seed, {tag(StreamTag::misc), 0x686974ULL}));
    int held = 0;
    double biggest_lhs = 0.0;
    const Box cube(3, {0.0, 0.0, 0.0}, {1.0, 1.0, 1.0});
    for (int c = 0; c < o.hitting_configs; ++c) {
        const int count = 1 + static_cast<int>(cfg_rng() % 200);
        const double radius = 0.002 + 0.028 * cfg_rng.uniform();
        std::vector<Ball> balls;
        for (int b = 0; b < count; ++b) {
            Point x{0.0, 0.0, 0.0};
            for (int a = 0; a < 3; ++a) x[a] = -0.25 + 1.5 * cfg_rng.uniform();
            balls.push_back({x, radius * (0.5 + cfg_rng.uniform())});
        }
        const double b_time = 0.05 + 0.45 * cfg_rng.uniform();
        const HittingBound hb = hitting_bound_check(cube, ObstacleSet(3, balls), b_time, 1.0, o.hitting_paths,
                                                    derive_seed(o.seed, {0x686974ULL, static_cast<std::uint64_t>(c)}),
                                                    o.workers);
        add(res, 0, c, "hitting_balls", count);
        add(res, 0, c, "hitting_lhs", hb.lhs.value, hb.lhs.stderr_);
        add(res, 0, c, "hitting_rhs", hb.rhs);
        add(res, 0, c, "hitting_holds", hb.satisfied ? 1.0 : 0.0);
        held += hb.satisfied ? 1 : 0;
        biggest_lhs = std::max(biggest_lhs, hb.lhs.value);
    }
    add(res, 0, -1, "hitting_held", held);
    add(res, 0, -1, "hitting_max_lhs", biggest_lhs);

    // iid identity at kappa balls of total capacity 2 in the cube
    RandomCenterModel model;
    model.dim = 3;
    model.kappa = KappaRule::from_table({o.identity_kappa});
    model.radius.kind = RadiusRule::Kind::capacity_balanced;
    model.radius.c = 2.0;
    model.centers = CenterLaw::uniform(cube);
    model.seed = o.seed;
    const MeasureSampler gamma = MeasureSampler::model_equilibrium(model, 1);
    const IdentityCheck id = iid_identity_check(gamma, o.identity_kappa, k, o.energy_pairs,
                                                derive_seed(o.seed, {tag(StreamTag::energy)}));
    add(res, 0, -1, "identity_lhs", id.lhs.value, id.lhs.stderr_);
    add(res, 0, -1, "identity_rhs", id.rhs.value, id.rhs.stderr_);
    add(res, 0, -1, "identity_gap", id.gap, id.gap_stderr);

    res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    write_rows(o.output_dir, res);
    return res;
}

ExperimentResult run_selftest(bool quick, std::uint64_t seed, unsigned workers) {
    ExperimentResult res;
    res.kind = "selftest";
    auto check = [&](const std::string& name, bool ok) {
        add(res, 0, -1, name, ok ? 1.0 : 0.0);
        std::cout << (ok ? "PASS " : "FAIL ") << name << '\n';
    };
    const std::size_t paths = quick ? 500 : 5000;

    check("capacity_closed_form", std::abs(ball_capacity_classical(3, 0.3) - 4.0 * kPi * 0.3) < 1e-15);
    {
        const GreenKernel k{3, 1.0};
        const Point a{0.1, 0.2, 0.3};
        const Point b{0.4, -0.1, 0.0};
        check("green_symmetric", green_kernel(k, a, b) == green_kernel(k, b, a));
    }
    {
        DiffusionSpec spec;
        spec.t_max = 1.0;
        const PathSimulator sim(spec, Domain::full_space(3), nullptr, {constant_rate(0.0)});
        BatchOptions b;
        b.seed = seed;
        b.workers = workers;
        b.clock_rate = 0;
        bool never = true;
        for (const auto& o : batch_simulate(sim, StartLaw::at({0.0, 0.0, 0.0}), paths, b)) {
            never = never && o.event == Event::horizon;
        }
        check("zero_rate_never_kills", never);
    }
    McSettings s;
    s.n_paths = paths;
    s.seed = seed;
    s.workers = workers;
    s.diffusion.t_max = 40.0;
    {
        const auto p = DirichletProblem::constant(Domain::box(Box{}), 1.0, 0.0, 0.0);
        check("dirichlet_zero_data", solve_un_mc(p, nullptr, {0.5, 0.5, 0.5}, s).value == 0.0);
    }
    {
        const auto p = DirichletProblem::constant(Domain::full_space(3), 1.0, 1.0, 0.0);
        check("dirichlet_free_space", std::abs(solve_un_mc(p, nullptr, {0.0, 0.0, 0.0}, s).value - 1.0) < 1e-12);
    }
    {
        auto p = DirichletProblem::constant(Domain::full_space(3), 1.0, 1.0, 0.0);
        p.h = constant_rate(2.0);
        check("relaxed_constant_rate", std::abs(solve_u_limit_mc(p, {0.0, 0.0, 0.0}, s).value - 1.0 / 3.0) < 1e-12);
    }
    {
        // phi = 1 on the boundary only, so the interior source is f = alpha + c alone
        auto p = DirichletProblem::constant(Domain::box(Box(2, {0.0, 0.0, 0.0}, {1.0, 1.0, 0.0})), 1.0, 3.0, 1.0);
        p.phi = [](const Point& x) { return x[0] <= 0.0 || x[0] >= 1.0 || x[1] <= 0.0 || x[1] >= 1.0 ? 1.0 : 0.0; };
        p.h = constant_rate(2.0);
        const GridSolution g = solve_fd_reference(p, 17);
        double worst = 0.0;
        for (double v : g.values) worst = std::max(worst, std::abs(v - 1.0));
        check("fd_constant_solution", worst < 1e-7);
    }
    {
        Stream rng(derive_seed(seed, {tag(StreamTag::misc), 1}));
        std::vector<Ball> balls;
        for (int i = 0; i < 300; ++i) {
            balls.push_back({{rng.uniform(), rng.uniform(), rng.uniform()}, 0.001 + 0.02 * rng.uniform()});
        }
        const ObstacleSet set(3, balls);
        double worst = 0.0;
        const int points = quick ? 1000 : 10000;
        for (int i = 0; i < points; ++i) {
            const Point x{-0.2 + 1.4 * rng.uniform(), -0.2 + 1.4 * rng.uniform(), -0.2 + 1.4 * rng.uniform()};
            worst = std::max(worst, std::abs(set.nearest_distance(x) - set.nearest_distance_brute(x)));
        }
        check("index_matches_brute_force", worst <= 1e-12);
    }
    {
        const std::vector<double> a{0.1, 0.5, 0.9, 1.3};
        check("ks_identical_samples", ks_two_sample(a, a).statistic == 0.0);
    }
    {
        DiffusionSpec spec;
        spec.t_max = 0.5;
        const auto set = std::make_shared<ObstacleSet>(
            ObstacleSet(3, {{{0.5, 0.5, 0.5}, 0.1}, {{0.2, 0.7, 0.4}, 0.05}}));
        const PathSimulator sim(spec, Domain::full_space(3), set);
        BatchOptions one;
        one.seed = seed;
        one.workers = 1;
        BatchOptions many = one;
        many.workers = 4;
        const auto a = batch_simulate(sim, StartLaw::uniform(Box{}), paths, one);
        const auto b = batch_simulate(sim, StartLaw::uniform(Box{}), paths, many);
        bool same = true;
        for (std::size_t i = 0; i < paths; ++i) same = same && a[i].time == b[i].time && a[i].event == b[i].event;
        check("worker_count_independent", same);
    }
    return res;
}

}  // namespace icelab
