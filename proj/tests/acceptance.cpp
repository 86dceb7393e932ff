// Runs every acceptance criterion at full size and prints one PASS/FAIL line each.
//   acceptance [--out DIR] [--only N[,N...]] [--workers K]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "icelab/capacity.hpp"
#include "icelab/energy.hpp"
#include "icelab/harness.hpp"
#include "icelab/rsts.hpp"
#include "icelab/solvers.hpp"

using namespace icelab;
namespace fs = std::filesystem;

namespace {

struct Verdict {
    bool pass = false;
    std::string detail;
};

struct Context {
    fs::path out;
    unsigned workers = 0;
    // shared between criteria
    std::optional<ExperimentResult> capacity;
    std::optional<ExperimentResult> std3d;
};

std::string fmt(double v, int digits = 4) {
    std::ostringstream s;
    s << std::setprecision(digits) << v;
    return s.str();
}

ExperimentConfig load(const Context& ctx, const std::string& name) {
    ExperimentConfig c = load_config(std::string(ICELAB_SOURCE_DIR) + "/configs/" + name + ".toml");
    c.output_dir = (ctx.out / name).string();
    c.write_times = false;
    c.workers = ctx.workers;
    return c;
}

double value(const ExperimentResult& r, int n, int env, const std::string& metric) {
    const StatRow* row = r.find(n, env, metric);
    if (!row) throw std::runtime_error("missing result row " + metric);
    return row->value;
}

const ExperimentResult& capacity_run(Context& ctx) {
    if (!ctx.capacity) {
        CapacityOptions o;
        o.paths = 100000;
        o.seed = 20240611;
        o.workers = ctx.workers;
        o.output_dir = (ctx.out / "capacity").string();
        ctx.capacity = run_capacity(o);
    }
    return *ctx.capacity;
}

const ExperimentResult& std3d_run(Context& ctx) {
    if (!ctx.std3d) ctx.std3d = run_experiment(load(ctx, "std3d"));
    return *ctx.std3d;
}

Verdict ball_capacity(Context& ctx) {
    const auto t0 = std::chrono::steady_clock::now();
    bool ok = true;
    std::ostringstream d;
    for (double r : {0.05, 0.1, 0.5}) {
        ok = ok && ball_capacity_classical(3, r) == 4.0 * kPi * r;
        const ObstacleSet ball(3, {{{0.0, 0.0, 0.0}, r}});
        CapacityMcSettings s;
        s.n_paths = 100000;
        s.seed = derive_seed(20240611, {tag(StreamTag::capacity), static_cast<std::uint64_t>(r * 1000)});
        s.workers = ctx.workers;
        const CapacityEstimate e = estimate_capacity_mc(ball, {0.0, 0.0, 0.0}, s);
        const double z = (e.value - 4.0 * kPi * r) / e.stderr_;
        ok = ok && std::abs(z) < 3.0;
        d << "r=" << r << " z=" << fmt(z, 3) << ' ';
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    ok = ok && secs < 60.0;
    d << "time=" << fmt(secs, 3) << "s";
    return {ok, d.str()};
}

Verdict green(Context&) {
    const GreenKernel k{3, 1.0};
    double worst = 0.0;
    for (int i = 0; i < 20; ++i) {
        const double r = 1e-3 * std::pow(3000.0, i / 19.0);
        const double q = green_kernel_quadrature(3, 1.0, r);
        worst = std::max(worst, std::abs(green_kernel_radial(k, r) - q) / q);
    }
    double lo = kInf, hi = 0.0;
    for (int i = 1; i <= 1000; ++i) {
        const double r = 0.1 * i / 1000.0;
        const double ratio = green_kernel_radial(k, r) * 4.0 * kPi * r;
        lo = std::min(lo, ratio);
        hi = std::max(hi, ratio);
    }
    const bool ok = worst < 1e-6 && lo >= 0.5 && lo >= std::exp(-0.1) * (1.0 - 1e-12) && hi <= 1.0;
    return {ok, "max_rel_err=" + fmt(worst, 3) + " ratio in [" + fmt(lo, 6) + ", " + fmt(hi, 6) + "]"};
}

Verdict clock_law(Context& ctx) {
    const auto t0 = std::chrono::steady_clock::now();
    bool ok = true;
    std::ostringstream d;
    for (double c : {0.5, 2.0}) {
        DiffusionSpec spec;
        spec.t_max = 200.0 / c;
        spec.dt_far = 0.5;
        const PathSimulator sim(spec, Domain::full_space(3), nullptr, {constant_rate(c)});
        BatchOptions b;
        b.seed = 20240611;
        b.stream_ids = {static_cast<std::uint64_t>(c * 10)};
        b.workers = ctx.workers;
        b.clock_rate = 0;
        const std::size_t n = 100000;
        std::vector<double> t;
        t.reserve(n);
        for (const auto& o : batch_simulate(sim, StartLaw::at({0.0, 0.0, 0.0}), n, b)) t.push_back(o.time);
        const KsResult exact = ks_one_sample(t, [c](double x) { return 1.0 - std::exp(-c * x); });
        Stream rng(derive_seed(20240611, {tag(StreamTag::misc), static_cast<std::uint64_t>(c * 10)}));
        std::vector<double> u;
        u.reserve(n);
        for (std::size_t k = 0; k < n; ++k) u.push_back(sample_killed_time_inversion(sim, 0, {0.0, 0.0, 0.0}, rng).time);
        const KsResult inv = ks_two_sample(t, u);
        ok = ok && exact.statistic < 0.01 && inv.statistic < 0.01;
        d << "c=" << c << " ks_exp=" << fmt(exact.statistic, 3) << " ks_inversion=" << fmt(inv.statistic, 3) << ' ';
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    ok = ok && secs < 60.0;
    d << "time=" << fmt(secs, 3) << "s";
    return {ok, d.str()};
}

// trend, per-environment KS at the largest n, rho at the largest n
Verdict convergence_battery(const ExperimentResult& r, const ExperimentConfig& c, double ks_tol) {
    const int n = c.n_list.back();
    bool ok = value(r, 0, -1, "ks_nonincreasing") == 1.0;
    std::ostringstream d;
    d << "ks by n:";
    for (const auto& row : r.series("ks")) d << ' ' << fmt(row.value, 3);
    d << " trend=" << (ok ? "ok" : "broken");
    d << " ks(n=" << n << ") per env:";
    for (int env = 0; env < c.env_reps; ++env) {
        const double ks = value(r, n, env, "ks");
        ok = ok && ks < ks_tol;
        d << ' ' << fmt(ks, 3);
    }
    const double rho = value(r, n, -1, "rho");
    ok = ok && rho < 0.02;
    d << " rho=" << fmt(rho, 3) << " time=" << fmt(r.seconds, 4) << "s";
    return {ok, d.str()};
}

Verdict crushed_ice(Context& ctx) {
    const ExperimentResult& r = std3d_run(ctx);
    return convergence_battery(r, load(ctx, "std3d"), 0.03);
}

Verdict gradient(Context& ctx) {
    const ExperimentConfig c = load(ctx, "gradient");
    const ExperimentResult r = run_experiment(c);
    Verdict v = convergence_battery(r, c, 0.04);
    if (!r.warnings.empty()) {
        v.pass = false;
        v.detail += " warning: " + r.warnings.front();
    }
    return v;
}

Verdict schrodinger(Context& ctx) {
    const ExperimentConfig c = load(ctx, "schrodinger");
    const ExperimentResult r = run_experiment(c);
    const int n = c.n_list.back();
    const double ks = value(r, n, -1, "ks_phi_tau");
    bool ok = ks < 0.04;
    bool sandwich = true;
    double worst_z = kInf;
    for (int m : c.n_list) {
        for (int env = 0; env < c.env_reps; ++env) {
            sandwich = sandwich && value(r, m, env, "sandwich_ok") == 1.0;
            worst_z = std::min({worst_z, value(r, m, env, "sandwich_upper_z"), value(r, m, env, "sandwich_lower_z")});
        }
    }
    const double neg = value(r, n, 0, "negative_ks_phi_limit");
    ok = ok && sandwich && neg > 0.1;
    return {ok, "ks_phi_tau=" + fmt(ks, 3) + " sandwich=" + (sandwich ? "ok" : "broken") + " worst_z=" + fmt(worst_z, 3) +
                    " negative_ks=" + fmt(neg, 3) + " time=" + fmt(r.seconds, 4) + "s"};
}

double manufactured_error(int m) {
    DirichletProblem p;
    p.domain = Domain::box(Box(2, {0.0, 0.0, 0.0}, {1.0, 1.0, 0.0}));
    p.alpha = 1.0;
    p.f = [](const Point& x) { return (2.0 * kPi * kPi + 1.0) * std::sin(kPi * x[0]) * std::sin(kPi * x[1]); };
    p.f_sup = 2.0 * kPi * kPi + 1.0;
    p.f_constant = false;
    const GridSolution g = solve_fd_reference(p, m);
    double worst = 0.0;
    for (std::size_t i = 0; i < g.values.size(); ++i) {
        const Point x = g.node(i);
        worst = std::max(worst, std::abs(g.values[i] - std::sin(kPi * x[0]) * std::sin(kPi * x[1])));
    }
    return worst;
}

Verdict dirichlet(Context& ctx) {
    const ExperimentConfig c = load(ctx, "dirichlet");
    const ExperimentResult r = run_experiment(c);
    const std::size_t points = c.dirichlet->points.size();
    bool ok = value(r, 0, -1, "fd_agrees") == 1.0;
    std::ostringstream d;
    d << "fd_agrees=" << ok;
    // per point: |u_n - u| averaged over environments, along n
    bool trend = true, final_ok = true;
    double worst_final = 0.0;
    for (std::size_t k = 0; k < points; ++k) {
        std::vector<Estimate> by_n;
        for (int n : c.n_list) {
            double sum = 0.0, var = 0.0;
            int count = 0;
            for (const auto& s : r.solutions) {
                if (s.n != n || s.point != static_cast<int>(k)) continue;
                sum += std::abs(s.u_n - s.u_limit);
                var += s.stderr_n * s.stderr_n + s.stderr_limit * s.stderr_limit;
                ++count;
            }
            by_n.push_back({sum / count, std::sqrt(var) / count});
        }
        trend = trend && estimate_trend(by_n).nonincreasing;
        const Estimate last = by_n.back();
        final_ok = final_ok && last.value < std::max(3.0 * last.stderr_, c.dirichlet->gap_tolerance);
        worst_final = std::max(worst_final, last.value);
    }
    const double e17 = manufactured_error(17), e33 = manufactured_error(33), e65 = manufactured_error(65);
    const double o1 = std::log2(e17 / e33), o2 = std::log2(e33 / e65);
    const bool order = o1 >= 1.7 && o1 <= 2.3 && o2 >= 1.7 && o2 <= 2.3;
    ok = ok && trend && final_ok && order;
    d << " trend=" << (trend ? "ok" : "broken") << " worst_final_gap=" << fmt(worst_final, 3)
      << " fd_order=" << fmt(o1, 3) << "," << fmt(o2, 3) << " time=" << fmt(r.seconds, 4) << "s";
    return {ok, d.str()};
}

Verdict hitting(Context& ctx) {
    const ExperimentResult& r = capacity_run(ctx);
    const double held = value(r, 0, -1, "hitting_held");
    const double max_lhs = value(r, 0, -1, "hitting_max_lhs");
    int configs = 0;
    double max_balls = 0.0;
    for (const auto& row : r.stats) {
        if (row.metric == "hitting_balls") {
            ++configs;
            max_balls = std::max(max_balls, row.value);
        }
    }
    const bool ok = configs == 20 && held == configs && max_lhs > 0.01 && max_balls <= 200;
    return {ok, "held " + fmt(held) + "/" + std::to_string(configs) + " max_lhs=" + fmt(max_lhs, 3) +
                    " max_balls=" + fmt(max_balls)};
}

Verdict energy(Context& ctx) {
    const ExperimentResult& cap = capacity_run(ctx);
    const StatRow* gap = cap.find(0, -1, "identity_gap");
    bool ok = gap && std::abs(gap->value) < 3.0 * gap->stderr_;
    std::ostringstream d;
    d << "identity_gap=" << fmt(gap->value, 3) << "+-" << fmt(gap->stderr_, 3);
    const ExperimentResult& std3d = std3d_run(ctx);
    const int n = load(ctx, "std3d").n_list.back();
    const StatRow* margin = std3d.find(n, -1, "evenness_margin");
    ok = ok && margin && margin->value >= -2.0 * margin->stderr_;
    d << " std3d_margin=" << fmt(margin->value, 3) << "+-" << fmt(margin->stderr_, 3);
    const ExperimentResult point = run_experiment(load(ctx, "pointmass"));
    ok = ok && point.evenness_violated && !point.convergence_asserted;
    d << " pointmass_flagged=" << point.evenness_violated;
    return {ok, d.str()};
}

Verdict determinism(Context& ctx) {
    ExperimentConfig c = load(ctx, "std3d");
    c.n_list = {1, 2};
    c.env_reps = 2;
    c.paths_per_env = 5000;
    c.energy_pairs = 20000;
    c.write_times = true;
    const fs::path a = ctx.out / "repeat_a", b = ctx.out / "repeat_b";
    c.output_dir = a.string();
    run_experiment(c);
    c.output_dir = b.string();
    c.workers = ctx.workers == 1 ? 2 : 1;
    run_experiment(c);
    auto slurp = [](const fs::path& p) {
        std::ifstream in(p, std::ios::binary);
        std::ostringstream s;
        s << in.rdbuf();
        return s.str();
    };
    bool same = true;
    for (const char* f : {"stats.csv", "times.csv", "summary.json"}) {
        same = same && fs::exists(a / f) && slurp(a / f) == slurp(b / f);
    }
    const ObstacleSet set = sample_environment(c.model, 4, 0);
    Stream rng(derive_seed(c.seed, {tag(StreamTag::misc), 10}));
    double worst = 0.0;
    for (int i = 0; i < 10000; ++i) {
        const Point x{-0.2 + 1.4 * rng.uniform(), -0.2 + 1.4 * rng.uniform(), -0.2 + 1.4 * rng.uniform()};
        worst = std::max(worst, std::abs(set.nearest_distance(x) - set.nearest_distance_brute(x)));
    }
    return {same && worst <= 1e-12,
            std::string("outputs ") + (same ? "identical" : "differ") + " index_max_diff=" + fmt(worst, 3) +
                " balls=" + std::to_string(set.size())};
}

}  // namespace

int main(int argc, char** argv) {
    Context ctx;
    ctx.out = "acceptance_out";
    std::set<int> only;
    for (int i = 1; i < argc; ++i) {
        const std::string a = argv[i];
        if (a == "--out" && i + 1 < argc) {
            ctx.out = argv[++i];
        } else if (a == "--workers" && i + 1 < argc) {
            ctx.workers = static_cast<unsigned>(std::stoul(argv[++i]));
        } else if (a == "--only" && i + 1 < argc) {
            std::stringstream s(argv[++i]);
            for (std::string item; std::getline(s, item, ',');) only.insert(std::stoi(item));
        } else {
            std::cerr << "usage: acceptance [--out DIR] [--only N,...] [--workers K]\n";
            return 1;
        }
    }
    const std::vector<std::pair<std::string, std::function<Verdict(Context&)>>> criteria{
        {"ball capacity closed forms", ball_capacity},
        {"green kernel", green},
        {"exponential clock law", clock_law},
        {"crushed-ice convergence", crushed_ice},
        {"position-dependent rate field", gradient},
        {"soft obstacle sandwich", schrodinger},
        {"dirichlet solution convergence", dirichlet},
        {"hitting bound", hitting},
        {"iid identity and evenness", energy},
        {"determinism and index", determinism},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i) + 1;
        if (!only.empty() && !only.count(id)) continue;
        Verdict v;
        try {
            v = criteria[i].second(ctx);
        } catch (const std::exception& e) {
            v = {false, std::string("error: ") + e.what()};
        }
        failed += v.pass ? 0 : 1;
        std::cout << (v.pass ? "PASS" : "FAIL") << "  " << id << ". " << criteria[i].first << ": " << v.detail
                  << std::endl;
    }
    return failed == 0 ? 0 : 1;
}
