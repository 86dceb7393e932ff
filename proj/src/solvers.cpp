#include "icelab/solvers.hpp"

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseCore>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace icelab {

void DirichletProblem::validate() const {
    if (!(alpha > 0.0) || !std::isfinite(alpha)) throw std::invalid_argument("Dirichlet problem needs alpha > 0");
    if (!f || !phi) throw std::invalid_argument("Dirichlet problem needs f and phi");
    if (!(f_sup >= 0.0) || !std::isfinite(f_sup)) throw std::invalid_argument("f must be bounded");
    if (!(phi_sup >= 0.0) || !std::isfinite(phi_sup)) throw std::invalid_argument("phi must be bounded");
    if (h && h->sup() < 0.0) throw std::invalid_argument("rate density must be nonnegative");
}

DirichletProblem DirichletProblem::constant(const Domain& domain, double alpha, double f, double phi) {
    DirichletProblem p;
    p.domain = domain;
    p.alpha = alpha;
    p.f = [f](const Point&) { return f; };
    p.f_sup = std::abs(f);
    p.f_constant = true;
    p.phi = [phi](const Point&) { return phi; };
    p.phi_sup = std::abs(phi);
    return p;
}

namespace {

double horizon_bias(const DirichletProblem& p, double t_max) {
    return std::exp(-p.alpha * t_max) * (p.phi_sup + p.f_sup / p.alpha);
}

Integrand source_integrand(const DirichletProblem& p) {
    Integrand g;
    g.id = "f";
    g.alpha = p.alpha;
    g.f = p.f;
    g.constant = p.f_constant;
    return g;
}

McSolution summarize(const std::vector<double>& values, double bias, std::size_t horizon_paths) {
    McSolution out;
    const double n = static_cast<double>(values.size());
    double sum = 0.0;
    for (double v : values) sum += v;
    out.value = sum / n;
    double ss = 0.0;
    for (double v : values) ss += (v - out.value) * (v - out.value);
    out.stderr_ = values.size() > 1 ? std::sqrt(ss / (n - 1.0) / n) : 0.0;
    out.horizon_bias = bias;
    out.horizon_paths = horizon_paths;
    return out;
}

DiffusionSpec spec_for(const DirichletProblem& p, const McSettings& s) {
    DiffusionSpec spec = s.diffusion;
    spec.dim = p.domain.dim();
    return spec;
}

BatchOptions batch_for(const McSettings& s) {
    BatchOptions b;
    b.seed = s.seed;
    b.stream_ids = s.stream_ids;
    b.workers = s.workers;
    return b;
}

void check_start(const DirichletProblem& p, const Point& x) {
    if (!all_finite(x)) throw std::invalid_argument("evaluation point is not finite");
    if (!p.domain.contains(x)) throw std::invalid_argument("evaluation point lies outside U");
}

}  // namespace

McSolution solve_un_mc(const DirichletProblem& p, std::shared_ptr<const ObstacleSet> obstacles, const Point& x,
                       const McSettings& settings) {
    p.validate();
    check_start(p, x);
    if (obstacles && !obstacles->empty() && obstacles->contains(x)) {
        McSolution out;
        out.value = p.phi(x);
        out.exact = true;
        return out;
    }
    const DiffusionSpec spec = spec_for(p, settings);
    const PathSimulator sim(spec, p.domain, obstacles, {}, {source_integrand(p)});
    const auto outcomes = batch_simulate(sim, StartLaw::at(x), settings.n_paths, batch_for(settings));
    std::vector<double> values;
    values.reserve(outcomes.size());
    std::size_t horizon = 0;
    for (const auto& o : outcomes) {
        double v = o.integrals[0];
        if (o.event == Event::hit_obstacle || o.event == Event::exit_domain) {
            v += std::exp(-p.alpha * o.time) * p.phi(o.terminal);
        } else {
            ++horizon;
        }
        values.push_back(v);
    }
    return summarize(values, horizon_bias(p, spec.t_max), horizon);
}

McSolution solve_u_limit_mc(const DirichletProblem& p, const Point& x, const McSettings& settings) {
    p.validate();
    check_start(p, x);
    const DiffusionSpec spec = spec_for(p, settings);
    std::vector<RatePtr> rates;
    std::vector<Integrand> integrands{source_integrand(p)};
    if (p.h) {
        rates.push_back(p.h);
        integrands[0].damp_rate = 0;
        Integrand g;
        g.id = "phi_dA";
        g.alpha = p.alpha;
        g.f = p.phi;
        g.constant = false;
        g.damp_rate = 0;
        g.against_rate = 0;
        integrands.push_back(std::move(g));
    }
    const PathSimulator sim(spec, p.domain, nullptr, rates, integrands);
    const auto outcomes = batch_simulate(sim, StartLaw::at(x), settings.n_paths, batch_for(settings));
    std::vector<double> values;
    values.reserve(outcomes.size());
    std::size_t horizon = 0;
    for (const auto& o : outcomes) {
        double v = o.integrals[0];
        if (p.h) v += o.integrals[1];
        if (o.event == Event::exit_domain) {
            const double a = p.h ? o.rate_integrals[0] : 0.0;
            v += std::exp(-p.alpha * o.time - a) * p.phi(o.terminal);
        } else {
            ++horizon;
        }
        values.push_back(v);
    }
    return summarize(values, horizon_bias(p, spec.t_max), horizon);
}

McSolution solve_schrodinger_mc(const DirichletProblem& p, std::shared_ptr<const ObstacleSet> obstacles, double c_n,
                                const Point& x, const McSettings& settings) {
    p.validate();
    check_start(p, x);
    if (!(c_n >= 0.0)) throw std::invalid_argument("potential height must be >= 0");
    const DiffusionSpec spec = spec_for(p, settings);
    std::vector<RatePtr> rates;
    BatchOptions batch = batch_for(settings);
    const bool soft = c_n > 0.0 && obstacles && !obstacles->empty();
    if (soft) {
        rates.push_back(obstacle_rate(c_n, obstacles, "potential"));
        batch.clock_rate = 0;
    }
    const PathSimulator sim(spec, p.domain, nullptr, rates, {source_integrand(p)});
    const auto outcomes = batch_simulate(sim, StartLaw::at(x), settings.n_paths, batch);
    std::vector<double> values;
    values.reserve(outcomes.size());
    std::size_t horizon = 0;
    for (const auto& o : outcomes) {
        double v = o.integrals[0];
        if (o.event == Event::clock_kill || o.event == Event::exit_domain) {
            v += std::exp(-p.alpha * o.time) * p.phi(o.terminal);
        } else {
            ++horizon;
        }
        values.push_back(v);
    }
    return summarize(values, horizon_bias(p, spec.t_max), horizon);
}

std::size_t GridSpec::node_count() const {
    std::size_t n = 1;
    for (int a = 0; a < box.dim; ++a) n *= static_cast<std::size_t>(m);
    return n;
}

double GridSpec::spacing(int axis) const { return (box.upper[axis] - box.lower[axis]) / (m - 1); }

namespace {

std::array<int, 3> unflatten(const GridSpec& g, std::size_t index) {
    std::array<int, 3> c{0, 0, 0};
    for (int a = 0; a < g.box.dim; ++a) {
        c[a] = static_cast<int>(index % static_cast<std::size_t>(g.m));
        index /= static_cast<std::size_t>(g.m);
    }
    return c;
}

std::size_t flatten(const GridSpec& g, const std::array<int, 3>& c) {
    std::size_t index = 0;
    for (int a = g.box.dim - 1; a >= 0; --a) index = index * static_cast<std::size_t>(g.m) + static_cast<std::size_t>(c[a]);
    return index;
}

}  // namespace

Point GridSolution::node(std::size_t index) const {
    const auto c = unflatten(grid, index);
    Point x{0.0, 0.0, 0.0};
    for (int a = 0; a < grid.box.dim; ++a) x[a] = grid.box.lower[a] + c[a] * grid.spacing(a);
    return x;
}

double GridSolution::value_at(const Point& x) const {
    const int dim = grid.box.dim;
    std::array<int, 3> base{0, 0, 0};
    std::array<double, 3> frac{0.0, 0.0, 0.0};
    for (int a = 0; a < dim; ++a) {
        const double s = std::clamp((x[a] - grid.box.lower[a]) / grid.spacing(a), 0.0, grid.m - 1.0);
        base[a] = std::min(static_cast<int>(s), grid.m - 2);
        frac[a] = s - base[a];
    }
    double v = 0.0;
    for (int corner = 0; corner < (1 << dim); ++corner) {
        double w = 1.0;
        std::array<int, 3> c = base;
        for (int a = 0; a < dim; ++a) {
            const bool up = (corner >> a) & 1;
            c[a] += up ? 1 : 0;
            w *= up ? frac[a] : 1.0 - frac[a];
        }
        if (w != 0.0) v += w * values[flatten(grid, c)];
    }
    return v;
}

void GridSolution::write_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    const int dim = grid.box.dim;
    out << (dim == 2 ? "x,y,u,pinned\n" : "x,y,z,u,pinned\n");
    out.precision(17);
    for (std::size_t i = 0; i < values.size(); ++i) {
        const Point x = node(i);
        for (int a = 0; a < dim; ++a) out << x[a] << ',';
        out << values[i] << ',' << static_cast<int>(pinned[i]) << '\n';
    }
}

GridSolution solve_fd_reference(const DirichletProblem& p, int m, const ObstacleSet* holes,
                                const FdSettings& settings) {
    p.validate();
    if (p.domain.kind() != Domain::Kind::box) throw std::invalid_argument("FD reference needs a box domain");
    if (m < 17) throw std::invalid_argument("FD reference needs at least 17 nodes per axis");
    const int dim = p.domain.dim();
    if (dim != 2 && dim != 3) throw std::invalid_argument("FD reference supports d = 2 and d = 3");

    GridSolution sol;
    sol.grid = GridSpec{p.domain.bounds(), m};
    const GridSpec& g = sol.grid;
    const std::size_t n_nodes = g.node_count();
    sol.values.assign(n_nodes, 0.0);
    sol.pinned.assign(n_nodes, 0);

    std::vector<long> unknown(n_nodes, -1);
    long n_unknown = 0;
    for (std::size_t i = 0; i < n_nodes; ++i) {
        const auto c = unflatten(g, i);
        bool boundary = false;
        for (int a = 0; a < dim; ++a) boundary = boundary || c[a] == 0 || c[a] == m - 1;
        const Point x = sol.node(i);
        if (boundary || (holes && !holes->empty() && holes->contains(x))) {
            sol.pinned[i] = 1;
            sol.values[i] = p.phi(x);
        } else {
            unknown[i] = n_unknown++;
        }
    }

    std::array<double, 3> inv_h2{0.0, 0.0, 0.0};
    for (int a = 0; a < dim; ++a) inv_h2[a] = 1.0 / (g.spacing(a) * g.spacing(a));

    std::vector<Eigen::Triplet<double>> entries;
    entries.reserve(static_cast<std::size_t>(n_unknown) * (2 * dim + 1));
    Eigen::VectorXd rhs(n_unknown);
    for (std::size_t i = 0; i < n_nodes; ++i) {
        const long row = unknown[i];
        if (row < 0) continue;
        const Point x = sol.node(i);
        const double hx = p.h ? (*p.h)(x) : 0.0;
        double diag = p.alpha + hx;
        double b = p.f(x) + hx * p.phi(x);
        const auto c = unflatten(g, i);
        for (int a = 0; a < dim; ++a) {
            diag += 2.0 * inv_h2[a];
            for (int side : {-1, 1}) {
                auto nb = c;
                nb[a] += side;
                const std::size_t j = flatten(g, nb);
                if (unknown[j] >= 0) {
                    entries.emplace_back(row, unknown[j], -inv_h2[a]);
                } else {
                    b += inv_h2[a] * sol.values[j];
                }
            }
        }
        entries.emplace_back(row, row, diag);
        rhs[row] = b;
    }
    if (n_unknown == 0) return sol;

    Eigen::SparseMatrix<double> a(n_unknown, n_unknown);
    a.setFromTriplets(entries.begin(), entries.end());
    if (rhs.norm() == 0.0) {
        for (std::size_t i = 0; i < n_nodes; ++i) {
            if (unknown[i] >= 0) sol.values[i] = 0.0;
        }
        return sol;
    }
    Eigen::ConjugateGradient<Eigen::SparseMatrix<double>, Eigen::Lower | Eigen::Upper> cg;
    cg.setTolerance(settings.tolerance);
    cg.setMaxIterations(settings.max_iterations);
    cg.compute(a);
    const Eigen::VectorXd u = cg.solve(rhs);
    sol.iterations = static_cast<int>(cg.iterations());
    sol.residual = cg.error();
    if (cg.info() != Eigen::Success || !(sol.residual <= settings.tolerance)) {
        throw std::runtime_error("FD solver did not converge: relative residual " + std::to_string(sol.residual) +
                                 " after " + std::to_string(sol.iterations) + " iterations");
    }
    for (std::size_t i = 0; i < n_nodes; ++i) {
        if (unknown[i] >= 0) sol.values[i] = u[unknown[i]];
    }
    return sol;
}

std::vector<FdEstimate> fd_values(const DirichletProblem& p, int m, const std::vector<Point>& points,
                                  const ObstacleSet* holes, const FdSettings& settings) {
    const GridSolution coarse = solve_fd_reference(p, m, holes, settings);
    const GridSolution fine = solve_fd_reference(p, 2 * m - 1, holes, settings);
    std::vector<FdEstimate> out;
    out.reserve(points.size());
    for (const auto& x : points) {
        const double v = fine.value_at(x);
        out.push_back({v, std::abs(v - coarse.value_at(x))});
    }
    return out;
}

ComparisonReport compare_solutions(const std::vector<Estimate>& a, const std::vector<Estimate>& b,
                                   double tolerance) {
    if (a.size() != b.size()) throw std::invalid_argument("compare_solutions needs the same evaluation points");
    ComparisonReport r;
    if (a.empty()) return r;
    double var_sum = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        const double gap = a[k].value - b[k].value;
        const double se = std::hypot(a[k].stderr_, b[k].stderr_);
        r.gaps.push_back(gap);
        r.gap_stderr.push_back(se);
        r.max_gap = std::max(r.max_gap, std::abs(gap));
        r.mean_gap += std::abs(gap);
        var_sum += se * se;
        if (std::abs(gap) > std::max(3.0 * se, tolerance)) r.persistent = true;
    }
    const double n = static_cast<double>(a.size());
    r.mean_gap /= n;
    r.mean_gap_stderr = std::sqrt(var_sum) / n;
    return r;
}

TrendReport estimate_trend(const std::vector<Estimate>& values, double z) {
    TrendReport t;
    for (const auto& v : values) t.mean_gaps.push_back(v.value);
    for (std::size_t k = 1; k < values.size(); ++k) {
        const double se = std::hypot(values[k - 1].stderr_, values[k].stderr_);
        const double rise = values[k].value - values[k - 1].value;
        const double excess = se > 0.0 ? rise / se : (rise > 0.0 ? kInf : 0.0);
        if (k == 1 || excess > t.worst_excess) {
            t.worst_excess = excess;
            t.worst_step = k;
        }
        if (rise > z * se) t.nonincreasing = false;
    }
    return t;
}

TrendReport gap_trend(const std::vector<ComparisonReport>& by_n, double z) {
    std::vector<Estimate> v;
    for (const auto& r : by_n) v.push_back({r.mean_gap, r.mean_gap_stderr});
    return estimate_trend(v, z);
}

}  // namespace icelab
