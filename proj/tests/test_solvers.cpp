#include <cmath>
#include <filesystem>
#include <fstream>
#include <memory>

#include "doctest.h"
#include "icelab/solvers.hpp"

using namespace icelab;

namespace {

McSettings settings(std::size_t paths, std::uint64_t seed, double t_max = 40.0) {
    McSettings s;
    s.n_paths = paths;
    s.seed = seed;
    s.diffusion.t_max = t_max;
    return s;
}

// -Delta u + alpha u = f on the unit square with u = sin(pi x) sin(pi y)
double manufactured_error(int m) {
    const double alpha = 1.0;
    DirichletProblem p;
    p.domain = Domain::box(Box(2, {0.0, 0.0, 0.0}, {1.0, 1.0, 0.0}));
    p.alpha = alpha;
    p.f = [alpha](const Point& x) { return (2.0 * kPi * kPi + alpha) * std::sin(kPi * x[0]) * std::sin(kPi * x[1]); };
    p.f_sup = 2.0 * kPi * kPi + alpha;
    p.f_constant = false;
    const GridSolution g = solve_fd_reference(p, m);
    double worst = 0.0;
    for (std::size_t i = 0; i < g.values.size(); ++i) {
        const Point x = g.node(i);
        worst = std::max(worst, std::abs(g.values[i] - std::sin(kPi * x[0]) * std::sin(kPi * x[1])));
    }
    return worst;
}

}  // namespace

TEST_SUITE("solvers") {

TEST_CASE("problem validation") {
    DirichletProblem p;
    CHECK_NOTHROW(p.validate());
    p.alpha = -1.0;
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);
}

TEST_CASE("closed-form Feynman-Kac values") {
    const Point o{0.0, 0.0, 0.0};
    const auto zero = DirichletProblem::constant(Domain::box(Box{}), 1.0, 0.0, 0.0);
    CHECK(solve_un_mc(zero, nullptr, {0.5, 0.5, 0.5}, settings(200, 1)).value == 0.0);

    const auto free = DirichletProblem::constant(Domain::full_space(3), 2.0, 1.0, 0.0);
    CHECK(solve_un_mc(free, nullptr, o, settings(200, 1)).value == doctest::Approx(0.5).epsilon(1e-12));

    auto relaxed = DirichletProblem::constant(Domain::full_space(3), 1.0, 1.0, 0.0);
    relaxed.h = constant_rate(3.0);
    CHECK(solve_u_limit_mc(relaxed, o, settings(200, 1)).value == doctest::Approx(0.25).epsilon(1e-12));

    auto absorbed = DirichletProblem::constant(Domain::full_space(3), 1.0, 0.0, 1.0);
    absorbed.h = constant_rate(3.0);
    CHECK(solve_u_limit_mc(absorbed, o, settings(200, 1)).value == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("a point inside an obstacle returns phi") {
    auto p = DirichletProblem::constant(Domain::box(Box{}), 1.0, 1.0, 0.0);
    p.phi = [](const Point& x) { return x[0]; };
    p.phi_sup = 1.0;
    const auto set = std::make_shared<ObstacleSet>(ObstacleSet(3, {{{0.5, 0.5, 0.5}, 0.1}}));
    const McSolution m = solve_un_mc(p, set, {0.52, 0.5, 0.5}, settings(100, 1));
    CHECK(m.exact);
    CHECK(m.value == 0.52);
    CHECK(m.stderr_ == 0.0);
}

TEST_CASE("relaxed problem without a rate is the free problem") {
    const auto p = DirichletProblem::constant(Domain::box(Box{}), 1.0, 1.0, 0.0);
    const Point x{0.3, 0.5, 0.6};
    const McSolution a = solve_un_mc(p, nullptr, x, settings(10000, 2));
    const McSolution b = solve_u_limit_mc(p, x, settings(10000, 3));
    CHECK(std::abs(a.value - b.value) < 3.0 * std::hypot(a.stderr_, b.stderr_));
}

TEST_CASE("monte carlo against finite differences in the cube") {
    auto p = DirichletProblem::constant(Domain::box(Box{}), 1.0, 1.0, 0.0);
    const std::vector<Point> pts{{0.5, 0.5, 0.5}, {0.2, 0.4, 0.7}};
    const auto fd = fd_values(p, 17, pts);
    for (std::size_t k = 0; k < pts.size(); ++k) {
        const McSolution m = solve_un_mc(p, nullptr, pts[k], settings(20000, 10 + k));
        CHECK(std::abs(m.value - fd[k].value) <= std::max(3.0 * m.stderr_, 2.0 * fd[k].refinement_delta));
    }

    // with a rate on the inner box
    p.h = box_rate(4.0, Box(3, {0.25, 0.25, 0.25}, {0.75, 0.75, 0.75}));
    const auto fd_h = fd_values(p, 17, pts);
    for (std::size_t k = 0; k < pts.size(); ++k) {
        const McSolution m = solve_u_limit_mc(p, pts[k], settings(20000, 20 + k));
        CHECK(std::abs(m.value - fd_h[k].value) <= std::max(3.0 * m.stderr_, 2.0 * fd_h[k].refinement_delta));
        CHECK(fd_h[k].value < fd[k].value);
    }
}

TEST_CASE("monte carlo against finite differences with a hole") {
    auto p = DirichletProblem::constant(Domain::box(Box(2, {0.0, 0.0, 0.0}, {1.0, 1.0, 0.0})), 1.0, 1.0, 0.0);
    const ObstacleSet hole(2, {{{0.5, 0.5, 0.0}, 0.2}});
    const auto set = std::make_shared<ObstacleSet>(hole);
    const std::vector<Point> pts{{0.2, 0.5, 0.0}, {0.8, 0.85, 0.0}};
    // the disk is staircased on the grid, so this FD converges only at first order
    const auto fd = fd_values(p, 129, pts, &hole);
    McSettings s = settings(40000, 30);
    s.diffusion.dim = 2;
    for (std::size_t k = 0; k < pts.size(); ++k) {
        const McSolution m = solve_un_mc(p, set, pts[k], s);
        CHECK(std::abs(m.value - fd[k].value) <= std::max(3.0 * m.stderr_, 2.0 * fd[k].refinement_delta));
    }
}

TEST_CASE("soft obstacles interpolate between none and hard") {
    const auto p = DirichletProblem::constant(Domain::box(Box{}), 1.0, 1.0, 0.0);
    const auto set = std::make_shared<ObstacleSet>(ObstacleSet(3, {{{0.5, 0.5, 0.5}, 0.2}}));
    const Point x{0.5, 0.5, 0.15};
    const McSolution none = solve_un_mc(p, nullptr, x, settings(10000, 40));
    const McSolution hard = solve_un_mc(p, set, x, settings(10000, 40));
    const McSolution off = solve_schrodinger_mc(p, set, 0.0, x, settings(10000, 40));
    const McSolution mid = solve_schrodinger_mc(p, set, 20.0, x, settings(10000, 40));
    const McSolution stiff = solve_schrodinger_mc(p, set, 1e4, x, settings(10000, 40));
    CHECK(std::abs(off.value - none.value) < 3.0 * std::hypot(off.stderr_, none.stderr_));
    CHECK(mid.value < none.value);
    CHECK(mid.value > hard.value);
    CHECK(std::abs(stiff.value - hard.value) < 3.0 * std::hypot(stiff.stderr_, hard.stderr_) + 0.005);
}

TEST_CASE("finite differences reproduce constant and zero solutions") {
    // u = 1 solves -Delta u + (alpha + h) u = f + h phi with f = alpha, phi = 1
    auto p = DirichletProblem::constant(Domain::box(Box{}), 2.0, 2.0, 1.0);
    p.h = constant_rate(3.0);
    const GridSolution g = solve_fd_reference(p, 17);
    for (double v : g.values) CHECK(v == doctest::Approx(1.0).epsilon(1e-7));

    const auto zero = DirichletProblem::constant(Domain::box(Box{}), 1.0, 0.0, 0.0);
    const GridSolution z = solve_fd_reference(zero, 17);
    for (double v : z.values) CHECK(v == 0.0);

    CHECK_THROWS_AS(solve_fd_reference(zero, 9), std::invalid_argument);
    const auto ball = DirichletProblem::constant(Domain::ball(3, {0.0, 0.0, 0.0}, 1.0), 1.0, 1.0, 0.0);
    CHECK_THROWS_AS(solve_fd_reference(ball, 17), std::invalid_argument);
}

TEST_CASE("finite differences converge at second order") {
    const double e1 = manufactured_error(17);
    const double e2 = manufactured_error(33);
    const double e3 = manufactured_error(65);
    const double o1 = std::log2(e1 / e2);
    const double o2 = std::log2(e2 / e3);
    CHECK(o1 > 1.7);
    CHECK(o1 < 2.3);
    CHECK(o2 > 1.7);
    CHECK(o2 < 2.3);
}

TEST_CASE("finite differences obey the maximum principle") {
    auto p = DirichletProblem::constant(Domain::box(Box{}), 1.0, 1.0, 0.0);
    p.h = box_rate(5.0, Box(3, {0.2, 0.2, 0.2}, {0.6, 0.6, 0.6}));
    const GridSolution g = solve_fd_reference(p, 17);
    for (double v : g.values) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
    for (std::size_t i = 0; i < g.values.size(); i += 37) CHECK(g.value_at(g.node(i)) == doctest::Approx(g.values[i]));

    const auto path = std::filesystem::temp_directory_path() / "icelab_grid_test.csv";
    g.write_csv(path.string());
    std::ifstream in(path);
    std::string header;
    std::getline(in, header);
    CHECK_FALSE(header.empty());
    std::filesystem::remove(path);
}

TEST_CASE("comparison and trend reports") {
    const std::vector<Estimate> a{{1.0, 0.01}, {2.0, 0.01}};
    const ComparisonReport same = compare_solutions(a, a);
    CHECK(same.max_gap == 0.0);
    CHECK_FALSE(same.persistent);
    const std::vector<Estimate> b{{1.5, 0.01}, {2.0, 0.01}};
    const ComparisonReport off = compare_solutions(a, b, 0.02);
    CHECK(off.max_gap == doctest::Approx(0.5));
    CHECK(off.persistent);
    CHECK(compare_solutions(a, b, 1.0).persistent == false);
    CHECK_THROWS_AS(compare_solutions(a, {{1.0, 0.0}}), std::invalid_argument);

    CHECK(estimate_trend({{0.3, 0.01}, {0.2, 0.01}, {0.21, 0.01}}).nonincreasing);
    const TrendReport up = estimate_trend({{0.1, 0.01}, {0.3, 0.01}});
    CHECK_FALSE(up.nonincreasing);
    CHECK(up.worst_step == 1);
    CHECK(up.worst_excess > 2.0);
}

}
