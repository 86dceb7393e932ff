#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "icelab/geometry.hpp"
#include "icelab/obstacles.hpp"
#include "icelab/paths.hpp"
#include "icelab/rates.hpp"
#include "icelab/rsts.hpp"

namespace icelab {

/// -Delta u + alpha u = f in U minus the obstacles, u = phi on the obstacles
/// and on the boundary of U. The relaxed problem replaces the obstacles by
/// the rate density h: -Delta u + (alpha + h) u = f + h phi.
struct DirichletProblem {
    Domain domain = Domain::box(Box{});
    double alpha = 1.0;
    Field f = [](const Point&) { return 1.0; };
    double f_sup = 1.0;
    bool f_constant = true;
    Field phi = [](const Point&) { return 0.0; };
    double phi_sup = 0.0;
    RatePtr h;

    void validate() const;
    static DirichletProblem constant(const Domain& domain, double alpha, double f, double phi);
};

/// Path settings shared by the MC solvers. dt and the scheme come from
/// `diffusion`; its dim is overwritten by the problem's.
struct McSettings {
    DiffusionSpec diffusion;
    std::size_t n_paths = 10000;
    std::uint64_t seed = 1;
    std::vector<std::uint64_t> stream_ids;
    unsigned workers = 0;
};

struct McSolution {
    double value = 0.0;
    double stderr_ = 0.0;
    /// Bound on what the horizon cut drops: e^{-alpha T} (||phi|| + ||f|| / alpha).
    double horizon_bias = 0.0;
    /// Set when the value needs no sampling (x inside an obstacle).
    bool exact = false;
    std::size_t horizon_paths = 0;
};

/// u_n(x) = E_x[int_0^{tau ^ sigma} e^{-alpha t} f dt + e^{-alpha (tau ^ sigma)} phi(X_{tau ^ sigma})].
McSolution solve_un_mc(const DirichletProblem& p, std::shared_ptr<const ObstacleSet> obstacles, const Point& x,
                       const McSettings& settings);

/// u(x) = E_x[int_0^sigma e^{-alpha t - A_t} (f dt + phi dA_t) + e^{-alpha sigma - A_sigma} phi(X_sigma)]
/// with A the additive functional of p.h (zero when p.h is unset).
McSolution solve_u_limit_mc(const DirichletProblem& p, const Point& x, const McSettings& settings);

/// Soft obstacles of height c_n: an Exp(1) clock on c_n times the occupation
/// time of the obstacles kills the path at phi_n. Returns
/// E_x[int_0^{phi_n ^ sigma} e^{-alpha t} f dt + e^{-alpha (phi_n ^ sigma)} phi(X_{phi_n ^ sigma})].
McSolution solve_schrodinger_mc(const DirichletProblem& p, std::shared_ptr<const ObstacleSet> obstacles, double c_n,
                                const Point& x, const McSettings& settings);

/// m nodes per axis on a box, boundary nodes included.
struct GridSpec {
    Box box;
    int m = 33;

    std::size_t node_count() const;
    double spacing(int axis) const;
};

struct GridSolution {
    GridSpec grid;
    std::vector<double> values;
    /// 1 on boundary nodes and on nodes inside a hole (pinned to phi).
    std::vector<std::uint8_t> pinned;
    int iterations = 0;
    double residual = 0.0;

    Point node(std::size_t index) const;
    /// Multilinear interpolation of the nodal values.
    double value_at(const Point& x) const;
    void write_csv(const std::string& path) const;
};

struct FdSettings {
    double tolerance = 1e-8;
    int max_iterations = 20000;
};

/// Central differences for -Delta u + (alpha + h) u = f + h phi on the box of
/// p.domain (a box domain), u = phi on the boundary and on the nodes covered
/// by `holes`; solved by conjugate gradients. Throws std::runtime_error when
/// the iteration cap is hit.
GridSolution solve_fd_reference(const DirichletProblem& p, int m, const ObstacleSet* holes = nullptr,
                                const FdSettings& settings = {});

/// |u(x; m) - u(x; 2m - 1)|: the change under one grid refinement.
struct FdEstimate {
    double value = 0.0;
    double refinement_delta = 0.0;
};
std::vector<FdEstimate> fd_values(const DirichletProblem& p, int m, const std::vector<Point>& points,
                                  const ObstacleSet* holes = nullptr, const FdSettings& settings = {});

struct ComparisonReport {
    std::vector<double> gaps;        ///< a_k - b_k
    std::vector<double> gap_stderr;
    double max_gap = 0.0;            ///< max |gap|
    double mean_gap = 0.0;           ///< mean |gap|
    double mean_gap_stderr = 0.0;
    /// Some |gap| exceeds 3 combined stderr and `tolerance`.
    bool persistent = false;
};

ComparisonReport compare_solutions(const std::vector<Estimate>& a, const std::vector<Estimate>& b,
                                   double tolerance = 0.0);

struct TrendReport {
    std::vector<double> mean_gaps;  ///< the values being tracked
    /// Every step satisfies mean_gap[k+1] <= mean_gap[k] + z * combined stderr.
    bool nonincreasing = true;
    std::size_t worst_step = 0;
    double worst_excess = 0.0;  ///< largest (increase / combined stderr)
};

/// Nonincreasing up to z combined stderr between consecutive entries.
TrendReport estimate_trend(const std::vector<Estimate>& values, double z = 2.0);
TrendReport gap_trend(const std::vector<ComparisonReport>& by_n, double z = 2.0);

}  // namespace icelab
