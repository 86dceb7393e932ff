#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "icelab/geometry.hpp"
#include "icelab/model.hpp"
#include "icelab/obstacles.hpp"

namespace icelab {

/// omega_d, the surface area of the unit sphere in R^d.
double unit_sphere_area(int dim);

/// Newtonian kernel of the generator Delta: 1/(4 pi |z - y|) in d = 3 and
/// -log|z - y| / (2 pi) in d = 2.
struct ClassicalKernelSpec {
    int dim = 3;
    double omega() const { return unit_sphere_area(dim); }
};

double classical_kernel(const ClassicalKernelSpec& spec, const Point& y, const Point& z);

/// Qcl(B_r): 4 pi r in d = 3, 2 pi / (-log r) in d = 2 (r < 1 required).
double ball_capacity_classical(const ClassicalKernelSpec& spec, double r);
inline double ball_capacity_classical(int dim, double r) { return ball_capacity_classical(ClassicalKernelSpec{dim}, r); }

/// Cap_alpha(B_r), the total mass of the alpha-equilibrium measure (surface
/// charge plus the volume density alpha on B_r):
/// d = 3: 4 pi r (1 + sqrt(alpha) r) + (4/3) pi alpha r^3;
/// d = 2: 2 pi r k K1(k r) / K0(k r) + pi alpha r^2 with k = sqrt(alpha).
double ball_capacity_alpha(int dim, double r, double alpha);

/// Constant symmetric positive definite coefficient matrix b.
struct DiffusionMatrix {
    int dim = 3;
    std::array<std::array<double, kMaxDim>, kMaxDim> b{};

    static DiffusionMatrix identity(int dim);
    static DiffusionMatrix scalar(int dim, double c);
    static DiffusionMatrix diagonal(int dim, const Point& diag);

    /// Throws unless b is symmetric with every eigenvalue >= e0 > 0.
    void validate(double e0 = 1e-12) const;
    /// Returns c when b = c I.
    std::optional<double> scalar_value() const;
    double determinant() const;
};

struct CapacityEstimate {
    double value = 0.0;
    double stderr_ = 0.0;
    double hit_fraction = 0.0;
    std::size_t n_paths = 0;
    bool exact = false;
};

struct CapacityMcSettings {
    double launch_radius = 0.0;   // R; 0 picks 2 x the enclosing radius
    double outer_radius = 0.0;    // R_out; 0 picks 100 R
    std::size_t n_paths = 100000;
    std::uint64_t seed = 1;
    unsigned workers = 0;
    double shrink = 0.5;
    double hit_tolerance = 1e-3;
};

/// Hitting probability of `target` from the uniform law on the sphere of
/// radius R around `center`, before leaving B_{R_out}, converted to a
/// capacity with the concentric-annulus formula. d = 3 only.
CapacityEstimate estimate_capacity_mc(const Target& target, const Point& center, const CapacityMcSettings& settings);

/// Exact conversion used above: hit probability -> capacity.
double capacity_from_hit_probability(double p, double launch_radius, double outer_radius);

/// sqrt(det b) * Qcl(b^{-1/2} ball); closed form when b = c I, otherwise a
/// Monte Carlo estimate on the image ellipsoid.
CapacityEstimate anisotropic_capacity(const DiffusionMatrix& b, const Ball& ball,
                                      const CapacityMcSettings& settings = {});

struct ScalingReport {
    std::vector<int> n;
    std::vector<double> values;
    double sup = 0.0;
    bool bounded = true;
};

/// Tracks kappa_n rho_n^{d-2} (d > 2) or kappa_n / |log rho_n| (d = 2) over
/// n_range and flags a sequence that keeps growing past growth_factor.
ScalingReport check_scaling(const RandomCenterModel& model, const std::vector<int>& n_range,
                            double growth_factor = 4.0);

/// q_n(x): leading-order capacity of one obstacle of level n centered at x.
double capacity_density(const RandomCenterModel& model, int n, const Point& x, const DiffusionMatrix& b);

}  // namespace icelab
