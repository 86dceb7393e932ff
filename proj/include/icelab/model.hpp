#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "icelab/geometry.hpp"
#include "icelab/obstacles.hpp"
#include "icelab/rng.hpp"

namespace icelab {

/// n -> kappa_n, the number of obstacles at level n (n starts at 1).
struct KappaRule {
    enum class Kind { table, power, geometric };
    Kind kind = Kind::table;
    std::vector<long> table;  // table[n - 1]
    double scale = 1.0;       // power: scale * n^exponent; geometric: scale * ratio^(n-1)
    double exponent = 1.0;
    double ratio = 2.0;

    long at(int n) const;
    static KappaRule from_table(std::vector<long> values);
    static KappaRule power_law(double scale, double exponent);
};

/// Multiplicative shape factor for position-dependent radii r_n(x) = r_n * g(x).
struct RadiusProfile {
    enum class Kind { constant, affine, quadratic_norm };
    Kind kind = Kind::constant;
    double offset = 1.0;               // affine: offset + slope . x
    Point slope{0.0, 0.0, 0.0};

    double value(const Point& x, int dim) const;
    /// Max and min of g over the corners of [lo, hi]; both profiles are
    /// convex so the max is attained at a corner.
    double sup(const Point& lo, const Point& hi, int dim) const;
    double inf(const Point& lo, const Point& hi, int dim) const;
};

struct RadiusRule {
    enum class Kind { capacity_balanced, power, table };
    Kind kind = Kind::capacity_balanced;
    double c = 1.0;         // capacity_balanced: kappa_n * Qcl(B_{r_n}) = c
    double r0 = 0.1;        // power: r0 * n^-exponent
    double exponent = 1.0;
    std::vector<double> table;
    RadiusProfile profile;

    double base(int dim, long kappa, int n) const;
};

/// The law mu of the obstacle centers.
struct CenterLaw {
    enum class Kind { uniform_box, point_mass };
    Kind kind = Kind::uniform_box;
    Box box;
    Point atom{0.0, 0.0, 0.0};
    /// Probability that a center is sent to the cemetery, which drops the obstacle.
    double cemetery_prob = 0.0;

    static CenterLaw uniform(const Box& b);
    static CenterLaw point(const Point& x);

    std::optional<Point> sample(Stream& rng, int dim) const;
    /// Lebesgue density of mu, or nullopt when mu is singular.
    std::optional<double> density(const Point& x) const;
    Point support_lower() const;
    Point support_upper() const;
};

struct RandomCenterModel {
    int dim = 3;
    KappaRule kappa;
    RadiusRule radius;
    CenterLaw centers;
    std::uint64_t seed = 1;

    long kappa_at(int n) const { return kappa.at(n); }
    double base_radius(int n) const { return radius.base(dim, kappa_at(n), n); }
    double radius_at(int n, const Point& x) const;
    /// Uniform bound on the radii at level n over the support of mu.
    double rho(int n) const;
    /// Throws unless rho is nonincreasing along n_list.
    void validate(const std::vector<int>& n_list) const;
};

/// kappa_n iid centers ~ mu with radii from the radius rule, drawn from rng.
ObstacleSet sample_obstacles(const RandomCenterModel& model, int n, Stream& rng);
/// Same, using the stream derived from (model.seed, n).
ObstacleSet sample_obstacles(const RandomCenterModel& model, int n);
/// Environment replicate `env` at level n.
ObstacleSet sample_environment(const RandomCenterModel& model, int n, int env);

double nearest_obstacle_distance(const ObstacleSet& set, const Point& x);
ObstacleSet shrink(const ObstacleSet& set, double factor);

}  // namespace icelab
