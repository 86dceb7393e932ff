#pragma once

#include <vector>

#include "icelab/geometry.hpp"
#include "icelab/rng.hpp"

namespace icelab {

/// Exit law of Brownian motion (generator Delta) started at the center of
/// the unit ball. The exit time and the exit point are independent; the exit
/// point is uniform on the sphere. Scale times by R^2 for radius R.
class UnitBallExit {
public:
    static const UnitBallExit& get(int dim);

    int dim() const { return dim_; }
    /// P(tau > t).
    double survival(double t) const;
    double mean_time() const { return 1.0 / (2.0 * dim_); }
    double sample_time(Stream& rng) const;

    /// Density of |X_s| on {tau > s}, up to the factor that does not depend on rho.
    double killed_radial_density(double rho, double s) const;
    /// |X_s| conditioned on tau > s.
    double sample_radius_given_survival(double s, Stream& rng) const;

private:
    explicit UnitBallExit(int dim);
    double sample_small(double s, Stream& rng) const;
    double sample_large(double s, Stream& rng) const;

    int dim_;
    std::vector<double> zeros_;   // d = 2: zeros of J0
    std::vector<double> j1_;      // d = 2: J1 at those zeros
    double t_lo_ = 0.0;
    double t_hi_ = 1.0;
    double step_ = 0.0;
    std::vector<double> table_;   // survival on the uniform grid [t_lo, t_hi]
    std::vector<std::size_t> guide_;
};

Point uniform_direction(int dim, Stream& rng);

}  // namespace icelab
