#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "icelab/geometry.hpp"

namespace icelab {

/// A compact set the diffusion can run into. The path simulator only needs a
/// cheap lower bound on the signed distance (negative inside) to size its
/// steps and to detect entrance.
class Target {
public:
    virtual ~Target() = default;

    virtual int dim() const = 0;
    virtual bool empty() const = 0;
    /// Signed distance from x to the set (negative inside), possibly
    /// shrunk toward 0: same sign, never larger in magnitude. Exact close to
    /// the set.
    virtual double clearance(const Point& x) const = 0;
    /// Box enclosing the whole set.
    virtual Box bounding_box() const = 0;
    /// Smallest length scale of the set; the hit tolerance is a fraction of it.
    virtual double feature_size() const = 0;
    /// max |y - center| over the set.
    virtual double enclosing_radius(const Point& center) const = 0;
};

struct Ball {
    Point center{0.0, 0.0, 0.0};
    double radius = 0.0;
};

/// A finite union of balls with a uniform-grid index. Immutable after
/// construction, so one instance is shared by all path workers.
class ObstacleSet final : public Target {
public:
    ObstacleSet() : ObstacleSet(3, {}) {}
    ObstacleSet(int dim, std::vector<Ball> balls);

    int dim() const override { return dim_; }
    bool empty() const override { return balls_.empty(); }
    std::size_t size() const { return balls_.size(); }
    const std::vector<Ball>& balls() const { return balls_; }
    double max_radius() const { return max_radius_; }
    double min_radius() const { return min_radius_; }
    double cell_size() const { return cell_; }
    /// Total grid cells; exposed for diagnostics and tests.
    std::size_t cell_count() const { return cell_start_.empty() ? 0 : cell_start_.size() - 1; }

    /// Exact min over balls of |x - c| - r, via expanding shells of grid
    /// cells; +inf for the empty set.
    double nearest_distance(const Point& x) const;
    /// Same quantity by scanning every ball.
    double nearest_distance_brute(const Point& x) const;
    /// Lower bound using only the 3^d cells around x. Exact inside a ball,
    /// since a containing ball's center always falls in that neighborhood.
    double clearance(const Point& x) const override;
    bool contains(const Point& x) const { return clearance(x) <= 0.0; }

    Box bounding_box() const override;
    double feature_size() const override { return min_radius_; }
    double enclosing_radius(const Point& center) const override;

    /// Same centers, radii multiplied by factor in (0, 1); index rebuilt.
    ObstacleSet shrink(double factor) const;

private:
    void build_index();
    std::size_t cell_index(const std::array<int, kMaxDim>& c) const {
        return (static_cast<std::size_t>(c[2]) * ncell_[1] + c[1]) * ncell_[0] + c[0];
    }
    std::array<int, kMaxDim> cell_of(const Point& x) const;
    double scan_block(const Point& x, const std::array<int, kMaxDim>& lo, const std::array<int, kMaxDim>& hi,
                      int skip_inner, const std::array<int, kMaxDim>& center, double best) const;
    double unsearched_bound(const Point& x, const std::array<int, kMaxDim>& lo,
                            const std::array<int, kMaxDim>& hi) const;

    int dim_;
    std::vector<Ball> balls_;
    double max_radius_ = 0.0;
    double min_radius_ = kInf;

    // grid over the bounding box of centers
    Point grid_lo_{0.0, 0.0, 0.0};
    Point center_lo_{0.0, 0.0, 0.0};
    Point center_hi_{0.0, 0.0, 0.0};
    double cell_ = 1.0;
    std::array<int, kMaxDim> ncell_{1, 1, 1};
    std::vector<std::uint32_t> cell_start_;
    std::vector<Ball> sorted_;
};

/// Ellipsoid {x : |A^{-1} R^T (x - c)| <= 1} with orthonormal R and semi-axes A.
class Ellipsoid final : public Target {
public:
    Ellipsoid(int dim, const Point& center, const Point& semi_axes,
              const std::array<Point, kMaxDim>& axes);

    int dim() const override { return dim_; }
    bool empty() const override { return false; }
    double clearance(const Point& x) const override;
    Box bounding_box() const override;
    double feature_size() const override { return min_axis_; }
    double enclosing_radius(const Point& c) const override;

    const Point& semi_axes() const { return semi_; }

private:
    int dim_;
    Point center_;
    Point semi_;
    std::array<Point, kMaxDim> axes_;  // columns of R
    double min_axis_;
    double max_axis_;
};

std::string obstacles_to_json(const ObstacleSet& set);
ObstacleSet obstacles_from_json(const std::string& text);
void write_obstacles(const ObstacleSet& set, const std::string& path);
ObstacleSet read_obstacles(const std::string& path);

}  // namespace icelab
