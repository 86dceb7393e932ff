#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace icelab {

inline constexpr int kMaxDim = 3;
inline constexpr double kInf = std::numeric_limits<double>::infinity();
inline constexpr double kPi = 3.14159265358979323846;

/// Points live in a fixed 3-slot array; in d = 2 the third coordinate stays 0
/// so every distance formula works unchanged.
using Point = std::array<double, kMaxDim>;

inline Point make_point(std::span<const double> coords) {
    if (coords.size() > static_cast<std::size_t>(kMaxDim)) {
        throw std::invalid_argument("point has more than 3 coordinates");
    }
    Point p{0.0, 0.0, 0.0};
    for (std::size_t i = 0; i < coords.size(); ++i) p[i] = coords[i];
    return p;
}

inline double squared_distance(const Point& a, const Point& b) {
    const double dx = a[0] - b[0];
    const double dy = a[1] - b[1];
    const double dz = a[2] - b[2];
    return dx * dx + dy * dy + dz * dz;
}

inline double distance(const Point& a, const Point& b) { return std::sqrt(squared_distance(a, b)); }

inline double norm(const Point& a) { return std::sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2]); }

inline bool all_finite(const Point& p) {
    return std::isfinite(p[0]) && std::isfinite(p[1]) && std::isfinite(p[2]);
}

void check_dim(int dim);

/// Axis-aligned box [lower, upper] in the first `dim` coordinates.
struct Box {
    int dim = 3;
    Point lower{0.0, 0.0, 0.0};
    Point upper{1.0, 1.0, 1.0};

    Box() = default;
    Box(int d, Point lo, Point hi);

    bool contains(const Point& x) const;
    double volume() const;
    double diameter() const;
    Point center() const;
    /// Euclidean distance from x to the box (0 inside).
    double distance_outside(const Point& x) const;
    /// Distance from an interior point to the nearest face (negative outside).
    double distance_to_boundary(const Point& x) const;
};

/// The region U in which the diffusion lives before its exit time.
class Domain {
public:
    enum class Kind { full_space, box, ball };

    static Domain full_space(int dim);
    static Domain box(const Box& b);
    /// Open ball; used for outer absorbing spheres.
    static Domain ball(int dim, const Point& center, double radius);

    int dim() const { return dim_; }
    Kind kind() const { return kind_; }
    const Box& bounds() const { return box_; }
    const Point& ball_center() const { return center_; }
    double ball_radius() const { return radius_; }

    bool contains(const Point& x) const;
    /// Distance to the boundary from inside, <= 0 outside, +inf for full space.
    double boundary_distance(const Point& x) const;

private:
    Domain(int dim, Kind kind) : dim_(dim), kind_(kind) {}

    int dim_;
    Kind kind_;
    Box box_{};
    Point center_{0.0, 0.0, 0.0};
    double radius_ = kInf;
};

std::string to_string(Domain::Kind kind);

}  // namespace icelab
