#include "icelab/geometry.hpp"

#include <algorithm>

namespace icelab {

void check_dim(int dim) {
    if (dim != 2 && dim != 3) {
        throw std::invalid_argument("dimension " + std::to_string(dim) +
                                    " unsupported: closed-form kernels exist for d = 2 and d = 3 only");
    }
}

Box::Box(int d, Point lo, Point hi) : dim(d), lower(lo), upper(hi) {
    check_dim(d);
    for (int i = 0; i < d; ++i) {
        if (!(lower[i] < upper[i])) {
            throw std::invalid_argument("box requires lower[i] < upper[i] for every axis");
        }
    }
    for (int i = d; i < kMaxDim; ++i) {
        lower[i] = 0.0;
        upper[i] = 0.0;
    }
}

bool Box::contains(const Point& x) const {
    for (int i = 0; i < dim; ++i) {
        if (x[i] < lower[i] || x[i] > upper[i]) return false;
    }
    return true;
}

double Box::volume() const {
    double v = 1.0;
    for (int i = 0; i < dim; ++i) v *= upper[i] - lower[i];
    return v;
}

double Box::diameter() const { return distance(lower, upper); }

Point Box::center() const {
    Point c{0.0, 0.0, 0.0};
    for (int i = 0; i < dim; ++i) c[i] = 0.5 * (lower[i] + upper[i]);
    return c;
}

double Box::distance_outside(const Point& x) const {
    double s = 0.0;
    for (int i = 0; i < dim; ++i) {
        const double gap = std::max({lower[i] - x[i], 0.0, x[i] - upper[i]});
        s += gap * gap;
    }
    return std::sqrt(s);
}

double Box::distance_to_boundary(const Point& x) const {
    if (!contains(x)) return -distance_outside(x);
    double d = kInf;
    for (int i = 0; i < dim; ++i) d = std::min({d, x[i] - lower[i], upper[i] - x[i]});
    return d;
}

Domain Domain::full_space(int dim) {
    check_dim(dim);
    return Domain(dim, Kind::full_space);
}

Domain Domain::box(const Box& b) {
    Domain d(b.dim, Kind::box);
    d.box_ = b;
    return d;
}

Domain Domain::ball(int dim, const Point& center, double radius) {
    check_dim(dim);
    if (!(radius > 0.0)) throw std::invalid_argument("ball domain needs a positive radius");
    Domain d(dim, Kind::ball);
    d.center_ = center;
    d.radius_ = radius;
    return d;
}

bool Domain::contains(const Point& x) const {
    switch (kind_) {
        case Kind::full_space: return true;
        case Kind::box: return box_.contains(x);
        case Kind::ball: return distance(x, center_) < radius_;
    }
    return false;
}

double Domain::boundary_distance(const Point& x) const {
    switch (kind_) {
        case Kind::full_space: return kInf;
        case Kind::box: return box_.distance_to_boundary(x);
        case Kind::ball: return radius_ - distance(x, center_);
    }
    return kInf;
}

std::string to_string(Domain::Kind kind) {
    switch (kind) {
        case Domain::Kind::full_space: return "full";
        case Domain::Kind::box: return "box";
        case Domain::Kind::ball: return "ball";
    }
    return "?";
}

}  // namespace icelab
