#include "icelab/model.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace icelab {

long KappaRule::at(int n) const {
    if (n < 1) throw std::invalid_argument("model level n must be >= 1");
    switch (kind) {
        case Kind::table:
            if (static_cast<std::size_t>(n) > table.size()) {
                throw std::invalid_argument("kappa table has no entry for n = " + std::to_string(n));
            }
            return table[static_cast<std::size_t>(n - 1)];
        case Kind::power: return std::lround(scale * std::pow(static_cast<double>(n), exponent));
        case Kind::geometric: return std::lround(scale * std::pow(ratio, n - 1));
    }
    return 0;
}

KappaRule KappaRule::from_table(std::vector<long> values) {
    KappaRule k;
    k.kind = Kind::table;
    k.table = std::move(values);
    return k;
}

KappaRule KappaRule::power_law(double scale, double exponent) {
    KappaRule k;
    k.kind = Kind::power;
    k.scale = scale;
    k.exponent = exponent;
    return k;
}

double RadiusProfile::value(const Point& x, int dim) const {
    switch (kind) {
        case Kind::constant: return 1.0;
        case Kind::affine: {
            double v = offset;
            for (int i = 0; i < dim; ++i) v += slope[i] * x[i];
            return v;
        }
        case Kind::quadratic_norm: {
            if (dim != 3) throw std::invalid_argument("quadratic_norm radius profile needs d = 3");
            return 1.0 + x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
        }
    }
    return 1.0;
}

namespace {

template <class F>
void for_each_corner(const Point& lo, const Point& hi, int dim, F&& f) {
    const int corners = 1 << dim;
    for (int mask = 0; mask < corners; ++mask) {
        Point p{0.0, 0.0, 0.0};
        for (int i = 0; i < dim; ++i) p[i] = (mask >> i) & 1 ? hi[i] : lo[i];
        f(p);
    }
}

}  // namespace

double RadiusProfile::sup(const Point& lo, const Point& hi, int dim) const {
    double best = -kInf;
    for_each_corner(lo, hi, dim, [&](const Point& p) { best = std::max(best, value(p, dim)); });
    return best;
}

double RadiusProfile::inf(const Point& lo, const Point& hi, int dim) const {
    if (kind == Kind::quadratic_norm) {
        // minimum of 1 + |x|^2 over the box: clamp the origin into it
        Point p{0.0, 0.0, 0.0};
        for (int i = 0; i < dim; ++i) p[i] = std::clamp(0.0, lo[i], hi[i]);
        return value(p, dim);
    }
    double best = kInf;
    for_each_corner(lo, hi, dim, [&](const Point& p) { best = std::min(best, value(p, dim)); });
    return best;
}

double RadiusRule::base(int dim, long kappa, int n) const {
    switch (kind) {
        case Kind::capacity_balanced:
            if (kappa <= 0) return 0.0;
            if (dim == 3) return c / (4.0 * kPi * static_cast<double>(kappa));
            // d = 2: Qcl(B_r) = 2 pi / (-log r)
            return c > 0.0 ? std::exp(-2.0 * kPi * static_cast<double>(kappa) / c) : 0.0;
        case Kind::power: return r0 * std::pow(static_cast<double>(n), -exponent);
        case Kind::table:
            if (n < 1 || static_cast<std::size_t>(n) > table.size()) {
                throw std::invalid_argument("radius table has no entry for n = " + std::to_string(n));
            }
            return table[static_cast<std::size_t>(n - 1)];
    }
    return 0.0;
}

CenterLaw CenterLaw::uniform(const Box& b) {
    CenterLaw law;
    law.kind = Kind::uniform_box;
    law.box = b;
    return law;
}

CenterLaw CenterLaw::point(const Point& x) {
    CenterLaw law;
    law.kind = Kind::point_mass;
    law.atom = x;
    return law;
}

std::optional<Point> CenterLaw::sample(Stream& rng, int dim) const {
    if (cemetery_prob > 0.0 && rng.uniform() < cemetery_prob) return std::nullopt;
    switch (kind) {
        case Kind::uniform_box: {
            Point p{0.0, 0.0, 0.0};
            for (int i = 0; i < dim; ++i) p[i] = box.lower[i] + (box.upper[i] - box.lower[i]) * rng.uniform();
            return p;
        }
        case Kind::point_mass: return atom;
    }
    return std::nullopt;
}

std::optional<double> CenterLaw::density(const Point& x) const {
    if (kind == Kind::point_mass) return std::nullopt;
    return box.contains(x) ? (1.0 - cemetery_prob) / box.volume() : 0.0;
}

Point CenterLaw::support_lower() const { return kind == Kind::point_mass ? atom : box.lower; }
Point CenterLaw::support_upper() const { return kind == Kind::point_mass ? atom : box.upper; }

double RandomCenterModel::radius_at(int n, const Point& x) const {
    return base_radius(n) * radius.profile.value(x, dim);
}

double RandomCenterModel::rho(int n) const {
    return base_radius(n) * radius.profile.sup(centers.support_lower(), centers.support_upper(), dim);
}

void RandomCenterModel::validate(const std::vector<int>& n_list) const {
    check_dim(dim);
    if (centers.kind == CenterLaw::Kind::uniform_box && centers.box.dim != dim) {
        throw std::invalid_argument("center law box dimension does not match model dimension");
    }
    if (radius.profile.inf(centers.support_lower(), centers.support_upper(), dim) <= 0.0) {
        throw std::invalid_argument("radius profile must be positive on the support of the center law");
    }
    double previous = kInf;
    long previous_kappa = 0;
    for (int n : n_list) {
        const double r = rho(n);
        if (r > previous) throw std::invalid_argument("rho_n must be nonincreasing in n");
        const long k = kappa_at(n);
        if (k < previous_kappa) throw std::invalid_argument("kappa_n must be nondecreasing in n");
        previous = r;
        previous_kappa = k;
    }
}

ObstacleSet sample_obstacles(const RandomCenterModel& model, int n, Stream& rng) {
    const long kappa = model.kappa_at(n);
    if (kappa < 0) throw std::invalid_argument("kappa_n must be nonnegative");
    std::vector<Ball> balls;
    balls.reserve(static_cast<std::size_t>(kappa));
    const double base = kappa > 0 ? model.base_radius(n) : 0.0;
    for (long i = 0; i < kappa; ++i) {
        const auto center = model.centers.sample(rng, model.dim);
        if (!center) continue;
        const double r = base * model.radius.profile.value(*center, model.dim);
        if (!(r > 0.0)) throw std::invalid_argument("radius rule produced a nonpositive radius");
        balls.push_back({*center, r});
    }
    return ObstacleSet(model.dim, std::move(balls));
}

ObstacleSet sample_obstacles(const RandomCenterModel& model, int n) {
    Stream rng(derive_seed(model.seed, {tag(StreamTag::obstacles), static_cast<std::uint64_t>(n)}));
    return sample_obstacles(model, n, rng);
}

ObstacleSet sample_environment(const RandomCenterModel& model, int n, int env) {
    Stream rng(derive_seed(model.seed, {tag(StreamTag::obstacles), static_cast<std::uint64_t>(n),
                                        static_cast<std::uint64_t>(env)}));
    return sample_obstacles(model, n, rng);
}

double nearest_obstacle_distance(const ObstacleSet& set, const Point& x) { return set.nearest_distance(x); }

ObstacleSet shrink(const ObstacleSet& set, double factor) { return set.shrink(factor); }

}  // namespace icelab
