#include "icelab/obstacles.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace icelab {

namespace {

constexpr std::size_t kMaxCellsPerBall = 8;
constexpr std::size_t kMaxCellsFloor = 4096;

}  // namespace

ObstacleSet::ObstacleSet(int dim, std::vector<Ball> balls) : dim_(dim), balls_(std::move(balls)) {
    check_dim(dim_);
    for (auto& b : balls_) {
        if (!(b.radius > 0.0) || !std::isfinite(b.radius)) {
            throw std::invalid_argument("obstacle radius must be positive and finite");
        }
        if (!all_finite(b.center)) throw std::invalid_argument("obstacle center must be finite");
        for (int i = dim_; i < kMaxDim; ++i) {
            if (b.center[i] != 0.0) throw std::invalid_argument("obstacle center has more coordinates than dim");
        }
        max_radius_ = std::max(max_radius_, b.radius);
        min_radius_ = std::min(min_radius_, b.radius);
    }
    build_index();
}

void ObstacleSet::build_index() {
    ncell_ = {1, 1, 1};
    cell_start_.assign(2, 0);
    sorted_.clear();
    if (balls_.empty()) return;

    center_lo_ = balls_.front().center;
    center_hi_ = balls_.front().center;
    for (const auto& b : balls_) {
        for (int i = 0; i < dim_; ++i) {
            center_lo_[i] = std::min(center_lo_[i], b.center[i]);
            center_hi_[i] = std::max(center_hi_[i], b.center[i]);
        }
    }
    const double n = static_cast<double>(balls_.size());
    double volume = 1.0;
    for (int i = 0; i < dim_; ++i) volume *= std::max(center_hi_[i] - center_lo_[i], 2.0 * max_radius_);
    const double spacing = std::pow(volume / n, 1.0 / dim_);
    const double diam = distance(center_lo_, center_hi_);
    cell_ = std::max({2.0 * max_radius_, diam / 128.0, 0.5 * spacing});

    const std::size_t max_cells = std::max(kMaxCellsFloor, kMaxCellsPerBall * balls_.size());
    for (;;) {
        std::size_t total = 1;
        for (int i = 0; i < dim_; ++i) {
            const double extent = center_hi_[i] - center_lo_[i];
            ncell_[i] = std::max(1, static_cast<int>(std::ceil(extent / cell_)));
            total *= static_cast<std::size_t>(ncell_[i]);
        }
        if (total <= max_cells) break;
        cell_ *= 1.25;
    }
    grid_lo_ = center_lo_;

    const std::size_t cells = static_cast<std::size_t>(ncell_[0]) * ncell_[1] * ncell_[2];
    std::vector<std::uint32_t> counts(cells + 1, 0);
    std::vector<std::size_t> owner(balls_.size());
    for (std::size_t b = 0; b < balls_.size(); ++b) {
        owner[b] = cell_index(cell_of(balls_[b].center));
        ++counts[owner[b] + 1];
    }
    for (std::size_t c = 0; c < cells; ++c) counts[c + 1] += counts[c];
    cell_start_ = counts;
    sorted_.resize(balls_.size());
    std::vector<std::uint32_t> fill(counts.begin(), counts.end() - 1);
    for (std::size_t b = 0; b < balls_.size(); ++b) sorted_[fill[owner[b]]++] = balls_[b];
}

std::array<int, kMaxDim> ObstacleSet::cell_of(const Point& x) const {
    std::array<int, kMaxDim> c{0, 0, 0};
    for (int i = 0; i < dim_; ++i) {
        double f = std::floor((x[i] - grid_lo_[i]) / cell_);
        f = std::clamp(f, 0.0, static_cast<double>(ncell_[i] - 1));
        c[i] = static_cast<int>(f);
    }
    return c;
}

double ObstacleSet::scan_block(const Point& x, const std::array<int, kMaxDim>& lo,
                               const std::array<int, kMaxDim>& hi, int skip_inner,
                               const std::array<int, kMaxDim>& center, double best) const {
    for (int k = lo[2]; k <= hi[2]; ++k) {
        for (int j = lo[1]; j <= hi[1]; ++j) {
            for (int i = lo[0]; i <= hi[0]; ++i) {
                if (skip_inner > 0) {
                    const int cheb = std::max({std::abs(i - center[0]), std::abs(j - center[1]), std::abs(k - center[2])});
                    if (cheb < skip_inner) continue;
                }
                const std::size_t cell = cell_index({i, j, k});
                for (std::uint32_t b = cell_start_[cell]; b < cell_start_[cell + 1]; ++b) {
                    const Ball& ball = sorted_[b];
                    const double d2 = squared_distance(x, ball.center);
                    const double reach = best + ball.radius;
                    if (reach <= 0.0 || d2 >= reach * reach) continue;
                    best = std::sqrt(d2) - ball.radius;
                }
            }
        }
    }
    return best;
}

double ObstacleSet::unsearched_bound(const Point& x, const std::array<int, kMaxDim>& lo,
                                     const std::array<int, kMaxDim>& hi) const {
    double bound = kInf;
    for (int i = 0; i < dim_; ++i) {
        if (lo[i] > 0) bound = std::min(bound, x[i] - (grid_lo_[i] + lo[i] * cell_));
        if (hi[i] < ncell_[i] - 1) bound = std::min(bound, grid_lo_[i] + (hi[i] + 1) * cell_ - x[i]);
    }
    return std::max(bound, 0.0);
}

double ObstacleSet::nearest_distance(const Point& x) const {
    if (balls_.empty()) return kInf;
    const auto c = cell_of(x);
    const int kmax = std::max({ncell_[0], ncell_[1], ncell_[2]});
    double best = kInf;
    for (int k = 0; k <= kmax; ++k) {
        std::array<int, kMaxDim> lo{0, 0, 0};
        std::array<int, kMaxDim> hi{0, 0, 0};
        for (int i = 0; i < kMaxDim; ++i) {
            lo[i] = std::max(0, c[i] - k);
            hi[i] = std::min(ncell_[i] - 1, c[i] + k);
        }
        best = scan_block(x, lo, hi, k, c, best);
        const double bound = unsearched_bound(x, lo, hi);
        if (bound == kInf || best <= bound - max_radius_) return best;
    }
    return best;
}

double ObstacleSet::nearest_distance_brute(const Point& x) const {
    double best = kInf;
    for (const auto& b : balls_) best = std::min(best, distance(x, b.center) - b.radius);
    return best;
}

double ObstacleSet::clearance(const Point& x) const {
    if (balls_.empty()) return kInf;
    const auto c = cell_of(x);
    std::array<int, kMaxDim> lo{0, 0, 0};
    std::array<int, kMaxDim> hi{0, 0, 0};
    for (int i = 0; i < kMaxDim; ++i) {
        lo[i] = std::max(0, c[i] - 1);
        hi[i] = std::min(ncell_[i] - 1, c[i] + 1);
    }
    // cells are x-fastest, so each (j, k) row of the block is one contiguous run
    double best = kInf;
    for (int k = lo[2]; k <= hi[2]; ++k) {
        for (int j = lo[1]; j <= hi[1]; ++j) {
            const std::uint32_t begin = cell_start_[cell_index({lo[0], j, k})];
            const std::uint32_t end = cell_start_[cell_index({hi[0], j, k}) + 1];
            for (std::uint32_t b = begin; b < end; ++b) {
                const Ball& ball = sorted_[b];
                const double d2 = squared_distance(x, ball.center);
                const double reach = best + ball.radius;
                if (reach <= 0.0 || d2 >= reach * reach) continue;
                best = std::sqrt(d2) - ball.radius;
            }
        }
    }
    double outside = 0.0;
    for (int i = 0; i < dim_; ++i) {
        const double gap = std::max({center_lo_[i] - x[i], 0.0, x[i] - center_hi_[i]});
        outside += gap * gap;
    }
    const double bound = std::max(unsearched_bound(x, lo, hi), std::sqrt(outside)) - max_radius_;
    return std::min(best, bound);
}

Box ObstacleSet::bounding_box() const {
    if (balls_.empty()) return Box{};
    Point lo = center_lo_;
    Point hi = center_hi_;
    for (int i = 0; i < dim_; ++i) {
        lo[i] -= max_radius_;
        hi[i] += max_radius_;
    }
    return Box(dim_, lo, hi);
}

double ObstacleSet::enclosing_radius(const Point& center) const {
    double r = 0.0;
    for (const auto& b : balls_) r = std::max(r, distance(b.center, center) + b.radius);
    return r;
}

ObstacleSet ObstacleSet::shrink(double factor) const {
    if (!(factor > 0.0 && factor < 1.0)) throw std::invalid_argument("shrink factor must lie in (0, 1)");
    std::vector<Ball> out = balls_;
    for (auto& b : out) b.radius *= factor;
    return ObstacleSet(dim_, std::move(out));
}

Ellipsoid::Ellipsoid(int dim, const Point& center, const Point& semi_axes, const std::array<Point, kMaxDim>& axes)
    : dim_(dim), center_(center), semi_(semi_axes), axes_(axes) {
    check_dim(dim_);
    min_axis_ = kInf;
    max_axis_ = 0.0;
    for (int i = 0; i < dim_; ++i) {
        if (!(semi_[i] > 0.0)) throw std::invalid_argument("ellipsoid semi-axes must be positive");
        min_axis_ = std::min(min_axis_, semi_[i]);
        max_axis_ = std::max(max_axis_, semi_[i]);
    }
}

double Ellipsoid::clearance(const Point& x) const {
    double q2 = 0.0;
    for (int j = 0; j < dim_; ++j) {
        double y = 0.0;
        for (int i = 0; i < dim_; ++i) y += axes_[j][i] * (x[i] - center_[i]);
        const double s = y / semi_[j];
        q2 += s * s;
    }
    return min_axis_ * (std::sqrt(q2) - 1.0);
}

Box Ellipsoid::bounding_box() const {
    Point lo{0.0, 0.0, 0.0};
    Point hi{0.0, 0.0, 0.0};
    for (int i = 0; i < dim_; ++i) {
        double h2 = 0.0;
        for (int j = 0; j < dim_; ++j) h2 += (axes_[j][i] * semi_[j]) * (axes_[j][i] * semi_[j]);
        lo[i] = center_[i] - std::sqrt(h2);
        hi[i] = center_[i] + std::sqrt(h2);
    }
    return Box(dim_, lo, hi);
}

double Ellipsoid::enclosing_radius(const Point& c) const { return distance(center_, c) + max_axis_; }

std::string obstacles_to_json(const ObstacleSet& set) {
    nlohmann::json j;
    j["dim"] = set.dim();
    j["balls"] = nlohmann::json::array();
    for (const auto& b : set.balls()) {
        nlohmann::json c = nlohmann::json::array();
        for (int i = 0; i < set.dim(); ++i) c.push_back(b.center[i]);
        j["balls"].push_back({{"c", c}, {"r", b.radius}});
    }
    return j.dump();
}

ObstacleSet obstacles_from_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    const int dim = j.at("dim").get<int>();
    check_dim(dim);
    std::vector<Ball> balls;
    for (const auto& item : j.at("balls")) {
        const auto coords = item.at("c").get<std::vector<double>>();
        if (static_cast<int>(coords.size()) != dim) {
            throw std::invalid_argument("ball center dimension does not match dim");
        }
        balls.push_back({make_point(coords), item.at("r").get<double>()});
    }
    return ObstacleSet(dim, std::move(balls));
}

void write_obstacles(const ObstacleSet& set, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << obstacles_to_json(set) << '\n';
}

ObstacleSet read_obstacles(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return obstacles_from_json(ss.str());
}

}  // namespace icelab
