#include "icelab/ball_exit.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace icelab {

namespace {

constexpr int kZeros = 400;
constexpr std::size_t kTable = 16384;
constexpr std::size_t kGuide = 4096;
// below this scaled time the killed law is the free law to double precision
constexpr double kFree2 = 0.004;
constexpr double kSmall = 0.1;

}  // namespace

const UnitBallExit& UnitBallExit::get(int dim) {
    static const UnitBallExit d2(2);
    static const UnitBallExit d3(3);
    check_dim(dim);
    return dim == 2 ? d2 : d3;
}

UnitBallExit::UnitBallExit(int dim) : dim_(dim) {
    if (dim_ == 2) {
        zeros_.reserve(kZeros);
        for (int k = 1; k <= kZeros; ++k) {
            double x = (k - 0.25) * kPi;
            for (int it = 0; it < 8; ++it) x += std::cyl_bessel_j(0.0, x) / std::cyl_bessel_j(1.0, x);
            zeros_.push_back(x);
            j1_.push_back(std::cyl_bessel_j(1.0, x));
        }
        t_lo_ = kFree2;
    } else {
        t_lo_ = 0.005;
    }
    step_ = (t_hi_ - t_lo_) / static_cast<double>(kTable - 1);
    table_.resize(kTable);
    for (std::size_t i = 0; i < kTable; ++i) table_[i] = survival(t_lo_ + step_ * static_cast<double>(i));
    table_.front() = 1.0;
    // guide_[m] = first index with survival below 1 - m / G
    guide_.resize(kGuide + 1);
    std::size_t i = 0;
    for (std::size_t m = 0; m <= kGuide; ++m) {
        const double level = 1.0 - static_cast<double>(m) / kGuide;
        while (i < kTable && table_[i] >= level) ++i;
        guide_[m] = i;
    }
}

double UnitBallExit::survival(double t) const {
    if (t <= 0.0) return 1.0;
    if (dim_ == 3) {
        if (t < 0.2) {
            double sum = 0.0;
            for (int m = 0; m < 6; ++m) {
                const double a = 2.0 * m + 1.0;
                sum += std::exp(-a * a / (4.0 * t));
            }
            return 1.0 - 2.0 / std::sqrt(kPi * t) * sum;
        }
        double sum = 0.0;
        for (int k = 1; k * k * kPi * kPi * t < 80.0; ++k) {
            sum += (k % 2 == 1 ? 2.0 : -2.0) * std::exp(-k * k * kPi * kPi * t);
        }
        return sum;
    }
    if (t < kFree2) return 1.0;
    double sum = 0.0;
    for (std::size_t k = 0; k < zeros_.size() && zeros_[k] * zeros_[k] * t < 80.0; ++k) {
        sum += 2.0 / (zeros_[k] * j1_[k]) * std::exp(-zeros_[k] * zeros_[k] * t);
    }
    return sum;
}

double UnitBallExit::sample_time(Stream& rng) const {
    const double v = rng.uniform_open0();
    if (v <= table_.back()) {
        // one-term tail, exact to ~1e-13 relative past t_hi
        if (dim_ == 3) return std::log(2.0 / v) / (kPi * kPi);
        const double c = 2.0 / (zeros_[0] * j1_[0]);
        return std::log(c / v) / (zeros_[0] * zeros_[0]);
    }
    // table_ is decreasing; find the last index with table_[i] >= v
    const std::size_t m = std::min(kGuide - 1, static_cast<std::size_t>((1.0 - v) * kGuide));
    const auto first = table_.begin() + static_cast<std::ptrdiff_t>(guide_[m] > 0 ? guide_[m] - 1 : 0);
    const auto last = table_.begin() + static_cast<std::ptrdiff_t>(std::min(kTable, guide_[m + 1] + 1));
    const auto it = std::lower_bound(first, last, v, std::greater_equal<double>());
    const std::size_t i = static_cast<std::size_t>(it - table_.begin()) - 1;
    const double s0 = table_[i];
    const double s1 = table_[i + 1];
    const double frac = s0 > s1 ? (s0 - v) / (s0 - s1) : 0.0;
    return t_lo_ + step_ * (static_cast<double>(i) + frac);
}

double UnitBallExit::killed_radial_density(double rho, double s) const {
    if (rho <= 0.0 || rho >= 1.0) return 0.0;
    if (dim_ == 3) {
        if (s < kSmall) {
            double w = 0.0;
            for (int m = -3; m <= 3; ++m) {
                const double y = rho + 2.0 * m;
                w += y * std::exp(-y * y / (4.0 * s));
            }
            return rho * w / std::pow(s, 1.5);
        }
        double w = 0.0;
        for (int k = 1; (k * k - 1) * kPi * kPi * s < 80.0; ++k) {
            w += k * std::sin(k * kPi * rho) * std::exp(-(k * k - 1) * kPi * kPi * s);
        }
        return rho * w;
    }
    const double j1sq = zeros_[0] * zeros_[0];
    double w = 0.0;
    for (std::size_t k = 0; k < zeros_.size() && (zeros_[k] * zeros_[k] - j1sq) * s < 80.0; ++k) {
        w += std::cyl_bessel_j(0.0, zeros_[k] * rho) / (j1_[k] * j1_[k]) *
             std::exp(-(zeros_[k] * zeros_[k] - j1sq) * s);
    }
    return rho * w;
}

double UnitBallExit::sample_small(double s, Stream& rng) const {
    // free radial law as proposal; the killed density never exceeds the free one
    for (;;) {
        double rho = 0.0;
        if (dim_ == 3) {
            double r2 = 0.0;
            for (int i = 0; i < 3; ++i) {
                const double g = rng.normal();
                r2 += g * g;
            }
            rho = std::sqrt(2.0 * s * r2);
        } else {
            rho = std::sqrt(-4.0 * s * std::log(rng.uniform_open0()));
        }
        if (rho >= 1.0) continue;
        if (dim_ == 2 && s < kFree2) return rho;
        double ratio = 1.0;
        if (dim_ == 3) {
            for (int m = -3; m <= 3; ++m) {
                if (m == 0) continue;
                ratio += (rho + 2.0 * m) / rho * std::exp(-m * (rho + m) / s);
            }
        } else {
            const double free = std::exp(-rho * rho / (4.0 * s)) / (4.0 * kPi * s);
            double killed = 0.0;
            for (std::size_t k = 0; k < zeros_.size() && zeros_[k] * zeros_[k] * s < 80.0; ++k) {
                killed += std::cyl_bessel_j(0.0, zeros_[k] * rho) / (kPi * j1_[k] * j1_[k]) *
                          std::exp(-zeros_[k] * zeros_[k] * s);
            }
            ratio = killed / free;
        }
        if (rng.uniform() < ratio) return rho;
    }
}

double UnitBallExit::sample_large(double s, Stream& rng) const {
    // uniform proposal on (0, 1) against a bound of the series
    double bound = 0.0;
    if (dim_ == 3) {
        for (int k = 1; (k * k - 1) * kPi * kPi * s < 80.0; ++k) bound += k * std::exp(-(k * k - 1) * kPi * kPi * s);
    } else {
        const double j1sq = zeros_[0] * zeros_[0];
        for (std::size_t k = 0; k < zeros_.size() && (zeros_[k] * zeros_[k] - j1sq) * s < 80.0; ++k) {
            bound += std::exp(-(zeros_[k] * zeros_[k] - j1sq) * s) / (j1_[k] * j1_[k]);
        }
    }
    for (;;) {
        const double rho = rng.uniform_open0();
        if (rho >= 1.0) continue;
        if (rng.uniform() * bound < killed_radial_density(rho, s)) return rho;
    }
}

double UnitBallExit::sample_radius_given_survival(double s, Stream& rng) const {
    if (!(s > 0.0)) throw std::invalid_argument("survival time must be positive");
    return s < kSmall ? sample_small(s, rng) : sample_large(s, rng);
}

Point uniform_direction(int dim, Stream& rng) {
    const double phi = 2.0 * kPi * rng.uniform();
    if (dim == 2) return {std::cos(phi), std::sin(phi), 0.0};
    const double z = 2.0 * rng.uniform() - 1.0;
    const double rxy = std::sqrt(std::max(0.0, 1.0 - z * z));
    return {rxy * std::cos(phi), rxy * std::sin(phi), z};
}

}  // namespace icelab
