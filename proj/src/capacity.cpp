#include "icelab/capacity.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <stdexcept>

#include "icelab/paths.hpp"

namespace icelab {

namespace {

Eigen::Matrix3d to_eigen(const DiffusionMatrix& m) {
    Eigen::Matrix3d e = Eigen::Matrix3d::Zero();
    for (int i = 0; i < m.dim; ++i)
        for (int j = 0; j < m.dim; ++j) e(i, j) = m.b[i][j];
    return e;
}

}  // namespace

double unit_sphere_area(int dim) {
    check_dim(dim);
    return dim == 2 ? 2.0 * kPi : 4.0 * kPi;
}

double classical_kernel(const ClassicalKernelSpec& spec, const Point& y, const Point& z) {
    const double r = distance(y, z);
    if (r == 0.0) throw std::domain_error("classical kernel is singular at y = z");
    if (spec.dim == 3) return 1.0 / (r * spec.omega());
    check_dim(spec.dim);
    return -std::log(r) / spec.omega();
}

double ball_capacity_classical(const ClassicalKernelSpec& spec, double r) {
    if (!(r > 0.0)) throw std::invalid_argument("ball radius must be positive");
    if (spec.dim == 3) return spec.omega() * r;
    check_dim(spec.dim);
    if (!(r < 1.0)) throw std::invalid_argument("d = 2 ball capacity needs r < 1 for a positive log kernel");
    return spec.omega() / (-std::log(r));
}

double ball_capacity_alpha(int dim, double r, double alpha) {
    check_dim(dim);
    if (!(r > 0.0)) throw std::invalid_argument("ball radius must be positive");
    if (!(alpha > 0.0)) throw std::invalid_argument("alpha-capacity needs alpha > 0");
    const double k = std::sqrt(alpha);
    if (dim == 3) return 4.0 * kPi * r * (1.0 + k * r) + 4.0 / 3.0 * kPi * alpha * r * r * r;
    return 2.0 * kPi * r * k * std::cyl_bessel_k(1.0, k * r) / std::cyl_bessel_k(0.0, k * r) + kPi * alpha * r * r;
}

DiffusionMatrix DiffusionMatrix::identity(int dim) { return scalar(dim, 1.0); }

DiffusionMatrix DiffusionMatrix::scalar(int dim, double c) {
    DiffusionMatrix m;
    m.dim = dim;
    for (int i = 0; i < dim; ++i) m.b[i][i] = c;
    return m;
}

DiffusionMatrix DiffusionMatrix::diagonal(int dim, const Point& diag) {
    DiffusionMatrix m;
    m.dim = dim;
    for (int i = 0; i < dim; ++i) m.b[i][i] = diag[i];
    return m;
}

void DiffusionMatrix::validate(double e0) const {
    check_dim(dim);
    for (int i = 0; i < dim; ++i)
        for (int j = 0; j < dim; ++j) {
            if (std::abs(b[i][j] - b[j][i]) > 1e-12 * (1.0 + std::abs(b[i][j]))) {
                throw std::invalid_argument("diffusion matrix must be symmetric");
            }
        }
    const Eigen::Matrix3d e = to_eigen(*this).topLeftCorner(dim, dim);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(Eigen::MatrixXd(e.topLeftCorner(dim, dim)));
    if (solver.eigenvalues().minCoeff() < e0) {
        throw std::invalid_argument("diffusion matrix is not uniformly elliptic (eigenvalue below e0)");
    }
}

std::optional<double> DiffusionMatrix::scalar_value() const {
    const double c = b[0][0];
    for (int i = 0; i < dim; ++i)
        for (int j = 0; j < dim; ++j) {
            const double expected = i == j ? c : 0.0;
            if (b[i][j] != expected) return std::nullopt;
        }
    return c;
}

double DiffusionMatrix::determinant() const {
    return Eigen::MatrixXd(to_eigen(*this).topLeftCorner(dim, dim)).determinant();
}

double capacity_from_hit_probability(double p, double launch_radius, double outer_radius) {
    if (p <= 0.0) return 0.0;
    const double inv_out = std::isfinite(outer_radius) ? 1.0 / outer_radius : 0.0;
    return 4.0 * kPi / (inv_out + (1.0 / launch_radius - inv_out) / p);
}

CapacityEstimate estimate_capacity_mc(const Target& target, const Point& center, const CapacityMcSettings& settings) {
    if (target.dim() != 3) throw std::invalid_argument("Monte Carlo capacity needs d = 3 (transience)");
    if (settings.n_paths < 100) throw std::invalid_argument("Monte Carlo capacity needs at least 100 paths");
    CapacityEstimate est;
    est.n_paths = settings.n_paths;
    if (target.empty()) {
        est.exact = true;
        return est;
    }
    const double enclosing = target.enclosing_radius(center);
    const double launch = settings.launch_radius > 0.0 ? settings.launch_radius : 2.0 * enclosing;
    const double outer = settings.outer_radius > 0.0 ? settings.outer_radius : 100.0 * launch;
    if (!(enclosing < launch)) throw std::invalid_argument("target is not enclosed by the launch sphere");
    if (!(launch < outer)) throw std::invalid_argument("launch sphere must lie inside the outer sphere");

    DiffusionSpec spec;
    spec.dim = 3;
    spec.dt = kInf;
    spec.dt_far = kInf;
    spec.t_max = kInf;
    spec.shrink = settings.shrink;
    spec.hit_tolerance = settings.hit_tolerance;
    // non-owning handle: the simulator does not outlive this call
    std::shared_ptr<const Target> handle(&target, [](const Target*) {});
    const PathSimulator sim(spec, Domain::ball(3, center, outer), handle);
    BatchOptions batch;
    batch.seed = settings.seed;
    batch.stream_ids = {tag(StreamTag::capacity)};
    batch.workers = settings.workers;
    const auto outcomes = batch_simulate(sim, StartLaw::sphere(center, launch), settings.n_paths, batch);

    std::size_t hits = 0;
    for (const auto& o : outcomes) hits += o.event == Event::hit_obstacle ? 1 : 0;
    const double n = static_cast<double>(settings.n_paths);
    const double p = static_cast<double>(hits) / n;
    const double sp = std::sqrt(std::max(p * (1.0 - p), 1.0 / n) / n);
    est.hit_fraction = p;
    est.value = capacity_from_hit_probability(p, launch, outer);
    // delta method on C(p) = 4 pi / (1/R_out + (1/R - 1/R_out) / p)
    const double inv_out = 1.0 / outer;
    const double k = 1.0 / launch - inv_out;
    if (p > 0.0) {
        const double denom = inv_out + k / p;
        est.stderr_ = 4.0 * kPi * k / (p * p * denom * denom) * sp;
    } else {
        est.stderr_ = capacity_from_hit_probability(sp, launch, outer);
    }
    return est;
}

CapacityEstimate anisotropic_capacity(const DiffusionMatrix& b, const Ball& ball, const CapacityMcSettings& settings) {
    b.validate();
    const int dim = b.dim;
    CapacityEstimate est;
    if (const auto c = b.scalar_value()) {
        // b = c I: the image of B_r is B_{r / sqrt(c)} and sqrt(det b) = c^{d/2}
        est.value = std::pow(*c, 0.5 * dim) * ball_capacity_classical(dim, ball.radius / std::sqrt(*c));
        est.exact = true;
        return est;
    }
    if (dim != 3) throw std::invalid_argument("anisotropic capacity Monte Carlo path needs d = 3");
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> solver(to_eigen(b));
    Point semi{0.0, 0.0, 0.0};
    std::array<Point, kMaxDim> axes{};
    for (int j = 0; j < 3; ++j) {
        semi[j] = ball.radius / std::sqrt(solver.eigenvalues()(j));
        for (int i = 0; i < 3; ++i) axes[j][i] = solver.eigenvectors()(i, j);
    }
    const Point origin{0.0, 0.0, 0.0};
    const Ellipsoid image(3, origin, semi, axes);
    const auto mc = estimate_capacity_mc(image, origin, settings);
    const double scale = std::sqrt(b.determinant());
    est = mc;
    est.value *= scale;
    est.stderr_ *= scale;
    return est;
}

ScalingReport check_scaling(const RandomCenterModel& model, const std::vector<int>& n_range, double growth_factor) {
    ScalingReport report;
    report.n = n_range;
    for (int n : n_range) {
        const double rho = model.rho(n);
        const double kappa = static_cast<double>(model.kappa_at(n));
        double v = 0.0;
        if (model.dim > 2) {
            v = kappa * std::pow(rho, model.dim - 2);
        } else {
            v = kappa / std::abs(std::log(rho));
        }
        report.values.push_back(v);
    }
    if (report.values.empty()) return report;
    report.sup = *std::max_element(report.values.begin(), report.values.end());
    bool finite = true;
    for (double v : report.values) finite = finite && std::isfinite(v);
    const double lowest = *std::min_element(report.values.begin(), report.values.end());
    const std::size_t m = report.values.size();
    const bool still_rising = m >= 2 && report.values[m - 1] > report.values[m - 2];
    const bool grew = lowest > 0.0 ? report.values.back() / lowest > growth_factor : report.values.back() > 0.0;
    report.bounded = finite && !(still_rising && grew);
    return report;
}

double capacity_density(const RandomCenterModel& model, int n, const Point& x, const DiffusionMatrix& b) {
    const Ball ball{x, model.radius_at(n, x)};
    return anisotropic_capacity(b, ball).value;
}

}  // namespace icelab
