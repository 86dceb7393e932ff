#include "icelab/rates.hpp"

#include <stdexcept>

#include "icelab/capacity.hpp"

namespace icelab {

namespace {

class ConstantRate final : public RateMeasure {
public:
    ConstantRate(double c, std::string id) : RateMeasure(std::move(id)), c_(c) {}
    double operator()(const Point&) const override { return c_; }
    double sup() const override { return c_; }
    std::optional<Box> support() const override { return std::nullopt; }
    bool is_constant() const override { return true; }

private:
    double c_;
};

class BoxRate final : public RateMeasure {
public:
    BoxRate(double c, const Box& box, double offset, Point slope, std::string id)
        : RateMeasure(std::move(id)), c_(c), box_(box), profile_{RadiusProfile::Kind::affine, offset, slope} {
        sup_ = c_ * profile_.sup(box_.lower, box_.upper, box_.dim);
        if (c_ * profile_.inf(box_.lower, box_.upper, box_.dim) < 0.0) {
            throw std::invalid_argument("box rate must be nonnegative on its box");
        }
    }
    double operator()(const Point& x) const override {
        return box_.contains(x) ? c_ * profile_.value(x, box_.dim) : 0.0;
    }
    double sup() const override { return sup_; }
    std::optional<Box> support() const override { return box_; }
    double flat_radius(const Point& x) const override {
        if (!box_.contains(x)) return box_.distance_outside(x);
        for (int i = 0; i < box_.dim; ++i)
            if (profile_.slope[i] != 0.0) return 0.0;
        return box_.distance_to_boundary(x);
    }
    std::optional<double> exact_mass() const override {
        // an affine function averages to its value at the center
        return c_ * profile_.value(box_.center(), box_.dim) * box_.volume();
    }

private:
    double c_;
    Box box_;
    RadiusProfile profile_;
    double sup_;
};

class ObstacleRate final : public RateMeasure {
public:
    ObstacleRate(double c, std::shared_ptr<const ObstacleSet> set, std::string id)
        : RateMeasure(std::move(id)), c_(c), set_(std::move(set)) {}
    double operator()(const Point& x) const override { return set_->clearance(x) <= 0.0 ? c_ : 0.0; }
    double sup() const override { return c_; }
    std::optional<Box> support() const override {
        if (set_->empty()) return Box(set_->dim(), {0.0, 0.0, 0.0}, {1e-300, 1e-300, 1e-300});
        return set_->bounding_box();
    }
    double feature_distance(const Point& x) const override { return std::abs(set_->clearance(x)); }
    double flat_radius(const Point& x) const override { return std::abs(set_->clearance(x)); }
    double feature_size() const override { return set_->min_radius(); }

private:
    double c_;
    std::shared_ptr<const ObstacleSet> set_;
};

class FunctionRate final : public RateMeasure {
public:
    FunctionRate(Field h, std::optional<Box> support, double sup, std::string id)
        : RateMeasure(std::move(id)), h_(std::move(h)), support_(support), sup_(sup) {}
    double operator()(const Point& x) const override {
        if (support_ && !support_->contains(x)) return 0.0;
        return h_(x);
    }
    double sup() const override { return sup_; }
    std::optional<Box> support() const override { return support_; }

private:
    Field h_;
    std::optional<Box> support_;
    double sup_;
};

}  // namespace

double RateMeasure::flat_radius(const Point& x) const {
    if (is_constant()) return kInf;
    const auto box = support();
    if (box && !box->contains(x)) return box->distance_outside(x);
    return 0.0;
}

RatePtr constant_rate(double c, std::string id) {
    if (!(c >= 0.0)) throw std::invalid_argument("rate density must be nonnegative");
    return std::make_shared<ConstantRate>(c, std::move(id));
}

RatePtr box_rate(double c, const Box& box, double offset, Point slope, std::string id) {
    if (!(c >= 0.0)) throw std::invalid_argument("rate density must be nonnegative");
    return std::make_shared<BoxRate>(c, box, offset, slope, std::move(id));
}

RatePtr obstacle_rate(double c, std::shared_ptr<const ObstacleSet> set, std::string id) {
    if (!(c >= 0.0)) throw std::invalid_argument("rate density must be nonnegative");
    if (!set) throw std::invalid_argument("obstacle rate needs an obstacle set");
    return std::make_shared<ObstacleRate>(c, std::move(set), std::move(id));
}

RatePtr function_rate(Field h, std::optional<Box> support, double sup, std::string id) {
    return std::make_shared<FunctionRate>(std::move(h), support, sup, std::move(id));
}

RatePtr model_rate(const RandomCenterModel& model, int n, std::string id) {
    if (model.centers.kind != CenterLaw::Kind::uniform_box) {
        throw std::invalid_argument("model rate needs a center law with a bounded density");
    }
    const long kappa = model.kappa_at(n);
    const RadiusProfile& profile = model.radius.profile;
    const Box& box = model.centers.box;
    if (model.dim == 3 && profile.kind != RadiusProfile::Kind::quadratic_norm) {
        // 4 pi r is linear in r, so h is affine on the box
        const double scale = static_cast<double>(kappa) * 4.0 * kPi * model.base_radius(n) *
                             (1.0 - model.centers.cemetery_prob) / box.volume();
        if (profile.kind == RadiusProfile::Kind::constant) return box_rate(scale, box, 1.0, {0.0, 0.0, 0.0}, id);
        return box_rate(scale, box, profile.offset, profile.slope, std::move(id));
    }
    // b = I, so q_n(x) is the closed-form ball capacity at radius r_n(x)
    auto h = [model, n, kappa](const Point& x) {
        const auto density = model.centers.density(x);
        if (!density || *density == 0.0) return 0.0;
        return static_cast<double>(kappa) * ball_capacity_classical(model.dim, model.radius_at(n, x)) * *density;
    };
    // capacity is increasing in the radius, hence bounded by the value at rho_n
    const double sup = static_cast<double>(kappa) *
                       ball_capacity_classical(model.dim, model.rho(n)) * (1.0 - model.centers.cemetery_prob) /
                       box.volume();
    return std::make_shared<FunctionRate>(h, box, sup, std::move(id));
}

RateSampler::RateSampler(RatePtr rate, int dim, std::size_t mass_samples, std::uint64_t seed)
    : rate_(std::move(rate)), dim_(dim) {
    const auto support = rate_->support();
    if (!support) throw std::invalid_argument("rate sampler needs a bounded support");
    box_ = *support;
    if (const auto exact = rate_->exact_mass()) {
        mass_ = *exact;
        return;
    }
    if (!(rate_->sup() > 0.0)) {
        mass_ = 0.0;
        return;
    }
    Stream rng(seed);
    double sum = 0.0;
    for (std::size_t i = 0; i < mass_samples; ++i) {
        Point p{0.0, 0.0, 0.0};
        for (int k = 0; k < dim_; ++k) p[k] = box_.lower[k] + (box_.upper[k] - box_.lower[k]) * rng.uniform();
        sum += (*rate_)(p);
    }
    mass_ = sum / static_cast<double>(mass_samples) * box_.volume();
}

Point RateSampler::sample(Stream& rng) const {
    const double bound = rate_->sup();
    if (!(bound > 0.0)) throw std::invalid_argument("cannot sample from a zero rate");
    for (int attempt = 0; attempt < 1000000; ++attempt) {
        Point p{0.0, 0.0, 0.0};
        for (int k = 0; k < dim_; ++k) p[k] = box_.lower[k] + (box_.upper[k] - box_.lower[k]) * rng.uniform();
        if (rng.uniform() * bound < (*rate_)(p)) return p;
    }
    throw std::runtime_error("rejection sampling of the rate density did not terminate");
}

}  // namespace icelab
