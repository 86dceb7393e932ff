#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>

#include "icelab/geometry.hpp"
#include "icelab/model.hpp"
#include "icelab/obstacles.hpp"

namespace icelab {

using Field = std::function<double(const Point&)>;

/// A killing-rate density h >= 0 (the rate measure is h times Lebesgue).
class RateMeasure {
public:
    explicit RateMeasure(std::string id) : id_(std::move(id)) {}
    virtual ~RateMeasure() = default;

    const std::string& id() const { return id_; }

    virtual double operator()(const Point& x) const = 0;
    /// Upper bound of h.
    virtual double sup() const = 0;
    /// Box outside which h vanishes; nullopt when h may be positive anywhere.
    virtual std::optional<Box> support() const = 0;
    /// Constant densities put no constraint on the step size.
    virtual bool is_constant() const { return false; }
    /// Distance to a discontinuity that the path must resolve by shrinking
    /// its steps (obstacle indicators); +inf when there is none.
    virtual double feature_distance(const Point&) const { return kInf; }
    /// Length scale of those features.
    virtual double feature_size() const { return kInf; }
    /// Radius of a ball around x on which h is constant; 0 where h varies at x.
    virtual double flat_radius(const Point& x) const;
    /// Integral of h when known in closed form.
    virtual std::optional<double> exact_mass() const { return std::nullopt; }

private:
    std::string id_;
};

using RatePtr = std::shared_ptr<const RateMeasure>;

RatePtr constant_rate(double c, std::string id = "const");
/// c * (offset + slope . x) on the box, 0 outside.
RatePtr box_rate(double c, const Box& box, double offset = 1.0, Point slope = {0.0, 0.0, 0.0},
                 std::string id = "box");
/// c on the union of the obstacles (soft obstacles).
RatePtr obstacle_rate(double c, std::shared_ptr<const ObstacleSet> set, std::string id = "obstacles");
/// Arbitrary density with a known bound and support box.
RatePtr function_rate(Field h, std::optional<Box> support, double sup, std::string id = "function");
/// h(x) = kappa_n * q_n(x) * (density of mu at x): the leading-order rate of
/// the random center model at level n with b = I.
RatePtr model_rate(const RandomCenterModel& model, int n, std::string id = "model");

/// Samples points from h / (integral of h) by rejection on the support box.
class RateSampler {
public:
    RateSampler(RatePtr rate, int dim, std::size_t mass_samples = 200000, std::uint64_t seed = 7);

    double total_mass() const { return mass_; }
    Point sample(Stream& rng) const;

private:
    RatePtr rate_;
    int dim_;
    Box box_;
    double mass_ = 0.0;
};

}  // namespace icelab
