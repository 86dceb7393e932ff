#pragma once

#include <cstdint>
#include <functional>
#include <optional>

#include "icelab/geometry.hpp"
#include "icelab/model.hpp"
#include "icelab/rates.hpp"
#include "icelab/rng.hpp"

namespace icelab {

/// g_alpha = int_0^inf e^{-alpha t} p_t dt for the generator Delta.
struct GreenKernel {
    int dim = 3;
    double alpha = 1.0;
};

/// d = 3: exp(-sqrt(alpha) r) / (4 pi r); d = 2: K0(sqrt(alpha) r) / (2 pi).
double green_kernel(const GreenKernel& k, const Point& x, const Point& y);
double green_kernel_radial(const GreenKernel& k, double r);

/// A finite measure given by its total mass and a sampler of the normalized law.
struct MeasureSampler {
    double mass = 0.0;
    std::function<Point(Stream&)> sample;
    /// Set for a single atom; pairs drawn from two such measures never separate.
    std::optional<Point> atom;

    static MeasureSampler point_mass(const Point& x, double mass = 1.0);
    static MeasureSampler uniform_box(const Box& box, double mass);
    /// h / (int h) dx times its mass.
    static MeasureSampler from_rate(const RateSampler& rate);
    /// Sum of the equilibrium measures of an iid ball: a center from the
    /// center law, a point uniform on the sphere of radius r_n(center);
    /// mass kappa_n Qcl(B_{r_n}) (times the non-cemetery probability).
    static MeasureSampler model_equilibrium(const RandomCenterModel& model, int n);
};

struct EnergyEstimate {
    double value = 0.0;
    double stderr_ = 0.0;
    std::size_t resampled = 0;
    double resample_fraction = 0.0;
    /// Resample fraction above 1%: the pairing diverges.
    bool divergent = false;
};

inline constexpr double kSingularSeparation = 1e-9;

/// int int g_alpha(x, y) mu(dy) nu(dx) from n_pairs independent pairs.
EnergyEstimate energy_mc(const MeasureSampler& mu, const MeasureSampler& nu, const GreenKernel& k,
                         std::size_t n_pairs, std::uint64_t seed);

/// sum_{i != j} int (G gamma_j) d gamma_i for kappa iid blocks gamma_j = gamma / kappa,
/// by drawing block labels for every pair and keeping the off-diagonal ones.
EnergyEstimate block_pair_energy_mc(const MeasureSampler& gamma, long kappa, const GreenKernel& k,
                                    std::size_t n_pairs, std::uint64_t seed);

struct IdentityCheck {
    EnergyEstimate lhs;
    EnergyEstimate rhs;
    double gap = 0.0;
    double gap_stderr = 0.0;
};

/// lhs = (1 - 1/kappa) energy_mc(gamma, gamma), rhs = block_pair_energy_mc.
IdentityCheck iid_identity_check(const MeasureSampler& gamma, long kappa, const GreenKernel& k,
                                 std::size_t n_pairs, std::uint64_t seed);

struct EvennessReport {
    EnergyEstimate lhs;  ///< sum_{i != j} int (G gamma_j) d gamma_i
    EnergyEstimate rhs;  ///< int (G eta) d eta
    double margin = 0.0; ///< rhs - lhs
    double margin_stderr = 0.0;
    /// margin < -2 stderr, or a divergent side.
    bool violated = false;
};

EvennessReport evenness_condition_estimate(const RandomCenterModel& model, int n, const MeasureSampler& eta,
                                           const GreenKernel& k, std::size_t n_pairs, std::uint64_t seed);

}  // namespace icelab
