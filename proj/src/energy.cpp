#include "icelab/energy.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

#include "icelab/ball_exit.hpp"
#include "icelab/capacity.hpp"
#include "icelab/parallel.hpp"

namespace icelab {

double green_kernel_radial(const GreenKernel& k, double r) {
    check_dim(k.dim);
    if (!(k.alpha > 0.0)) throw std::invalid_argument("Green kernel needs alpha > 0");
    if (!(r > 0.0)) throw std::domain_error("Green kernel is singular at x = y");
    const double s = std::sqrt(k.alpha) * r;
    if (k.dim == 3) return std::exp(-s) / (4.0 * kPi * r);
    // past ~700 K0 underflows; the kernel is zero to double precision there
    if (s > 700.0) return 0.0;
    return std::cyl_bessel_k(0.0, s) / (2.0 * kPi);
}

double green_kernel(const GreenKernel& k, const Point& x, const Point& y) {
    return green_kernel_radial(k, distance(x, y));
}

MeasureSampler MeasureSampler::point_mass(const Point& x, double mass) {
    MeasureSampler m;
    m.mass = mass;
    m.atom = x;
    m.sample = [x](Stream&) { return x; };
    return m;
}

MeasureSampler MeasureSampler::uniform_box(const Box& box, double mass) {
    MeasureSampler m;
    m.mass = mass;
    m.sample = [box](Stream& rng) {
        Point p{0.0, 0.0, 0.0};
        for (int i = 0; i < box.dim; ++i) p[i] = box.lower[i] + (box.upper[i] - box.lower[i]) * rng.uniform();
        return p;
    };
    return m;
}

MeasureSampler MeasureSampler::from_rate(const RateSampler& rate) {
    MeasureSampler m;
    m.mass = rate.total_mass();
    m.sample = [rate](Stream& rng) { return rate.sample(rng); };
    return m;
}

MeasureSampler MeasureSampler::model_equilibrium(const RandomCenterModel& model, int n) {
    const long kappa = model.kappa_at(n);
    const int dim = model.dim;
    const double cap_max = ball_capacity_classical(dim, model.rho(n));
    const bool flat = model.radius.profile.kind == RadiusProfile::Kind::constant;
    // centers are size-biased by the capacity of their ball
    auto draw_center = [model, dim, cap_max, flat, n](Stream& rng) {
        for (;;) {
            Point c = model.centers.kind == CenterLaw::Kind::point_mass ? model.centers.atom : Point{0.0, 0.0, 0.0};
            if (model.centers.kind == CenterLaw::Kind::uniform_box) {
                const Box& b = model.centers.box;
                for (int i = 0; i < dim; ++i) c[i] = b.lower[i] + (b.upper[i] - b.lower[i]) * rng.uniform();
            }
            if (flat || rng.uniform() * cap_max <= ball_capacity_classical(dim, model.radius_at(n, c))) return c;
        }
    };
    double mean_cap = ball_capacity_classical(dim, model.base_radius(n));
    if (!flat) {
        Stream rng(derive_seed(model.seed, {tag(StreamTag::energy), static_cast<std::uint64_t>(n), 0x6361ULL}));
        const int samples = 200000;
        double sum = 0.0;
        for (int s = 0; s < samples; ++s) {
            Point c = model.centers.kind == CenterLaw::Kind::point_mass ? model.centers.atom : Point{0.0, 0.0, 0.0};
            if (model.centers.kind == CenterLaw::Kind::uniform_box) {
                const Box& b = model.centers.box;
                for (int i = 0; i < dim; ++i) c[i] = b.lower[i] + (b.upper[i] - b.lower[i]) * rng.uniform();
            }
            sum += ball_capacity_classical(dim, model.radius_at(n, c));
        }
        mean_cap = sum / samples;
    }
    MeasureSampler m;
    m.mass = static_cast<double>(kappa) * mean_cap * (1.0 - model.centers.cemetery_prob);
    m.sample = [draw_center, model, dim, n](Stream& rng) {
        const Point c = draw_center(rng);
        const double r = model.radius_at(n, c);
        const Point e = uniform_direction(dim, rng);
        Point p = c;
        for (int i = 0; i < dim; ++i) p[i] += r * e[i];
        return p;
    };
    return m;
}

namespace {

constexpr std::size_t kPairChunk = 4096;
constexpr int kMaxResample = 1000;

struct ChunkSums {
    double sum = 0.0;
    double sum_sq = 0.0;
    std::size_t count = 0;
    std::size_t resampled = 0;
    bool stalled = false;
};

// Runs `pair_value` over n_pairs draws in fixed chunks with their own streams,
// then reduces the chunks in order.
template <class PairValue>
EnergyEstimate chunked_mean(std::size_t n_pairs, std::uint64_t seed, double scale, PairValue pair_value) {
    if (n_pairs < 2) throw std::invalid_argument("energy estimate needs at least two pairs");
    const std::size_t chunks = (n_pairs + kPairChunk - 1) / kPairChunk;
    std::vector<ChunkSums> parts(chunks);
    parallel_for(
        chunks, 0,
        [&](std::size_t c) {
            Stream rng(derive_seed(seed, {tag(StreamTag::energy), static_cast<std::uint64_t>(c)}));
            const std::size_t begin = c * kPairChunk;
            const std::size_t end = std::min(n_pairs, begin + kPairChunk);
            ChunkSums& s = parts[c];
            for (std::size_t k = begin; k < end; ++k) {
                double v = 0.0;
                int tries = 0;
                while (!pair_value(rng, v)) {
                    ++s.resampled;
                    if (++tries >= kMaxResample) {
                        s.stalled = true;
                        return;
                    }
                }
                s.sum += v;
                s.sum_sq += v * v;
                ++s.count;
            }
        },
        1);
    EnergyEstimate out;
    double sum = 0.0;
    double sum_sq = 0.0;
    std::size_t count = 0;
    bool stalled = false;
    for (const auto& s : parts) {
        sum += s.sum;
        sum_sq += s.sum_sq;
        count += s.count;
        out.resampled += s.resampled;
        stalled = stalled || s.stalled;
    }
    out.resample_fraction = static_cast<double>(out.resampled) / static_cast<double>(n_pairs);
    out.divergent = stalled || out.resample_fraction > 0.01;
    if (out.divergent || count < 2) {
        out.value = kInf;
        out.stderr_ = kInf;
        out.divergent = true;
        return out;
    }
    const double n = static_cast<double>(count);
    const double mean = sum / n;
    const double var = std::max(0.0, (sum_sq - n * mean * mean) / (n - 1.0));
    out.value = scale * mean;
    out.stderr_ = std::abs(scale) * std::sqrt(var / n);
    return out;
}

}  // namespace

EnergyEstimate energy_mc(const MeasureSampler& mu, const MeasureSampler& nu, const GreenKernel& k,
                         std::size_t n_pairs, std::uint64_t seed) {
    if (!mu.sample || !nu.sample) throw std::invalid_argument("measure sampler without a sampler");
    if (mu.atom && nu.atom) {
        EnergyEstimate out;
        if (distance(*mu.atom, *nu.atom) < kSingularSeparation) {
            // self-energy of an atom
            out.value = kInf;
            out.stderr_ = kInf;
            out.divergent = true;
            out.resample_fraction = 1.0;
            return out;
        }
        out.value = mu.mass * nu.mass * green_kernel(k, *mu.atom, *nu.atom);
        return out;
    }
    return chunked_mean(n_pairs, seed, mu.mass * nu.mass, [&](Stream& rng, double& v) {
        const Point x = nu.sample(rng);
        const Point y = mu.sample(rng);
        const double r = distance(x, y);
        if (r < kSingularSeparation) return false;
        v = green_kernel_radial(k, r);
        return true;
    });
}

EnergyEstimate block_pair_energy_mc(const MeasureSampler& gamma, long kappa, const GreenKernel& k,
                                    std::size_t n_pairs, std::uint64_t seed) {
    if (kappa < 1) throw std::invalid_argument("block pair energy needs kappa >= 1");
    if (!gamma.sample) throw std::invalid_argument("measure sampler without a sampler");
    if (kappa == 1) return {};
    const auto blocks = static_cast<std::uint64_t>(kappa);
    // each block has mass M / kappa; a pair of labels carries weight kappa^2
    const double scale = gamma.mass * gamma.mass;
    const std::uint64_t mixed = derive_seed(seed, {0x626c6f636bULL});
    return chunked_mean(n_pairs, mixed, scale, [&](Stream& rng, double& v) {
        const std::uint64_t i = rng() % blocks;
        const std::uint64_t j = rng() % blocks;
        const Point x = gamma.sample(rng);
        const Point y = gamma.sample(rng);
        if (i == j) {
            v = 0.0;
            return true;
        }
        const double r = distance(x, y);
        if (r < kSingularSeparation) return false;
        v = green_kernel_radial(k, r);
        return true;
    });
}

IdentityCheck iid_identity_check(const MeasureSampler& gamma, long kappa, const GreenKernel& k,
                                 std::size_t n_pairs, std::uint64_t seed) {
    if (kappa < 1) throw std::invalid_argument("iid identity needs kappa >= 1");
    IdentityCheck out;
    if (kappa == 1) return out;
    out.lhs = energy_mc(gamma, gamma, k, n_pairs, seed);
    const double factor = 1.0 - 1.0 / static_cast<double>(kappa);
    out.lhs.value *= factor;
    out.lhs.stderr_ *= factor;
    out.rhs = block_pair_energy_mc(gamma, kappa, k, n_pairs, seed);
    out.gap = out.lhs.value - out.rhs.value;
    out.gap_stderr = std::hypot(out.lhs.stderr_, out.rhs.stderr_);
    return out;
}

EvennessReport evenness_condition_estimate(const RandomCenterModel& model, int n, const MeasureSampler& eta,
                                           const GreenKernel& k, std::size_t n_pairs, std::uint64_t seed) {
    EvennessReport out;
    const long kappa = model.kappa_at(n);
    if (kappa >= 2) {
        const MeasureSampler gamma = MeasureSampler::model_equilibrium(model, n);
        // distinct iid balls: the i != j sum is (1 - 1/kappa) times the full pairing
        out.lhs = energy_mc(gamma, gamma, k, n_pairs, derive_seed(seed, {1}));
        const double factor = 1.0 - 1.0 / static_cast<double>(kappa);
        out.lhs.value *= factor;
        out.lhs.stderr_ *= factor;
    }
    if (eta.mass > 0.0) out.rhs = energy_mc(eta, eta, k, n_pairs, derive_seed(seed, {2}));
    out.margin = out.rhs.value - out.lhs.value;
    out.margin_stderr = std::hypot(out.lhs.stderr_, out.rhs.stderr_);
    out.violated = out.lhs.divergent || out.rhs.divergent || out.margin < -2.0 * out.margin_stderr;
    if (out.rhs.divergent && !out.lhs.divergent) out.violated = true;
    return out;
}

}  // namespace icelab
