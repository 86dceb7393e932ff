#include <cmath>

#include "doctest.h"
#include "icelab/capacity.hpp"

using namespace icelab;

TEST_SUITE("capacity") {

TEST_CASE("closed forms") {
    for (double r : {0.01, 0.1, 0.5, 2.0}) CHECK(ball_capacity_classical(3, r) == 4.0 * kPi * r);
    CHECK(ball_capacity_classical(2, 0.1) == doctest::Approx(2.0 * kPi / std::log(10.0)));
    CHECK_THROWS_AS(ball_capacity_classical(2, 1.5), std::invalid_argument);
    CHECK_THROWS_AS(ball_capacity_classical(3, 0.0), std::invalid_argument);
    CHECK(unit_sphere_area(3) == doctest::Approx(4.0 * kPi));
    CHECK(unit_sphere_area(2) == doctest::Approx(2.0 * kPi));
}

TEST_CASE("classical kernel") {
    const Point a{0.0, 0.0, 0.0};
    const Point b{0.0, 0.5, 0.0};
    CHECK(classical_kernel({3}, a, b) == doctest::Approx(1.0 / (2.0 * kPi)));
    CHECK(classical_kernel({2}, a, b) == doctest::Approx(std::log(2.0) / (2.0 * kPi)));
    CHECK_THROWS_AS(classical_kernel({3}, a, a), std::domain_error);
}

TEST_CASE("alpha capacity tends to the classical one") {
    const double r = 0.2;
    CHECK(ball_capacity_alpha(3, r, 1e-10) == doctest::Approx(4.0 * kPi * r).epsilon(1e-4));
    const double a = 1.0;
    CHECK(ball_capacity_alpha(3, r, a) ==
          doctest::Approx(4.0 * kPi * r * (1.0 + r) + 4.0 / 3.0 * kPi * r * r * r));
    CHECK(ball_capacity_alpha(3, r, 4.0) > ball_capacity_alpha(3, r, 1.0));
    CHECK(ball_capacity_alpha(2, 0.1, 1.0) > 0.0);
}

TEST_CASE("hit probability conversion") {
    // hitting B_r from the sphere of radius R before leaving B_{R_out}
    const double r = 0.1, big = 0.4, out = 40.0;
    const double p = (1.0 / big - 1.0 / out) / (1.0 / r - 1.0 / out);
    CHECK(capacity_from_hit_probability(p, big, out) == doctest::Approx(4.0 * kPi * r).epsilon(1e-12));
}

TEST_CASE("monte carlo ball capacity") {
    const ObstacleSet ball(3, {{{0.3, -0.2, 0.1}, 0.1}});
    CapacityMcSettings s;
    s.n_paths = 20000;
    s.seed = 4;
    const CapacityEstimate e = estimate_capacity_mc(ball, {0.3, -0.2, 0.1}, s);
    const double exact = 4.0 * kPi * 0.1;
    CHECK(e.stderr_ > 0.0);
    CHECK(std::abs(e.value - exact) < 3.0 * e.stderr_ + 1e-3 * exact);
    CHECK(e.hit_fraction > 0.0);
    CHECK(e.hit_fraction < 1.0);
    CHECK_THROWS_AS(estimate_capacity_mc(ObstacleSet(2, {{{0.0, 0.0, 0.0}, 0.1}}), {0.0, 0.0, 0.0}, s),
                    std::invalid_argument);
}

TEST_CASE("union of two far balls is nearly additive") {
    const ObstacleSet two(3, {{{-1.0, 0.0, 0.0}, 0.05}, {{1.0, 0.0, 0.0}, 0.05}});
    CapacityMcSettings s;
    s.n_paths = 20000;
    s.seed = 9;
    const CapacityEstimate e = estimate_capacity_mc(two, {0.0, 0.0, 0.0}, s);
    const double single = 4.0 * kPi * 0.05;
    // two balls of capacity C at distance L: 2C / (1 + C / (4 pi L))
    const double expected = 2.0 * single / (1.0 + single / (4.0 * kPi * 2.0));
    CHECK(e.value == doctest::Approx(expected).epsilon(0.05));
    CHECK(e.value <= 2.0 * single + 3.0 * e.stderr_);
}

TEST_CASE("anisotropic capacity") {
    const Ball b{{0.0, 0.0, 0.0}, 0.1};
    // sqrt(det cI) Qcl(B_{r / sqrt c}) = c^{3/2} 4 pi r / sqrt(c)
    const CapacityEstimate iso = anisotropic_capacity(DiffusionMatrix::scalar(3, 4.0), b);
    CHECK(iso.exact);
    CHECK(iso.value == doctest::Approx(4.0 * 4.0 * kPi * 0.1));

    // b = diag(4, 1, 1): the image is an oblate spheroid with semi-axes (0.05, 0.1, 0.1)
    CapacityMcSettings s;
    s.n_paths = 20000;
    s.seed = 17;
    const CapacityEstimate e = anisotropic_capacity(DiffusionMatrix::diagonal(3, {4.0, 1.0, 1.0}), b, s);
    const double a = 0.1, c = 0.05;
    const double spheroid = 4.0 * kPi * std::sqrt(a * a - c * c) / std::acos(c / a);
    const double expected = 2.0 * spheroid;
    CHECK_FALSE(e.exact);
    CHECK(std::abs(e.value - expected) < 3.0 * e.stderr_ + 2e-3 * expected);

    CHECK_THROWS_AS(DiffusionMatrix::diagonal(3, {1.0, -1.0, 1.0}).validate(), std::invalid_argument);
}

TEST_CASE("capacity scaling monitor") {
    RandomCenterModel m;
    m.kappa = KappaRule::from_table({125, 500, 2000, 8000});
    m.radius.kind = RadiusRule::Kind::capacity_balanced;
    m.radius.c = 2.0;
    m.centers = CenterLaw::uniform(Box{});
    const ScalingReport ok = check_scaling(m, {1, 2, 3, 4});
    CHECK(ok.bounded);
    for (double v : ok.values) CHECK(v == doctest::Approx(2.0 / (4.0 * kPi)));

    RandomCenterModel grow = m;
    grow.radius.kind = RadiusRule::Kind::table;
    grow.radius.table = {0.01, 0.01, 0.01, 0.01};
    CHECK_FALSE(check_scaling(grow, {1, 2, 3, 4}).bounded);

    CHECK(capacity_density(m, 2, {0.5, 0.5, 0.5}, DiffusionMatrix::identity(3)) ==
          doctest::Approx(4.0 * kPi * m.base_radius(2)));
}

}
