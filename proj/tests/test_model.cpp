#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "icelab/capacity.hpp"
#include "icelab/model.hpp"
#include "icelab/obstacles.hpp"

using namespace icelab;

namespace {

RandomCenterModel cube_model(std::vector<long> kappas, double c = 2.0) {
    RandomCenterModel m;
    m.dim = 3;
    m.kappa = KappaRule::from_table(std::move(kappas));
    m.radius.kind = RadiusRule::Kind::capacity_balanced;
    m.radius.c = c;
    m.centers = CenterLaw::uniform(Box{});
    m.seed = 99;
    return m;
}

ObstacleSet random_set(int dim, int count, std::uint64_t seed) {
    Stream rng(seed);
    std::vector<Ball> balls;
    for (int i = 0; i < count; ++i) {
        Ball b;
        for (int a = 0; a < dim; ++a) b.center[a] = rng.uniform();
        b.radius = 0.001 + 0.03 * rng.uniform();
        balls.push_back(b);
    }
    return ObstacleSet(dim, balls);
}

}  // namespace

TEST_SUITE("model") {

TEST_CASE("box and domain distances") {
    const Box b(3, {0.0, 0.0, 0.0}, {1.0, 2.0, 3.0});
    CHECK(b.volume() == doctest::Approx(6.0));
    CHECK(b.contains({0.5, 1.0, 1.0}));
    CHECK_FALSE(b.contains({1.5, 1.0, 1.0}));
    CHECK(b.distance_to_boundary({0.25, 1.0, 1.5}) == doctest::Approx(0.25));
    CHECK(b.distance_outside({2.0, 1.0, 1.0}) == doctest::Approx(1.0));
    CHECK_THROWS_AS(Box(3, {0.0, 0.0, 0.0}, {1.0, 0.0, 1.0}), std::invalid_argument);

    const Domain ball = Domain::ball(3, {0.0, 0.0, 0.0}, 2.0);
    CHECK(ball.boundary_distance({1.0, 0.0, 0.0}) == doctest::Approx(1.0));
    CHECK(ball.boundary_distance({3.0, 0.0, 0.0}) <= 0.0);
    CHECK(Domain::full_space(3).boundary_distance({5.0, 5.0, 5.0}) == kInf);
}

TEST_CASE("indexed nearest distance matches a full scan") {
    for (int dim : {2, 3}) {
        const ObstacleSet set = random_set(dim, 2000, 11 + dim);
        Stream rng(5);
        double worst = 0.0;
        for (int i = 0; i < 10000; ++i) {
            Point x{0.0, 0.0, 0.0};
            for (int a = 0; a < dim; ++a) x[a] = -0.5 + 2.0 * rng.uniform();
            worst = std::max(worst, std::abs(set.nearest_distance(x) - set.nearest_distance_brute(x)));
        }
        CHECK(worst <= 1e-12);
    }
}

TEST_CASE("clearance is a lower bound and exact inside") {
    const ObstacleSet set = random_set(3, 500, 3);
    Stream rng(8);
    for (int i = 0; i < 5000; ++i) {
        const Point x{rng.uniform(), rng.uniform(), rng.uniform()};
        const double exact = set.nearest_distance_brute(x);
        const double c = set.clearance(x);
        CHECK(std::abs(c) <= std::abs(exact) + 1e-15);
        CHECK((c <= 0.0) == (exact <= 0.0));
        if (exact < 0.0) CHECK(c == doctest::Approx(exact).epsilon(1e-12));
    }
    const Ball& b = set.balls().front();
    CHECK(set.contains(b.center));
}

TEST_CASE("empty set and bad balls") {
    const ObstacleSet empty(3, {});
    CHECK(empty.empty());
    CHECK(empty.nearest_distance({0.0, 0.0, 0.0}) == kInf);
    CHECK_THROWS_AS(ObstacleSet(3, {{{0.0, 0.0, 0.0}, -1.0}}), std::invalid_argument);
    CHECK_THROWS_AS(ObstacleSet(2, {{{0.0, 0.0, 1.0}, 0.1}}), std::invalid_argument);
}

TEST_CASE("shrink keeps centers") {
    const ObstacleSet set = random_set(3, 50, 4);
    const ObstacleSet s = set.shrink(0.9);
    REQUIRE(s.size() == set.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        CHECK(s.balls()[i].center == set.balls()[i].center);
        CHECK(s.balls()[i].radius == doctest::Approx(0.9 * set.balls()[i].radius));
    }
    CHECK_THROWS_AS(set.shrink(1.0), std::invalid_argument);
}

TEST_CASE("obstacle json round trip") {
    const ObstacleSet set = random_set(3, 40, 6);
    const ObstacleSet back = obstacles_from_json(obstacles_to_json(set));
    REQUIRE(back.size() == set.size());
    for (std::size_t i = 0; i < set.size(); ++i) {
        CHECK(back.balls()[i].center == set.balls()[i].center);
        CHECK(back.balls()[i].radius == set.balls()[i].radius);
    }
    const auto path = std::filesystem::temp_directory_path() / "icelab_obstacles_test.json";
    write_obstacles(set, path.string());
    CHECK(read_obstacles(path.string()).size() == set.size());
    std::filesystem::remove(path);
}

TEST_CASE("kappa rules") {
    const KappaRule t = KappaRule::from_table({10, 20, 40});
    CHECK(t.at(2) == 20);
    CHECK_THROWS_AS(t.at(4), std::invalid_argument);
    CHECK_THROWS_AS(t.at(0), std::invalid_argument);
    const KappaRule p = KappaRule::power_law(125.0, 3.0);
    CHECK(p.at(2) == 1000);
}

TEST_CASE("capacity balanced radii") {
    const RandomCenterModel m = cube_model({125, 500, 2000, 8000});
    for (int n = 1; n <= 4; ++n) {
        const double r = m.base_radius(n);
        CHECK(static_cast<double>(m.kappa_at(n)) * 4.0 * kPi * r == doctest::Approx(2.0).epsilon(1e-14));
        CHECK(m.rho(n) == doctest::Approx(r));
    }
    CHECK_NOTHROW(m.validate({1, 2, 3, 4}));
}

TEST_CASE("growing radii are rejected") {
    RandomCenterModel m = cube_model({100, 100});
    m.radius.kind = RadiusRule::Kind::table;
    m.radius.table = {0.01, 0.02};
    CHECK_THROWS_AS(m.validate({1, 2}), std::invalid_argument);
}

TEST_CASE("affine radius profile") {
    RandomCenterModel m = cube_model({1000});
    m.radius.profile.kind = RadiusProfile::Kind::affine;
    m.radius.profile.offset = 2.0 / 3.0;
    m.radius.profile.slope = {2.0 / 3.0, 0.0, 0.0};
    const double r = m.base_radius(1);
    CHECK(m.radius_at(1, {0.0, 0.3, 0.3}) == doctest::Approx(r * 2.0 / 3.0));
    CHECK(m.radius_at(1, {1.0, 0.3, 0.3}) == doctest::Approx(r * 4.0 / 3.0));
    CHECK(m.rho(1) == doctest::Approx(r * 4.0 / 3.0));
}

TEST_CASE("sampled environments") {
    const RandomCenterModel m = cube_model({125, 500});
    const ObstacleSet a = sample_environment(m, 2, 0);
    const ObstacleSet b = sample_environment(m, 2, 0);
    const ObstacleSet c = sample_environment(m, 2, 1);
    REQUIRE(a.size() == 500);
    bool same = true;
    for (std::size_t i = 0; i < a.size(); ++i) same = same && a.balls()[i].center == b.balls()[i].center;
    CHECK(same);
    CHECK(a.balls()[0].center != c.balls()[0].center);
    for (const auto& ball : a.balls()) CHECK(Box{}.contains(ball.center));

    RandomCenterModel gone = m;
    gone.centers.cemetery_prob = 1.0;
    CHECK(sample_environment(gone, 1, 0).empty());
}

TEST_CASE("point mass centers") {
    RandomCenterModel m = cube_model({50});
    m.centers = CenterLaw::point({0.5, 0.5, 0.5});
    const ObstacleSet s = sample_environment(m, 1, 0);
    REQUIRE(s.size() == 50);
    for (const auto& b : s.balls()) CHECK(b.center == Point{0.5, 0.5, 0.5});
    CHECK_FALSE(m.centers.density({0.5, 0.5, 0.5}).has_value());
}

}
