#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "narrowbeam/geometry.hpp"
#include "narrowbeam/quadrature.hpp"

using namespace narrowbeam;

namespace {

Direction random_direction(std::mt19937_64& rng, int n) {
    std::normal_distribution<double> g;
    Vec v(n);
    for (double& x : v) x = g(rng);
    return Direction(std::move(v));
}

} // namespace

TEST_CASE("stereographic projection basics") {
    CHECK(stereo_project(Direction::north(3)) == Vec{0.0, 0.0});
    // equator point: theta_n = 0 forces v = theta'
    Direction eq(Vec{1.0, 0.0, 0.0});
    const Vec v = stereo_project(eq);
    CHECK(v[0] == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(v[1] == 0.0);
    CHECK_THROWS_AS(stereo_project(Direction::south(3)), south_pole_error);
}

TEST_CASE("stereographic lift basics") {
    const Direction n2 = stereo_lift(Vec{0.0});
    CHECK(n2.last() == 1.0);
    const Direction n3 = stereo_lift(Vec{0.0, 0.0});
    CHECK(n3.last() == 1.0);

    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    for (int i = 0; i < 1000; ++i) {
        Vec v{u(rng), u(rng)};
        const Direction d = stereo_lift(v);
        CHECK(std::abs(norm2(d.components()) - 1.0) < 1e-14);
    }

    // large |v| approaches the south pole
    const Direction far2 = stereo_lift(Vec{1e3, 0.0});
    CHECK(std::abs(far2.last() + 1.0) < 4e-6);
}

TEST_CASE("project/lift are mutually inverse") {
    std::mt19937_64 rng(17);
    for (int n : {2, 3, 4}) {
        for (int i = 0; i < 1000; ++i) {
            Direction d = random_direction(rng, n);
            if (1.0 + d.last() <= 1e-6) continue; // stay away from the chart edge
            const Vec v = stereo_project(d);
            const Direction back = stereo_lift(v);
            for (int k = 0; k < n; ++k) CHECK(std::abs(back[k] - d[k]) < 1e-12);
        }
        std::uniform_real_distribution<double> u(-1000.0, 1000.0);
        for (int i = 0; i < 200; ++i) {
            Vec v(n - 1);
            for (double& x : v) x = u(rng);
            const Vec w = stereo_project(stereo_lift(v));
            const double scale = std::max(1.0, norm(v));
            for (int k = 0; k < n - 1; ++k) CHECK(std::abs(w[k] - v[k]) < 1e-12 * scale);
        }
    }
}

TEST_CASE("conformal factor and volume identity") {
    CHECK(conformal_factor(Vec{0.0}) == 2.0);
    CHECK(conformal_factor(Vec{1.0}) == 1.0);
    CHECK(conformal_factor(Vec{0.6, 0.8}) == doctest::Approx(1.0).epsilon(1e-15));

    // n = 2: int 2/(1+v^2) dv = 2 pi. Large box plus the arctan tail bound.
    {
        const double T = 1000.0;
        const auto q = integrate_adaptive([](double v) { return 2.0 / (1.0 + v * v); }, -T, T,
                                          1e-12);
        const double tail = 4.0 * (M_PI / 2.0 - std::atan(T));
        CHECK(std::abs(q.value - 2.0 * M_PI) <= tail + 1e-9);
        CHECK(std::abs(q.value + tail - 2.0 * M_PI) < 1e-8);
    }
    // n = 3: radial form, int_0^R c^2(r) 2 pi r dr -> 4 pi
    {
        const double R = 1000.0;
        const auto q = integrate_adaptive(
            [](double r) {
                const double c = 2.0 / (1.0 + r * r);
                return c * c * 2.0 * M_PI * r;
            },
            0.0, R, 1e-12);
        const double tail = 4.0 * M_PI / (1.0 + R * R);
        CHECK(std::abs(q.value + tail - 4.0 * M_PI) < 1e-8);
    }
}

TEST_CASE("stretched coordinates") {
    StretchFrame frame(0.1, Vec{0.0, 0.0}, 3);
    PhasePoint p(Vec{0.2, 0.0, 0.5}, Direction::north(3));
    const StretchedPoint s = to_stretched(frame, p);
    CHECK(s.Xp[0] == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(s.Xp[1] == 0.0);
    CHECK(s.Xn == 0.5);
    CHECK(s.V == Vec{0.0, 0.0});

    // theta = J(eps V0) maps to V = V0
    const Direction theta = stereo_lift(Vec{0.1 * 1.0, 0.1 * 0.0});
    const StretchedPoint s2 = to_stretched(frame, PhasePoint(Vec{0.0, 0.0, 1.0}, theta));
    CHECK(s2.V[0] == doctest::Approx(1.0).epsilon(1e-13));
    CHECK(std::abs(s2.V[1]) < 1e-13);

    std::mt19937_64 rng(23);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    for (int i = 0; i < 1000; ++i) {
        Vec x{u(rng), u(rng), std::abs(u(rng))};
        Direction d = random_direction(rng, 3);
        if (1.0 + d.last() <= 1e-3) continue;
        PhasePoint q(x, d);
        const PhasePoint back = from_stretched(frame, to_stretched(frame, q));
        for (int k = 0; k < 3; ++k) {
            CHECK(std::abs(back.x[k] - q.x[k]) < 1e-12);
            CHECK(std::abs(back.theta[k] - q.theta[k]) < 1e-12);
        }
    }
}

TEST_CASE("phase distance is a metric") {
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    auto rand_point = [&](int n) {
        Vec x(n);
        for (double& v : x) v = u(rng);
        x.back() = std::abs(x.back());
        return PhasePoint(std::move(x), random_direction(rng, n));
    };

    const PhasePoint p = rand_point(3);
    CHECK(phase_distance(p, p) == 0.0);

    // antipodal directions at the same position: chordal diameter
    Vec minus(3);
    for (int k = 0; k < 3; ++k) minus[k] = -p.theta[k];
    const PhasePoint q(p.x, Direction(minus));
    CHECK(phase_distance(p, q) == doctest::Approx(2.0).epsilon(1e-14));

    for (int i = 0; i < 1000; ++i) {
        const PhasePoint a = rand_point(3), b = rand_point(3), c = rand_point(3);
        const double ab = phase_distance(a, b);
        CHECK(ab == phase_distance(b, a));
        CHECK(ab >= 0.0);
        CHECK(ab <= phase_distance(a, c) + phase_distance(c, b) + 1e-12);
    }
}
