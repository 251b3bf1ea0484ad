#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "narrowbeam/coefficients.hpp"
#include "narrowbeam/quadrature.hpp"

using namespace narrowbeam;

TEST_CASE("restrict_to_ray") {
    const Direction N = Direction::north(3);
    {
        CoefficientField f = CoefficientField::constant(1.0);
        RayProfile p = restrict_to_ray(f, Vec{0, 0, 0}, N, 0.25);
        CHECK(p.kind() == RayProfile::Kind::Constant);
        CHECK(p(0.0) == 0.25);
        CHECK(p(3.7) == 0.25);
        CHECK(p.lower_bound() == 0.25);
    }
    {
        CoefficientField f = CoefficientField::affine_depth(1.0, 1.0);
        RayProfile p = restrict_to_ray(f, Vec{0, 0, 0}, N, 0.25);
        CHECK(p(0.0) == doctest::Approx(0.25));
        CHECK(p(1.0) == doctest::Approx(0.5));
        CHECK(p(3.0) == doctest::Approx(1.0));
    }
    {
        // oblique ray through an affine field picks up the direction slope
        Direction d(Vec{0.0, 0.6, 0.8});
        CoefficientField f = CoefficientField::affine_depth(2.0, 0.5);
        RayProfile p = restrict_to_ray(f, Vec{0, 0, 0}, d, 1.0);
        CHECK(p(2.0) == doctest::Approx(2.0 + 0.5 * 0.8 * 2.0));
    }
}

TEST_CASE("fermi moments, constant profile closed forms") {
    RayProfile p = RayProfile::constant(1.0);
    const MomentTriple m = fermi_moments(p, 1.0, 0.0);
    CHECK(m.a == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(m.b == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(m.c == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
    CHECK(m.delta == doctest::Approx(1.0 / 12.0).epsilon(1e-14));

    const MomentTriple z = fermi_moments(p, 2.0, 2.0);
    CHECK(z.a == 0.0);
    CHECK(z.b == 0.0);
    CHECK(z.c == 0.0);
    CHECK(z.delta == 0.0);

    // delta / Xn^4 -> 1/12 as Xn -> 0
    for (double xn : {1e-1, 1e-2, 1e-3}) {
        const MomentTriple s = fermi_moments(p, xn, 0.0);
        CHECK(s.delta / std::pow(xn, 4) == doctest::Approx(1.0 / 12.0).epsilon(1e-10));
    }
}

TEST_CASE("fermi moments match quadrature for generic profiles") {
    CoefficientField f = CoefficientField::bump(1.0, 0.8, 0.7, Vec{0.0, 0.0, 0.4});
    RayProfile p = restrict_to_ray(f, Vec{0, 0, 0}, Direction::north(3), 0.25);
    const double Xn = 1.3, t = 0.2;
    const MomentTriple m = fermi_moments(p, Xn, t);
    const double a = integrate_adaptive([&](double s) { return p(s); }, t, Xn).value;
    const double b = integrate_adaptive([&](double s) { return s * p(s); }, t, Xn).value;
    const double c = integrate_adaptive([&](double s) { return s * s * p(s); }, t, Xn).value;
    CHECK(m.a == doctest::Approx(a).epsilon(1e-12));
    CHECK(m.b == doctest::Approx(b).epsilon(1e-12));
    CHECK(m.c == doctest::Approx(c).epsilon(1e-12));

    const MomentTriple ms = fermi_moments_shifted(p, Xn, t);
    const double bs =
        integrate_adaptive([&](double s) { return (s - t) * p(s); }, t, Xn).value;
    const double cs =
        integrate_adaptive([&](double s) { return (s - t) * (s - t) * p(s); }, t, Xn).value;
    CHECK(ms.a == doctest::Approx(a).epsilon(1e-12));
    CHECK(ms.b == doctest::Approx(bs).epsilon(1e-11));
    CHECK(ms.c == doctest::Approx(cs).epsilon(1e-11));
}

TEST_CASE("moment positivity and small-depth asymptotics") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 1000; ++i) {
        const double base = 0.5 + u(rng), amp = u(rng), width = 0.3 + u(rng);
        CoefficientField f = CoefficientField::bump(base, amp, width, Vec{0, u(rng)});
        RayProfile p = restrict_to_ray(f, Vec{0.0, 0.0}, Direction::north(2), 0.25);
        const double t = 2.0 * u(rng);
        const double Xn = t + 1e-3 + 2.0 * u(rng);
        const MomentTriple m = fermi_moments(p, Xn, t);
        CHECK(m.delta > 0.0);
        // monotonicity in Xn
        const MomentTriple m2 = fermi_moments(p, Xn + 0.5, t);
        CHECK(m2.a >= m.a);
        CHECK(m2.b >= m.b);
        CHECK(m2.c >= m.c);
    }

    CoefficientField f = CoefficientField::bump(1.0, 0.5, 1.0, Vec{0.3, 0.0});
    RayProfile p = restrict_to_ray(f, Vec{0.0, 0.0}, Direction::north(2), 0.25);
    const double xn = 1e-3;
    const double s0 = p(0.0);
    const MomentTriple m = fermi_moments(p, xn, 0.0);
    CHECK(m.a == doctest::Approx(s0 * xn).epsilon(0.01));
    CHECK(m.b == doctest::Approx(s0 * xn * xn / 2).epsilon(0.01));
    CHECK(m.c == doctest::Approx(s0 * xn * xn * xn / 3).epsilon(0.01));
}

TEST_CASE("attenuation") {
    {
        RayProfile lam = RayProfile::constant(1.0);
        CHECK(attenuation(lam, 0.0, 1.0).value == doctest::Approx(std::exp(-1.0)).epsilon(1e-14));
        CHECK(attenuation(lam, 0.7, 0.7).value == 1.0);
    }
    {
        RayProfile lam = RayProfile::affine(1.0, 1.0);
        CHECK(attenuation(lam, 0.0, 1.0).value == doctest::Approx(std::exp(-1.5)).epsilon(1e-14));
    }
    {
        CoefficientField f = CoefficientField::bump(1.0, 1.0, 0.5, Vec{0.0, 0.3});
        RayProfile lam = restrict_to_ray(f, Vec{0.0, 0.0}, Direction::north(2), 1.0);
        const double direct =
            integrate_adaptive([&](double s) { return lam(s); }, 0.0, 2.0).value;
        CHECK(attenuation(lam, 0.0, 2.0).value == doctest::Approx(std::exp(-direct)).epsilon(1e-12));
        CHECK(attenuation(lam, 0.0, 2.0).value <= std::exp(-lam.lower_bound() * 2.0) + 1e-12);
    }
}

TEST_CASE("gaussian line moments") {
    CHECK(gaussian_line_moment(0, 1.0, 0.0).value ==
          doctest::Approx(std::sqrt(M_PI)).epsilon(1e-14));
    CHECK_FALSE(gaussian_line_moment(0, 1.0, 0.0).is_bound);
    CHECK(gaussian_line_moment(2, 1.0, 0.0).value ==
          doctest::Approx(std::sqrt(M_PI) / 2.0).epsilon(1e-14));
    CHECK(gaussian_line_moment(1, 1.0, 0.0).is_bound);
    CHECK(gaussian_line_moment(3, 1.0, 0.0).is_bound);

    // closed forms (k = 0, 2) against quadrature over alpha, beta grids
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> ua(0.1, 10.0), ub(-3.0, 3.0);
    for (int i = 0; i < 60; ++i) {
        const double alpha = ua(rng), beta = ub(rng);
        // window centered at the Gaussian peak so the quadrature sees it
        const double center = beta / alpha, halfw = 42.0 / std::sqrt(alpha);
        auto direct = [&](int k) {
            return integrate_adaptive(
                       [&](double t) {
                           return std::pow(std::abs(t), k) *
                                  std::exp(-alpha * t * t + 2 * beta * t);
                       },
                       std::min(center - halfw, -halfw), std::max(center + halfw, halfw), 1e-13)
                .value;
        };
        for (int k : {0, 2})
            CHECK(gaussian_line_moment(k, alpha, beta).value ==
                  doctest::Approx(direct(k)).epsilon(1e-10));
        // k = 1, 3 are erf-free majorants
        for (int k : {1, 3})
            CHECK(gaussian_line_moment(k, alpha, beta).value >= direct(k) * (1.0 - 1e-12));
    }
}

TEST_CASE("field validation") {
    CHECK_THROWS_AS(CoefficientField::affine_depth(1.0, -2.0, 1.0), config_error);
    CHECK_THROWS_AS(CoefficientField::bump(1.0, -2.0, 1.0, Vec{0, 0}), config_error);
    CHECK_THROWS_AS(CoefficientField::callback([](const Vec&) { return 0.5; }, 1.0, 2.0,
                                               Smoothness::C0, {Vec{0.0, 0.0}}),
                    config_error);
}
