#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "narrowbeam/ballistic.hpp"
#include "narrowbeam/fokker_planck.hpp"
#include "narrowbeam/pencil_beam.hpp"

using namespace narrowbeam;

namespace {

std::vector<SourceAtom> axis_source(int n) {
    return {{Vec(n, 0.0), Direction::north(n), 1.0}};
}

} // namespace

TEST_CASE("sphere_bm_step basics") {
    const Direction th = Direction::north(3);
    CHECK(sphere_bm_step(th, 0.0, 1, 0, 7).components() == th.components());
    CHECK_THROWS_AS(sphere_bm_step(th, 0.6, 1, 0, 7), step_too_large_error);

    // unit norm always; displacement moments E|dtheta|^2 ~ (n-1) * variance
    for (int n : {2, 3, 4}) {
        const double v = 1e-4;
        const Direction start =
            n == 2 ? Direction(Vec{0.6, 0.8}) : Direction(Vec(n, 1.0 / std::sqrt(double(n))));
        double s2 = 0.0;
        const int N = 200000;
        for (int i = 0; i < N; ++i) {
            const Direction out = sphere_bm_step(start, v, i, 3, 12345);
            CHECK(std::abs(norm2(out.components()) - 1.0) < 1e-12);
            double d2 = 0.0;
            for (int k = 0; k < n; ++k) d2 += (out[k] - start[k]) * (out[k] - start[k]);
            s2 += d2;
        }
        const double mean = s2 / N;
        const double want = (n - 1) * v;
        // chi^2-ish spread: se ~ want * sqrt(2/((n-1)N))
        const double se = want * std::sqrt(2.0 / double((n - 1) * N));
        CHECK(std::abs(mean - want) < 4 * se + 1e-3 * want);
    }
}

TEST_CASE("zero diffusion reduces to the ray measure exactly") {
    CoefficientField sigma = CoefficientField::constant(1.0);
    CoefficientField lambda = CoefficientField::constant(1.3);
    SimConfig cfg;
    cfg.dim = 2;
    cfg.epsilon = 0.0;
    cfg.dt = 0.05;
    cfg.n_particles = 1;
    cfg.t_max = 5.0;
    cfg.seed = 4;
    cfg.deposit_stride = 1;
    cfg.deposit_jitter = false; // midpoint deposits match the ray atoms
    auto [cloud, diag] = simulate_occupation(axis_source(2), sigma, lambda, cfg);

    RayMeasureSpec rspec(Vec{0.0, 0.0}, Direction::north(2), RayProfile::constant(1.3), 0.05,
                         5.0);
    WeightedCloud ray = ray_measure_sample(rspec);

    REQUIRE(cloud.size() == ray.size());
    CHECK(cloud.pos == ray.pos);
    CHECK(cloud.dir == ray.dir);
    CHECK(cloud.weight == ray.weight);
}

TEST_CASE("mass ledger closes and deposits respect the 1/lambda0 cap") {
    CoefficientField sigma = CoefficientField::constant(1.0);
    for (int dim : {2, 3}) {
        for (int lk = 0; lk < 2; ++lk) {
            CoefficientField lambda = lk == 0 ? CoefficientField::constant(0.7)
                                              : CoefficientField::affine_depth(0.7, 0.1);
            SimConfig cfg;
            cfg.dim = dim;
            cfg.epsilon = 0.2;
            cfg.dt = 0.05;
            cfg.n_particles = 20000;
            cfg.t_max = 6.0;
            cfg.seed = 31;
            cfg.deposit_stride = 3;
            auto [cloud, diag] = simulate_occupation(axis_source(dim), sigma, lambda, cfg);

            const double ledger =
                diag.absorbed_mass + diag.backscatter_mass + diag.truncation_mass;
            CHECK(std::abs(ledger - diag.initial_mass) < 1e-12 * cfg.n_particles / 1e6 + 1e-13);
            CHECK(diag.deposited_mass <= 1.0 / 0.7 + 1e-12);
            CHECK(cloud.total_mass() == doctest::Approx(diag.deposited_mass).epsilon(1e-10));
            CHECK(diag.backscatter_mass >= 0.0);
            CHECK(diag.truncation_mass > 0.0);
        }
    }
}

TEST_CASE("determinism: independent of backend-visible batching and repeat runs") {
    CoefficientField sigma = CoefficientField::constant(1.0);
    CoefficientField lambda = CoefficientField::constant(1.0);
    SimConfig cfg;
    cfg.dim = 2;
    cfg.epsilon = 0.1;
    cfg.dt = 0.05;
    cfg.n_particles = 4001;
    cfg.t_max = 4.0;
    cfg.seed = 77;
    cfg.deposit_stride = 5;

    auto [c1, d1] = simulate_occupation(axis_source(2), sigma, lambda, cfg);
    auto [c2, d2] = simulate_occupation(axis_source(2), sigma, lambda, cfg);
    CHECK(c1.pos == c2.pos);
    CHECK(c1.weight == c2.weight);
    CHECK(d1.absorbed_mass == d2.absorbed_mass);
}

TEST_CASE("stretched statistics approach the Fermi-Eyges covariance") {
    // constant coefficients, small epsilon: Var V ~ 2 sigma~ depth
    const double eps = 0.05;
    CoefficientField sigma = CoefficientField::constant(1.0);
    CoefficientField lambda = CoefficientField::constant(1.0);
    SimConfig cfg;
    cfg.dim = 2;
    cfg.epsilon = eps;
    cfg.dt = 0.01;
    cfg.n_particles = 60000;
    cfg.t_max = 1.6;
    cfg.seed = 5;
    cfg.deposit_stride = 2;
    auto [cloud, diag] = simulate_occupation(axis_source(2), sigma, lambda, cfg);

    StretchFrame frame(eps, Vec{0.0}, 2);
    const StretchedStats st = stretched_stats(cloud, frame, 1.0, 0.05);
    REQUIRE(st.count > 1000);

    StretchFrame frame2(eps, Vec{0.0}, 2);
    PencilBeamSpec spec = PencilBeamSpec::make(frame2, Direction::north(2), sigma, lambda);
    const GaussianCovariance want = pencil_cov(spec, 1.0);
    CHECK(st.var_V == doctest::Approx(want.var_V).epsilon(0.10));
    CHECK(st.var_X == doctest::Approx(want.var_X).epsilon(0.10));
    CHECK(st.cov_XV == doctest::Approx(want.cov_XV).epsilon(0.15));

    CHECK_THROWS_AS(stretched_stats(cloud, frame, 100.0, 0.01), empty_window_error);
}

TEST_CASE("dt refinement leaves stretched moments within statistical error") {
    const double eps = 0.1;
    CoefficientField sigma = CoefficientField::constant(1.0);
    CoefficientField lambda = CoefficientField::constant(1.0);
    auto run = [&](double dt, std::uint64_t seed) {
        SimConfig cfg;
        cfg.dim = 2;
        cfg.epsilon = eps;
        cfg.dt = dt;
        cfg.n_particles = 40000;
        cfg.t_max = 1.2;
        cfg.seed = seed;
        cfg.deposit_stride = 1;
        auto [cloud, diag] = simulate_occupation(axis_source(2), sigma, lambda, cfg);
        StretchFrame frame(eps, Vec{0.0}, 2);
        return stretched_stats(cloud, frame, 1.0, 0.05);
    };
    const StretchedStats a = run(0.02, 1);
    const StretchedStats b = run(0.01, 2);
    // deposits of one trajectory inside the window are correlated; the
    // effective sample is roughly one per particle crossing the window
    const double n_eff =
        std::min(double(a.count) * 0.02, double(b.count) * 0.01) / 0.1;
    const double rel = std::sqrt(2.0 / n_eff);
    CHECK(std::abs(a.var_V - b.var_V) < 5 * a.var_V * rel);
    CHECK(std::abs(a.var_X - b.var_X) < 5 * a.var_X * rel);
}

TEST_CASE("backscatter is tiny for collimated beams") {
    CoefficientField sigma = CoefficientField::constant(1.0);
    CoefficientField lambda = CoefficientField::constant(1.0);
    double prev = 1e300;
    for (double eps : {0.3, 0.1}) {
        SimConfig cfg;
        cfg.dim = 2;
        cfg.epsilon = eps;
        cfg.dt = 0.05;
        cfg.n_particles = 50000;
        cfg.t_max = 10.0;
        cfg.seed = 9;
        cfg.deposit_stride = 10;
        auto [cloud, diag] = simulate_occupation(axis_source(2), sigma, lambda, cfg);
        CHECK(diag.backscatter_mass < prev + 1e-12);
        prev = diag.backscatter_mass;
        if (eps <= 0.1) CHECK(diag.backscatter_mass < 1e-3);
    }
}

TEST_CASE("generic scalar path (callback field) stays consistent") {
    CoefficientField sigma = CoefficientField::callback(
        [](const Vec& x) { return 1.0 + 0.1 * std::sin(x.back()); }, 0.9, 1.1, Smoothness::C3);
    CoefficientField lambda = CoefficientField::constant(1.0);
    SimConfig cfg;
    cfg.dim = 2;
    cfg.epsilon = 0.1;
    cfg.dt = 0.05;
    cfg.n_particles = 4000;
    cfg.t_max = 3.0;
    cfg.seed = 13;
    cfg.deposit_stride = 2;
    auto [cloud, diag] = simulate_occupation(axis_source(2), sigma, lambda, cfg);
    const double ledger = diag.absorbed_mass + diag.backscatter_mass + diag.truncation_mass;
    CHECK(std::abs(ledger - diag.initial_mass) < 1e-12);
    CHECK(diag.deposited_mass <= 1.0 + 1e-12);
    CHECK(cloud.size() > 0);
}

TEST_CASE("config validation") {
    CoefficientField sigma = CoefficientField::constant(4.0);
    CoefficientField lambda = CoefficientField::constant(1.0);
    SimConfig cfg;
    cfg.dim = 2;
    cfg.epsilon = 1.0;
    cfg.dt = 0.09; // cap is 0.1/(eps^2 sigma (n-1)) = 0.025
    cfg.n_particles = 10;
    CHECK_THROWS_AS(cfg.validate(sigma, lambda), step_too_large_error);
    cfg.dt = 0.01;
    CHECK_NOTHROW(cfg.validate(sigma, lambda));
}
