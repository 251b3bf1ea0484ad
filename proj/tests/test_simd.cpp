#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "narrowbeam/fokker_planck.hpp"
#include "narrowbeam/simd/backend.hpp"
#include "narrowbeam/simd/philox.hpp"
#include "narrowbeam/simd/vmath.hpp"

using namespace narrowbeam;
namespace ns = narrowbeam::simd;

using SL = ns::Lane<ns::ScalarTag>;
using SV = ns::VMath<ns::ScalarTag>;
using SP = ns::Philox<ns::ScalarTag>;

TEST_CASE("vmath exp/log/sincos track libm closely") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> ux(-700.0, 700.0);
    double max_rel = 0.0;
    for (int i = 0; i < 20000; ++i) {
        const double x = ux(rng);
        const double a = SV::exp(SL::dset(x)).x;
        const double b = std::exp(x);
        max_rel = std::max(max_rel, std::abs(a - b) / b);
    }
    CHECK(max_rel < 1e-13);

    std::uniform_real_distribution<double> uu(1e-300, 1.0);
    max_rel = 0.0;
    for (int i = 0; i < 20000; ++i) {
        const double u = uu(rng);
        const double a = SV::log(SL::dset(u)).x;
        const double b = std::log(u);
        max_rel = std::max(max_rel, std::abs(a - b) / std::max(1.0, std::abs(b)));
    }
    CHECK(max_rel < 1e-14);

    std::uniform_real_distribution<double> ut(-10.0, 10.0);
    double max_err = 0.0;
    for (int i = 0; i < 20000; ++i) {
        const double t = ut(rng);
        SL::vd s{}, c{};
        SV::sincos_turns(SL::dset(t), s, c);
        max_err = std::max(max_err, std::abs(s.x - std::sin(2 * M_PI * t)));
        max_err = std::max(max_err, std::abs(c.x - std::cos(2 * M_PI * t)));
        CHECK(std::abs(s.x * s.x + c.x * c.x - 1.0) < 1e-14);
    }
    CHECK(max_err < 1e-13);
}

TEST_CASE("philox matches an independent transcription of the reference rounds") {
    // Reference implementation (Salmon et al. round structure), kept separate
    // from the lane code on purpose.
    auto ref_block = [](std::uint64_t particle, std::uint32_t step, std::uint32_t draw,
                        std::uint64_t seed) {
        std::uint32_t c[4] = {static_cast<std::uint32_t>(particle),
                              static_cast<std::uint32_t>(particle >> 32), step, draw};
        std::uint32_t k0 = static_cast<std::uint32_t>(seed);
        std::uint32_t k1 = static_cast<std::uint32_t>(seed >> 32);
        for (int r = 0; r < 10; ++r) {
            const std::uint64_t p0 = 0xD2511F53ull * c[0];
            const std::uint64_t p1 = 0xCD9E8D57ull * c[2];
            const std::uint32_t hi0 = static_cast<std::uint32_t>(p0 >> 32);
            const std::uint32_t lo0 = static_cast<std::uint32_t>(p0);
            const std::uint32_t hi1 = static_cast<std::uint32_t>(p1 >> 32);
            const std::uint32_t lo1 = static_cast<std::uint32_t>(p1);
            c[0] = hi1 ^ c[1] ^ k0;
            c[1] = lo1;
            c[2] = hi0 ^ c[3] ^ k1;
            c[3] = lo0;
            k0 += 0x9E3779B9u;
            k1 += 0xBB67AE85u;
        }
        return std::array<std::uint32_t, 4>{c[0], c[1], c[2], c[3]};
    };

    std::mt19937_64 rng(3);
    for (int i = 0; i < 200; ++i) {
        const std::uint64_t particle = rng(), seed = rng();
        const std::uint32_t step = static_cast<std::uint32_t>(rng());
        const std::uint32_t draw = static_cast<std::uint32_t>(rng() & 3);
        const auto want = ref_block(particle, step, draw, seed);
        const auto got = SP::block(SL::uset(particle), step, draw, seed);
        CHECK(SL::uextract(got.w0, 0) == want[0]);
        CHECK(SL::uextract(got.w1, 0) == want[1]);
        CHECK(SL::uextract(got.w2, 0) == want[2]);
        CHECK(SL::uextract(got.w3, 0) == want[3]);
    }
}

TEST_CASE("philox uniforms and gaussians have the right moments") {
    const std::uint64_t seed = 42;
    const int n = 200000;
    double su = 0, su2 = 0, sz = 0, sz2 = 0, sz3 = 0, sz4 = 0;
    for (int i = 0; i < n; ++i) {
        const auto b = SP::block(SL::uset(std::uint64_t(i)), 0, 0, seed);
        const double u = SP::uniform(b.w0, b.w1).x;
        CHECK(u > 0.0);
        CHECK(u < 1.0);
        su += u;
        su2 += u * u;
        SL::vd z0{}, z1{};
        SP::gaussian_pair(SL::uset(std::uint64_t(i)), 1, 0, seed, z0, z1);
        sz += z0.x + z1.x;
        sz2 += z0.x * z0.x + z1.x * z1.x;
        sz3 += z0.x * z0.x * z0.x + z1.x * z1.x * z1.x;
        sz4 += std::pow(z0.x, 4) + std::pow(z1.x, 4);
    }
    CHECK(su / n == doctest::Approx(0.5).epsilon(0.01));
    CHECK(su2 / n == doctest::Approx(1.0 / 3.0).epsilon(0.01));
    const double m = 2.0 * n;
    CHECK(std::abs(sz / m) < 4.0 / std::sqrt(m));
    CHECK(sz2 / m == doctest::Approx(1.0).epsilon(0.01));
    CHECK(std::abs(sz3 / m) < 4.0 * std::sqrt(15.0 / m));
    CHECK(sz4 / m == doctest::Approx(3.0).epsilon(0.03));
}

#ifdef NARROWBEAM_HAVE_AVX2_LANE
TEST_CASE("avx2 lanes are bit-identical to the scalar lanes") {
    if (!avx2_available()) {
        MESSAGE("AVX2 not available on this host; skipping");
        return;
    }
    using AL = ns::Lane<ns::Avx2Tag>;
    using AV = ns::VMath<ns::Avx2Tag>;
    using AP = ns::Philox<ns::Avx2Tag>;

    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> ux(-700.0, 700.0);
    for (int i = 0; i < 5000; ++i) {
        alignas(32) double x[4];
        for (double& v : x) v = ux(rng);
        const auto av = AV::exp(AL::load(x));
        for (int l = 0; l < 4; ++l) {
            const double sv = SV::exp(SL::dset(x[l])).x;
            CHECK(AL::extract(av, l) == sv);
        }
    }
    std::uniform_real_distribution<double> uu(1e-12, 1.0);
    for (int i = 0; i < 5000; ++i) {
        alignas(32) double x[4];
        for (double& v : x) v = uu(rng);
        const auto av = AV::log(AL::load(x));
        for (int l = 0; l < 4; ++l) CHECK(AL::extract(av, l) == SV::log(SL::dset(x[l])).x);
    }
    for (int i = 0; i < 5000; ++i) {
        alignas(32) double t[4];
        std::uniform_real_distribution<double> ut(-8.0, 8.0);
        for (double& v : t) v = ut(rng);
        typename AL::vd as{}, ac{};
        AV::sincos_turns(AL::load(t), as, ac);
        for (int l = 0; l < 4; ++l) {
            SL::vd ss{}, sc{};
            SV::sincos_turns(SL::dset(t[l]), ss, sc);
            CHECK(AL::extract(as, l) == ss.x);
            CHECK(AL::extract(ac, l) == sc.x);
        }
    }
    // philox + box-muller streams
    for (int i = 0; i < 2000; ++i) {
        alignas(32) std::uint64_t pid[4];
        for (auto& v : pid) v = rng();
        const std::uint64_t seed = rng();
        const std::uint32_t step = static_cast<std::uint32_t>(rng());
        typename AL::vd az0{}, az1{};
        AP::gaussian_pair(typename AL::vu{_mm256_loadu_si256(reinterpret_cast<const __m256i*>(pid))},
                          step, 0, seed, az0, az1);
        for (int l = 0; l < 4; ++l) {
            SL::vd z0{}, z1{};
            SP::gaussian_pair(SL::uset(pid[l]), step, 0, seed, z0, z1);
            CHECK(AL::extract(az0, l) == z0.x);
            CHECK(AL::extract(az1, l) == z1.x);
        }
    }
}

TEST_CASE("scalar and avx2 particle backends produce identical clouds and ledgers") {
    if (!avx2_available()) {
        MESSAGE("AVX2 not available on this host; skipping");
        return;
    }
    for (int dim : {2, 3}) {
        CoefficientField sigma = CoefficientField::affine_depth(1.0, 0.2);
        CoefficientField lambda = CoefficientField::bump(1.0, 0.5, 2.0, Vec(dim, 0.5));
        SimConfig cfg;
        cfg.dim = dim;
        cfg.epsilon = 0.15;
        cfg.dt = 0.05;
        cfg.n_particles = 2002; // not a multiple of 4: exercises phantom lanes
        cfg.t_max = 3.0;
        cfg.seed = 99;
        cfg.deposit_stride = 7;
        std::vector<SourceAtom> src{{Vec(dim, 0.0), Direction::north(dim), 1.0}};

        auto [cloud_s, diag_s] = simulate_occupation(src, sigma, lambda, cfg, Backend::Scalar);
        auto [cloud_a, diag_a] = simulate_occupation(src, sigma, lambda, cfg, Backend::Avx2);

        REQUIRE(cloud_s.size() == cloud_a.size());
        CHECK(cloud_s.pos == cloud_a.pos);
        CHECK(cloud_s.dir == cloud_a.dir);
        CHECK(cloud_s.weight == cloud_a.weight);
        CHECK(diag_s.absorbed_mass == diag_a.absorbed_mass);
        CHECK(diag_s.backscatter_mass == diag_a.backscatter_mass);
        CHECK(diag_s.truncation_mass == diag_a.truncation_mass);
        CHECK(diag_s.deposited_mass == diag_a.deposited_mass);
    }
}
#endif
