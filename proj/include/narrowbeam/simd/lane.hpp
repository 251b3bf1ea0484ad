#pragma once

// Lane abstraction: the particle kernels are written once against Lane<Tag>
// and instantiated for a scalar tag and an AVX2 tag. Every operation here is
// elementwise IEEE (no reassociation, explicit fma), so the two builds of the
// same kernel are bit-identical lane for lane; the equivalence suite asserts
// exact equality, not tolerances.

#include <cmath>
#include <cstdint>

#if defined(__AVX2__) && defined(__FMA__)
#include <immintrin.h>
#define NARROWBEAM_HAVE_AVX2_LANE 1
#endif

namespace narrowbeam::simd {

struct ScalarTag {};

template <class Tag>
struct Lane;

template <>
struct Lane<ScalarTag> {
    static constexpr int width = 1;

    struct vd {
        double x;
    };
    struct vu {
        std::uint64_t x;
    };

    static vd dset(double v) { return {v}; }
    static vu uset(std::uint64_t v) { return {v}; }
    static vd load(const double* p) { return {*p}; }
    static void store(double* p, vd a) { *p = a.x; }

    static vd add(vd a, vd b) { return {a.x + b.x}; }
    static vd sub(vd a, vd b) { return {a.x - b.x}; }
    static vd mul(vd a, vd b) { return {a.x * b.x}; }
    static vd div(vd a, vd b) { return {a.x / b.x}; }
    static vd fma(vd a, vd b, vd c) { return {std::fma(a.x, b.x, c.x)}; }
    static vd neg(vd a) { return {-a.x}; }
    static vd sqrt(vd a) { return {std::sqrt(a.x)}; }
    static vd abs(vd a) { return {std::fabs(a.x)}; }
    static vd min(vd a, vd b) { return {a.x < b.x ? a.x : b.x}; }
    static vd max(vd a, vd b) { return {a.x > b.x ? a.x : b.x}; }
    static vd round(vd a) { return {std::nearbyint(a.x)}; }
    static vd floor(vd a) { return {std::floor(a.x)}; }

    // Masks are all-ones / all-zeros bit patterns in vd, as on the SIMD side.
    static vd lt(vd a, vd b) { return mask(a.x < b.x); }
    static vd le(vd a, vd b) { return mask(a.x <= b.x); }
    static vd eq(vd a, vd b) { return mask(a.x == b.x); }
    static vd blend(vd m, vd a, vd b) { return ucast(m).x ? a : b; }
    static vd m_and(vd a, vd b) { return dcast({ucast(a).x & ucast(b).x}); }
    static vd m_or(vd a, vd b) { return dcast({ucast(a).x | ucast(b).x}); }
    static bool any(vd m) { return ucast(m).x != 0; }
    static double extract(vd a, int) { return a.x; }
    static std::uint64_t uextract(vu a, int) { return a.x; }

    static vu uadd(vu a, vu b) { return {a.x + b.x}; }
    static vu uand(vu a, vu b) { return {a.x & b.x}; }
    static vu uor(vu a, vu b) { return {a.x | b.x}; }
    static vu uxor(vu a, vu b) { return {a.x ^ b.x}; }
    template <int K>
    static vu ushr(vu a) {
        return {a.x >> K};
    }
    template <int K>
    static vu ushl(vu a) {
        return {a.x << K};
    }
    // low 32 x low 32 -> full 64-bit product (the Philox multiply)
    static vu umul32(vu a, vu b) {
        return {static_cast<std::uint64_t>(static_cast<std::uint32_t>(a.x)) *
                static_cast<std::uint32_t>(b.x)};
    }

    static vd dcast(vu a) {
        double d;
        __builtin_memcpy(&d, &a.x, 8);
        return {d};
    }
    static vu ucast(vd a) {
        std::uint64_t u;
        __builtin_memcpy(&u, &a.x, 8);
        return {u};
    }

  private:
    static vd mask(bool b) { return dcast({b ? ~0ull : 0ull}); }
};

#ifdef NARROWBEAM_HAVE_AVX2_LANE

struct Avx2Tag {};

template <>
struct Lane<Avx2Tag> {
    static constexpr int width = 4;

    struct vd {
        __m256d x;
    };
    struct vu {
        __m256i x;
    };

    static vd dset(double v) { return {_mm256_set1_pd(v)}; }
    static vu uset(std::uint64_t v) { return {_mm256_set1_epi64x(static_cast<long long>(v))}; }
    static vd load(const double* p) { return {_mm256_loadu_pd(p)}; }
    static void store(double* p, vd a) { _mm256_storeu_pd(p, a.x); }

    static vd add(vd a, vd b) { return {_mm256_add_pd(a.x, b.x)}; }
    static vd sub(vd a, vd b) { return {_mm256_sub_pd(a.x, b.x)}; }
    static vd mul(vd a, vd b) { return {_mm256_mul_pd(a.x, b.x)}; }
    static vd div(vd a, vd b) { return {_mm256_div_pd(a.x, b.x)}; }
    static vd fma(vd a, vd b, vd c) { return {_mm256_fmadd_pd(a.x, b.x, c.x)}; }
    static vd neg(vd a) { return {_mm256_xor_pd(a.x, _mm256_set1_pd(-0.0))}; }
    static vd sqrt(vd a) { return {_mm256_sqrt_pd(a.x)}; }
    static vd abs(vd a) { return {_mm256_andnot_pd(_mm256_set1_pd(-0.0), a.x)}; }
    static vd min(vd a, vd b) { return {_mm256_min_pd(b.x, a.x)}; }
    static vd max(vd a, vd b) { return {_mm256_max_pd(b.x, a.x)}; }
    static vd round(vd a) {
        return {_mm256_round_pd(a.x, _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC)};
    }
    static vd floor(vd a) { return {_mm256_floor_pd(a.x)}; }

    static vd lt(vd a, vd b) { return {_mm256_cmp_pd(a.x, b.x, _CMP_LT_OQ)}; }
    static vd le(vd a, vd b) { return {_mm256_cmp_pd(a.x, b.x, _CMP_LE_OQ)}; }
    static vd eq(vd a, vd b) { return {_mm256_cmp_pd(a.x, b.x, _CMP_EQ_OQ)}; }
    static vd blend(vd m, vd a, vd b) { return {_mm256_blendv_pd(b.x, a.x, m.x)}; }
    static vd m_and(vd a, vd b) { return {_mm256_and_pd(a.x, b.x)}; }
    static vd m_or(vd a, vd b) { return {_mm256_or_pd(a.x, b.x)}; }
    static bool any(vd m) { return _mm256_movemask_pd(m.x) != 0; }
    static double extract(vd a, int i) {
        alignas(32) double tmp[4];
        _mm256_store_pd(tmp, a.x);
        return tmp[i];
    }
    static std::uint64_t uextract(vu a, int i) {
        alignas(32) std::uint64_t tmp[4];
        _mm256_store_si256(reinterpret_cast<__m256i*>(tmp), a.x);
        return tmp[i];
    }

    static vu uadd(vu a, vu b) { return {_mm256_add_epi64(a.x, b.x)}; }
    static vu uand(vu a, vu b) { return {_mm256_and_si256(a.x, b.x)}; }
    static vu uor(vu a, vu b) { return {_mm256_or_si256(a.x, b.x)}; }
    static vu uxor(vu a, vu b) { return {_mm256_xor_si256(a.x, b.x)}; }
    template <int K>
    static vu ushr(vu a) {
        return {_mm256_srli_epi64(a.x, K)};
    }
    template <int K>
    static vu ushl(vu a) {
        return {_mm256_slli_epi64(a.x, K)};
    }
    static vu umul32(vu a, vu b) { return {_mm256_mul_epu32(a.x, b.x)}; }

    static vd dcast(vu a) { return {_mm256_castsi256_pd(a.x)}; }
    static vu ucast(vd a) { return {_mm256_castpd_si256(a.x)}; }
};

#endif // NARROWBEAM_HAVE_AVX2_LANE

} // namespace narrowbeam::simd
