#pragma once

// Philox4x32-10 counter RNG over the lane abstraction (Salmon et al., SC'11).
// Streams are keyed by the 64-bit seed; the counter words are
// (particle_lo32, particle_hi32, step, draw), so any (particle, step) pair
// can be generated independently of batch order or backend width.

#include "narrowbeam/simd/lane.hpp"
#include "narrowbeam/simd/vmath.hpp"

namespace narrowbeam::simd {

template <class Tag>
struct Philox {
    using L = Lane<Tag>;
    using vd = typename L::vd;
    using vu = typename L::vu;

    struct Block {
        vu w0, w1, w2, w3; // four 32-bit words per lane, stored in u64 lanes
    };

    static Block block(vu particle, std::uint32_t step, std::uint32_t draw, std::uint64_t seed) {
        const vu mask32 = L::uset(0xFFFFFFFFull);
        vu c0 = L::uand(particle, mask32);
        vu c1 = L::template ushr<32>(particle);
        vu c2 = L::uset(step);
        vu c3 = L::uset(draw);
        vu k0 = L::uset(seed & 0xFFFFFFFFull);
        vu k1 = L::uset(seed >> 32);

        for (int round = 0; round < 10; ++round) {
            const vu p0 = L::umul32(L::uset(0xD2511F53ull), c0);
            const vu p1 = L::umul32(L::uset(0xCD9E8D57ull), c2);
            const vu hi0 = L::template ushr<32>(p0);
            const vu lo0 = L::uand(p0, mask32);
            const vu hi1 = L::template ushr<32>(p1);
            const vu lo1 = L::uand(p1, mask32);
            const vu n0 = L::uxor(L::uxor(hi1, c1), k0);
            const vu n2 = L::uxor(L::uxor(hi0, c3), k1);
            c0 = n0;
            c1 = lo1;
            c2 = n2;
            c3 = lo0;
            k0 = L::uand(L::uadd(k0, L::uset(0x9E3779B9ull)), mask32);
            k1 = L::uand(L::uadd(k1, L::uset(0xBB67AE85ull)), mask32);
        }
        return {c0, c1, c2, c3};
    }

    // uniform in (0,1) with 52-bit resolution from two 32-bit words
    static vd uniform(vu hi, vu lo) {
        const vu a = L::uor(L::template ushl<32>(hi), lo);
        const vu mant = L::uor(L::template ushr<12>(a), L::uset(0x4330000000000000ull));
        const vd d = L::sub(L::dcast(mant), L::dset(4503599627370496.0)); // 2^52
        return L::mul(L::add(d, L::dset(0.5)), L::dset(2.220446049250313080847e-16)); // 2^-52
    }

    // Standard normal pair via Box-Muller on one Philox block.
    static void gaussian_pair(vu particle, std::uint32_t step, std::uint32_t draw,
                              std::uint64_t seed, vd& z0, vd& z1) {
        const Block b = block(particle, step, draw, seed);
        const vd u1 = uniform(b.w0, b.w1);
        const vd u2 = uniform(b.w2, b.w3);
        const vd r = L::sqrt(L::mul(L::dset(-2.0), VMath<Tag>::log(u1)));
        vd s, c;
        VMath<Tag>::sincos_turns(u2, s, c);
        z0 = L::mul(r, c);
        z1 = L::mul(r, s);
    }
};

} // namespace narrowbeam::simd
