#pragma once

// Polynomial exp/log/sincos over the lane abstraction. The scalar and AVX2
// instantiations share coefficients and operation order (explicit fma), so
// they round identically; accuracy is a few ulp, checked against libm in the
// unit tests.

#include "narrowbeam/simd/lane.hpp"

namespace narrowbeam::simd {

template <class Tag>
struct VMath {
    using L = Lane<Tag>;
    using vd = typename L::vd;
    using vu = typename L::vu;

    // exp(x) for x in [-700, 700]; clamped outside.
    static vd exp(vd x) {
        const vd log2e = L::dset(1.4426950408889634074);
        const vd ln2_hi = L::dset(6.93147180369123816490e-01); // 20 trailing zero bits
        const vd ln2_lo = L::dset(1.90821492927058770002e-10);
        x = L::max(L::dset(-700.0), L::min(L::dset(700.0), x));
        const vd k = L::round(L::mul(x, log2e));
        vd r = L::fma(k, L::neg(ln2_hi), x);
        r = L::fma(k, L::neg(ln2_lo), r);
        // Taylor e^r, |r| <= ln2/2, Horner to r^13/13!
        vd p = L::dset(1.6059043836821614599e-10); // 1/13!
        p = L::fma(p, r, L::dset(2.0876756987868098979e-09)); // 1/12!
        p = L::fma(p, r, L::dset(2.5052108385441718775e-08)); // 1/11!
        p = L::fma(p, r, L::dset(2.7557319223985890653e-07)); // 1/10!
        p = L::fma(p, r, L::dset(2.7557319223985892510e-06)); // 1/9!
        p = L::fma(p, r, L::dset(2.4801587301587301566e-05)); // 1/8!
        p = L::fma(p, r, L::dset(1.9841269841269841253e-04)); // 1/7!
        p = L::fma(p, r, L::dset(1.3888888888888889419e-03)); // 1/6!
        p = L::fma(p, r, L::dset(8.3333333333333332177e-03)); // 1/5!
        p = L::fma(p, r, L::dset(4.1666666666666664354e-02)); // 1/4!
        p = L::fma(p, r, L::dset(1.6666666666666665741e-01)); // 1/3!
        p = L::fma(p, r, L::dset(0.5));
        p = L::fma(p, r, L::dset(1.0));
        p = L::fma(p, r, L::dset(1.0));
        // scale by 2^k: bit pattern from k via the 1.5*2^52 integer trick
        // (valid for negative k; the +2^51 offset vanishes under the mask)
        const vu ki = L::ucast(L::add(k, L::dset(6755399441055744.0)));
        const vu ebits =
            L::template ushl<52>(L::uand(L::uadd(ki, L::uset(1023)), L::uset(0x7FF)));
        return L::mul(p, L::dcast(ebits));
    }

    // log(u) for normal positive u (the Box-Muller uniforms are in (0,1)).
    static vd log(vd u) {
        const vu bits = L::ucast(u);
        const vu ebias = L::template ushr<52>(bits);
        // mantissa in [1,2)
        vd m = L::dcast(L::uor(L::uand(bits, L::uset(0x000FFFFFFFFFFFFFull)),
                               L::uset(0x3FF0000000000000ull)));
        // exponent as a double via the 2^52 trick (ebias in [1, 2046])
        vd e = L::sub(L::dcast(L::uor(ebias, L::uset(0x4330000000000000ull))),
                      L::dset(4503599627370496.0));
        e = L::sub(e, L::dset(1023.0));
        const vd sqrt2 = L::dset(1.4142135623730951);
        const vd big = L::lt(sqrt2, m); // m > sqrt2
        m = L::blend(big, L::mul(m, L::dset(0.5)), m);
        e = L::blend(big, L::add(e, L::dset(1.0)), e);
        const vd s = L::div(L::sub(m, L::dset(1.0)), L::add(m, L::dset(1.0)));
        const vd w = L::mul(s, s);
        vd q = L::dset(1.0 / 19.0);
        q = L::fma(q, w, L::dset(1.0 / 17.0));
        q = L::fma(q, w, L::dset(1.0 / 15.0));
        q = L::fma(q, w, L::dset(1.0 / 13.0));
        q = L::fma(q, w, L::dset(1.0 / 11.0));
        q = L::fma(q, w, L::dset(1.0 / 9.0));
        q = L::fma(q, w, L::dset(1.0 / 7.0));
        q = L::fma(q, w, L::dset(1.0 / 5.0));
        q = L::fma(q, w, L::dset(1.0 / 3.0));
        q = L::fma(q, w, L::dset(1.0));
        const vd lnm = L::mul(L::mul(L::dset(2.0), s), q);
        const vd ln2_hi = L::dset(6.93147180369123816490e-01);
        const vd ln2_lo = L::dset(1.90821492927058770002e-10);
        vd r = L::fma(e, ln2_hi, lnm);
        r = L::fma(e, ln2_lo, r);
        return r;
    }

    // sin/cos of 2*pi*t ("turns"). Quadrant reduction is exact in binary.
    static void sincos_turns(vd t, vd& s_out, vd& c_out) {
        const vd j = L::round(L::mul(t, L::dset(4.0)));
        const vd r = L::fma(j, L::dset(-0.25), t); // |r| <= 1/8, exact
        const vd y = L::mul(r, L::dset(6.283185307179586476925286766559)); // |y| <= pi/4
        const vd w = L::mul(y, y);

        vd sp = L::dset(-7.6471637318198164759e-13); // -1/15!
        sp = L::fma(sp, w, L::dset(1.6059043836821614599e-10));  // 1/13!
        sp = L::fma(sp, w, L::dset(-2.5052108385441718775e-08)); // -1/11!
        sp = L::fma(sp, w, L::dset(2.7557319223985890653e-06));  // 1/9!
        sp = L::fma(sp, w, L::dset(-1.9841269841269841253e-04)); // -1/7!
        sp = L::fma(sp, w, L::dset(8.3333333333333332177e-03));  // 1/5!
        sp = L::fma(sp, w, L::dset(-1.6666666666666665741e-01)); // -1/3!
        sp = L::fma(sp, w, L::dset(1.0));
        vd s = L::mul(y, sp);

        vd cp = L::dset(4.7794773323873852534e-14); // 1/16!
        cp = L::fma(cp, w, L::dset(-1.1470745597729724714e-11)); // -1/14!
        cp = L::fma(cp, w, L::dset(2.0876756987868098979e-09));  // 1/12!
        cp = L::fma(cp, w, L::dset(-2.7557319223985892510e-07)); // -1/10!
        cp = L::fma(cp, w, L::dset(2.4801587301587301566e-05));  // 1/8!
        cp = L::fma(cp, w, L::dset(-1.3888888888888889419e-03)); // -1/6!
        cp = L::fma(cp, w, L::dset(4.1666666666666664354e-02));  // 1/4!
        cp = L::fma(cp, w, L::dset(-0.5));
        cp = L::fma(cp, w, L::dset(1.0));
        vd c = cp;

        // quadrant m = j mod 4 in {0,1,2,3}
        const vd m = L::fma(L::floor(L::mul(j, L::dset(0.25))), L::dset(-4.0), j);
        const vd swap = L::m_or(L::eq(m, L::dset(1.0)), L::eq(m, L::dset(3.0)));
        const vd neg_s = L::m_or(L::eq(m, L::dset(2.0)), L::eq(m, L::dset(3.0)));
        const vd neg_c = L::m_or(L::eq(m, L::dset(1.0)), L::eq(m, L::dset(2.0)));
        const vd sign = L::dset(-0.0);
        vd so = L::blend(swap, c, s);
        vd co = L::blend(swap, s, c);
        so = L::dcast(L::uxor(L::ucast(so), L::ucast(L::m_and(neg_s, sign))));
        co = L::dcast(L::uxor(L::ucast(co), L::ucast(L::m_and(neg_c, sign))));
        s_out = so;
        c_out = co;
    }

    // sin/cos of an angle in radians.
    static void sincos(vd y, vd& s, vd& c) {
        sincos_turns(L::mul(y, L::dset(0.15915494309189533577)), s, c);
    }
};

} // namespace narrowbeam::simd
