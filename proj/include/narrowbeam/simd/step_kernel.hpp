#pragma once

// Batch particle stepper for the occupation-measure solver, written once
// against Lane<Tag>. Groups of 4 particles are processed with a fixed
// reduction order, so scalar and AVX2 backends produce bit-identical clouds
// and ledgers. Strang splitting: half transport, angular step + attenuation
// at the midpoint, half transport.

#include <cstdint>
#include <vector>

#include "narrowbeam/simd/lane.hpp"
#include "narrowbeam/simd/philox.hpp"
#include "narrowbeam/simd/vmath.hpp"

namespace narrowbeam::simd {

struct CoefParams {
    int kind = 0; // 0 constant, 1 affine in x^n, 2 bump
    double c0 = 1.0, c1 = 0.0;
    double amp = 0.0, inv_w2 = 1.0;
    double cx[3] = {0.0, 0.0, 0.0};
};

struct StepJob {
    int dim = 2;
    double dt = 0.0, half_dt = 0.0;
    double two_eps2_dt = 0.0; // tangent variance per dimension = this * sigma(x)
    int n_steps = 0;
    int stride = 1;
    std::uint64_t seed = 0;
    std::uint64_t first_particle = 0;
    std::int64_t count = 0;
    double w0 = 0.0; // initial weight per particle
    double y[3] = {0, 0, 0};
    double eta[3] = {0, 0, 1};
    CoefParams sigma, lambda;
    double const_aw = 1.0, const_ah = 1.0; // precomputed exp(-l dt), exp(-l dt/2)
    bool lambda_const = true;
    bool diffusion_off = false;
    bool deposit_jitter = true; // stratified within-step deposit times
};

struct StepStats {
    double absorbed = 0.0, absorbed_c = 0.0;
    double backscatter = 0.0, backscatter_c = 0.0;
    double truncation = 0.0, truncation_c = 0.0;
    double deposited = 0.0, deposited_c = 0.0;
    std::int64_t n_deposits = 0;
};

// Scalar Kahan merge used for the slot-ordered reduction.
inline void kadd(double& s, double& c, double x) {
    const double t = s + x;
    if (std::abs(s) >= std::abs(x))
        c += (s - t) + x;
    else
        c += (x - t) + s;
    s = t;
}

// Maps a Lane specialization back to its tag (for VMath in evaluators).
template <class L>
struct TagOf;
template <>
struct TagOf<Lane<ScalarTag>> {
    using type = ScalarTag;
};
#ifdef NARROWBEAM_HAVE_AVX2_LANE
template <>
struct TagOf<Lane<Avx2Tag>> {
    using type = Avx2Tag;
};
#endif

namespace coef {

struct Const {
    template <class L>
    static typename L::vd eval(const CoefParams& p, const typename L::vd*, int) {
        return L::dset(p.c0);
    }
};

struct Affine {
    template <class L>
    static typename L::vd eval(const CoefParams& p, const typename L::vd* x, int dim) {
        return L::fma(L::dset(p.c1), x[dim - 1], L::dset(p.c0));
    }
};

struct Bump {
    template <class L>
    static typename L::vd eval(const CoefParams& p, const typename L::vd* x, int dim) {
        using vd = typename L::vd;
        vd r2 = L::dset(0.0);
        for (int d = 0; d < dim; ++d) {
            const vd dx = L::sub(x[d], L::dset(p.cx[d]));
            r2 = L::fma(dx, dx, r2);
        }
        const vd e = VMath<typename TagOf<L>::type>::exp(L::mul(r2, L::dset(-p.inv_w2)));
        return L::fma(L::dset(p.amp), e, L::dset(p.c0));
    }
};

} // namespace coef

// Per-lane vector Kahan accumulator.
template <class L>
struct VKahan {
    typename L::vd sum = L::dset(0.0);
    typename L::vd comp = L::dset(0.0);
    void add(typename L::vd x) {
        using vd = typename L::vd;
        const vd t = L::add(sum, x);
        const vd big = L::le(L::abs(x), L::abs(sum));
        const vd d1 = L::add(L::sub(sum, t), x);
        const vd d2 = L::add(L::sub(x, t), sum);
        comp = L::add(comp, L::blend(big, d1, d2));
        sum = t;
    }
};

// One slot (particle) worth of pending deposits, flushed in canonical order.
struct DepositBuffer {
    std::vector<double> data; // per deposit: dim pos, dim dir, weight
    void clear() { data.clear(); }
};

template <class Tag, int DIM, class SEV, class LEV>
struct StepKernel {
    using L = Lane<Tag>;
    using vd = typename L::vd;
    using vu = typename L::vu;
    using VM = VMath<Tag>;
    static constexpr int W = L::width;
    static constexpr int kGroup = 4;

    // Process particles [job.first_particle + g0*4, ... + g1*4) and append
    // per-slot results; `slots` must hold 4 StepStats and 4 DepositBuffers.
    static void run_group(const StepJob& job, std::uint64_t group_index, StepStats* slot_stats,
                          DepositBuffer* slot_deps) {
        for (int row = 0; row < kGroup / W; ++row) {
            run_row(job, group_index, row, slot_stats, slot_deps);
        }
    }

  private:
    static void run_row(const StepJob& job, std::uint64_t group_index, int row,
                        StepStats* slot_stats, DepositBuffer* slot_deps) {
        const std::uint64_t row_first = group_index * kGroup + std::uint64_t(row) * W;
        // global particle ids per lane
        alignas(32) std::uint64_t pid[W];
        alignas(32) double phase[W];
        alignas(32) double valid[W];
        for (int l = 0; l < W; ++l) {
            pid[l] = job.first_particle + row_first + l;
            phase[l] = double((row_first + l) % std::uint64_t(job.stride));
            valid[l] = (std::int64_t(row_first + l) < job.count) ? 1.0 : 0.0;
        }
        const vu particle = load_u64(pid);
        vd phase_v = L::load(phase);
        vd alive = L::lt(L::dset(0.5), L::load(valid)); // mask ~ valid lanes

        const vd hdt = L::dset(job.half_dt);
        const vd zero = L::dset(0.0);
        vd x[3], th[3];
        for (int d = 0; d < DIM; ++d) {
            x[d] = L::dset(job.y[d]);
            th[d] = L::dset(job.eta[d]);
        }
        vd w = L::blend(alive, L::dset(job.w0), zero);

        VKahan<L> absorbed, backscatter, deposited;
        const double dep_scale = job.dt * double(job.stride);

        for (int step = 0; step < job.n_steps; ++step) {
            // --- half transport A ---
            const vd xn_prev = x[DIM - 1];
            vd xp[3];
            for (int d = 0; d < DIM; ++d) {
                xp[d] = x[d];
                x[d] = L::fma(th[d], hdt, x[d]);
            }
            vd cross = L::m_and(alive, L::lt(x[DIM - 1], zero));
            if (L::any(cross))
                handle_cross(job, cross, xn_prev, x, th, w, alive, absorbed, backscatter);

            // --- midpoint coefficients ---
            vd aw, lam;
            if (job.lambda_const) {
                aw = L::dset(job.const_aw);
                lam = L::dset(job.lambda.c0);
            } else {
                lam = LEV::template eval<L>(job.lambda, x, DIM);
                const vd e = VM::exp(L::mul(lam, L::dset(-job.half_dt)));
                aw = L::mul(e, e);
            }

            const double smod = double(step % job.stride);
            const vd dep = L::m_and(alive, L::eq(phase_v, L::dset(smod)));
            const bool do_dep = L::any(dep);

            // --- angular step ---
            vd thn[3];
            vd xi0 = zero, xi1 = zero, sd = zero;
            for (int d = 0; d < DIM; ++d) thn[d] = th[d];
            if (!job.diffusion_off) {
                const vd sig = SEV::template eval<L>(job.sigma, x, DIM);
                sd = L::sqrt(L::mul(sig, L::dset(job.two_eps2_dt)));
                vd z0, z1;
                Philox<Tag>::gaussian_pair(particle, std::uint32_t(step), 0, job.seed, z0, z1);
                xi0 = L::mul(z0, sd);
                xi1 = L::mul(z1, sd);
                if constexpr (DIM == 2) {
                    vd s, c;
                    VM::sincos(xi0, s, c);
                    thn[0] = L::sub(L::mul(th[0], c), L::mul(th[1], s));
                    thn[1] = L::add(L::mul(th[0], s), L::mul(th[1], c));
                } else {
                    rotate3(th, xi0, xi1, thn);
                }
            }

            // --- deposit: stratified time t_k + U dt inside the step, with
            //     the direction bridged to that time. A fixed within-step
            //     offset would alias the quasi-deterministic deposit depths
            //     against downstream histogram edges at O(dt). ---
            if (do_dep) {
                vd U = L::dset(0.5);
                vd zb0 = zero, zb1 = zero;
                if (job.deposit_jitter) {
                    const auto blk =
                        Philox<Tag>::block(particle, std::uint32_t(step), 1, job.seed);
                    U = Philox<Tag>::uniform(blk.w0, blk.w1);
                    if (!job.diffusion_off)
                        Philox<Tag>::gaussian_pair(particle, std::uint32_t(step), 2, job.seed,
                                                   zb0, zb1);
                }
                // position along the scheme's piecewise-linear path
                const vd late = L::lt(L::dset(0.5), U);
                const vd sa = L::mul(U, L::dset(job.dt));
                const vd sb = L::mul(L::sub(U, L::dset(0.5)), L::dset(job.dt));
                vd xd[3], thd[3];
                for (int d = 0; d < DIM; ++d) {
                    const vd xa = L::fma(th[d], sa, xp[d]);
                    const vd xb = L::fma(thn[d], sb, x[d]);
                    xd[d] = L::blend(late, xb, xa);
                    thd[d] = th[d];
                }
                if (!job.diffusion_off) {
                    // Brownian bridge of the tangent increment at fraction U
                    const vd bsd = L::sqrt(
                        L::max(zero, L::mul(U, L::sub(L::dset(1.0), U))));
                    const vd xm0 = L::fma(L::mul(zb0, bsd), sd, L::mul(xi0, U));
                    if constexpr (DIM == 2) {
                        vd sm, cm;
                        VM::sincos(xm0, sm, cm);
                        thd[0] = L::sub(L::mul(th[0], cm), L::mul(th[1], sm));
                        thd[1] = L::add(L::mul(th[0], sm), L::mul(th[1], cm));
                    } else {
                        const vd xm1 = L::fma(L::mul(zb1, bsd), sd, L::mul(xi1, U));
                        rotate3(th, xm0, xm1, thd);
                    }
                }
                const vd att = VM::exp(L::mul(lam, L::mul(U, L::dset(-job.dt))));
                const vd wdep = L::mul(L::mul(w, att), L::dset(dep_scale));
                flush_deposits(dep, xd, thd, wdep, slot_deps, row);
                deposited.add(L::blend(dep, wdep, zero));
            }

            // --- attenuation at midpoint ---
            const vd wn = L::mul(w, aw);
            absorbed.add(L::sub(w, wn));
            w = wn;

            // --- half transport B ---
            const vd xn_mid = x[DIM - 1];
            for (int d = 0; d < DIM; ++d) {
                th[d] = thn[d];
                x[d] = L::fma(th[d], hdt, x[d]);
            }
            cross = L::m_and(alive, L::lt(x[DIM - 1], zero));
            if (L::any(cross))
                handle_cross(job, cross, xn_mid, x, th, w, alive, absorbed, backscatter);
        }

        // truncation: whatever is still alive at t_max
        VKahan<L> trunc;
        trunc.add(L::blend(alive, w, zero));

        // slot-ordered reduction (bitwise identical across lane widths)
        for (int l = 0; l < W; ++l) {
            const int slot = row * W + l;
            StepStats& st = slot_stats[slot];
            kadd(st.absorbed, st.absorbed_c, L::extract(absorbed.sum, l));
            kadd(st.absorbed, st.absorbed_c, L::extract(absorbed.comp, l));
            kadd(st.backscatter, st.backscatter_c, L::extract(backscatter.sum, l));
            kadd(st.backscatter, st.backscatter_c, L::extract(backscatter.comp, l));
            kadd(st.truncation, st.truncation_c, L::extract(trunc.sum, l));
            kadd(st.truncation, st.truncation_c, L::extract(trunc.comp, l));
            kadd(st.deposited, st.deposited_c, L::extract(deposited.sum, l));
            kadd(st.deposited, st.deposited_c, L::extract(deposited.comp, l));
        }
    }

    static vu load_u64(const std::uint64_t* p) {
#ifdef NARROWBEAM_HAVE_AVX2_LANE
        if constexpr (W == 4)
            return {_mm256_loadu_si256(reinterpret_cast<const __m256i*>(p))};
#endif
        return L::uset(p[0]);
    }

    // Exit through x^n = 0: linear interpolation of the crossing inside the
    // half step, partial attenuation up to the crossing, rest to backscatter.
    static void handle_cross(const StepJob& job, vd cross, vd xn_prev, vd x[3], vd th[3], vd& w,
                             vd& alive, VKahan<L>& absorbed, VKahan<L>& backscatter) {
        const vd zero = L::dset(0.0);
        const vd denom = L::sub(xn_prev, x[DIM - 1]);
        const vd safe = L::blend(cross, denom, L::dset(1.0));
        const vd f = L::div(xn_prev, safe); // fraction of the half step
        vd xc[3];
        for (int d = 0; d < DIM; ++d) {
            // x holds the post-step position; back out the crossing point
            const vd back = L::mul(L::sub(f, L::dset(1.0)), L::mul(th[d], L::dset(job.half_dt)));
            xc[d] = L::add(x[d], back);
        }
        const vd lam = LEV::template eval<L>(job.lambda, xc, DIM);
        const vd att = VM::exp(L::mul(lam, L::mul(f, L::dset(-job.half_dt))));
        const vd rem = L::mul(w, att);
        backscatter.add(L::blend(cross, rem, zero));
        absorbed.add(L::blend(cross, L::sub(w, rem), zero));
        w = L::blend(cross, zero, w);
        alive = L::m_and(alive, L::dcast(L::uxor(L::ucast(cross), L::uset(~0ull))));
    }

    static void rotate3(const vd th[3], vd xi0, vd xi1, vd thn[3]) {
        const vd zero = L::dset(0.0);
        // stable tangent basis: cross with z-hat unless theta is too polar
        const vd m = L::lt(L::abs(th[2]), L::dset(0.9));
        const vd a0 = L::blend(m, th[1], zero);
        const vd a1 = L::blend(m, L::neg(th[0]), th[2]);
        const vd a2 = L::blend(m, zero, L::neg(th[1]));
        const vd n2 = L::fma(a0, a0, L::fma(a1, a1, L::mul(a2, a2)));
        const vd inv = L::div(L::dset(1.0), L::sqrt(n2));
        const vd e10 = L::mul(a0, inv), e11 = L::mul(a1, inv), e12 = L::mul(a2, inv);
        const vd e20 = L::sub(L::mul(th[1], e12), L::mul(th[2], e11));
        const vd e21 = L::sub(L::mul(th[2], e10), L::mul(th[0], e12));
        const vd e22 = L::sub(L::mul(th[0], e11), L::mul(th[1], e10));

        const vd phi = L::sqrt(L::fma(xi0, xi0, L::mul(xi1, xi1)));
        vd s, c;
        VM::sincos(phi, s, c);
        const vd tiny = L::lt(phi, L::dset(1e-290));
        const vd sinc = L::blend(tiny, L::dset(1.0), L::div(s, phi));
        vd out[3];
        out[0] = L::fma(c, th[0], L::mul(sinc, L::fma(xi0, e10, L::mul(xi1, e20))));
        out[1] = L::fma(c, th[1], L::mul(sinc, L::fma(xi0, e11, L::mul(xi1, e21))));
        out[2] = L::fma(c, th[2], L::mul(sinc, L::fma(xi0, e12, L::mul(xi1, e22))));
        const vd nn = L::fma(out[0], out[0], L::fma(out[1], out[1], L::mul(out[2], out[2])));
        const vd r = L::div(L::dset(1.0), L::sqrt(nn));
        for (int d = 0; d < 3; ++d) thn[d] = L::mul(out[d], r);
    }

    static void flush_deposits(vd dep, const vd x[3], const vd theta[3], vd wdep,
                               DepositBuffer* slot_deps, int row) {
        alignas(32) double mx[3][W], mt[3][W], mw[W];
        alignas(32) double md[W];
        for (int d = 0; d < DIM; ++d) {
            L::store(mx[d], x[d]);
            L::store(mt[d], theta[d]);
        }
        L::store(mw, wdep);
        L::store(md, dep);
        for (int l = 0; l < W; ++l) {
            std::uint64_t bits;
            __builtin_memcpy(&bits, &md[l], 8);
            if (!bits) continue;
            DepositBuffer& buf = slot_deps[row * W + l];
            for (int d = 0; d < DIM; ++d) buf.data.push_back(mx[d][l]);
            for (int d = 0; d < DIM; ++d) buf.data.push_back(mt[d][l]);
            buf.data.push_back(mw[l]);
        }
    }
};

} // namespace narrowbeam::simd
