#include "narrowbeam/fokker_planck.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <thread>

#include "narrowbeam/simd/backend.hpp"

namespace narrowbeam {

using simd::CoefParams;
using simd::DepositBuffer;
using simd::StepJob;
using simd::StepStats;

// ---------------------------------------------------------------------------
// Backend selection
// ---------------------------------------------------------------------------

bool avx2_available() {
#if defined(__x86_64__) || defined(__i386__)
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

Backend resolve_backend(Backend requested) {
    if (requested == Backend::Auto) {
        if (const char* env = std::getenv("NARROWBEAM_SIMD")) {
            if (std::strcmp(env, "scalar") == 0) return Backend::Scalar;
            if (std::strcmp(env, "avx2") == 0) return Backend::Avx2;
        }
        return avx2_available() ? Backend::Avx2 : Backend::Scalar;
    }
    if (requested == Backend::Avx2 && !avx2_available())
        throw config_error("AVX2 backend requested but not supported by this CPU");
    return requested;
}

const char* backend_name(Backend b) {
    switch (b) {
        case Backend::Scalar: return "scalar";
        case Backend::Avx2: return "avx2";
        default: return "auto";
    }
}

static int thread_budget() {
    if (const char* env = std::getenv("NARROWBEAM_THREADS")) {
        const int n = std::atoi(env);
        if (n >= 1) return n;
    }
    return 1;
}

// ---------------------------------------------------------------------------
// Config resolution
// ---------------------------------------------------------------------------

void SimConfig::validate(const CoefficientField& sigma, const CoefficientField& lambda) const {
    (void)lambda;
    if (dim < 2) throw config_error("SimConfig: dim must be >= 2");
    if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw config_error("SimConfig: need 0 <= eps <= 1");
    if (!(dt > 0.0)) throw config_error("SimConfig: dt must be positive");
    if (n_particles < 1) throw config_error("SimConfig: need at least one particle");
    const double angular = epsilon * epsilon * sigma.upper_bound() * (dim - 1);
    const double dt_cap = std::min(0.1, angular > 0.0 ? 0.1 / angular : 0.1);
    if (dt > dt_cap + 1e-15)
        throw step_too_large_error("SimConfig: dt exceeds the small-angle cap " +
                                   std::to_string(dt_cap));
}

double SimConfig::resolved_t_max(const CoefficientField& lambda) const {
    if (t_max > 0.0) return t_max;
    return std::log(1e6) / lambda.lower_bound();
}

int SimConfig::n_steps(const CoefficientField& lambda) const {
    return static_cast<int>(std::ceil(resolved_t_max(lambda) / dt - 1e-9));
}

int SimConfig::resolved_stride(const CoefficientField& lambda) const {
    if (deposit_stride > 0) return deposit_stride;
    const double total = double(n_particles) * double(n_steps(lambda));
    return std::max(1, static_cast<int>(total / double(std::max<std::int64_t>(1, target_atoms))));
}

// ---------------------------------------------------------------------------
// Field -> kernel parameter mapping
// ---------------------------------------------------------------------------

namespace {

int coef_kind_code(const CoefficientField& f) {
    switch (f.kind()) {
        case CoefficientField::Kind::Constant: return 0;
        case CoefficientField::Kind::AffineDepth: return 1;
        case CoefficientField::Kind::Bump: return 2;
        case CoefficientField::Kind::Callback: return -1;
    }
    return -1;
}

CoefParams to_params(const CoefficientField& f, int dim) {
    CoefParams p;
    p.kind = coef_kind_code(f);
    switch (f.kind()) {
        case CoefficientField::Kind::Constant:
            p.c0 = f.const_value();
            break;
        case CoefficientField::Kind::AffineDepth:
            p.c0 = f.affine_base();
            p.c1 = f.affine_slope();
            break;
        case CoefficientField::Kind::Bump: {
            p.c0 = f.bump_base();
            p.amp = f.bump_amp();
            p.inv_w2 = 1.0 / (f.bump_width() * f.bump_width());
            const Vec& c = f.bump_center();
            for (int d = 0; d < dim && d < 3; ++d)
                p.cx[d] = d < static_cast<int>(c.size()) ? c[d] : 0.0;
            break;
        }
        default:
            break;
    }
    return p;
}

struct AtomJob {
    StepJob job;
    std::int64_t n_groups;
};

// Largest-remainder split of particles across source atoms.
std::vector<std::int64_t> split_particles(const std::vector<SourceAtom>& source,
                                          std::int64_t total) {
    double mass = 0.0;
    for (const auto& a : source) mass += a.mass;
    if (!(mass > 0.0)) throw config_error("simulate_occupation: source has no mass");
    std::vector<std::int64_t> n(source.size());
    std::vector<std::pair<double, std::size_t>> rem(source.size());
    std::int64_t used = 0;
    for (std::size_t i = 0; i < source.size(); ++i) {
        const double exact = double(total) * source[i].mass / mass;
        n[i] = static_cast<std::int64_t>(exact);
        rem[i] = {exact - double(n[i]), i};
        used += n[i];
    }
    std::sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    for (std::int64_t k = 0; used < total; ++k, ++used) n[rem[k % rem.size()].second] += 1;
    for (std::size_t i = 0; i < source.size(); ++i)
        if (n[i] == 0 && source[i].mass > 0.0)
            throw config_error("simulate_occupation: too few particles for source atom count");
    return n;
}

class VectorSink : public DepositSink {
  public:
    explicit VectorSink(WeightedCloud& c) : cloud_(c) {}
    void consume(const double* x, const double* theta, double w) override {
        cloud_.push(x, theta, w);
    }

  private:
    WeightedCloud& cloud_;
};

// Generic scalar path: any dimension, any coefficient field (used when no
// batch kernel exists). Deterministic via the same Philox streams.
void simulate_generic(const std::vector<SourceAtom>& source, const CoefficientField& sigma,
                      const CoefficientField& lambda, const SimConfig& cfg, DepositSink& sink,
                      SimDiagnostics& diag);

} // namespace

// ---------------------------------------------------------------------------
// sphere_bm_step (scalar reference; n = 2,3 match the batch kernels)
// ---------------------------------------------------------------------------

Direction sphere_bm_step(const Direction& theta, double variance, std::uint64_t particle,
                         std::uint32_t step, std::uint64_t seed, std::uint32_t draw_base) {
    if (!(variance >= 0.0)) throw config_error("sphere_bm_step: negative variance");
    if (variance >= 0.5) throw step_too_large_error("sphere_bm_step: variance must be < 0.5");
    if (variance == 0.0) return theta;

    using L = simd::Lane<simd::ScalarTag>;
    using VM = simd::VMath<simd::ScalarTag>;
    using PH = simd::Philox<simd::ScalarTag>;
    const int n = theta.dim();
    const double sd = std::sqrt(variance);

    if (n == 2) {
        L::vd z0{}, z1{};
        PH::gaussian_pair(L::uset(particle), step, draw_base, seed, z0, z1);
        const double xi = z0.x * sd;
        L::vd s{}, c{};
        VM::sincos(L::dset(xi), s, c);
        Vec out(2);
        out[0] = theta[0] * c.x - theta[1] * s.x;
        out[1] = theta[0] * s.x + theta[1] * c.x;
        return Direction(std::move(out));
    }

    // tangent Gaussian
    Vec xi(n, 0.0);
    if (n == 3) {
        L::vd z0{}, z1{};
        PH::gaussian_pair(L::uset(particle), step, draw_base, seed, z0, z1);
        const bool polar = std::abs(theta[2]) >= 0.9;
        Vec a = polar ? Vec{0.0, theta[2], -theta[1]} : Vec{theta[1], -theta[0], 0.0};
        const double inv = 1.0 / norm(a);
        for (double& v : a) v *= inv;
        Vec b{theta[1] * a[2] - theta[2] * a[1], theta[2] * a[0] - theta[0] * a[2],
              theta[0] * a[1] - theta[1] * a[0]};
        for (int d = 0; d < 3; ++d) xi[d] = sd * (z0.x * a[d] + z1.x * b[d]);
    } else {
        // general n: Gram-Schmidt basis of the tangent space, skipping the
        // axis most aligned with theta
        int skip = 0;
        for (int d = 1; d < n; ++d)
            if (std::abs(theta[d]) > std::abs(theta[skip])) skip = d;
        std::vector<Vec> basis;
        for (int d = 0; d < n && static_cast<int>(basis.size()) < n - 1; ++d) {
            if (d == skip) continue;
            Vec v(n, 0.0);
            v[d] = 1.0;
            double dot = theta[d];
            for (int j = 0; j < n; ++j) v[j] -= dot * theta[j];
            for (const Vec& u : basis) {
                double du = 0.0;
                for (int j = 0; j < n; ++j) du += v[j] * u[j];
                for (int j = 0; j < n; ++j) v[j] -= du * u[j];
            }
            const double nv = norm(v);
            for (double& y : v) y /= nv;
            basis.push_back(std::move(v));
        }
        std::uint32_t draw = draw_base;
        for (std::size_t k = 0; k < basis.size(); k += 2, ++draw) {
            L::vd z0{}, z1{};
            PH::gaussian_pair(L::uset(particle), step, draw, seed, z0, z1);
            for (int j = 0; j < n; ++j) xi[j] += sd * z0.x * basis[k][j];
            if (k + 1 < basis.size())
                for (int j = 0; j < n; ++j) xi[j] += sd * z1.x * basis[k + 1][j];
        }
    }

    const double phi = norm(xi);
    L::vd s{}, c{};
    VM::sincos(L::dset(phi), s, c);
    const double sinc = phi < 1e-290 ? 1.0 : s.x / phi;
    Vec out(n);
    for (int d = 0; d < n; ++d) out[d] = c.x * theta[d] + sinc * xi[d];
    return Direction(std::move(out));
}

// ---------------------------------------------------------------------------
// Batch driver
// ---------------------------------------------------------------------------

namespace {

// Per-chunk partial results. Work is split into fixed chunks of groups and
// folded in chunk order, so the reduction tree (hence every output bit) is
// independent of the worker count.
struct ChunkResult {
    KahanSum absorbed, backscatter, truncation, deposited;
    std::vector<double> atoms; // flattened records: dim pos, dim dir, weight
    std::int64_t n_atoms = 0;
};

constexpr std::int64_t kChunkGroups = 256;

void process_chunk(const StepJob& job, simd::RunGroupFn fn, std::int64_t g0, std::int64_t g1,
                   ChunkResult& out) {
    StepStats slot_stats[4];
    DepositBuffer slot_deps[4];
    const int rec = 2 * job.dim + 1;
    for (std::int64_t g = g0; g < g1; ++g) {
        for (auto& s : slot_stats) s = StepStats{};
        fn(job, static_cast<std::uint64_t>(g), slot_stats, slot_deps);
        for (int s = 0; s < 4; ++s) {
            out.absorbed.add(slot_stats[s].absorbed);
            out.absorbed.add(slot_stats[s].absorbed_c);
            out.backscatter.add(slot_stats[s].backscatter);
            out.backscatter.add(slot_stats[s].backscatter_c);
            out.truncation.add(slot_stats[s].truncation);
            out.truncation.add(slot_stats[s].truncation_c);
            out.deposited.add(slot_stats[s].deposited);
            out.deposited.add(slot_stats[s].deposited_c);
            out.n_atoms += static_cast<std::int64_t>(slot_deps[s].data.size()) / rec;
            out.atoms.insert(out.atoms.end(), slot_deps[s].data.begin(), slot_deps[s].data.end());
            slot_deps[s].clear();
        }
    }
}

} // namespace

SimDiagnostics simulate_occupation_streaming(const std::vector<SourceAtom>& source,
                                             const CoefficientField& sigma,
                                             const CoefficientField& lambda, const SimConfig& cfg,
                                             DepositSink& sink, Backend backend) {
    cfg.validate(sigma, lambda);
    if (source.empty()) throw config_error("simulate_occupation: empty source");
    for (const auto& a : source) {
        if (static_cast<int>(a.y.size()) != cfg.dim || a.eta.dim() != cfg.dim)
            throw config_error("simulate_occupation: source dimension mismatch");
        if (a.y.back() != 0.0) throw config_error("simulate_occupation: source must sit on x^n=0");
        if (!(a.eta.last() > 0.0))
            throw config_error("simulate_occupation: source direction must be incoming");
    }

    const Backend resolved = resolve_backend(backend);
    const int sk = coef_kind_code(sigma), lk = coef_kind_code(lambda);
    simd::RunGroupFn fn = nullptr;
    if (sk >= 0 && lk >= 0 && cfg.dim <= 3) {
        fn = resolved == Backend::Avx2 ? simd::get_run_group_avx2(cfg.dim, sk, lk)
                                       : simd::get_run_group_scalar(cfg.dim, sk, lk);
    }

    SimDiagnostics diag;

    if (!fn) {
        simulate_generic(source, sigma, lambda, cfg, sink, diag);
        return diag;
    }

    KahanSum absorbed, backscatter, truncation, deposited, initial;
    const std::vector<std::int64_t> alloc = split_particles(source, cfg.n_particles);
    const int n_steps = cfg.n_steps(lambda);
    const int stride = cfg.resolved_stride(lambda);

    std::int64_t particle_base = 0;
    for (std::size_t ai = 0; ai < source.size(); ++ai) {
        if (alloc[ai] == 0) continue;
        StepJob job;
        job.dim = cfg.dim;
        job.dt = cfg.dt;
        job.half_dt = 0.5 * cfg.dt;
        job.two_eps2_dt = 2.0 * cfg.epsilon * cfg.epsilon * cfg.dt;
        job.n_steps = n_steps;
        job.stride = stride;
        job.seed = cfg.seed;
        job.first_particle = static_cast<std::uint64_t>(particle_base);
        job.count = alloc[ai];
        job.w0 = source[ai].mass / double(alloc[ai]);
        for (int d = 0; d < cfg.dim && d < 3; ++d) {
            job.y[d] = source[ai].y[d];
            job.eta[d] = source[ai].eta[d];
        }
        job.sigma = to_params(sigma, cfg.dim);
        job.lambda = to_params(lambda, cfg.dim);
        job.lambda_const = lambda.kind() == CoefficientField::Kind::Constant;
        if (job.lambda_const) {
            job.const_aw = std::exp(-lambda.const_value() * cfg.dt);
            job.const_ah = std::exp(-lambda.const_value() * 0.5 * cfg.dt);
        }
        job.diffusion_off = cfg.epsilon == 0.0;
        job.deposit_jitter = cfg.deposit_jitter;
        initial.add(double(alloc[ai]) * job.w0);

        const std::int64_t n_groups = (alloc[ai] + 3) / 4;
        const std::int64_t n_chunks = (n_groups + kChunkGroups - 1) / kChunkGroups;
        const int n_threads =
            static_cast<int>(std::min<std::int64_t>(thread_budget(), n_chunks));
        const int rec = 2 * cfg.dim + 1;

        auto fold = [&](ChunkResult& out) {
            absorbed.merge(out.absorbed);
            backscatter.merge(out.backscatter);
            truncation.merge(out.truncation);
            deposited.merge(out.deposited);
            for (std::size_t off = 0; off + rec <= out.atoms.size();
                 off += static_cast<std::size_t>(rec))
                sink.consume(out.atoms.data() + off, out.atoms.data() + off + cfg.dim,
                             out.atoms[off + 2 * cfg.dim]);
            diag.n_atoms += out.n_atoms;
            out = ChunkResult{};
        };

        if (n_threads <= 1) {
            ChunkResult out;
            for (std::int64_t c = 0; c < n_chunks; ++c) {
                process_chunk(job, fn, c * kChunkGroups, std::min(n_groups, (c + 1) * kChunkGroups),
                              out);
                fold(out);
            }
        } else {
            std::vector<ChunkResult> outs(static_cast<std::size_t>(n_chunks));
            std::vector<std::atomic<bool>> ready(static_cast<std::size_t>(n_chunks));
            for (auto& r : ready) r.store(false);
            std::atomic<std::int64_t> next{0};
            auto worker = [&]() {
                for (;;) {
                    const std::int64_t c = next.fetch_add(1);
                    if (c >= n_chunks) return;
                    process_chunk(job, fn, c * kChunkGroups,
                                  std::min(n_groups, (c + 1) * kChunkGroups),
                                  outs[static_cast<std::size_t>(c)]);
                    ready[static_cast<std::size_t>(c)].store(true, std::memory_order_release);
                }
            };
            std::vector<std::thread> pool;
            pool.reserve(n_threads);
            for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
            // fold in chunk order as results land
            for (std::int64_t c = 0; c < n_chunks; ++c) {
                while (!ready[static_cast<std::size_t>(c)].load(std::memory_order_acquire))
                    std::this_thread::yield();
                fold(outs[static_cast<std::size_t>(c)]);
            }
            for (auto& t : pool) t.join();
        }
        particle_base += alloc[ai];
    }

    diag.absorbed_mass = absorbed.value();
    diag.backscatter_mass = backscatter.value();
    diag.truncation_mass = truncation.value();
    diag.deposited_mass = deposited.value();
    diag.initial_mass = initial.value();
    return diag;
}

std::pair<WeightedCloud, SimDiagnostics> simulate_occupation(const std::vector<SourceAtom>& source,
                                                             const CoefficientField& sigma,
                                                             const CoefficientField& lambda,
                                                             const SimConfig& cfg,
                                                             Backend backend) {
    WeightedCloud cloud;
    cloud.dim = cfg.dim;
    cloud.epsilon = cfg.epsilon;
    cloud.seed = cfg.seed;
    VectorSink sink(cloud);
    SimDiagnostics diag = simulate_occupation_streaming(source, sigma, lambda, cfg, sink, backend);
    cloud.diag.initial_mass = diag.initial_mass;
    cloud.diag.deposited_mass = diag.deposited_mass;
    cloud.diag.absorbed_mass = diag.absorbed_mass;
    cloud.diag.backscatter_mass = diag.backscatter_mass;
    cloud.diag.truncation_mass = diag.truncation_mass;
    return {std::move(cloud), diag};
}

// ---------------------------------------------------------------------------
// Generic scalar path (callback fields or dim > 3)
// ---------------------------------------------------------------------------

namespace {

void simulate_generic(const std::vector<SourceAtom>& source, const CoefficientField& sigma,
                      const CoefficientField& lambda, const SimConfig& cfg, DepositSink& sink,
                      SimDiagnostics& diag) {
    using VM = simd::VMath<simd::ScalarTag>;
    using L = simd::Lane<simd::ScalarTag>;

    const std::vector<std::int64_t> alloc = split_particles(source, cfg.n_particles);
    const int n_steps = cfg.n_steps(lambda);
    const int stride = cfg.resolved_stride(lambda);
    const int n = cfg.dim;
    const double hdt = 0.5 * cfg.dt;

    KahanSum absorbed, backscatter, truncation, deposited, initial;

    std::int64_t particle_base = 0;
    for (std::size_t ai = 0; ai < source.size(); ++ai) {
        if (alloc[ai] == 0) continue;
        const double w0 = source[ai].mass / double(alloc[ai]);
        initial.add(double(alloc[ai]) * w0);
        for (std::int64_t p = 0; p < alloc[ai]; ++p) {
            const std::uint64_t pid = static_cast<std::uint64_t>(particle_base + p);
            Vec x = source[ai].y;
            Direction th = source[ai].eta;
            double w = w0;
            const int phase = static_cast<int>(pid % std::uint64_t(stride));
            KahanSum p_abs, p_back, p_dep;
            bool alive = true;
            double trunc_w = 0.0;

            for (int step = 0; step < n_steps && alive; ++step) {
                // half transport A
                double xn_prev = x.back();
                const Vec xprev = x;
                for (int d = 0; d < n; ++d) x[d] += th[d] * hdt;
                if (x.back() < 0.0) {
                    const double f = xn_prev / (xn_prev - x.back());
                    Vec xc(n);
                    for (int d = 0; d < n; ++d) xc[d] = x[d] + (f - 1.0) * th[d] * hdt;
                    const double att = VM::exp(L::dset(-lambda(xc) * f * hdt)).x;
                    p_back.add(w * att);
                    p_abs.add(w - w * att);
                    alive = false;
                    break;
                }
                const double lam = lambda(x);
                const double ah = VM::exp(L::dset(-lam * hdt)).x;
                const double aw = ah * ah;

                const bool dep = (step % stride) == phase;
                const double var = 2.0 * cfg.epsilon * cfg.epsilon * sigma(x) * cfg.dt;
                Direction thn = cfg.epsilon == 0.0
                                    ? th
                                    : sphere_bm_step(th, var, pid,
                                                     static_cast<std::uint32_t>(step), cfg.seed);
                if (dep) {
                    // stratified time within the step; the direction is an
                    // independent U-fraction step, which has the exact
                    // one-time law needed by the occupation estimator
                    double U = 0.5;
                    if (cfg.deposit_jitter) {
                        const auto blk = simd::Philox<simd::ScalarTag>::block(
                            L::uset(pid), static_cast<std::uint32_t>(step), 1, cfg.seed);
                        U = simd::Philox<simd::ScalarTag>::uniform(blk.w0, blk.w1).x;
                    }
                    Vec xd(n);
                    const Direction& base = U <= 0.5 ? th : thn;
                    const Vec& from = U <= 0.5 ? xprev : x;
                    const double s_off = (U <= 0.5 ? U : U - 0.5) * cfg.dt;
                    for (int d = 0; d < n; ++d) xd[d] = from[d] + base[d] * s_off;
                    const Direction dd =
                        cfg.epsilon == 0.0
                            ? th
                            : sphere_bm_step(th, U * var, pid,
                                             static_cast<std::uint32_t>(step), cfg.seed, 512);
                    const double att = VM::exp(L::dset(lam * (U * -cfg.dt))).x;
                    const double wdep = w * att * cfg.dt * double(stride);
                    sink.consume(xd.data(), dd.components().data(), wdep);
                    ++diag.n_atoms;
                    p_dep.add(wdep);
                }
                p_abs.add(w - w * aw);
                w *= aw;
                th = thn;

                // half transport B
                xn_prev = x.back();
                for (int d = 0; d < n; ++d) x[d] += th[d] * hdt;
                if (x.back() < 0.0) {
                    const double f = xn_prev / (xn_prev - x.back());
                    Vec xc(n);
                    for (int d = 0; d < n; ++d) xc[d] = x[d] + (f - 1.0) * th[d] * hdt;
                    const double att = VM::exp(L::dset(-lambda(xc) * f * hdt)).x;
                    p_back.add(w * att);
                    p_abs.add(w - w * att);
                    alive = false;
                    break;
                }
            }
            if (alive) trunc_w = w;
            absorbed.merge(p_abs);
            backscatter.merge(p_back);
            deposited.merge(p_dep);
            truncation.add(trunc_w);
        }
        particle_base += alloc[ai];
    }

    diag.absorbed_mass = absorbed.value();
    diag.backscatter_mass = backscatter.value();
    diag.truncation_mass = truncation.value();
    diag.deposited_mass = deposited.value();
    diag.initial_mass = initial.value();
}

} // namespace

// ---------------------------------------------------------------------------
// stretched_stats
// ---------------------------------------------------------------------------

StretchedStats stretched_stats(const WeightedCloud& cloud, const StretchFrame& frame, double depth,
                               double window) {
    const int n = cloud.dim;
    const int m = n - 1;
    if (frame.dim != n) throw config_error("stretched_stats: dimension mismatch");

    StretchedStats st;
    st.mean_X.assign(m, 0.0);
    st.mean_V.assign(m, 0.0);
    KahanSum mass;
    std::vector<KahanSum> sx(m), sv(m);
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const double xn = cloud.pos[i * n + n - 1];
        if (std::abs(xn - depth) >= window) continue;
        const double w = cloud.weight[i];
        mass.add(w);
        const double denom = 1.0 + cloud.dir[i * n + n - 1];
        if (denom <= kSouthPoleTol) continue;
        for (int d = 0; d < m; ++d) {
            const double X = (cloud.pos[i * n + d] - frame.anchor[d]) / (2.0 * frame.epsilon);
            const double V = cloud.dir[i * n + d] / denom / frame.epsilon;
            sx[d].add(w * X);
            sv[d].add(w * V);
        }
        ++st.count;
    }
    st.mass = mass.value();
    if (st.count == 0 || !(st.mass > 0.0))
        throw empty_window_error("stretched_stats: no atoms in depth window");
    for (int d = 0; d < m; ++d) {
        st.mean_X[d] = sx[d].value() / st.mass;
        st.mean_V[d] = sv[d].value() / st.mass;
    }
    KahanSum vx, vv, cxv;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const double xn = cloud.pos[i * n + n - 1];
        if (std::abs(xn - depth) >= window) continue;
        const double w = cloud.weight[i];
        const double denom = 1.0 + cloud.dir[i * n + n - 1];
        if (denom <= kSouthPoleTol) continue;
        for (int d = 0; d < m; ++d) {
            const double X =
                (cloud.pos[i * n + d] - frame.anchor[d]) / (2.0 * frame.epsilon) - st.mean_X[d];
            const double V = cloud.dir[i * n + d] / denom / frame.epsilon - st.mean_V[d];
            vx.add(w * X * X);
            vv.add(w * V * V);
            cxv.add(w * X * V);
        }
    }
    // averaged over the transverse dimensions
    st.var_X = vx.value() / st.mass / m;
    st.var_V = vv.value() / st.mass / m;
    st.cov_XV = cxv.value() / st.mass / m;
    return st;
}

} // namespace narrowbeam
