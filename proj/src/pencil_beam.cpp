#include "narrowbeam/pencil_beam.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "narrowbeam/quadrature.hpp"
#include "narrowbeam/simd/lane.hpp"
#include "narrowbeam/simd/philox.hpp"

namespace narrowbeam {

KernelParams kernel_params(const MomentTriple& m, int dim) {
    if (!(m.delta > 1e-300)) throw degenerate_depth_error("kernel_params: delta ~ 0");
    KernelParams k;
    k.alpha = m.a / (4.0 * m.delta);
    k.beta = m.b / (4.0 * m.delta);
    k.gamma = m.c / (4.0 * m.delta);
    k.delta = m.delta;
    k.dim = dim;
    return k;
}

double h_kernel_eval(const KernelParams& k, const Vec& Xp, const Vec& V) {
    if (Xp.size() != V.size() || static_cast<int>(Xp.size()) != k.dim - 1)
        throw config_error("h_kernel_eval: dimension mismatch");
    double q = 0.0;
    for (std::size_t i = 0; i < Xp.size(); ++i)
        q += k.alpha * Xp[i] * Xp[i] + 2.0 * k.beta * Xp[i] * V[i] + k.gamma * V[i] * V[i];
    const double norm = std::pow(4.0 * M_PI * std::sqrt(k.delta), k.dim - 1);
    return std::exp(-q) / norm;
}

PencilBeamSpec PencilBeamSpec::make(StretchFrame frame, Direction eta,
                                    const CoefficientField& sigma, const CoefficientField& lambda,
                                    double c_src, double mass) {
    if (eta.dim() != frame.dim) throw config_error("PencilBeamSpec: dimension mismatch");
    Vec n_minus_eta(eta.dim());
    for (int d = 0; d < eta.dim(); ++d)
        n_minus_eta[d] = (d == eta.dim() - 1 ? 1.0 : 0.0) - eta[d];
    const double dist = norm(n_minus_eta);
    if (dist > c_src * frame.epsilon * frame.epsilon)
        throw source_support_error("PencilBeamSpec: |N - eta| exceeds the eps^2 cone");

    Vec origin(frame.dim, 0.0);
    for (int d = 0; d < frame.dim - 1; ++d) origin[d] = frame.anchor[d];

    PencilBeamSpec spec{std::move(frame), eta, {}, {}, {}, mass};
    Vec s = stereo_project(eta);
    for (double& v : s) v /= spec.frame.epsilon;
    spec.Theta = std::move(s);
    spec.sigma_profile = restrict_to_ray(sigma, origin, eta, 0.25);
    spec.lambda_profile = restrict_to_ray(lambda, origin, eta, 1.0);
    return spec;
}

double pencil_eval(const PencilBeamSpec& spec, const StretchedPoint& s) {
    if (!(s.Xn > 0.0))
        throw degenerate_depth_error("pencil_eval: the boundary value is a delta, not a function");
    const int m = spec.frame.dim - 1;
    if (static_cast<int>(s.Xp.size()) != m) throw config_error("pencil_eval: dimension mismatch");
    const MomentTriple mom = fermi_moments(spec.sigma_profile, s.Xn, 0.0);
    const KernelParams k = kernel_params(mom, spec.frame.dim);
    Vec y(m), w(m);
    for (int d = 0; d < m; ++d) {
        y[d] = s.Xp[d] - s.Xn * s.V[d];
        w[d] = s.V[d] - spec.Theta[d];
    }
    const double att = attenuation(spec.lambda_profile, 0.0, s.Xn).value;
    return spec.source_mass * att * h_kernel_eval(k, y, w);
}

GaussianCovariance pencil_cov(const PencilBeamSpec& spec, double Xn) {
    if (!(Xn > 0.0)) throw degenerate_depth_error("pencil_cov: need Xn > 0");
    const MomentTriple m = fermi_moments(spec.sigma_profile, Xn, 0.0);
    GaussianCovariance c;
    c.var_V = 2.0 * m.a;
    c.var_X = 2.0 * m.c + 2.0 * Xn * Xn * m.a - 4.0 * Xn * m.b;
    c.cov_XV = -2.0 * m.b + 2.0 * Xn * m.a;
    const int md = spec.frame.dim - 1;
    c.mean_X.resize(md);
    c.mean_V.resize(md);
    for (int d = 0; d < md; ++d) {
        c.mean_X[d] = Xn * spec.Theta[d];
        c.mean_V[d] = spec.Theta[d];
    }
    return c;
}

// ---------------------------------------------------------------------------
// Convolution quadrature helpers
// ---------------------------------------------------------------------------

namespace {

// Lower Cholesky of the centered kernel covariance per transverse axis,
// ordered (X-slot, V-slot): [[2c, -2b], [-2b, 2a]].
struct Chol2 {
    double l11, l21, l22;
};

Chol2 kernel_chol(const MomentTriple& m) {
    Chol2 c;
    c.l11 = std::sqrt(2.0 * m.c);
    if (!(c.l11 > 0.0)) {
        return {0.0, 0.0, 0.0};
    }
    c.l21 = -2.0 * m.b / c.l11;
    const double rest = 2.0 * m.a - c.l21 * c.l21;
    c.l22 = std::sqrt(std::max(0.0, rest));
    return c;
}

// Tensor GH expectation of f(Y, W) over the centered kernel Gaussian with
// the given per-axis Cholesky (axes independent and identical).
template <class F>
double gh_expect(const Chol2& ch, int axes, int order, F&& f) {
    const Quad1D& gh = gauss_hermite_prob(order);
    const int nn = order;
    Vec y(axes), w(axes);
    // odometer over 2*axes indices
    std::vector<int> idx(2 * axes, 0);
    double total = 0.0;
    for (;;) {
        double wgt = 1.0;
        for (int a = 0; a < axes; ++a) {
            const double u = gh.x[idx[2 * a]];
            const double v = gh.x[idx[2 * a + 1]];
            wgt *= gh.w[idx[2 * a]] * gh.w[idx[2 * a + 1]];
            y[a] = ch.l11 * u;
            w[a] = ch.l21 * u + ch.l22 * v;
        }
        total += wgt * f(y, w);
        int k = 0;
        for (; k < 2 * axes; ++k) {
            if (++idx[k] < nn) break;
            idx[k] = 0;
        }
        if (k == 2 * axes) break;
    }
    return total;
}

} // namespace

double forward_solve_eval(const PencilBeamSpec& spec, const BoxedFunction* F,
                          const StretchedPoint& s, const PencilQuadOptions& opt) {
    double value = pencil_eval(spec, s);
    if (!F || !F->f) return value;

    const int axes = spec.frame.dim - 1;
    const double t_lo = std::max(0.0, F->Xn_lo);
    const double t_hi = std::min(s.Xn, F->Xn_hi);
    if (t_hi <= t_lo) return value;

    Vec fx(axes), fv(axes);
    auto integrand = [&](double t) {
        const MomentTriple m2 = fermi_moments(spec.sigma_profile, s.Xn, t);
        const Chol2 ch = kernel_chol(m2);
        const double att = attenuation(spec.lambda_profile, t, s.Xn).value;
        const double conv = gh_expect(ch, axes, opt.gh_order, [&](const Vec& y, const Vec& w) {
            for (int d = 0; d < axes; ++d) {
                fx[d] = s.Xp[d] - (s.Xn - t) * s.V[d] - y[d] - t * w[d];
                fv[d] = s.V[d] - w[d];
            }
            return F->f(fx, t, fv);
        });
        return att * conv;
    };
    value += integrate_adaptive(integrand, t_lo, t_hi, opt.rel_tol, 0.0, 24).value;
    return value;
}

double backward_eval(const PencilBeamSpec& spec, const BoxedFunction& psi, const StretchedPoint& s,
                     const PencilQuadOptions& opt) {
    if (!psi.f) return 0.0;
    const int axes = spec.frame.dim - 1;
    const double t_lo = std::max(s.Xn, psi.Xn_lo);
    const double t_hi = psi.Xn_hi;
    if (t_hi <= t_lo) return 0.0;

    Vec fx(axes), fv(axes);
    auto integrand = [&](double t) {
        const MomentTriple m3 = fermi_moments_shifted(spec.sigma_profile, t, s.Xn);
        const Chol2 ch = kernel_chol(m3);
        const double att = attenuation(spec.lambda_profile, s.Xn, t).value;
        const double conv = gh_expect(ch, axes, opt.gh_order, [&](const Vec& y, const Vec& w) {
            for (int d = 0; d < axes; ++d) {
                fv[d] = s.V[d] - w[d];
                fx[d] = s.Xp[d] - y[d] + (t - s.Xn) * fv[d];
            }
            return psi.f(fx, t, fv);
        });
        return att * conv;
    };
    return integrate_adaptive(integrand, t_lo, t_hi, opt.rel_tol, 0.0, 24).value;
}

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

WeightedCloud pencil_sample(const PencilBeamSpec& spec, std::int64_t n_samples,
                            const Vec& depth_grid, std::uint64_t seed) {
    using L = simd::Lane<simd::ScalarTag>;
    using PH = simd::Philox<simd::ScalarTag>;
    if (n_samples < 1) throw config_error("pencil_sample: need n_samples >= 1");
    if (depth_grid.empty() || depth_grid.front() <= 0.0)
        throw config_error("pencil_sample: depth grid must start above 0");
    for (std::size_t i = 1; i < depth_grid.size(); ++i)
        if (depth_grid[i] <= depth_grid[i - 1])
            throw config_error("pencil_sample: depth grid must increase");

    const int n = spec.frame.dim;
    const int axes = n - 1;
    WeightedCloud cloud;
    cloud.dim = n;
    cloud.epsilon = spec.frame.epsilon;
    cloud.seed = seed;
    cloud.reserve(depth_grid.size() * static_cast<std::size_t>(n_samples));

    KahanSum total;
    Vec xp(axes), vv(axes);
    for (std::size_t k = 0; k < depth_grid.size(); ++k) {
        const double T = depth_grid[k];
        // trapezoidal depth weights
        double dT;
        if (depth_grid.size() == 1)
            dT = depth_grid[0];
        else if (k == 0)
            dT = 0.5 * (depth_grid[1] - depth_grid[0]);
        else if (k + 1 == depth_grid.size())
            dT = 0.5 * (depth_grid[k] - depth_grid[k - 1]);
        else
            dT = 0.5 * (depth_grid[k + 1] - depth_grid[k - 1]);

        const double att = attenuation(spec.lambda_profile, 0.0, T).value;
        const double w_slice = spec.source_mass * att * dT / double(n_samples);
        const GaussianCovariance cov = pencil_cov(spec, T);
        const double sd_v = std::sqrt(cov.var_V);
        const double slope = cov.cov_XV / cov.var_V;
        const double sd_x_cond = std::sqrt(std::max(0.0, cov.var_X - slope * cov.cov_XV));

        for (std::int64_t i = 0; i < n_samples; ++i) {
            const std::uint64_t atom = static_cast<std::uint64_t>(k) * n_samples + i;
            double v2 = 0.0;
            for (int a = 0; a < axes; a += 1) {
                L::vd z0{}, z1{};
                PH::gaussian_pair(L::uset(atom), 0, static_cast<std::uint32_t>(a), seed, z0, z1);
                const double V = spec.Theta[a] + sd_v * z0.x;
                const double X = T * spec.Theta[a] + slope * (V - spec.Theta[a]) + sd_x_cond * z1.x;
                vv[a] = V;
                xp[a] = X;
                v2 += V * V;
            }
            // macroscopic pushforward carries the chart volume factor
            const double jac =
                std::pow(1.0 + spec.frame.epsilon * spec.frame.epsilon * v2, -(n - 1));
            const PhasePoint p = from_stretched(spec.frame, StretchedPoint(xp, T, vv));
            const double w = w_slice * jac;
            cloud.push(p.x.data(), p.theta.components().data(), w);
            total.add(w);
        }
    }

    cloud.diag.deposited_mass = total.value();
    cloud.diag.initial_mass = spec.source_mass;
    const double t_last = depth_grid.back();
    const double tail = attenuation(spec.lambda_profile, 0.0, t_last).value /
                        std::max(1e-300, spec.lambda_profile.lower_bound());
    const double head = depth_grid.front(); // attenuation <= 1 on [0, T0]
    cloud.diag.truncation_mass = spec.source_mass * (tail + head);
    return cloud;
}

WeightedCloud superpose_sample(const std::vector<SourceAtom>& g, double epsilon,
                               std::int64_t n_samples, const Vec& depth_grid, std::uint64_t seed,
                               const CoefficientField& sigma, const CoefficientField& lambda,
                               double c_src) {
    if (g.empty()) throw config_error("superpose_sample: empty source");
    const int n = g.front().eta.dim();
    double mass = 0.0;
    for (const auto& a : g) {
        if (a.eta.dim() != n || static_cast<int>(a.y.size()) != n)
            throw config_error("superpose_sample: dimension mismatch");
        mass += a.mass;
    }
    if (!(mass > 0.0)) throw config_error("superpose_sample: source has no mass");

    // per-atom sample counts by largest remainder
    std::vector<std::int64_t> alloc(g.size());
    std::vector<std::pair<double, std::size_t>> rem(g.size());
    std::int64_t used = 0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        const double exact = double(n_samples) * g[i].mass / mass;
        alloc[i] = static_cast<std::int64_t>(exact);
        rem[i] = {exact - double(alloc[i]), i};
        used += alloc[i];
    }
    std::sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    for (std::int64_t k = 0; used < n_samples; ++k, ++used) alloc[rem[k % rem.size()].second] += 1;

    WeightedCloud out;
    out.dim = n;
    out.epsilon = epsilon;
    out.seed = seed;
    KahanSum total, trunc;
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (alloc[i] == 0) continue;
        Vec anchor(g[i].y.begin(), g[i].y.end() - 1);
        StretchFrame frame(epsilon, std::move(anchor), n);
        PencilBeamSpec spec =
            PencilBeamSpec::make(std::move(frame), g[i].eta, sigma, lambda, c_src, g[i].mass);
        // atom 0 keeps the caller's seed, so a single-atom source reproduces
        // pencil_sample exactly; further atoms get derived substreams
        const std::uint64_t sub_seed =
            i == 0 ? seed : splitmix64(seed ^ (0x517cc1b727220a95ull + i));
        WeightedCloud part = pencil_sample(spec, alloc[i], depth_grid, sub_seed);
        out.pos.insert(out.pos.end(), part.pos.begin(), part.pos.end());
        out.dir.insert(out.dir.end(), part.dir.begin(), part.dir.end());
        out.weight.insert(out.weight.end(), part.weight.begin(), part.weight.end());
        total.add(part.diag.deposited_mass);
        trunc.add(part.diag.truncation_mass);
    }
    out.diag.deposited_mass = total.value();
    out.diag.truncation_mass = trunc.value();
    out.diag.initial_mass = mass;
    return out;
}

// ---------------------------------------------------------------------------
// Lemma-type weighted L1 norms of kernel derivatives
// ---------------------------------------------------------------------------

namespace {

// Dense 2-variable polynomial, used for the Hermite factors of Gaussian
// derivatives: d^a_y d^b_w e^{-Q} = P_{a,b}(y,w) e^{-Q}.
struct Poly2 {
    static constexpr int N = 8;
    std::array<double, N * N> c{};
    double& at(int i, int j) { return c[i * N + j]; }
    double get(int i, int j) const { return c[i * N + j]; }

    double eval(double y, double w) const {
        double total = 0.0;
        for (int i = N - 1; i >= 0; --i) {
            double row = 0.0;
            for (int j = N - 1; j >= 0; --j) row = row * w + get(i, j);
            total = total * y + row;
        }
        return total;
    }
};

// dP/dy - (2 alpha y + 2 beta w) P  and the w-analogue.
Poly2 hermite_step(const Poly2& p, double alpha, double beta, double gamma, bool in_y) {
    Poly2 r;
    for (int i = 0; i < Poly2::N; ++i)
        for (int j = 0; j < Poly2::N; ++j) {
            const double v = p.get(i, j);
            if (v == 0.0) continue;
            if (in_y) {
                if (i + 1 < Poly2::N) r.at(i + 1, j) -= 2.0 * alpha * v;
                if (j + 1 < Poly2::N) r.at(i, j + 1) -= 2.0 * beta * v;
                if (i >= 1) r.at(i - 1, j) += i * v;
            } else {
                if (i + 1 < Poly2::N) r.at(i + 1, j) -= 2.0 * beta * v;
                if (j + 1 < Poly2::N) r.at(i, j + 1) -= 2.0 * gamma * v;
                if (j >= 1) r.at(i, j - 1) += j * v;
            }
        }
    return r;
}

double binom(int n, int k) {
    double r = 1.0;
    for (int i = 0; i < k; ++i) r = r * double(n - i) / double(i + 1);
    return r;
}

} // namespace

double moment_integral(const PencilBeamSpec& spec, int l, int m, const std::vector<int>& p,
                       const std::vector<int>& q, const MomentIntegralOptions& opt) {
    const int axes = spec.frame.dim - 1;
    if (static_cast<int>(p.size()) != axes || static_cast<int>(q.size()) != axes)
        throw config_error("moment_integral: multi-index length must be n-1");
    if (l < 0 || l > 3 || m < 0 || m > 3)
        throw config_error("moment_integral: supported range is l,m in 0..3");
    for (int d = 0; d < axes; ++d)
        if (p[d] < 0 || p[d] > 2 || q[d] < 0 || q[d] > 2)
            throw config_error("moment_integral: supported range is |p|,|q| componentwise 0..2");
    if (opt.axis_i >= axes || opt.axis_j >= axes)
        throw config_error("moment_integral: weight axis out of range");

    const double lam0 = spec.lambda_profile.lower_bound();
    const double t_top = opt.depth_max > 0.0 ? opt.depth_max : std::log(1e10) / lam0;

    // inner weighted L1 norm at fixed depth, by GH quadrature in whitened
    // kernel coordinates
    auto inner = [&](double Xn, int gh_order) {
        const MomentTriple mom = fermi_moments(spec.sigma_profile, Xn, 0.0);
        const KernelParams kp = kernel_params(mom, spec.frame.dim);
        const Chol2 ch = kernel_chol(mom);

        // per-axis Hermite factor tables P_{a,b} for a <= 4, b <= 2
        std::array<std::array<Poly2, 3>, 5> tab;
        tab[0][0] = Poly2{};
        tab[0][0].at(0, 0) = 1.0;
        for (int a = 0; a < 4; ++a)
            tab[a + 1][0] = hermite_step(tab[a][0], kp.alpha, kp.beta, kp.gamma, true);
        for (int a = 0; a <= 4; ++a)
            for (int b = 0; b < 2; ++b)
                tab[a][b + 1] = hermite_step(tab[a][b], kp.alpha, kp.beta, kp.gamma, false);

        // odometer over qt <= q (componentwise)
        std::vector<int> qt(axes, 0);
        struct Term {
            double coef;
            std::vector<int> a, b;
        };
        std::vector<Term> terms;
        for (;;) {
            Term t;
            t.coef = 1.0;
            int qsum = 0;
            t.a.resize(axes);
            t.b.resize(axes);
            for (int d = 0; d < axes; ++d) {
                t.coef *= binom(q[d], qt[d]);
                qsum += qt[d];
                t.a[d] = p[d] + qt[d];
                t.b[d] = q[d] - qt[d];
            }
            t.coef *= std::pow(-Xn, qsum);
            terms.push_back(std::move(t));
            int k = 0;
            for (; k < axes; ++k) {
                if (++qt[k] <= q[k]) break;
                qt[k] = 0;
            }
            if (k == axes) break;
        }

        return gh_expect(ch, axes, gh_order, [&](const Vec& y, const Vec& w) {
            double sum = 0.0;
            for (const Term& t : terms) {
                double prod = t.coef;
                for (int d = 0; d < axes; ++d) prod *= tab[t.a[d]][t.b[d]].eval(y[d], w[d]);
                sum += prod;
            }
            const double wx = std::pow(std::abs(y[opt.axis_i] + Xn * w[opt.axis_i]), l);
            const double wv = std::pow(std::abs(w[opt.axis_j] + spec.Theta[opt.axis_j]), m);
            return wx * wv * std::abs(sum);
        });
    };

    auto depth_integral = [&](int cells, double t_min, int gh_order) {
        // geometric mesh from t_min to t_top, GL-8 per cell
        const double ratio = std::pow(t_top / t_min, 1.0 / cells);
        KahanSum total;
        double lo = t_min;
        for (int c = 0; c < cells; ++c) {
            const double hi = (c + 1 == cells) ? t_top : lo * ratio;
            const Quad1D gl = gauss_legendre_on(8, lo, hi);
            for (std::size_t i = 0; i < gl.x.size(); ++i) {
                const double att = attenuation(spec.lambda_profile, 0.0, gl.x[i]).value;
                total.add(gl.w[i] * att * inner(gl.x[i], gh_order));
            }
            lo = hi;
        }
        return total.value();
    };

    const double coarse = depth_integral(opt.depth_cells, t_top * 1e-6, opt.gh_order);
    const double fine = depth_integral(2 * opt.depth_cells, t_top * 1e-8, opt.gh_order);
    if (opt.check_convergence) {
        const double denom = std::max(std::abs(fine), 1e-300);
        if (std::abs(fine - coarse) / denom > opt.refine_tol)
            throw nonconvergent_error("moment_integral: depth-mesh refinement does not settle");
    }
    return fine;
}

} // namespace narrowbeam
