#include "narrowbeam/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>

namespace narrowbeam {

namespace {

// (G7,K15) node/weight pairs on [-1,1]; Kronrod nodes, Kronrod weights and
// the embedded Gauss weights (zero where the node is Kronrod-only).
constexpr std::array<double, 15> kKronrodX = {
    -0.991455371120812639206854697526329, -0.949107912342758524526189684047851,
    -0.864864423359769072789712788640926, -0.741531185599394439863864773280788,
    -0.586087235467691130294144838258730, -0.405845151377397166906606412076961,
    -0.207784955007898467600689403773245, 0.0,
    0.207784955007898467600689403773245,  0.405845151377397166906606412076961,
    0.586087235467691130294144838258730,  0.741531185599394439863864773280788,
    0.864864423359769072789712788640926,  0.949107912342758524526189684047851,
    0.991455371120812639206854697526329};

constexpr std::array<double, 15> kKronrodW = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714,
    0.204432940075298892414161999234649, 0.190350578064785409913256402421014,
    0.169004726639267902826583426598550, 0.140653259715525918745189590510238,
    0.104790010322250183839876322541518, 0.063092092629978553290700663189204,
    0.022935322010529224963732008058970};

constexpr std::array<double, 15> kGaussW = {
    0.0, 0.129484966168869693270611432679082,
    0.0, 0.279705391489276667901467771423780,
    0.0, 0.381830050505118944950369775488975,
    0.0, 0.417959183673469387755102040816327,
    0.0, 0.381830050505118944950369775488975,
    0.0, 0.279705391489276667901467771423780,
    0.0, 0.129484966168869693270611432679082};

struct GK15 {
    double value;
    double error;
};

GK15 gk15(const std::function<double(double)>& f, double a, double b) {
    const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
    double resk = 0.0, resg = 0.0;
    for (int i = 0; i < 15; ++i) {
        const double v = f(mid + half * kKronrodX[i]);
        resk += kKronrodW[i] * v;
        resg += kGaussW[i] * v;
    }
    GK15 r;
    r.value = resk * half;
    r.error = std::abs((resk - resg) * half);
    return r;
}

} // namespace

QuadResult integrate_adaptive(const std::function<double(double)>& f, double a, double b,
                              double rel_tol, double abs_tol, int max_depth) {
    QuadResult res;
    if (a == b) return res;

    struct Seg {
        double a, b, value, error;
        int depth;
    };
    GK15 whole = gk15(f, a, b);
    std::vector<Seg> stack{{a, b, whole.value, whole.error, 0}};
    KahanSum total;
    double total_err = 0.0;
    int splits = 0;

    // Running estimate of the full integral for the relative tolerance.
    double cur_total = std::abs(whole.value);

    while (!stack.empty()) {
        Seg s = stack.back();
        stack.pop_back();
        const double tol = std::max(abs_tol, rel_tol * std::max(cur_total, 1e-300));
        if (s.error <= tol * std::max(1e-16, std::abs(s.b - s.a) / std::abs(b - a)) ||
            s.depth >= max_depth) {
            if (s.depth >= max_depth && s.error > 1e3 * tol)
                throw quadrature_error("integrate_adaptive: tolerance not met at max depth");
            total.add(s.value);
            total_err += s.error;
            continue;
        }
        const double m = 0.5 * (s.a + s.b);
        GK15 l = gk15(f, s.a, m);
        GK15 r = gk15(f, m, s.b);
        cur_total += std::abs(l.value) + std::abs(r.value) - std::abs(s.value);
        stack.push_back({s.a, m, l.value, l.error, s.depth + 1});
        stack.push_back({m, s.b, r.value, r.error, s.depth + 1});
        ++splits;
    }
    res.value = total.value();
    res.abs_error = total_err;
    res.subdivisions = splits;
    return res;
}

void integrate_adaptive_moments(const std::function<double(double)>& f, double a, double b,
                                int nout, double* out, double rel_tol, int max_depth) {
    for (int k = 0; k < nout; ++k) {
        const int kk = k;
        QuadResult r = integrate_adaptive([&](double t) { return f(t) * std::pow(t, kk); }, a, b,
                                          rel_tol, 0.0, max_depth);
        out[k] = r.value;
    }
}

// ---------------------------------------------------------------------------
// Gauss-Legendre / Gauss-Hermite nodes by Newton iteration on the recurrences.
// Cached per order.
// ---------------------------------------------------------------------------

namespace {

Quad1D make_gauss_legendre(int n) {
    Quad1D q;
    q.x.resize(n);
    q.w.resize(n);
    for (int i = 0; i < (n + 1) / 2; ++i) {
        // Initial guess (Chebyshev-like).
        double x = std::cos(M_PI * (i + 0.75) / (n + 0.5));
        double pp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = 0.0;
            for (int j = 0; j < n; ++j) {
                double p2 = p1;
                p1 = p0;
                p0 = ((2.0 * j + 1.0) * x * p1 - j * p2) / (j + 1.0);
            }
            pp = n * (x * p0 - p1) / (x * x - 1.0);
            double dx = p0 / pp;
            x -= dx;
            if (std::abs(dx) < 1e-16) break;
        }
        q.x[i] = -x;
        q.x[n - 1 - i] = x;
        double w = 2.0 / ((1.0 - x * x) * pp * pp);
        q.w[i] = w;
        q.w[n - 1 - i] = w;
    }
    return q;
}

// Probabilists' Hermite: nodes/weights so that sum w_i f(x_i) = E[f(Z)],
// Z ~ N(0,1). Built from physicists' Hermite via x -> sqrt(2) x.
Quad1D make_gauss_hermite_prob(int n) {
    Quad1D q;
    q.x.resize(n);
    q.w.resize(n);
    const double pim4 = 0.7511255444649425; // pi^{-1/4}
    for (int i = 0; i < (n + 1) / 2; ++i) {
        double x;
        if (i == 0)
            x = std::sqrt(2.0 * n + 1.0) - 1.85575 * std::pow(2.0 * n + 1.0, -1.0 / 6.0);
        else if (i == 1)
            x = q.x[0] / std::sqrt(2.0) - 1.14 * std::pow(n, 0.426) / (q.x[0] / std::sqrt(2.0));
        else if (i == 2)
            x = 1.86 * q.x[1] / std::sqrt(2.0) - 0.86 * q.x[0] / std::sqrt(2.0);
        else if (i == 3)
            x = 1.91 * q.x[2] / std::sqrt(2.0) - 0.91 * q.x[1] / std::sqrt(2.0);
        else
            x = 2.0 * q.x[i - 1] / std::sqrt(2.0) - q.x[i - 2] / std::sqrt(2.0);

        double pp = 0.0;
        for (int it = 0; it < 200; ++it) {
            double p1 = pim4, p2 = 0.0;
            for (int j = 0; j < n; ++j) {
                double p3 = p2;
                p2 = p1;
                p1 = x * std::sqrt(2.0 / (j + 1.0)) * p2 - std::sqrt(double(j) / (j + 1.0)) * p3;
            }
            pp = std::sqrt(2.0 * n) * p2;
            double dx = p1 / pp;
            x -= dx;
            if (std::abs(dx) < 1e-15) break;
        }
        // stored in probabilists' convention (x scaled by sqrt(2));
        // i >= 1 initial guesses above divide the scaling back out.
        q.x[i] = x * std::sqrt(2.0);
        q.x[n - 1 - i] = -q.x[i];
        double w = 2.0 / (pp * pp);
        q.w[i] = w;
        q.w[n - 1 - i] = w;
    }
    // Normalize so sum w = 1 exactly, i.e. the rule integrates the density.
    double wsum = 0.0;
    for (int i = 0; i < n; ++i) wsum += q.w[i];
    for (int i = 0; i < n; ++i) q.w[i] /= wsum;
    return q;
}

std::map<int, Quad1D> g_gl_cache;
std::map<int, Quad1D> g_gh_cache;
std::mutex g_quad_mutex;

} // namespace

const Quad1D& gauss_legendre(int order) {
    std::lock_guard<std::mutex> lock(g_quad_mutex);
    auto it = g_gl_cache.find(order);
    if (it == g_gl_cache.end()) it = g_gl_cache.emplace(order, make_gauss_legendre(order)).first;
    return it->second;
}

const Quad1D& gauss_hermite_prob(int order) {
    std::lock_guard<std::mutex> lock(g_quad_mutex);
    auto it = g_gh_cache.find(order);
    if (it == g_gh_cache.end()) it = g_gh_cache.emplace(order, make_gauss_hermite_prob(order)).first;
    return it->second;
}

// ---------------------------------------------------------------------------
// Normal CDFs
// ---------------------------------------------------------------------------

double norm_cdf(double x) { return 0.5 * std::erfc(-x * M_SQRT1_2); }

// Genz-style evaluation of the bivariate normal CDF through the correlation
// integral  Phi2(h,k,r) = Phi(h)Phi(k) + 1/(2pi) int_0^r exp(...) ds,
// with the complementary form for |rho| close to 1.
double bvn_cdf(double h, double k, double rho) {
    if (std::abs(rho) >= 1.0 - 1e-15) {
        if (rho > 0.0) return norm_cdf(std::min(h, k));
        return std::max(0.0, norm_cdf(h) - norm_cdf(-k));
    }
    const Quad1D& gl = gauss_legendre(40);
    if (std::abs(rho) <= 0.925) {
        // int_0^rho exp(-(h^2 - 2 r h k + k^2) / (2(1-r^2))) / sqrt(1-r^2) dr
        const double hk = h * k, hs = 0.5 * (h * h + k * k);
        double s = 0.0;
        for (std::size_t i = 0; i < gl.x.size(); ++i) {
            const double r = 0.5 * rho * (1.0 + gl.x[i]);
            const double omr2 = 1.0 - r * r;
            s += gl.w[i] * std::exp(-(hs - r * hk) / omr2) / std::sqrt(omr2);
        }
        s *= 0.5 * rho / (2.0 * M_PI);
        return norm_cdf(h) * norm_cdf(k) + s;
    }
    // |rho| > 0.925: integrate the complementary representation in
    // s = sqrt(1-r^2) to keep the integrand benign (Drezner & Wesolowsky).
    double hh = h, kk = k;
    if (rho < 0.0) kk = -kk;
    const double hk = hh * kk;
    double bvn = 0.0;
    const double as = 1.0 - rho * rho;
    if (as > 0.0) {
        const double a = std::sqrt(as);
        const double bs = (hh - kk) * (hh - kk);
        const double c = (4.0 - hk) / 8.0;
        const double d = (12.0 - hk) / 16.0;
        const double asr = -(bs / as + hk) / 2.0;
        if (asr > -100.0)
            bvn = a * std::exp(asr) *
                  (1.0 - c * (bs - as) * (1.0 - d * bs / 5.0) / 3.0 + c * d * as * as / 5.0);
        if (-hk < 100.0) {
            const double b = std::sqrt(bs);
            bvn -= std::exp(-hk / 2.0) * std::sqrt(2.0 * M_PI) * norm_cdf(-b / a) * b *
                   (1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0);
        }
        const double a2 = a / 2.0;
        for (std::size_t i = 0; i < gl.x.size(); ++i) {
            const double x = a2 * (gl.x[i] + 1.0);
            const double xs = x * x;
            const double rs = std::sqrt(1.0 - xs);
            const double asr2 = -(bs / xs + hk) / 2.0;
            if (asr2 > -100.0) {
                bvn += a2 * gl.w[i] * std::exp(asr2) *
                       (std::exp(-hk * (1.0 - rs) / (2.0 * (1.0 + rs))) / rs -
                        (1.0 + c * xs * (1.0 + d * xs)));
            }
        }
        bvn = -bvn / (2.0 * M_PI);
    }
    if (rho > 0.0) return bvn + norm_cdf(std::min(hh, kk));
    return std::max(0.0, norm_cdf(hh) - norm_cdf(-kk)) - bvn;
}

double bvn_rect_prob(double a1, double b1, double a2, double b2, double mean1, double mean2,
                     double var1, double var2, double cov) {
    const double s1 = std::sqrt(var1), s2 = std::sqrt(var2);
    if (!(s1 > 0.0) || !(s2 > 0.0)) throw numerical_error("bvn_rect_prob: degenerate covariance");
    double rho = cov / (s1 * s2);
    rho = std::clamp(rho, -1.0, 1.0);
    const double la = (a1 - mean1) / s1, lb = (b1 - mean1) / s1;
    const double lc = (a2 - mean2) / s2, ld = (b2 - mean2) / s2;
    const double p = bvn_cdf(lb, ld, rho) - bvn_cdf(la, ld, rho) - bvn_cdf(lb, lc, rho) +
                     bvn_cdf(la, lc, rho);
    return std::max(0.0, p);
}

} // namespace narrowbeam
