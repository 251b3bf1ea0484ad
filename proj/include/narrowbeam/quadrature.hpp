#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <vector>

#include "narrowbeam/common.hpp"

namespace narrowbeam {

// ---------------------------------------------------------------------------
// Adaptive Gauss-Kronrod (G7,K15) quadrature.
//
// The vector-valued form integrates several weights of the same profile in a
// single pass (used for the (a,b,c) moment triple, whose relative accuracy
// must reach 1e-12 because the values end up in kernel exponents).
// ---------------------------------------------------------------------------

struct QuadResult {
    double value = 0.0;
    double abs_error = 0.0;
    int subdivisions = 0;
};

QuadResult integrate_adaptive(const std::function<double(double)>& f, double a, double b,
                              double rel_tol = 1e-12, double abs_tol = 0.0, int max_depth = 48);

// Integrates f(t) * t^k for k = 0..(nout-1) simultaneously; out must have
// room for nout values. Shared subdivision, error controlled per component.
void integrate_adaptive_moments(const std::function<double(double)>& f, double a, double b,
                                int nout, double* out, double rel_tol = 1e-12, int max_depth = 48);

// ---------------------------------------------------------------------------
// Fixed-order nodes.  gauss_legendre returns nodes/weights on [-1,1];
// gauss_hermite_prob returns nodes/weights for expectations against the
// standard normal density: E[f(Z)] ~ sum w_i f(x_i).
// ---------------------------------------------------------------------------

struct Quad1D {
    std::vector<double> x;
    std::vector<double> w;
};

const Quad1D& gauss_legendre(int order);
const Quad1D& gauss_hermite_prob(int order);

// GL nodes mapped onto [a,b].
inline Quad1D gauss_legendre_on(int order, double a, double b) {
    const Quad1D& q = gauss_legendre(order);
    Quad1D out;
    out.x.resize(q.x.size());
    out.w.resize(q.w.size());
    const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
    for (std::size_t i = 0; i < q.x.size(); ++i) {
        out.x[i] = mid + half * q.x[i];
        out.w[i] = half * q.w[i];
    }
    return out;
}

// ---------------------------------------------------------------------------
// Normal distribution helpers
// ---------------------------------------------------------------------------

// Standard normal CDF.
double norm_cdf(double x);

// P(X < h, Y < k) for standard bivariate normal with correlation rho.
double bvn_cdf(double h, double k, double rho);

// P(a1 < X < b1, a2 < Y < b2) for a correlated bivariate normal with the
// given means/variances/covariance.
double bvn_rect_prob(double a1, double b1, double a2, double b2, double mean1, double mean2,
                     double var1, double var2, double cov);

} // namespace narrowbeam
