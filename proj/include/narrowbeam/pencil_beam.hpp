#pragma once

#include <functional>

#include "narrowbeam/cloud.hpp"
#include "narrowbeam/coefficients.hpp"
#include "narrowbeam/common.hpp"
#include "narrowbeam/geometry.hpp"
#include "narrowbeam/source.hpp"

namespace narrowbeam {

// Quadratic-form coefficients of the Gaussian beam kernels:
// exp(-(alpha|X'|^2 + 2 beta X'.V + gamma|V|^2)) / (4 pi sqrt(delta))^{n-1}.
struct KernelParams {
    double alpha = 0.0, beta = 0.0, gamma = 0.0;
    double delta = 0.0;
    int dim = 2;
};

// alpha = a/4D, beta = b/4D, gamma = c/4D with D = ac - b^2.
KernelParams kernel_params(const MomentTriple& m, int dim);

double h_kernel_eval(const KernelParams& k, const Vec& Xp, const Vec& V);

// Delta-source pencil beam along the ray from (anchor, 0) in direction eta,
// in the stretched frame. Theta = S(eta)/eps is the angular offset of the
// boundary delta in stretched variables.
struct PencilBeamSpec {
    StretchFrame frame;
    Direction source_dir;
    Vec Theta;
    RayProfile sigma_profile;  // (1/4) sigma along the ray
    RayProfile lambda_profile; // lambda along the ray
    double source_mass = 1.0;

    static PencilBeamSpec make(StretchFrame frame, Direction eta, const CoefficientField& sigma,
                               const CoefficientField& lambda, double c_src = 10.0,
                               double mass = 1.0);
};

// U(X,V) = eta(Xn) H1(X' - Xn V, V - Theta); boundary depth is a delta, so
// Xn <= 0 is a typed error.
double pencil_eval(const PencilBeamSpec& spec, const StretchedPoint& s);

// Depth-resolved second moments of (X', V) under the beam, per transverse
// dimension (the dimensions are independent and identical).
struct GaussianCovariance {
    double var_X = 0.0, var_V = 0.0, cov_XV = 0.0;
    Vec mean_X, mean_V;
};

GaussianCovariance pencil_cov(const PencilBeamSpec& spec, double Xn);

// Continuous compactly supported function of (X', Xn, V) with a declared
// depth support; `lip` is informational (tests use it).
struct BoxedFunction {
    std::function<double(const Vec& Xp, double Xn, const Vec& V)> f;
    double Xn_lo = 0.0, Xn_hi = 0.0;
    double lip = 0.0;
};

struct PencilQuadOptions {
    int gh_order = 24;   // Gauss-Hermite nodes per axis in convolutions
    double rel_tol = 1e-9; // depth-integral tolerance
};

// Full solution formula: delta-source term plus the interior-source term
// (t-integral of H2 convolutions). F may be null for the pure beam.
double forward_solve_eval(const PencilBeamSpec& spec, const BoxedFunction* F,
                          const StretchedPoint& s, const PencilQuadOptions& opt = {});

// Backward solution W driven by Psi, vanishing as Xn -> infinity.
double backward_eval(const PencilBeamSpec& spec, const BoxedFunction& psi,
                     const StretchedPoint& s, const PencilQuadOptions& opt = {});

// Exact Gaussian sampling of the beam on a depth grid: n_samples atoms per
// grid depth, trapezoidal depth weights, mapped to macroscopic phase points.
WeightedCloud pencil_sample(const PencilBeamSpec& spec, std::int64_t n_samples,
                            const Vec& depth_grid, std::uint64_t seed);

// Superposition model for an atomic boundary source: samples allocated to
// atoms proportionally to their masses, each atom sampled as its own beam.
WeightedCloud superpose_sample(const std::vector<SourceAtom>& g, double epsilon,
                               std::int64_t n_samples, const Vec& depth_grid, std::uint64_t seed,
                               const CoefficientField& sigma, const CoefficientField& lambda,
                               double c_src = 10.0);

// L1 norms || |X^i - Xn Theta^i|^l |V^j|^m d^p_{X'} d^q_V U ||; p and q are
// per-axis multi-indices. Converges iff the beam-moment scaling allows it;
// the nonconvergent cases raise after failing the mesh-refinement check.
struct MomentIntegralOptions {
    int axis_i = 0, axis_j = 0;
    double depth_max = 0.0; // 0: derived from the attenuation tail
    int depth_cells = 48;
    int gh_order = 32;
    double refine_tol = 0.01;
    bool check_convergence = true;
};

double moment_integral(const PencilBeamSpec& spec, int l, int m, const std::vector<int>& p,
                       const std::vector<int>& q, const MomentIntegralOptions& opt = {});

} // namespace narrowbeam
