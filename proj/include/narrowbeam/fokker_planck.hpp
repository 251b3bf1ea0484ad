#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "narrowbeam/cloud.hpp"
#include "narrowbeam/coefficients.hpp"
#include "narrowbeam/common.hpp"
#include "narrowbeam/geometry.hpp"
#include "narrowbeam/source.hpp"

namespace narrowbeam {

struct SimConfig {
    double epsilon = 0.1;
    double dt = 0.02;
    std::int64_t n_particles = 100000;
    double t_max = 0.0; // 0: derived from lambda lower bound so the tail is < 1e-6
    std::uint64_t seed = 1;
    int dim = 2;
    int deposit_stride = 0; // 0: derived so the cloud holds ~target_atoms
    std::int64_t target_atoms = 10'000'000;
    // stratified within-step deposit times (kills depth-comb aliasing);
    // disable to reproduce the midpoint ray discretization atom for atom
    bool deposit_jitter = true;

    void validate(const CoefficientField& sigma, const CoefficientField& lambda) const;
    double resolved_t_max(const CoefficientField& lambda) const;
    int resolved_stride(const CoefficientField& lambda) const;
    int n_steps(const CoefficientField& lambda) const;
};

struct SimDiagnostics {
    double initial_mass = 0.0;
    double deposited_mass = 0.0;
    double absorbed_mass = 0.0;
    double backscatter_mass = 0.0;
    double truncation_mass = 0.0;
    std::int64_t n_atoms = 0;
};

// Backend selection for the particle stepper. Auto picks the widest lane the
// CPU supports; the Scalar/Avx2 kernels are bit-identical by construction.
enum class Backend { Auto, Scalar, Avx2 };
Backend resolve_backend(Backend requested);
bool avx2_available();
const char* backend_name(Backend resolved);

// Receives occupation deposits in canonical (particle, step) order.
class DepositSink {
  public:
    virtual ~DepositSink() = default;
    virtual void consume(const double* x, const double* theta, double w) = 0;
};

// Single geodesic Brownian step on S^{n-1}: tangent Gaussian with the given
// per-dimension variance, moved along the great circle. Scalar reference
// (the batch kernels inline the same arithmetic).
Direction sphere_bm_step(const Direction& theta, double variance, std::uint64_t particle,
                         std::uint32_t step, std::uint64_t seed, std::uint32_t draw_base = 0);

// Occupation-measure Monte Carlo for the stationary Fokker-Planck solution:
// particles stream along theta at unit speed, theta diffuses with generator
// eps^2 sigma Laplace_theta, weight decays by the Feynman-Kac factor, exit
// through x^n = 0 is absorbing. Deposits are thinned by deposit_stride.
std::pair<WeightedCloud, SimDiagnostics> simulate_occupation(
    const std::vector<SourceAtom>& source, const CoefficientField& sigma,
    const CoefficientField& lambda, const SimConfig& cfg, Backend backend = Backend::Auto);

// Streaming variant: deposits go to the sink instead of a stored cloud.
SimDiagnostics simulate_occupation_streaming(const std::vector<SourceAtom>& source,
                                             const CoefficientField& sigma,
                                             const CoefficientField& lambda, const SimConfig& cfg,
                                             DepositSink& sink, Backend backend = Backend::Auto);

// Weighted empirical mean/covariance of the stretched (X', V) over atoms in
// a depth window; mirrors GaussianCovariance from the pencil-beam module.
struct StretchedStats {
    Vec mean_X, mean_V;
    double var_X = 0.0, var_V = 0.0, cov_XV = 0.0; // per transverse dimension, averaged
    double mass = 0.0;
    std::int64_t count = 0;
};

StretchedStats stretched_stats(const WeightedCloud& cloud, const StretchFrame& frame, double depth,
                               double window);

} // namespace narrowbeam
