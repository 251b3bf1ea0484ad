#include "narrowbeam/ballistic.hpp"

#include <cmath>

#include "narrowbeam/simd/lane.hpp"
#include "narrowbeam/simd/vmath.hpp"

namespace narrowbeam {

double exit_time(const PhasePoint& p) {
    const double tn = p.theta.last();
    if (!(tn > 0.0)) throw no_exit_error("exit_time: backward ray never meets the boundary");
    return p.x.back() / tn;
}

double ballistic_eval(const BoundarySource& g, const CoefficientField& lambda,
                      const PhasePoint& p) {
    const double tau = exit_time(p);
    Vec xb(p.dim());
    for (int d = 0; d < p.dim(); ++d) xb[d] = p.x[d] - tau * p.theta[d];
    xb.back() = 0.0; // exact boundary point
    const RayProfile prof = restrict_to_ray(lambda, xb, p.theta, 1.0);
    const double line = profile_integral(prof, 0.0, tau);
    return std::exp(-line) * g(xb, p.theta);
}

RayMeasureSpec::RayMeasureSpec(Vec origin_, Direction dir, RayProfile lambda, double dt_,
                               double t_max_, double mass_)
    : origin(std::move(origin_)),
      direction(std::move(dir)),
      lambda_profile(std::move(lambda)),
      dt(dt_),
      t_max(t_max_),
      mass(mass_) {
    if (!(direction.last() > 0.0)) throw config_error("RayMeasureSpec: direction must be incoming");
    if (!(dt > 0.0) || !(t_max > 0.0)) throw config_error("RayMeasureSpec: need dt, t_max > 0");
    if (origin.back() != 0.0) throw config_error("RayMeasureSpec: origin must sit on x^n = 0");
}

WeightedCloud ray_measure_sample(const RayMeasureSpec& spec) {
    const int n = spec.direction.dim();
    WeightedCloud cloud;
    cloud.dim = n;
    const int n_atoms = static_cast<int>(std::ceil(spec.t_max / spec.dt - 1e-9));
    cloud.reserve(n_atoms);

    const double hdt = 0.5 * spec.dt;
    Vec pos = spec.origin;
    const Vec& eta = spec.direction.components();

    if (spec.lambda_profile.kind() == RayProfile::Kind::Constant) {
        // Same update and exp sequences as the particle stepper at
        // epsilon = 0 with jitter off, so the two agree bitwise.
        using L = simd::Lane<simd::ScalarTag>;
        const double lam0 = spec.lambda_profile.c0();
        const double aw = std::exp(-lam0 * spec.dt);
        const double ah = simd::VMath<simd::ScalarTag>::exp(
                              L::dset(lam0 * (0.5 * -spec.dt)))
                              .x;
        double w = spec.mass;
        for (int k = 0; k < n_atoms; ++k) {
            for (int d = 0; d < n; ++d) pos[d] = std::fma(eta[d], hdt, pos[d]);
            cloud.push(pos.data(), eta.data(), w * ah * spec.dt);
            w *= aw;
            for (int d = 0; d < n; ++d) pos[d] = std::fma(eta[d], hdt, pos[d]);
        }
    } else {
        for (int k = 0; k < n_atoms; ++k) {
            const double tk = (k + 0.5) * spec.dt;
            for (int d = 0; d < n; ++d) pos[d] = spec.origin[d] + tk * eta[d];
            const double line = profile_integral(spec.lambda_profile, 0.0, tk);
            cloud.push(pos.data(), eta.data(), spec.mass * std::exp(-line) * spec.dt);
        }
    }

    cloud.diag.deposited_mass = cloud.total_mass();
    cloud.diag.initial_mass = spec.mass;
    // tail bound: remaining line mass past t_max
    const double tail_att = std::exp(-profile_integral(spec.lambda_profile, 0.0, spec.t_max));
    cloud.diag.truncation_mass = spec.mass * tail_att / spec.lambda_profile.lower_bound();
    return cloud;
}

} // namespace narrowbeam
