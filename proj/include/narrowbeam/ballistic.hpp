#pragma once

#include <functional>

#include "narrowbeam/cloud.hpp"
#include "narrowbeam/coefficients.hpp"
#include "narrowbeam/common.hpp"
#include "narrowbeam/geometry.hpp"

namespace narrowbeam {

// Zero-diffusion transport: attenuated streaming along straight rays.

// Backward exit time to the boundary x^n = 0; requires theta_n > 0.
double exit_time(const PhasePoint& p);

// v(x,theta) = exp(-int_0^{tau} lambda(x - s theta) ds) g(x - tau theta, theta)
// for an L1 boundary source g given as a callable on (boundary point, theta).
using BoundarySource = std::function<double(const Vec&, const Direction&)>;
double ballistic_eval(const BoundarySource& g, const CoefficientField& lambda,
                      const PhasePoint& p);

// Discretization of the singular ray measure generated by a delta source:
// midpoint atoms along {origin + t eta}.
struct RayMeasureSpec {
    Vec origin;          // boundary point (y', 0)
    Direction direction; // eta, incoming (eta_n > 0)
    RayProfile lambda_profile;
    double dt = 0.01;
    double t_max = 10.0;
    double mass = 1.0;

    RayMeasureSpec(Vec origin_, Direction dir, RayProfile lambda, double dt_, double t_max_,
                   double mass_ = 1.0);
};

WeightedCloud ray_measure_sample(const RayMeasureSpec& spec);

} // namespace narrowbeam
