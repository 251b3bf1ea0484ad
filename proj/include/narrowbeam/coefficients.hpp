#pragma once

#include <functional>
#include <memory>

#include "narrowbeam/common.hpp"
#include "narrowbeam/geometry.hpp"

namespace narrowbeam {

enum class Smoothness { C0, C1, C2, C3 };

// Scalar coefficient field on the closed half-space with certified positive
// bounds (sigma or lambda of the transport models). Built-in profiles are
// constant, affine in x^n, and a smooth bump; arbitrary fields enter through
// a callback whose claimed bounds are spot-checked on a sample grid.
// Evaluators must be reentrant: fields are shared across batches.
class CoefficientField {
  public:
    enum class Kind { Constant, AffineDepth, Bump, Callback };

    static CoefficientField constant(double value);
    // value(x) = base + slope * x^n; requires positivity on [0, depth_max].
    static CoefficientField affine_depth(double base, double slope, double depth_max = 100.0);
    // value(x) = base + amp * exp(-|x - x0|^2 / width^2), amp > -base.
    static CoefficientField bump(double base, double amp, double width, Vec center);
    static CoefficientField callback(std::function<double(const Vec&)> f, double lower,
                                     double upper, Smoothness tag,
                                     const std::vector<Vec>& check_points = {});

    double operator()(const Vec& x) const;
    double lower_bound() const { return lower_; }
    double upper_bound() const { return upper_; }
    Smoothness smoothness() const { return tag_; }
    Kind kind() const { return kind_; }

    // Parameter access for the fast simulation paths.
    double const_value() const { return p0_; }
    double affine_base() const { return p0_; }
    double affine_slope() const { return p1_; }
    double bump_base() const { return p0_; }
    double bump_amp() const { return p1_; }
    double bump_width() const { return p2_; }
    const Vec& bump_center() const { return center_; }

  private:
    CoefficientField() = default;
    Kind kind_ = Kind::Constant;
    double p0_ = 1.0, p1_ = 0.0, p2_ = 1.0;
    Vec center_;
    std::function<double(const Vec&)> fn_;
    double lower_ = 1.0, upper_ = 1.0;
    Smoothness tag_ = Smoothness::C3;
};

// 1-D restriction of a field to a ray: profile(t) = scale * field(origin + t dir).
// scale is 1/4 for sigma and 1 for lambda (the pencil-beam rescaling).
class RayProfile {
  public:
    enum class Kind { Constant, Affine, Generic };

    RayProfile() = default;
    double operator()(double t) const;
    Kind kind() const { return kind_; }
    double lower_bound() const { return lower_; }
    double c0() const { return c0_; }
    double c1() const { return c1_; }

    static RayProfile constant(double value);
    static RayProfile affine(double c0, double c1);

  private:
    friend RayProfile restrict_to_ray(const CoefficientField&, const Vec&, const Direction&,
                                      double);
    Kind kind_ = Kind::Constant;
    double c0_ = 1.0, c1_ = 0.0;
    std::function<double(double)> fn_;
    double lower_ = 1.0;
};

RayProfile restrict_to_ray(const CoefficientField& field, const Vec& origin,
                           const Direction& direction, double scale);

// Fermi-Eyges moments of a profile over [t, Xn]:
//   a = int s^0 prof, b = int s^1 prof, c = int s^2 prof, delta = a c - b^2.
struct MomentTriple {
    double a = 0.0, b = 0.0, c = 0.0;
    double delta = 0.0;
    double Xn = 0.0;
    double t = 0.0;
};

MomentTriple fermi_moments(const RayProfile& profile, double Xn, double t = 0.0);

// Same moments but with the depth variable shifted to start at `t`:
//   a = int_t^Xn prof, b = int_t^Xn (s-t) prof, c = int_t^Xn (s-t)^2 prof.
// (This is the kernel parameterization of the backward solution.)
MomentTriple fermi_moments_shifted(const RayProfile& profile, double Xn, double t);

struct AttenuationValue {
    double value = 1.0; // exp(-int lambda) in (0, 1]
    double from_t = 0.0;
    double to_t = 0.0;
};

// int_{from}^{to} profile(s) ds (exact for constant/affine profiles).
double profile_integral(const RayProfile& profile, double from_t, double to_t);
AttenuationValue attenuation(const RayProfile& lambda_profile, double from_t, double to_t);

// I_k = int |t|^k exp(-alpha t^2 + 2 beta t) dt. Closed form for k = 0, 2;
// for k = 1, 3 the returned value is the erf-free upper bound (is_bound set).
struct LineMoment {
    double value = 0.0;
    bool is_bound = false;
};

LineMoment gaussian_line_moment(int k, double alpha, double beta);

} // namespace narrowbeam
