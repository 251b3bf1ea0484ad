#include "narrowbeam/coefficients.hpp"

#include <cmath>

#include "narrowbeam/quadrature.hpp"

namespace narrowbeam {

CoefficientField CoefficientField::constant(double value) {
    if (!(value > 0.0)) throw config_error("CoefficientField: constant must be positive");
    CoefficientField f;
    f.kind_ = Kind::Constant;
    f.p0_ = value;
    f.lower_ = f.upper_ = value;
    f.tag_ = Smoothness::C3;
    return f;
}

CoefficientField CoefficientField::affine_depth(double base, double slope, double depth_max) {
    CoefficientField f;
    f.kind_ = Kind::AffineDepth;
    f.p0_ = base;
    f.p1_ = slope;
    f.lower_ = std::min(base, base + slope * depth_max);
    f.upper_ = std::max(base, base + slope * depth_max);
    if (!(f.lower_ > 0.0))
        throw config_error("CoefficientField: affine profile loses positivity on [0, depth_max]");
    f.tag_ = Smoothness::C3;
    return f;
}

CoefficientField CoefficientField::bump(double base, double amp, double width, Vec center) {
    if (!(width > 0.0)) throw config_error("CoefficientField: bump width must be positive");
    if (!(base > 0.0) || base + std::min(amp, 0.0) <= 0.0)
        throw config_error("CoefficientField: bump loses positivity");
    CoefficientField f;
    f.kind_ = Kind::Bump;
    f.p0_ = base;
    f.p1_ = amp;
    f.p2_ = width;
    f.center_ = std::move(center);
    f.lower_ = base + std::min(amp, 0.0);
    f.upper_ = base + std::max(amp, 0.0);
    f.tag_ = Smoothness::C3;
    return f;
}

CoefficientField CoefficientField::callback(std::function<double(const Vec&)> fn, double lower,
                                            double upper, Smoothness tag,
                                            const std::vector<Vec>& check_points) {
    if (!(lower > 0.0) || upper < lower)
        throw config_error("CoefficientField: need 0 < lower <= upper");
    for (const Vec& x : check_points) {
        const double v = fn(x);
        if (v < lower || v > upper)
            throw config_error("CoefficientField: callback violates claimed bounds at a sample");
    }
    CoefficientField f;
    f.kind_ = Kind::Callback;
    f.fn_ = std::move(fn);
    f.lower_ = lower;
    f.upper_ = upper;
    f.tag_ = tag;
    return f;
}

double CoefficientField::operator()(const Vec& x) const {
    switch (kind_) {
        case Kind::Constant:
            return p0_;
        case Kind::AffineDepth:
            return p0_ + p1_ * x.back();
        case Kind::Bump: {
            double r2 = 0.0;
            for (std::size_t i = 0; i < x.size(); ++i) {
                const double d = x[i] - (i < center_.size() ? center_[i] : 0.0);
                r2 += d * d;
            }
            return p0_ + p1_ * std::exp(-r2 / (p2_ * p2_));
        }
        case Kind::Callback:
            return fn_(x);
    }
    return p0_;
}

RayProfile RayProfile::constant(double value) {
    RayProfile p;
    p.kind_ = Kind::Constant;
    p.c0_ = value;
    p.lower_ = value;
    return p;
}

RayProfile RayProfile::affine(double c0, double c1) {
    RayProfile p;
    p.kind_ = Kind::Affine;
    p.c0_ = c0;
    p.c1_ = c1;
    p.lower_ = c0; // bound at t = 0; callers restrict to t >= 0 rays
    return p;
}

double RayProfile::operator()(double t) const {
    switch (kind_) {
        case Kind::Constant:
            return c0_;
        case Kind::Affine:
            return c0_ + c1_ * t;
        case Kind::Generic:
            return fn_(t);
    }
    return c0_;
}

RayProfile restrict_to_ray(const CoefficientField& field, const Vec& origin,
                           const Direction& direction, double scale) {
    if (origin.back() < 0.0) throw config_error("restrict_to_ray: origin outside half-space");
    if (static_cast<int>(origin.size()) != direction.dim())
        throw config_error("restrict_to_ray: dimension mismatch");

    switch (field.kind()) {
        case CoefficientField::Kind::Constant:
            return RayProfile::constant(scale * field.const_value());
        case CoefficientField::Kind::AffineDepth: {
            // field(origin + t dir) = base + slope*(origin_n + t dir_n)
            const double c0 = scale * (field.affine_base() + field.affine_slope() * origin.back());
            const double c1 = scale * field.affine_slope() * direction.last();
            return RayProfile::affine(c0, c1);
        }
        default:
            break;
    }
    RayProfile p;
    p.kind_ = RayProfile::Kind::Generic;
    Vec o = origin;
    Vec d = direction.components();
    p.fn_ = [field, o, d, scale](double t) {
        Vec x(o.size());
        for (std::size_t i = 0; i < o.size(); ++i) x[i] = o[i] + t * d[i];
        return scale * field(x);
    };
    p.lower_ = scale * field.lower_bound();
    return p;
}

namespace {

// Exact (X^{k+1} - t^{k+1})/(k+1) moment primitives for the fast paths.
double power_int(double t, double Xn, int k) {
    return (std::pow(Xn, k + 1) - std::pow(t, k + 1)) / (k + 1);
}

} // namespace

MomentTriple fermi_moments(const RayProfile& profile, double Xn, double t) {
    if (!(t >= 0.0) || !(Xn >= t)) throw config_error("fermi_moments: need 0 <= t <= Xn");
    MomentTriple m;
    m.Xn = Xn;
    m.t = t;
    if (Xn == t) return m;

    switch (profile.kind()) {
        case RayProfile::Kind::Constant: {
            const double s = profile.c0();
            m.a = s * power_int(t, Xn, 0);
            m.b = s * power_int(t, Xn, 1);
            m.c = s * power_int(t, Xn, 2);
            break;
        }
        case RayProfile::Kind::Affine: {
            const double c0 = profile.c0(), c1 = profile.c1();
            m.a = c0 * power_int(t, Xn, 0) + c1 * power_int(t, Xn, 1);
            m.b = c0 * power_int(t, Xn, 1) + c1 * power_int(t, Xn, 2);
            m.c = c0 * power_int(t, Xn, 2) + c1 * power_int(t, Xn, 3);
            break;
        }
        case RayProfile::Kind::Generic: {
            auto f = [&](double s) { return profile(s); };
            m.a = integrate_adaptive(f, t, Xn).value;
            m.b = integrate_adaptive([&](double s) { return s * profile(s); }, t, Xn).value;
            m.c = integrate_adaptive([&](double s) { return s * s * profile(s); }, t, Xn).value;
            break;
        }
    }
    m.delta = m.a * m.c - m.b * m.b;
    return m;
}

MomentTriple fermi_moments_shifted(const RayProfile& profile, double Xn, double t) {
    if (!(t >= 0.0) || !(Xn >= t)) throw config_error("fermi_moments_shifted: need 0 <= t <= Xn");
    // Moments of s -> profile(t + s) over [0, Xn - t].
    RayProfile shifted;
    switch (profile.kind()) {
        case RayProfile::Kind::Constant:
            shifted = RayProfile::constant(profile.c0());
            break;
        case RayProfile::Kind::Affine:
            shifted = RayProfile::affine(profile.c0() + profile.c1() * t, profile.c1());
            break;
        case RayProfile::Kind::Generic: {
            MomentTriple m;
            m.Xn = Xn;
            m.t = t;
            if (Xn == t) return m;
            m.a = integrate_adaptive([&](double s) { return profile(t + s); }, 0.0, Xn - t).value;
            m.b = integrate_adaptive([&](double s) { return s * profile(t + s); }, 0.0, Xn - t)
                      .value;
            m.c = integrate_adaptive([&](double s) { return s * s * profile(t + s); }, 0.0, Xn - t)
                      .value;
            m.delta = m.a * m.c - m.b * m.b;
            return m;
        }
    }
    MomentTriple m = fermi_moments(shifted, Xn - t, 0.0);
    m.Xn = Xn;
    m.t = t;
    return m;
}

double profile_integral(const RayProfile& profile, double from_t, double to_t) {
    if (!(to_t >= from_t) || !(from_t >= 0.0))
        throw config_error("profile_integral: need 0 <= from <= to");
    if (to_t == from_t) return 0.0;
    switch (profile.kind()) {
        case RayProfile::Kind::Constant:
            return profile.c0() * (to_t - from_t);
        case RayProfile::Kind::Affine:
            return profile.c0() * (to_t - from_t) +
                   0.5 * profile.c1() * (to_t * to_t - from_t * from_t);
        case RayProfile::Kind::Generic:
            return integrate_adaptive([&](double s) { return profile(s); }, from_t, to_t).value;
    }
    return 0.0;
}

AttenuationValue attenuation(const RayProfile& lambda_profile, double from_t, double to_t) {
    AttenuationValue a;
    a.from_t = from_t;
    a.to_t = to_t;
    a.value = std::exp(-profile_integral(lambda_profile, from_t, to_t));
    return a;
}

LineMoment gaussian_line_moment(int k, double alpha, double beta) {
    if (!(alpha > 0.0)) throw config_error("gaussian_line_moment: alpha must be positive");
    LineMoment r;
    const double b2a = beta * beta / alpha;
    const double gauss = std::sqrt(M_PI / alpha) * std::exp(b2a);
    switch (k) {
        case 0:
            r.value = gauss;
            break;
        case 1:
            r.value = (1.0 + std::abs(beta) * gauss) / alpha;
            r.is_bound = true;
            break;
        case 2:
            r.value = std::sqrt(M_PI) * (2.0 * alpha + 4.0 * beta * beta) /
                      (4.0 * std::pow(alpha, 2.5)) * std::exp(b2a);
            break;
        case 3:
            r.value = (1.0 + b2a + (2.0 * b2a + 3.0) * 0.5 * std::abs(beta) * gauss) /
                      (alpha * alpha);
            r.is_bound = true;
            break;
        default:
            throw config_error("gaussian_line_moment: k must be in 0..3");
    }
    return r;
}

} // namespace narrowbeam
