#include "narrowbeam/geometry.hpp"

#include <cmath>

namespace narrowbeam {

double norm2(const Vec& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return s;
}

double norm(const Vec& v) { return std::sqrt(norm2(v)); }

Direction::Direction(Vec components) : c_(std::move(components)) {
    if (c_.size() < 2) throw config_error("Direction: dimension must be >= 2");
    const double n = norm(c_);
    if (!(n > 0.0)) throw config_error("Direction: zero vector");
    for (double& x : c_) x /= n;
}

Direction Direction::north(int dim) {
    Vec c(dim, 0.0);
    c.back() = 1.0;
    return Direction(std::move(c));
}

Direction Direction::south(int dim) {
    Vec c(dim, 0.0);
    c.back() = -1.0;
    return Direction(std::move(c));
}

PhasePoint::PhasePoint(Vec pos, Direction dir) : x(std::move(pos)), theta(std::move(dir)) {
    if (static_cast<int>(x.size()) != theta.dim())
        throw config_error("PhasePoint: position/direction dimension mismatch");
    if (x.back() < 0.0) throw config_error("PhasePoint: x^n must be >= 0");
}

StretchedPoint::StretchedPoint(Vec xp, double xn, Vec v)
    : Xp(std::move(xp)), Xn(xn), V(std::move(v)) {
    if (Xp.size() != V.size()) throw config_error("StretchedPoint: dimension mismatch");
    if (Xn < 0.0) throw config_error("StretchedPoint: X^n must be >= 0");
}

StretchFrame::StretchFrame(double eps, Vec anchor_, int n)
    : epsilon(eps), anchor(std::move(anchor_)), dim(n) {
    if (!(epsilon > 0.0 && epsilon <= 1.0)) throw config_error("StretchFrame: need 0 < eps <= 1");
    if (static_cast<int>(anchor.size()) != n - 1)
        throw config_error("StretchFrame: anchor must have length n-1");
}

Vec stereo_project(const Direction& theta) {
    const double tn = theta.last();
    if (1.0 + tn <= kSouthPoleTol)
        throw south_pole_error("stereo_project: direction too close to the south pole");
    Vec v(theta.dim() - 1);
    if (tn >= 0.0) {
        const double denom = 1.0 + tn;
        for (int i = 0; i < theta.dim() - 1; ++i) v[i] = theta[i] / denom;
    } else {
        // equivalent form theta' (1 - theta_n) / |theta'|^2, stable when
        // theta_n is close to -1 (1 + theta_n cancels catastrophically there)
        double t2 = 0.0;
        for (int i = 0; i < theta.dim() - 1; ++i) t2 += theta[i] * theta[i];
        const double scale = (1.0 - tn) / t2;
        for (int i = 0; i < theta.dim() - 1; ++i) v[i] = theta[i] * scale;
    }
    return v;
}

Direction stereo_lift(const Vec& v) {
    const double v2 = norm2(v);
    const double inv = 1.0 / (1.0 + v2);
    Vec c(v.size() + 1);
    for (std::size_t i = 0; i < v.size(); ++i) c[i] = 2.0 * v[i] * inv;
    c.back() = (1.0 - v2) * inv;
    return Direction(std::move(c));
}

double conformal_factor(const Vec& v) { return 2.0 / (1.0 + norm2(v)); }

StretchedPoint to_stretched(const StretchFrame& frame, const PhasePoint& p) {
    if (p.dim() != frame.dim) throw config_error("to_stretched: dimension mismatch");
    const int m = frame.dim - 1;
    Vec xp(m);
    for (int i = 0; i < m; ++i) xp[i] = (p.x[i] - frame.anchor[i]) / (2.0 * frame.epsilon);
    Vec v = stereo_project(p.theta);
    for (double& vi : v) vi /= frame.epsilon;
    return StretchedPoint(std::move(xp), p.x.back(), std::move(v));
}

PhasePoint from_stretched(const StretchFrame& frame, const StretchedPoint& s) {
    const int m = frame.dim - 1;
    if (static_cast<int>(s.Xp.size()) != m) throw config_error("from_stretched: dimension mismatch");
    Vec x(frame.dim);
    for (int i = 0; i < m; ++i) x[i] = frame.anchor[i] + 2.0 * frame.epsilon * s.Xp[i];
    x.back() = s.Xn;
    Vec v(m);
    for (int i = 0; i < m; ++i) v[i] = frame.epsilon * s.V[i];
    return PhasePoint(std::move(x), stereo_lift(v));
}

double phase_distance(const PhasePoint& p, const PhasePoint& q) {
    if (p.dim() != q.dim()) throw config_error("phase_distance: dimension mismatch");
    double s = 0.0;
    for (int i = 0; i < p.dim(); ++i) {
        const double dx = p.x[i] - q.x[i];
        const double dt = p.theta[i] - q.theta[i];
        s += dx * dx + dt * dt;
    }
    return std::sqrt(s);
}

} // namespace narrowbeam
