#pragma once

#include <cstddef>

#include "narrowbeam/common.hpp"

namespace narrowbeam {

// Tolerance below which 1 + theta_n is considered degenerate for the
// stereographic chart (chart blows up at the south pole).
inline constexpr double kSouthPoleTol = 1e-12;

// Unit direction on S^{n-1}, renormalized on construction.
class Direction {
  public:
    explicit Direction(Vec components);
    static Direction north(int dim);
    static Direction south(int dim);

    int dim() const { return static_cast<int>(c_.size()); }
    double operator[](std::size_t i) const { return c_[i]; }
    const Vec& components() const { return c_; }
    double last() const { return c_.back(); }

  private:
    Vec c_;
};

// Point of the phase space R^n_+ x S^{n-1} in macroscopic units.
struct PhasePoint {
    Vec x;           // position, x.back() >= 0
    Direction theta;

    PhasePoint(Vec pos, Direction dir);
    int dim() const { return theta.dim(); }
};

// Point in stretched coordinates (X', X^n, V).
struct StretchedPoint {
    Vec Xp;    // transverse, length n-1
    double Xn; // depth >= 0
    Vec V;     // angular chart variable, length n-1

    StretchedPoint(Vec xp, double xn, Vec v);
};

// The stretched-coordinate frame: scaling epsilon and the boundary anchor y'.
struct StretchFrame {
    double epsilon;
    Vec anchor; // y', length n-1
    int dim;

    StretchFrame(double eps, Vec anchor_, int n);
};

// Stereographic projection from the south pole and its inverse.
Vec stereo_project(const Direction& theta);
Direction stereo_lift(const Vec& v);

// c(v) = 2 / (1 + |v|^2).
double conformal_factor(const Vec& v);

// (X', X^n, V) = ((x' - y')/(2 eps), x^n, S(theta)/eps)
StretchedPoint to_stretched(const StretchFrame& frame, const PhasePoint& p);
PhasePoint from_stretched(const StretchFrame& frame, const StretchedPoint& s);

// Product metric: Euclidean on position, chordal on the sphere.
double phase_distance(const PhasePoint& p, const PhasePoint& q);

double norm2(const Vec& v);
double norm(const Vec& v);

} // namespace narrowbeam
