#pragma once

#include "narrowbeam/common.hpp"
#include "narrowbeam/geometry.hpp"

namespace narrowbeam {

// One incoming boundary atom of the source g (theta_n > 0 required).
struct SourceAtom {
    Vec y;         // boundary point, y.back() == 0
    Direction eta; // incoming direction
    double mass = 1.0;
};

} // namespace narrowbeam
