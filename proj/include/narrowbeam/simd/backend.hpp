#pragma once

#include <cstdint>

#include "narrowbeam/simd/step_kernel.hpp"

namespace narrowbeam::simd {

using RunGroupFn = void (*)(const StepJob&, std::uint64_t, StepStats*, DepositBuffer*);

// Kind codes: 0 constant, 1 affine-in-depth, 2 bump. Returns nullptr when the
// (dim, kinds) combination has no batch kernel (callers fall back to the
// generic scalar path).
RunGroupFn get_run_group_scalar(int dim, int sigma_kind, int lambda_kind);
RunGroupFn get_run_group_avx2(int dim, int sigma_kind, int lambda_kind);

} // namespace narrowbeam::simd
