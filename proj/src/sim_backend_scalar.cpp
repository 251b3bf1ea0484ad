// Scalar reference backend: the same StepKernel instantiated at lane width 1.

#define NB_BACKEND_TAG narrowbeam::simd::ScalarTag
#define NB_BACKEND_FN get_run_group_scalar

#include "sim_backend_impl.hpp"
