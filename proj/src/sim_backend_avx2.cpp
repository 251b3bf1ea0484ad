// AVX2+FMA backend; this TU is compiled with -mavx2 -mfma. Selected at
// runtime only when cpuid reports both extensions.

#include "narrowbeam/simd/lane.hpp"

#ifdef NARROWBEAM_HAVE_AVX2_LANE

#define NB_BACKEND_TAG narrowbeam::simd::Avx2Tag
#define NB_BACKEND_FN get_run_group_avx2

#include "sim_backend_impl.hpp"

#else

#include "narrowbeam/simd/backend.hpp"

namespace narrowbeam::simd {
RunGroupFn get_run_group_avx2(int, int, int) { return nullptr; }
} // namespace narrowbeam::simd

#endif
