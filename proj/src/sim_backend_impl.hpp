#pragma once

// Shared dispatch-table body for the backend translation units. The including
// TU defines NB_BACKEND_TAG and NB_BACKEND_FN before including this file.

#include "narrowbeam/simd/backend.hpp"

namespace narrowbeam::simd {

namespace {

template <int DIM, class SEV, class LEV>
void run_group_tramp(const StepJob& job, std::uint64_t group, StepStats* stats,
                     DepositBuffer* deps) {
    StepKernel<NB_BACKEND_TAG, DIM, SEV, LEV>::run_group(job, group, stats, deps);
}

template <int DIM, class SEV>
RunGroupFn pick_lambda(int lambda_kind) {
    switch (lambda_kind) {
        case 0: return &run_group_tramp<DIM, SEV, coef::Const>;
        case 1: return &run_group_tramp<DIM, SEV, coef::Affine>;
        case 2: return &run_group_tramp<DIM, SEV, coef::Bump>;
    }
    return nullptr;
}

template <int DIM>
RunGroupFn pick_sigma(int sigma_kind, int lambda_kind) {
    switch (sigma_kind) {
        case 0: return pick_lambda<DIM, coef::Const>(lambda_kind);
        case 1: return pick_lambda<DIM, coef::Affine>(lambda_kind);
        case 2: return pick_lambda<DIM, coef::Bump>(lambda_kind);
    }
    return nullptr;
}

} // namespace

RunGroupFn NB_BACKEND_FN(int dim, int sigma_kind, int lambda_kind) {
    if (dim == 2) return pick_sigma<2>(sigma_kind, lambda_kind);
    if (dim == 3) return pick_sigma<3>(sigma_kind, lambda_kind);
    return nullptr;
}

} // namespace narrowbeam::simd
