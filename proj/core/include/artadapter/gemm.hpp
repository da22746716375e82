#pragma once

#include <cstdint>

#include "artadapter/common.hpp"

namespace artadapter {

// Row-major GEMM: C = A(M,K) * B(K,N) [+ C if accumulate].
//
// Work is split over fixed 64-row output chunks; each chunk is computed by a
// single-threaded BLAS call. The chunk grid depends only on M, so results are
// bit-identical for every OMP thread count.
void gemm(const scalar_t* a, const scalar_t* b, scalar_t* c,
          int64_t m, int64_t k, int64_t n, bool accumulate = false);

// C = A^T(M,K) * B with A stored as (K,M).
void gemm_at(const scalar_t* a, const scalar_t* b, scalar_t* c,
             int64_t m, int64_t k, int64_t n, bool accumulate = false);

// C = A(M,K) * B^T with B stored as (N,K).
void gemm_bt(const scalar_t* a, const scalar_t* b, scalar_t* c,
             int64_t m, int64_t k, int64_t n, bool accumulate = false);

}  // namespace artadapter
