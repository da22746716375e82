#include "artadapter/gemm.hpp"

#include <cblas.h>

#include <algorithm>
#include <mutex>

extern "C" void openblas_set_num_threads(int);

namespace artadapter {
namespace {

constexpr int64_t kRowChunk = 64;

void ensure_single_threaded_blas() {
    static std::once_flag once;
    std::call_once(once, [] { openblas_set_num_threads(1); });
}

template <typename F>
void for_each_chunk(int64_t m, F&& body) {
    const int64_t chunks = (m + kRowChunk - 1) / kRowChunk;
#pragma omp parallel for schedule(static)
    for (int64_t c = 0; c < chunks; ++c) {
        const int64_t r0 = c * kRowChunk;
        const int64_t r1 = std::min(m, r0 + kRowChunk);
        body(r0, r1);
    }
}

}  // namespace

void gemm(const scalar_t* a, const scalar_t* b, scalar_t* c,
          int64_t m, int64_t k, int64_t n, bool accumulate) {
    ensure_single_threaded_blas();
    const double beta = accumulate ? 1.0 : 0.0;
    for_each_chunk(m, [&](int64_t r0, int64_t r1) {
        cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans,
                    static_cast<int>(r1 - r0), static_cast<int>(n), static_cast<int>(k),
                    1.0, a + r0 * k, static_cast<int>(k), b, static_cast<int>(n),
                    beta, c + r0 * n, static_cast<int>(n));
    });
}

void gemm_at(const scalar_t* a, const scalar_t* b, scalar_t* c,
             int64_t m, int64_t k, int64_t n, bool accumulate) {
    ensure_single_threaded_blas();
    const double beta = accumulate ? 1.0 : 0.0;
    for_each_chunk(m, [&](int64_t r0, int64_t r1) {
        // Rows r0..r1 of A^T are columns r0..r1 of A(K,M).
        cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans,
                    static_cast<int>(r1 - r0), static_cast<int>(n), static_cast<int>(k),
                    1.0, a + r0, static_cast<int>(m), b, static_cast<int>(n),
                    beta, c + r0 * n, static_cast<int>(n));
    });
}

void gemm_bt(const scalar_t* a, const scalar_t* b, scalar_t* c,
             int64_t m, int64_t k, int64_t n, bool accumulate) {
    ensure_single_threaded_blas();
    const double beta = accumulate ? 1.0 : 0.0;
    for_each_chunk(m, [&](int64_t r0, int64_t r1) {
        cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasTrans,
                    static_cast<int>(r1 - r0), static_cast<int>(n), static_cast<int>(k),
                    1.0, a + r0 * k, static_cast<int>(k), b, static_cast<int>(k),
                    beta, c + r0 * n, static_cast<int>(n));
    });
}

}  // namespace artadapter
