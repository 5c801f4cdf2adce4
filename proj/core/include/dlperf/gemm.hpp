#pragma once

#include <cstdint>

namespace dlperf {

// Row-major double GEMMs. Each output element is accumulated by exactly one
// thread in a fixed k order, so results are bit-identical for any thread
// count (the deterministic-mode contract).

// C[M x N] = A[M x K] * B[K x N]
void matmul(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n);

// C[M x N] = A[M x K] * B[N x K]^T
void matmul_nt(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n);

// C[M x N] = A[K x M]^T * B[K x N]
void matmul_tn(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n);

}  // namespace dlperf
