#pragma once

// Dense inner loops used by the tensor ops. Every kernel has a portable
// scalar reference in `scalar::` and, for float, an AVX2+FMA variant in
// `avx2::`. The unqualified entry points dispatch at runtime on the CPU's
// capabilities (overridable through set_active_isa or BFT_ISA=scalar).
// Double precision always takes the scalar path.

#include <cstddef>

namespace bft::kernels {

enum class Isa { kScalar, kAvx2 };

const char* isa_name(Isa isa);
/// Best ISA the running CPU supports.
Isa detected_isa();
Isa active_isa();
/// Throws ContractError if the CPU cannot run `isa`.
void set_active_isa(Isa isa);

// C[m,n] = beta * C + op(A)[m,k] * op(B)[k,n], all row-major.
// op(A) = A^T when trans_a, in which case A is stored [k,m] with stride lda.
void gemm(bool trans_a, bool trans_b, int m, int n, int k, const float* a, int lda,
          const float* b, int ldb, float beta, float* c, int ldc);
void gemm(bool trans_a, bool trans_b, int m, int n, int k, const double* a, int lda,
          const double* b, int ldb, double beta, double* c, int ldc);

float dot(const float* x, const float* y, int n);
double dot(const double* x, const double* y, int n);

// y += alpha * x
void axpy(int n, float alpha, const float* x, float* y);
void axpy(int n, double alpha, const double* x, double* y);

namespace scalar {
template <typename T>
void gemm(bool trans_a, bool trans_b, int m, int n, int k, const T* a, int lda, const T* b,
          int ldb, T beta, T* c, int ldc);
template <typename T>
T dot(const T* x, const T* y, int n);
template <typename T>
void axpy(int n, T alpha, const T* x, T* y);
}  // namespace scalar

namespace avx2 {
// B must be non-transposed here; the dispatcher packs B^T beforehand.
void gemm(bool trans_a, int m, int n, int k, const float* a, int lda, const float* b, int ldb,
          float beta, float* c, int ldc);
float dot(const float* x, const float* y, int n);
void axpy(int n, float alpha, const float* x, float* y);
}  // namespace avx2

}  // namespace bft::kernels
