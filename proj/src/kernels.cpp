#include "bft/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <cstring>
#include <vector>

#include "bft/tensor.hpp"

namespace bft::kernels {
namespace {

Isa probe() {
#if defined(__x86_64__) || defined(_M_X64)
  __builtin_cpu_init();
  if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma")) return Isa::kAvx2;
#endif
  return Isa::kScalar;
}

Isa initial_isa() {
  const Isa best = probe();
  const char* env = std::getenv("BFT_ISA");
  if (env != nullptr && std::strcmp(env, "scalar") == 0) return Isa::kScalar;
  return best;
}

std::atomic<Isa>& active() {
  static std::atomic<Isa> isa{initial_isa()};
  return isa;
}

}  // namespace

const char* isa_name(Isa isa) { return isa == Isa::kAvx2 ? "avx2" : "scalar"; }

Isa detected_isa() {
  static const Isa isa = probe();
  return isa;
}

Isa active_isa() { return active().load(std::memory_order_relaxed); }

void set_active_isa(Isa isa) {
  if (isa == Isa::kAvx2 && detected_isa() != Isa::kAvx2) {
    throw ContractError("AVX2 kernels requested on a CPU without AVX2/FMA");
  }
  active().store(isa, std::memory_order_relaxed);
}

void gemm(bool trans_a, bool trans_b, int m, int n, int k, const float* a, int lda,
          const float* b, int ldb, float beta, float* c, int ldc) {
  if (m <= 0 || n <= 0) return;
  if (active_isa() != Isa::kAvx2) {
    scalar::gemm<float>(trans_a, trans_b, m, n, k, a, lda, b, ldb, beta, c, ldc);
    return;
  }
  if (!trans_b) {
    avx2::gemm(trans_a, m, n, k, a, lda, b, ldb, beta, c, ldc);
    return;
  }
  // B is stored [n,k]; pack it to [k,n] so the microkernel streams rows.
  thread_local std::vector<float> packed;
  packed.resize(static_cast<std::size_t>(k) * n);
  for (int j = 0; j < n; ++j) {
    const float* src = b + static_cast<std::ptrdiff_t>(j) * ldb;
    for (int p = 0; p < k; ++p) packed[static_cast<std::size_t>(p) * n + j] = src[p];
  }
  avx2::gemm(trans_a, m, n, k, a, lda, packed.data(), n, beta, c, ldc);
}

void gemm(bool trans_a, bool trans_b, int m, int n, int k, const double* a, int lda,
          const double* b, int ldb, double beta, double* c, int ldc) {
  scalar::gemm<double>(trans_a, trans_b, m, n, k, a, lda, b, ldb, beta, c, ldc);
}

float dot(const float* x, const float* y, int n) {
  return active_isa() == Isa::kAvx2 ? avx2::dot(x, y, n) : scalar::dot<float>(x, y, n);
}

double dot(const double* x, const double* y, int n) { return scalar::dot<double>(x, y, n); }

void axpy(int n, float alpha, const float* x, float* y) {
  if (active_isa() == Isa::kAvx2) {
    avx2::axpy(n, alpha, x, y);
  } else {
    scalar::axpy<float>(n, alpha, x, y);
  }
}

void axpy(int n, double alpha, const double* x, double* y) {
  scalar::axpy<double>(n, alpha, x, y);
}

}  // namespace bft::kernels
