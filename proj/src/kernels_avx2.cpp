// AVX2+FMA float kernels. Compiled with per-function target attributes
// rather than -mavx2 so no inline library code in this TU can leak AVX
// instructions into the scalar path.

#include "bft/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64)
#include <immintrin.h>
#define BFT_AVX2_TARGET __attribute__((target("avx2,fma")))

namespace bft::kernels::avx2 {
namespace {

BFT_AVX2_TARGET inline __m256i tail_mask(int r) {
  // lanes [0, r) active
  const __m256i idx = _mm256_setr_epi32(0, 1, 2, 3, 4, 5, 6, 7);
  return _mm256_cmpgt_epi32(_mm256_set1_epi32(r), idx);
}

BFT_AVX2_TARGET inline float a_at(bool trans_a, const float* a, int lda, int i, int p) {
  return trans_a ? a[static_cast<std::ptrdiff_t>(p) * lda + i]
                 : a[static_cast<std::ptrdiff_t>(i) * lda + p];
}

BFT_AVX2_TARGET inline void store_c(float* c, __m256 acc, float beta) {
  if (beta == 0.0f) {
    _mm256_storeu_ps(c, acc);
  } else {
    _mm256_storeu_ps(c, _mm256_fmadd_ps(_mm256_set1_ps(beta), _mm256_loadu_ps(c), acc));
  }
}

BFT_AVX2_TARGET inline void store_c_masked(float* c, __m256 acc, float beta, __m256i mask) {
  if (beta != 0.0f) {
    acc = _mm256_fmadd_ps(_mm256_set1_ps(beta), _mm256_maskload_ps(c, mask), acc);
  }
  _mm256_maskstore_ps(c, mask, acc);
}

}  // namespace

BFT_AVX2_TARGET void gemm(bool trans_a, int m, int n, int k, const float* a, int lda,
                          const float* b, int ldb, float beta, float* c, int ldc) {
  int i = 0;
  for (; i + 4 <= m; i += 4) {
    float* c0 = c + static_cast<std::ptrdiff_t>(i) * ldc;
    float* c1 = c0 + ldc;
    float* c2 = c1 + ldc;
    float* c3 = c2 + ldc;
    int j = 0;
    for (; j + 16 <= n; j += 16) {
      __m256 r00 = _mm256_setzero_ps(), r01 = _mm256_setzero_ps();
      __m256 r10 = _mm256_setzero_ps(), r11 = _mm256_setzero_ps();
      __m256 r20 = _mm256_setzero_ps(), r21 = _mm256_setzero_ps();
      __m256 r30 = _mm256_setzero_ps(), r31 = _mm256_setzero_ps();
      for (int p = 0; p < k; ++p) {
        const float* brow = b + static_cast<std::ptrdiff_t>(p) * ldb + j;
        const __m256 b0 = _mm256_loadu_ps(brow);
        const __m256 b1 = _mm256_loadu_ps(brow + 8);
        __m256 av = _mm256_set1_ps(a_at(trans_a, a, lda, i, p));
        r00 = _mm256_fmadd_ps(av, b0, r00);
        r01 = _mm256_fmadd_ps(av, b1, r01);
        av = _mm256_set1_ps(a_at(trans_a, a, lda, i + 1, p));
        r10 = _mm256_fmadd_ps(av, b0, r10);
        r11 = _mm256_fmadd_ps(av, b1, r11);
        av = _mm256_set1_ps(a_at(trans_a, a, lda, i + 2, p));
        r20 = _mm256_fmadd_ps(av, b0, r20);
        r21 = _mm256_fmadd_ps(av, b1, r21);
        av = _mm256_set1_ps(a_at(trans_a, a, lda, i + 3, p));
        r30 = _mm256_fmadd_ps(av, b0, r30);
        r31 = _mm256_fmadd_ps(av, b1, r31);
      }
      store_c(c0 + j, r00, beta);
      store_c(c0 + j + 8, r01, beta);
      store_c(c1 + j, r10, beta);
      store_c(c1 + j + 8, r11, beta);
      store_c(c2 + j, r20, beta);
      store_c(c2 + j + 8, r21, beta);
      store_c(c3 + j, r30, beta);
      store_c(c3 + j + 8, r31, beta);
    }
    for (; j < n; j += 8) {
      const int rem = n - j < 8 ? n - j : 8;
      const __m256i mask = tail_mask(rem);
      __m256 r0 = _mm256_setzero_ps(), r1 = _mm256_setzero_ps();
      __m256 r2 = _mm256_setzero_ps(), r3 = _mm256_setzero_ps();
      for (int p = 0; p < k; ++p) {
        const __m256 bv = _mm256_maskload_ps(b + static_cast<std::ptrdiff_t>(p) * ldb + j, mask);
        r0 = _mm256_fmadd_ps(_mm256_set1_ps(a_at(trans_a, a, lda, i, p)), bv, r0);
        r1 = _mm256_fmadd_ps(_mm256_set1_ps(a_at(trans_a, a, lda, i + 1, p)), bv, r1);
        r2 = _mm256_fmadd_ps(_mm256_set1_ps(a_at(trans_a, a, lda, i + 2, p)), bv, r2);
        r3 = _mm256_fmadd_ps(_mm256_set1_ps(a_at(trans_a, a, lda, i + 3, p)), bv, r3);
      }
      store_c_masked(c0 + j, r0, beta, mask);
      store_c_masked(c1 + j, r1, beta, mask);
      store_c_masked(c2 + j, r2, beta, mask);
      store_c_masked(c3 + j, r3, beta, mask);
    }
  }
  for (; i < m; ++i) {
    float* crow = c + static_cast<std::ptrdiff_t>(i) * ldc;
    for (int j = 0; j < n; j += 8) {
      const int rem = n - j < 8 ? n - j : 8;
      const __m256i mask = tail_mask(rem);
      __m256 r = _mm256_setzero_ps();
      for (int p = 0; p < k; ++p) {
        const __m256 bv = _mm256_maskload_ps(b + static_cast<std::ptrdiff_t>(p) * ldb + j, mask);
        r = _mm256_fmadd_ps(_mm256_set1_ps(a_at(trans_a, a, lda, i, p)), bv, r);
      }
      store_c_masked(crow + j, r, beta, mask);
    }
  }
}

BFT_AVX2_TARGET float dot(const float* x, const float* y, int n) {
  __m256 acc0 = _mm256_setzero_ps();
  __m256 acc1 = _mm256_setzero_ps();
  int i = 0;
  for (; i + 16 <= n; i += 16) {
    acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i), acc0);
    acc1 = _mm256_fmadd_ps(_mm256_loadu_ps(x + i + 8), _mm256_loadu_ps(y + i + 8), acc1);
  }
  if (i + 8 <= n) {
    acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i), acc0);
    i += 8;
  }
  if (i < n) {
    const __m256i mask = tail_mask(n - i);
    acc1 = _mm256_fmadd_ps(_mm256_maskload_ps(x + i, mask), _mm256_maskload_ps(y + i, mask), acc1);
  }
  const __m256 s = _mm256_add_ps(acc0, acc1);
  __m128 lo = _mm_add_ps(_mm256_castps256_ps128(s), _mm256_extractf128_ps(s, 1));
  lo = _mm_add_ps(lo, _mm_movehl_ps(lo, lo));
  lo = _mm_add_ss(lo, _mm_shuffle_ps(lo, lo, 0x1));
  return _mm_cvtss_f32(lo);
}

BFT_AVX2_TARGET void axpy(int n, float alpha, const float* x, float* y) {
  const __m256 av = _mm256_set1_ps(alpha);
  int i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_ps(y + i, _mm256_fmadd_ps(av, _mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
  }
  if (i < n) {
    const __m256i mask = tail_mask(n - i);
    const __m256 r =
        _mm256_fmadd_ps(av, _mm256_maskload_ps(x + i, mask), _mm256_maskload_ps(y + i, mask));
    _mm256_maskstore_ps(y + i, mask, r);
  }
}

}  // namespace bft::kernels::avx2

#else

// Non-x86 builds: the dispatcher never selects these.
namespace bft::kernels::avx2 {
void gemm(bool trans_a, int m, int n, int k, const float* a, int lda, const float* b, int ldb,
          float beta, float* c, int ldc) {
  scalar::gemm<float>(trans_a, false, m, n, k, a, lda, b, ldb, beta, c, ldc);
}
float dot(const float* x, const float* y, int n) { return scalar::dot<float>(x, y, n); }
void axpy(int n, float alpha, const float* x, float* y) { scalar::axpy<float>(n, alpha, x, y); }
}  // namespace bft::kernels::avx2

#endif
