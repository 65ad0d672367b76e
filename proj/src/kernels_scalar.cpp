#include "bft/kernels.hpp"

namespace bft::kernels::scalar {

template <typename T>
void gemm(bool trans_a, bool trans_b, int m, int n, int k, const T* a, int lda, const T* b,
          int ldb, T beta, T* c, int ldc) {
  for (int i = 0; i < m; ++i) {
    T* crow = c + static_cast<std::ptrdiff_t>(i) * ldc;
    for (int j = 0; j < n; ++j) crow[j] = beta == T(0) ? T(0) : beta * crow[j];
    for (int p = 0; p < k; ++p) {
      const T av = trans_a ? a[static_cast<std::ptrdiff_t>(p) * lda + i]
                           : a[static_cast<std::ptrdiff_t>(i) * lda + p];
      if (trans_b) {
        for (int j = 0; j < n; ++j) crow[j] += av * b[static_cast<std::ptrdiff_t>(j) * ldb + p];
      } else {
        const T* brow = b + static_cast<std::ptrdiff_t>(p) * ldb;
        for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  }
}

template <typename T>
T dot(const T* x, const T* y, int n) {
  T acc = 0;
  for (int i = 0; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

template <typename T>
void axpy(int n, T alpha, const T* x, T* y) {
  for (int i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template void gemm<float>(bool, bool, int, int, int, const float*, int, const float*, int, float,
                          float*, int);
template void gemm<double>(bool, bool, int, int, int, const double*, int, const double*, int,
                           double, double*, int);
template float dot<float>(const float*, const float*, int);
template double dot<double>(const double*, const double*, int);
template void axpy<float>(int, float, const float*, float*);
template void axpy<double>(int, double, const double*, double*);

}  // namespace bft::kernels::scalar
