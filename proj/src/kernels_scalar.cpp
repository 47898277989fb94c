// Reference kernels. Deliberately plain loops: these define the numeric
// behavior the SIMD variants are tested against. Summation order within one
// output element is a fixed left-to-right walk over k.

#include "sdrf/kernels.hpp"

#include <algorithm>

namespace sdrf::kern::scalar {
namespace {

template <typename T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
          T alpha, const T* a, std::size_t lda, const T* b, std::size_t ldb,
          T beta, T* c, std::size_t ldc) {
  auto at = [&](std::size_t i, std::size_t p) { return trans_a ? a[p * lda + i] : a[i * lda + p]; };
  auto bt = [&](std::size_t p, std::size_t j) { return trans_b ? b[j * ldb + p] : b[p * ldb + j]; };
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      T acc = 0;
      for (std::size_t p = 0; p < k; ++p) acc += at(i, p) * bt(p, j);
      T* out = c + i * ldc + j;
      *out = alpha * acc + (beta == T(0) ? T(0) : beta * *out);
    }
  }
}

template <typename T>
void axpy(std::size_t n, T alpha, const T* x, T* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <typename T>
void add(std::size_t n, const T* a, const T* b, T* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

template <typename T>
void mul(std::size_t n, const T* a, const T* b, T* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

template <typename T>
T dot(std::size_t n, const T* a, const T* b) {
  T acc = 0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

template <typename T>
T sum(std::size_t n, const T* a) {
  T acc = 0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i];
  return acc;
}

template <typename T>
void relu(std::size_t n, const T* x, T* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = std::max(x[i], T(0));
}

}  // namespace

const Ops<float> kOpsF32 = {gemm<float>, axpy<float>, add<float>, mul<float>,
                            dot<float>,  sum<float>,  relu<float>};
const Ops<double> kOpsF64 = {gemm<double>, axpy<double>, add<double>, mul<double>,
                             dot<double>,  sum<double>,  relu<double>};

}  // namespace sdrf::kern::scalar
