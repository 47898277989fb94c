// AVX2/FMA kernels. Built with -mavx2 -mfma for this translation unit only;
// reached exclusively through the dispatch table after the cpuid check.

#include "sdrf/kernels.hpp"

#ifdef SDRF_HAVE_AVX2_BUILD

#include <immintrin.h>

#include <algorithm>

namespace sdrf::kern::avx2 {
namespace {

// Minimal vector wrapper so the gemm tiles below can be written once for
// float (8 lanes) and double (4 lanes).
template <typename T>
struct Vec;

template <>
struct Vec<float> {
  static constexpr std::size_t kLanes = 8;
  __m256 v;
  static Vec load(const float* p) { return {_mm256_loadu_ps(p)}; }
  static Vec bcast(float x) { return {_mm256_set1_ps(x)}; }
  static Vec zero() { return {_mm256_setzero_ps()}; }
  void store(float* p) const { _mm256_storeu_ps(p, v); }
  Vec fma(Vec a, Vec b) const { return {_mm256_fmadd_ps(a.v, b.v, v)}; }
  Vec add(Vec o) const { return {_mm256_add_ps(v, o.v)}; }
  Vec mul(Vec o) const { return {_mm256_mul_ps(v, o.v)}; }
  Vec max0() const { return {_mm256_max_ps(v, _mm256_setzero_ps())}; }
  float hsum() const {
    __m128 lo = _mm256_castps256_ps128(v);
    __m128 hi = _mm256_extractf128_ps(v, 1);
    __m128 s = _mm_add_ps(lo, hi);
    s = _mm_hadd_ps(s, s);
    s = _mm_hadd_ps(s, s);
    return _mm_cvtss_f32(s);
  }
};

template <>
struct Vec<double> {
  static constexpr std::size_t kLanes = 4;
  __m256d v;
  static Vec load(const double* p) { return {_mm256_loadu_pd(p)}; }
  static Vec bcast(double x) { return {_mm256_set1_pd(x)}; }
  static Vec zero() { return {_mm256_setzero_pd()}; }
  void store(double* p) const { _mm256_storeu_pd(p, v); }
  Vec fma(Vec a, Vec b) const { return {_mm256_fmadd_pd(a.v, b.v, v)}; }
  Vec add(Vec o) const { return {_mm256_add_pd(v, o.v)}; }
  Vec mul(Vec o) const { return {_mm256_mul_pd(v, o.v)}; }
  Vec max0() const { return {_mm256_max_pd(v, _mm256_setzero_pd())}; }
  double hsum() const {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    __m128d s = _mm_add_pd(lo, hi);
    s = _mm_hadd_pd(s, s);
    return _mm_cvtsd_f64(s);
  }
};

// C tile accumulation: 4 rows x 2 vectors, reduction index innermost.
// `arow(r, p)` fetches the broadcast operand, `bvec(p, lane_off)` the vector
// operand; both are resolved per gemm case below.
template <typename T, typename ARow, typename BVec>
inline void tile4x2(std::size_t rows, std::size_t kdim, ARow arow, BVec bvec,
                    T alpha, T beta, T* c, std::size_t ldc, std::size_t j,
                    std::size_t cols) {
  using V = Vec<T>;
  constexpr std::size_t L = V::kLanes;
  V acc[4][2] = {{V::zero(), V::zero()}, {V::zero(), V::zero()},
                 {V::zero(), V::zero()}, {V::zero(), V::zero()}};
  const bool full = cols == 2 * L;
  if (full) {
    for (std::size_t p = 0; p < kdim; ++p) {
      V b0 = bvec(p, 0), b1 = bvec(p, L);
      for (std::size_t r = 0; r < rows; ++r) {
        V a = V::bcast(arow(r, p));
        acc[r][0] = acc[r][0].fma(a, b0);
        acc[r][1] = acc[r][1].fma(a, b1);
      }
    }
    for (std::size_t r = 0; r < rows; ++r) {
      T* crow = c + r * ldc + j;
      for (std::size_t h = 0; h < 2; ++h) {
        V out = acc[r][h].mul(V::bcast(alpha));
        if (beta != T(0)) out = out.fma(V::bcast(beta), V::load(crow + h * L));
        out.store(crow + h * L);
      }
    }
    return;
  }
  // ragged column tail: scalar
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t jj = 0; jj < cols; ++jj) {
      T s = 0;
      for (std::size_t p = 0; p < kdim; ++p) s += arow(r, p) * bvec.scalar(p, jj);
      T* out = c + r * ldc + j + jj;
      *out = alpha * s + (beta == T(0) ? T(0) : beta * *out);
    }
  }
}

template <typename T>
struct RowFetch {
  const T* base;
  std::size_t ld;
  Vec<T> operator()(std::size_t p, std::size_t off) const {
    return Vec<T>::load(base + p * ld + off);
  }
  T scalar(std::size_t p, std::size_t jj) const { return base[p * ld + jj]; }
};

template <typename T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, T alpha, const T* a,
             std::size_t lda, const T* b, std::size_t ldb, T beta, T* c,
             std::size_t ldc) {
  constexpr std::size_t L = Vec<T>::kLanes;
  const std::size_t jstep = 2 * L;
  for (std::size_t i = 0; i < m; i += 4) {
    const std::size_t rows = std::min<std::size_t>(4, m - i);
    for (std::size_t j = 0; j < n; j += jstep) {
      const std::size_t cols = std::min(jstep, n - j);
      auto arow = [&](std::size_t r, std::size_t p) { return a[(i + r) * lda + p]; };
      tile4x2<T>(rows, k, arow, RowFetch<T>{b + j, ldb}, alpha, beta,
                 c + i * ldc, ldc, j, cols);
    }
  }
}

// A transposed: C(m,n) += A^T(m,k) B(k,n) with A stored k-major (k x m).
template <typename T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, T alpha, const T* a,
             std::size_t lda, const T* b, std::size_t ldb, T beta, T* c,
             std::size_t ldc) {
  constexpr std::size_t L = Vec<T>::kLanes;
  const std::size_t jstep = 2 * L;
  for (std::size_t i = 0; i < m; i += 4) {
    const std::size_t rows = std::min<std::size_t>(4, m - i);
    for (std::size_t j = 0; j < n; j += jstep) {
      const std::size_t cols = std::min(jstep, n - j);
      auto arow = [&](std::size_t r, std::size_t p) { return a[p * lda + i + r]; };
      tile4x2<T>(rows, k, arow, RowFetch<T>{b + j, ldb}, alpha, beta,
                 c + i * ldc, ldc, j, cols);
    }
  }
}

// B transposed: C(i,j) = dot(A row i, B row j); both rows contiguous.
template <typename T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, T alpha, const T* a,
             std::size_t lda, const T* b, std::size_t ldb, T beta, T* c,
             std::size_t ldc) {
  using V = Vec<T>;
  constexpr std::size_t L = V::kLanes;
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = a + i * lda;
    for (std::size_t j = 0; j < n; ++j) {
      const T* brow = b + j * ldb;
      V acc = V::zero();
      std::size_t p = 0;
      for (; p + L <= k; p += L) acc = acc.fma(V::load(arow + p), V::load(brow + p));
      T s = acc.hsum();
      for (; p < k; ++p) s += arow[p] * brow[p];
      T* out = c + i * ldc + j;
      *out = alpha * s + (beta == T(0) ? T(0) : beta * *out);
    }
  }
}

template <typename T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
          T alpha, const T* a, std::size_t lda, const T* b, std::size_t ldb,
          T beta, T* c, std::size_t ldc) {
  if (!trans_a && !trans_b) return gemm_nn(m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
  if (trans_a && !trans_b) return gemm_tn(m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
  if (!trans_a && trans_b) return gemm_nt(m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
  // TT is not used by any op; plain loops suffice.
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      T s = 0;
      for (std::size_t p = 0; p < k; ++p) s += a[p * lda + i] * b[j * ldb + p];
      T* out = c + i * ldc + j;
      *out = alpha * s + (beta == T(0) ? T(0) : beta * *out);
    }
}

template <typename T>
void axpy(std::size_t n, T alpha, const T* x, T* y) {
  using V = Vec<T>;
  constexpr std::size_t L = V::kLanes;
  V a = V::bcast(alpha);
  std::size_t i = 0;
  for (; i + L <= n; i += L) V::load(y + i).fma(a, V::load(x + i)).store(y + i);
  for (; i < n; ++i) y[i] += alpha * x[i];
}

template <typename T>
void add(std::size_t n, const T* a, const T* b, T* out) {
  using V = Vec<T>;
  constexpr std::size_t L = V::kLanes;
  std::size_t i = 0;
  for (; i + L <= n; i += L) V::load(a + i).add(V::load(b + i)).store(out + i);
  for (; i < n; ++i) out[i] = a[i] + b[i];
}

template <typename T>
void mul(std::size_t n, const T* a, const T* b, T* out) {
  using V = Vec<T>;
  constexpr std::size_t L = V::kLanes;
  std::size_t i = 0;
  for (; i + L <= n; i += L) V::load(a + i).mul(V::load(b + i)).store(out + i);
  for (; i < n; ++i) out[i] = a[i] * b[i];
}

template <typename T>
T dot(std::size_t n, const T* a, const T* b) {
  using V = Vec<T>;
  constexpr std::size_t L = V::kLanes;
  V acc = V::zero();
  std::size_t i = 0;
  for (; i + L <= n; i += L) acc = acc.fma(V::load(a + i), V::load(b + i));
  T s = acc.hsum();
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

template <typename T>
T sum(std::size_t n, const T* a) {
  using V = Vec<T>;
  constexpr std::size_t L = V::kLanes;
  V acc = V::zero();
  std::size_t i = 0;
  for (; i + L <= n; i += L) acc = acc.add(V::load(a + i));
  T s = acc.hsum();
  for (; i < n; ++i) s += a[i];
  return s;
}

template <typename T>
void relu(std::size_t n, const T* x, T* out) {
  using V = Vec<T>;
  constexpr std::size_t L = V::kLanes;
  std::size_t i = 0;
  for (; i + L <= n; i += L) V::load(x + i).max0().store(out + i);
  for (; i < n; ++i) out[i] = std::max(x[i], T(0));
}

}  // namespace

const Ops<float> kOpsF32 = {gemm<float>, axpy<float>, add<float>, mul<float>,
                            dot<float>,  sum<float>,  relu<float>};
const Ops<double> kOpsF64 = {gemm<double>, axpy<double>, add<double>, mul<double>,
                             dot<double>,  sum<double>,  relu<double>};

}  // namespace sdrf::kern::avx2

#endif  // SDRF_HAVE_AVX2_BUILD
