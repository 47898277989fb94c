#pragma once
// Arithmetic inner loops behind the tensor ops. Every kernel has a scalar
// reference implementation and may have SIMD variants; the active table is
// chosen once at startup from cpuid (override with SDRF_KERNELS=scalar|avx2).
// Scalar and SIMD variants must agree bitwise for exactly representable
// inputs and to tight tolerances otherwise; see tests/test_kernels.cpp.

#include <cstddef>
#include <cstdint>
#include <string>

namespace sdrf::kern {

// C(M,N) = alpha * op(A) * op(B) + beta * C, row-major, beta in {0,1}.
// trans_a/trans_b select op(X) = X or X^T. A is MxK (or KxM when
// transposed), B is KxN (or NxK), leading dimensions are row strides.
template <typename T>
using GemmFn = void (*)(bool trans_a, bool trans_b, std::size_t m, std::size_t n,
                        std::size_t k, T alpha, const T* a, std::size_t lda,
                        const T* b, std::size_t ldb, T beta, T* c, std::size_t ldc);

template <typename T>
using AxpyFn = void (*)(std::size_t n, T alpha, const T* x, T* y);  // y += alpha*x

template <typename T>
using BinFn = void (*)(std::size_t n, const T* a, const T* b, T* out);

template <typename T>
using DotFn = T (*)(std::size_t n, const T* a, const T* b);

template <typename T>
using SumFn = T (*)(std::size_t n, const T* a);

template <typename T>
using ReluFn = void (*)(std::size_t n, const T* x, T* out);

template <typename T>
struct Ops {
  GemmFn<T> gemm;
  AxpyFn<T> axpy;
  BinFn<T> add;
  BinFn<T> mul;
  DotFn<T> dot;
  SumFn<T> sum;
  ReluFn<T> relu;
};

const Ops<float>& ops_f32();
const Ops<double>& ops_f64();

template <typename T>
inline const Ops<T>& ops() {
  if constexpr (sizeof(T) == sizeof(float))
    return reinterpret_cast<const Ops<T>&>(ops_f32());
  else
    return reinterpret_cast<const Ops<T>&>(ops_f64());
}

// "scalar" or "avx2"; fixed after first use.
const std::string& backend_name();

// Direct lookup of a named variant table for equivalence testing; nullptr
// when that variant is not compiled in or the CPU lacks it.
const Ops<float>* ops_f32_variant(const std::string& name);
const Ops<double>* ops_f64_variant(const std::string& name);

namespace scalar {
extern const Ops<float> kOpsF32;
extern const Ops<double> kOpsF64;
}  // namespace scalar

#ifdef SDRF_HAVE_AVX2_BUILD
namespace avx2 {
extern const Ops<float> kOpsF32;
extern const Ops<double> kOpsF64;
}  // namespace avx2
#endif

}  // namespace sdrf::kern
