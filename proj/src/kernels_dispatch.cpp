#include "sdrf/kernels.hpp"

#include <cstdlib>

namespace sdrf::kern {
namespace {

struct Backend {
  const Ops<float>* f32;
  const Ops<double>* f64;
  std::string name;
};

Backend select() {
  const char* env = std::getenv("SDRF_KERNELS");
  const std::string want = env ? env : "auto";
#ifdef SDRF_HAVE_AVX2_BUILD
  const bool cpu_ok = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  if (want == "avx2" || (want != "scalar" && cpu_ok))
    return {&avx2::kOpsF32, &avx2::kOpsF64, "avx2"};
#endif
  return {&scalar::kOpsF32, &scalar::kOpsF64, "scalar"};
}

const Backend& backend() {
  static const Backend b = select();
  return b;
}

}  // namespace

const Ops<float>& ops_f32() { return *backend().f32; }
const Ops<double>& ops_f64() { return *backend().f64; }
const std::string& backend_name() { return backend().name; }

const Ops<float>* ops_f32_variant(const std::string& name) {
  if (name == "scalar") return &scalar::kOpsF32;
#ifdef SDRF_HAVE_AVX2_BUILD
  if (name == "avx2" && __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma"))
    return &avx2::kOpsF32;
#endif
  return nullptr;
}

const Ops<double>* ops_f64_variant(const std::string& name) {
  if (name == "scalar") return &scalar::kOpsF64;
#ifdef SDRF_HAVE_AVX2_BUILD
  if (name == "avx2" && __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma"))
    return &avx2::kOpsF64;
#endif
  return nullptr;
}

}  // namespace sdrf::kern
