#pragma once
// Shared helpers for the test binaries: finite-difference gradient checks
// and scratch directories.

#include <cstdio>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "sdrf/autograd.hpp"
#include "sdrf/rng.hpp"

namespace testutil {

using sdrf::Shape;
using sdrf::Tensor;
using sdrf::ag::Var;

// Central-difference check of d(sum f)/d(inputs). `f` must rebuild its graph
// on every call from the current input values. Returns the worst relative
// error over all inputs, with gradients compared as whole vectors.
inline double gradcheck(const std::function<Var<double>()>& f,
                        const std::vector<Var<double>>& inputs, double h = 1e-4) {
  Var<double> out = f();
  sdrf::ag::backward(out);
  double worst = 0.0;
  for (const auto& in : inputs) {
    Tensor<double> analytic = in.has_grad() ? in.grad() : Tensor<double>(in.shape());
    Tensor<double>& x = const_cast<Var<double>&>(in).value();
    double max_abs = 0.0, max_diff = 0.0;
    for (int64_t i = 0; i < x.numel(); ++i) {
      const double orig = x[i];
      x[i] = orig + h;
      const double fp = f().value()[0];
      x[i] = orig - h;
      const double fm = f().value()[0];
      x[i] = orig;
      const double num = (fp - fm) / (2.0 * h);
      max_abs = std::max({max_abs, std::abs(num), std::abs(analytic[i])});
      max_diff = std::max(max_diff, std::abs(num - analytic[i]));
    }
    const double rel = max_diff / std::max(max_abs, 1e-8);
    worst = std::max(worst, rel);
  }
  // fresh graphs do not share grads; clear for the caller
  for (const auto& in : inputs) const_cast<Var<double>&>(in).clear_grad();
  return worst;
}

inline Tensor<double> randn(Shape s, sdrf::Rng& rng, double sd = 1.0) {
  Tensor<double> t(std::move(s));
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.normal(0.0, sd);
  return t;
}

inline Tensor<float> randnf(Shape s, sdrf::Rng& rng, double sd = 1.0) {
  Tensor<float> t(std::move(s));
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<float>(rng.normal(0.0, sd));
  return t;
}

class TmpDir {
 public:
  explicit TmpDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("sdrf_test_" + tag + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TmpDir() { std::filesystem::remove_all(path_); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace testutil
