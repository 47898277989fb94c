#pragma once
// Parameter registry and the small layer vocabulary the models are built
// from. Parameters are registered by hierarchical name; the store is what
// optimizers, checkpoints, and the transfer surgery operate on.

#include <array>
#include <map>
#include <string>

#include "sdrf/ops3d.hpp"
#include "sdrf/rng.hpp"

namespace sdrf::nn {

using ag::Var;

template <typename T>
class ParamStore {
 public:
  Var<T> add_param(const std::string& name, Tensor<T> init) {
    if (params_.count(name)) throw Error("duplicate parameter: " + name);
    Var<T> v(std::move(init), /*requires_grad=*/false);
    v.node()->requires_grad = true;  // independent of the ambient grad mode
    params_.emplace(name, v);
    return v;
  }

  Tensor<T>& add_buffer(const std::string& name, Tensor<T> init) {
    if (buffers_.count(name)) throw Error("duplicate buffer: " + name);
    return buffers_.emplace(name, std::move(init)).first->second;
  }

  std::map<std::string, Var<T>>& params() { return params_; }
  const std::map<std::string, Var<T>>& params() const { return params_; }
  std::map<std::string, Tensor<T>>& buffers() { return buffers_; }
  const std::map<std::string, Tensor<T>>& buffers() const { return buffers_; }

  Var<T>& param(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw Error("unknown parameter: " + name);
    return it->second;
  }

  void zero_grad() {
    for (auto& [k, v] : params_) v.clear_grad();
  }

  int64_t total_params() const {
    int64_t n = 0;
    for (const auto& [k, v] : params_) n += v.numel();
    return n;
  }

 private:
  std::map<std::string, Var<T>> params_;
  std::map<std::string, Tensor<T>> buffers_;
};

namespace init {
template <typename T>
Tensor<T> normal(Shape s, double sd, Rng& rng) {
  Tensor<T> t(std::move(s));
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(rng.normal(0.0, sd));
  return t;
}
template <typename T>
Tensor<T> kaiming(Shape s, int64_t fan_in, Rng& rng) {
  return normal<T>(std::move(s), std::sqrt(2.0 / static_cast<double>(fan_in)), rng);
}
}  // namespace init

template <typename T>
struct Conv3dLayer {
  Var<T> weight, bias;
  ag::Conv3dGeom geom;

  Conv3dLayer() = default;
  Conv3dLayer(ParamStore<T>& ps, const std::string& name, int64_t cin, int64_t cout,
              std::array<int64_t, 3> k, std::array<int64_t, 3> stride,
              std::array<int64_t, 3> pad, Rng& rng, bool with_bias = true) {
    geom = {k[0], k[1], k[2], stride[0], stride[1], stride[2], pad[0], pad[1], pad[2]};
    const int64_t fan_in = cin * k[0] * k[1] * k[2];
    weight = ps.add_param(name + ".weight",
                          init::kaiming<T>({cout, cin, k[0], k[1], k[2]}, fan_in, rng));
    if (with_bias) bias = ps.add_param(name + ".bias", Tensor<T>(Shape{cout}));
  }

  Var<T> forward(const Var<T>& x) const { return ag::conv3d(x, weight, bias, geom); }
};

template <typename T>
struct BatchNorm3dLayer {
  Var<T> gamma, beta;
  Tensor<T>* running_mean = nullptr;
  Tensor<T>* running_var = nullptr;
  T momentum = T(0.1);
  T eps = T(1e-5);

  BatchNorm3dLayer() = default;
  BatchNorm3dLayer(ParamStore<T>& ps, const std::string& name, int64_t c) {
    gamma = ps.add_param(name + ".gamma", Tensor<T>(Shape{c}, T(1)));
    beta = ps.add_param(name + ".beta", Tensor<T>(Shape{c}));
    running_mean = &ps.add_buffer(name + ".running_mean", Tensor<T>(Shape{c}));
    running_var = &ps.add_buffer(name + ".running_var", Tensor<T>(Shape{c}, T(1)));
  }

  Var<T> forward(const Var<T>& x, bool training) const {
    return ag::batch_norm3d(x, gamma, beta, *running_mean, *running_var, training, momentum,
                            eps);
  }
};

template <typename T>
struct LayerNormLayer {
  Var<T> gamma, beta;
  T eps = T(1e-5);

  LayerNormLayer() = default;
  LayerNormLayer(ParamStore<T>& ps, const std::string& name, int64_t c) {
    gamma = ps.add_param(name + ".gamma", Tensor<T>(Shape{c}, T(1)));
    beta = ps.add_param(name + ".beta", Tensor<T>(Shape{c}));
  }

  Var<T> forward(const Var<T>& x) const { return ag::layer_norm_lastdim(x, gamma, beta, eps); }
};

template <typename T>
struct LinearLayer {
  Var<T> weight, bias;

  LinearLayer() = default;
  LinearLayer(ParamStore<T>& ps, const std::string& name, int64_t in, int64_t out, Rng& rng,
              bool with_bias = true) {
    weight = ps.add_param(name + ".weight",
                          init::normal<T>({out, in}, std::sqrt(1.0 / static_cast<double>(in)), rng));
    if (with_bias) bias = ps.add_param(name + ".bias", Tensor<T>(Shape{out}));
  }

  Var<T> forward(const Var<T>& x) const { return ag::linear(x, weight, bias); }
};

// two-layer MLP with GELU, the transformer feed-forward
template <typename T>
struct MlpLayer {
  LinearLayer<T> fc1, fc2;

  MlpLayer() = default;
  MlpLayer(ParamStore<T>& ps, const std::string& name, int64_t c, int64_t hidden, Rng& rng)
      : fc1(ps, name + ".fc1", c, hidden, rng), fc2(ps, name + ".fc2", hidden, c, rng) {}

  Var<T> forward(const Var<T>& x) const { return fc2.forward(ag::gelu(fc1.forward(x))); }
};

// conv + BN + ReLU, the CNN-side staple
template <typename T>
struct ConvBnRelu {
  Conv3dLayer<T> conv;
  BatchNorm3dLayer<T> bn;

  ConvBnRelu() = default;
  ConvBnRelu(ParamStore<T>& ps, const std::string& name, int64_t cin, int64_t cout,
             std::array<int64_t, 3> k, std::array<int64_t, 3> stride, std::array<int64_t, 3> pad,
             Rng& rng)
      : conv(ps, name + ".conv", cin, cout, k, stride, pad, rng),
        bn(ps, name + ".bn", cout) {}

  Var<T> forward(const Var<T>& x, bool training) const {
    return ag::relu(bn.forward(conv.forward(x), training));
  }
};

}  // namespace sdrf::nn
