#pragma once
// Reverse-mode autodiff over Tensor<T>. Define-by-run: every op returns a
// fresh Var whose node remembers its parents and a closure that pushes
// gradients back to them. backward() walks nodes in reverse creation order,
// which is a valid topological order because edges always point to older
// nodes.

#include <cmath>
#include <functional>
#include <memory>
#include <unordered_set>
#include <vector>

#include "sdrf/kernels.hpp"
#include "sdrf/tensor.hpp"

namespace sdrf::ag {

template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;
  bool requires_grad = false;
  bool grad_ready = false;
  int64_t id = 0;
  std::vector<std::shared_ptr<Node<T>>> parents;
  std::function<void(Node<T>&)> backward_fn;
};

namespace detail {
inline int64_t next_id() {
  static thread_local int64_t counter = 0;
  return ++counter;
}
inline bool& grad_mode() {
  static thread_local bool enabled = true;
  return enabled;
}
}  // namespace detail

struct NoGradGuard {
  NoGradGuard() : prev(detail::grad_mode()) { detail::grad_mode() = false; }
  ~NoGradGuard() { detail::grad_mode() = prev; }
  bool prev;
};

inline bool grad_enabled() { return detail::grad_mode(); }

template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node<T>> n) : node_(std::move(n)) {}
  explicit Var(Tensor<T> value, bool requires_grad = false) {
    node_ = std::make_shared<Node<T>>();
    node_->value = std::move(value);
    node_->requires_grad = requires_grad && grad_enabled();
    node_->id = detail::next_id();
  }

  bool defined() const { return node_ != nullptr; }
  const Tensor<T>& value() const { return node_->value; }
  Tensor<T>& value() { return node_->value; }
  const Tensor<T>& grad() const { return node_->grad; }
  bool has_grad() const { return node_ && node_->grad_ready; }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  const Shape& shape() const { return node_->value.shape(); }
  int64_t numel() const { return node_->value.numel(); }

  std::shared_ptr<Node<T>> node() const { return node_; }

  void clear_grad() {
    if (node_) {
      node_->grad = Tensor<T>();
      node_->grad_ready = false;
    }
  }

 private:
  std::shared_ptr<Node<T>> node_;
};

template <typename T>
void accumulate(Node<T>& n, const Tensor<T>& g) {
  if (!n.requires_grad) return;
  if (!n.grad_ready) {
    n.grad = Tensor<T>(n.value.shape());
    n.grad_ready = true;
  }
  kern::ops<T>().axpy(static_cast<std::size_t>(g.numel()), T(1), g.data(), n.grad.data());
}

// Builds the result node. `parents` that do not require grad are still
// recorded (the closure may read their values) as long as at least one
// parent requires grad; otherwise the node is value-only.
template <typename T>
Var<T> make_op(Tensor<T> value, std::vector<std::shared_ptr<Node<T>>> parents,
               std::function<void(Node<T>&)> backward_fn) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  n->id = detail::next_id();
  bool need = false;
  if (grad_enabled())
    for (const auto& p : parents)
      if (p && p->requires_grad) need = true;
  if (need) {
    n->requires_grad = true;
    n->parents = std::move(parents);
    n->backward_fn = std::move(backward_fn);
  }
  return Var<T>(n);
}

template <typename T>
void backward(const Var<T>& root, Tensor<T> seed) {
  auto r = root.node();
  if (!r || !r->requires_grad) throw Error("backward() on a non-differentiable value");
  if (!seed.same_shape(r->value)) throw ShapeError("backward seed shape mismatch");
  r->grad = std::move(seed);
  r->grad_ready = true;

  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<Node<T>*> stack{r.get()};
  seen.insert(r.get());
  while (!stack.empty()) {
    Node<T>* n = stack.back();
    stack.pop_back();
    order.push_back(n);
    for (auto& p : n->parents)
      if (p && p->requires_grad && seen.insert(p.get()).second) stack.push_back(p.get());
  }
  std::sort(order.begin(), order.end(),
            [](const Node<T>* a, const Node<T>* b) { return a->id > b->id; });
  for (Node<T>* n : order)
    if (n->backward_fn && n->grad_ready) n->backward_fn(*n);
}

template <typename T>
void backward(const Var<T>& root) {
  backward(root, Tensor<T>(root.value().shape(), T(1)));
}

// ---------------------------------------------------------------------------
// elementwise and shape ops

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  if (!a.value().same_shape(b.value())) throw ShapeError("add: shape mismatch");
  Tensor<T> out(a.shape());
  kern::ops<T>().add(static_cast<std::size_t>(out.numel()), a.value().data(),
                     b.value().data(), out.data());
  return make_op<T>(std::move(out), {a.node(), b.node()}, [](Node<T>& self) {
    accumulate(*self.parents[0], self.grad);
    accumulate(*self.parents[1], self.grad);
  });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  if (!a.value().same_shape(b.value())) throw ShapeError("sub: shape mismatch");
  Tensor<T> out(a.shape());
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] - b.value()[i];
  return make_op<T>(std::move(out), {a.node(), b.node()}, [](Node<T>& self) {
    accumulate(*self.parents[0], self.grad);
    Tensor<T> neg(self.grad.shape());
    for (int64_t i = 0; i < neg.numel(); ++i) neg[i] = -self.grad[i];
    accumulate(*self.parents[1], neg);
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  if (!a.value().same_shape(b.value())) throw ShapeError("mul: shape mismatch");
  Tensor<T> out(a.shape());
  kern::ops<T>().mul(static_cast<std::size_t>(out.numel()), a.value().data(),
                     b.value().data(), out.data());
  return make_op<T>(std::move(out), {a.node(), b.node()}, [](Node<T>& self) {
    const Tensor<T>& av = self.parents[0]->value;
    const Tensor<T>& bv = self.parents[1]->value;
    Tensor<T> ga(av.shape()), gb(bv.shape());
    kern::ops<T>().mul(static_cast<std::size_t>(ga.numel()), self.grad.data(), bv.data(), ga.data());
    kern::ops<T>().mul(static_cast<std::size_t>(gb.numel()), self.grad.data(), av.data(), gb.data());
    accumulate(*self.parents[0], ga);
    accumulate(*self.parents[1], gb);
  });
}

template <typename T>
Var<T> scale(const Var<T>& a, T alpha) {
  Tensor<T> out(a.shape());
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = alpha * a.value()[i];
  return make_op<T>(std::move(out), {a.node()}, [alpha](Node<T>& self) {
    Tensor<T> g(self.grad.shape());
    for (int64_t i = 0; i < g.numel(); ++i) g[i] = alpha * self.grad[i];
    accumulate(*self.parents[0], g);
  });
}

// out = a + constant tensor (no gradient into the constant)
template <typename T>
Var<T> add_const(const Var<T>& a, const Tensor<T>& c) {
  if (!a.value().same_shape(c)) throw ShapeError("add_const: shape mismatch");
  Tensor<T> out(a.shape());
  kern::ops<T>().add(static_cast<std::size_t>(out.numel()), a.value().data(), c.data(), out.data());
  return make_op<T>(std::move(out), {a.node()},
                    [](Node<T>& self) { accumulate(*self.parents[0], self.grad); });
}

template <typename T>
Var<T> relu(const Var<T>& a) {
  Tensor<T> out(a.shape());
  kern::ops<T>().relu(static_cast<std::size_t>(out.numel()), a.value().data(), out.data());
  return make_op<T>(std::move(out), {a.node()}, [](Node<T>& self) {
    const Tensor<T>& x = self.parents[0]->value;
    Tensor<T> g(x.shape());
    for (int64_t i = 0; i < g.numel(); ++i) g[i] = x[i] > T(0) ? self.grad[i] : T(0);
    accumulate(*self.parents[0], g);
  });
}

template <typename T>
Var<T> sigmoid(const Var<T>& a) {
  Tensor<T> out(a.shape());
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = T(1) / (T(1) + std::exp(-a.value()[i]));
  return make_op<T>(std::move(out), {a.node()}, [](Node<T>& self) {
    Tensor<T> g(self.grad.shape());
    for (int64_t i = 0; i < g.numel(); ++i) {
      T s = self.value[i];
      g[i] = self.grad[i] * s * (T(1) - s);
    }
    accumulate(*self.parents[0], g);
  });
}

template <typename T>
Var<T> gelu(const Var<T>& a) {
  constexpr T kInvSqrt2 = T(0.70710678118654752440);
  constexpr T kInvSqrt2Pi = T(0.39894228040143267794);
  Tensor<T> out(a.shape());
  for (int64_t i = 0; i < out.numel(); ++i) {
    T x = a.value()[i];
    out[i] = x * T(0.5) * (T(1) + std::erf(x * kInvSqrt2));
  }
  return make_op<T>(std::move(out), {a.node()}, [kInvSqrt2, kInvSqrt2Pi](Node<T>& self) {
    const Tensor<T>& x = self.parents[0]->value;
    Tensor<T> g(x.shape());
    for (int64_t i = 0; i < g.numel(); ++i) {
      T v = x[i];
      T cdf = T(0.5) * (T(1) + std::erf(v * kInvSqrt2));
      T pdf = kInvSqrt2Pi * std::exp(T(-0.5) * v * v);
      g[i] = self.grad[i] * (cdf + v * pdf);
    }
    accumulate(*self.parents[0], g);
  });
}

template <typename T>
Var<T> reshape(const Var<T>& a, Shape s) {
  Tensor<T> out = a.value().reshaped(std::move(s));
  return make_op<T>(std::move(out), {a.node()}, [](Node<T>& self) {
    accumulate(*self.parents[0], self.grad.reshaped(self.parents[0]->value.shape()));
  });
}

namespace detail {
// Walks the permuted-output iteration space. Gather: out[o] = in[src].
// Scatter (backward): out[src] += in[o], where `out` then has the original
// input shape — the geometry is always derived from the pre-permute shape.
template <typename T>
void permute_copy(const Tensor<T>& in, Tensor<T>& out, const std::vector<int>& perm,
                  bool scatter) {
  const int r = in.rank();
  const Shape& is = scatter ? out.shape() : in.shape();
  Shape os(static_cast<std::size_t>(r));
  for (int i = 0; i < r; ++i) os[static_cast<std::size_t>(i)] = is[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])];
  // strides of input axes in output iteration order
  std::vector<int64_t> istride(static_cast<std::size_t>(r), 1);
  for (int i = r - 2; i >= 0; --i)
    istride[static_cast<std::size_t>(i)] = istride[static_cast<std::size_t>(i + 1)] * is[static_cast<std::size_t>(i + 1)];
  std::vector<int64_t> stride_for_out(static_cast<std::size_t>(r));
  for (int i = 0; i < r; ++i)
    stride_for_out[static_cast<std::size_t>(i)] = istride[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])];
  std::vector<int64_t> idx(static_cast<std::size_t>(r), 0);
  const int64_t n = in.numel();
  int64_t src = 0;
  const T* ip = in.data();
  T* op = out.data();
  for (int64_t o = 0; o < n; ++o) {
    if (scatter)
      op[src] += ip[o];
    else
      op[o] = ip[src];
    // increment mixed-radix counter over output dims
    for (int ax = r - 1; ax >= 0; --ax) {
      idx[static_cast<std::size_t>(ax)]++;
      src += stride_for_out[static_cast<std::size_t>(ax)];
      if (idx[static_cast<std::size_t>(ax)] < os[static_cast<std::size_t>(ax)]) break;
      src -= stride_for_out[static_cast<std::size_t>(ax)] * os[static_cast<std::size_t>(ax)];
      idx[static_cast<std::size_t>(ax)] = 0;
    }
  }
}
}  // namespace detail

template <typename T>
Var<T> permute(const Var<T>& a, std::vector<int> perm) {
  const Shape& is = a.shape();
  if (perm.size() != is.size()) throw ShapeError("permute: rank mismatch");
  Shape os(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) os[i] = is[static_cast<std::size_t>(perm[i])];
  Tensor<T> out(os);
  detail::permute_copy(a.value(), out, perm, false);
  return make_op<T>(std::move(out), {a.node()}, [perm](Node<T>& self) {
    Tensor<T> g(self.parents[0]->value.shape());
    // scatter: walking output order while writing through the same mapping
    detail::permute_copy(self.grad, g, perm, true);
    accumulate(*self.parents[0], g);
  });
}

template <typename T>
Var<T> concat(const std::vector<Var<T>>& xs, int axis) {
  if (xs.empty()) throw ShapeError("concat: no inputs");
  const Shape& s0 = xs[0].shape();
  const int r = static_cast<int>(s0.size());
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= s0[static_cast<std::size_t>(i)];
  for (int i = axis + 1; i < r; ++i) inner *= s0[static_cast<std::size_t>(i)];
  int64_t total_axis = 0;
  for (const auto& x : xs) {
    const Shape& s = x.shape();
    for (int i = 0; i < r; ++i)
      if (i != axis && s[static_cast<std::size_t>(i)] != s0[static_cast<std::size_t>(i)])
        throw ShapeError("concat: off-axis shape mismatch");
    total_axis += s[static_cast<std::size_t>(axis)];
  }
  Shape os = s0;
  os[static_cast<std::size_t>(axis)] = total_axis;
  Tensor<T> out(os);
  std::vector<int64_t> spans;
  int64_t off = 0;
  for (const auto& x : xs) {
    const int64_t len = x.shape()[static_cast<std::size_t>(axis)] * inner;
    spans.push_back(len);
    for (int64_t o = 0; o < outer; ++o)
      std::copy_n(x.value().data() + o * len, len, out.data() + o * total_axis * inner + off);
    off += len;
  }
  std::vector<std::shared_ptr<Node<T>>> parents;
  for (const auto& x : xs) parents.push_back(x.node());
  return make_op<T>(std::move(out), std::move(parents),
                    [outer, inner, total_axis, spans](Node<T>& self) {
                      int64_t off2 = 0;
                      for (std::size_t i = 0; i < self.parents.size(); ++i) {
                        auto& p = *self.parents[i];
                        if (p.requires_grad) {
                          Tensor<T> g(p.value.shape());
                          for (int64_t o = 0; o < outer; ++o)
                            std::copy_n(self.grad.data() + o * total_axis * inner + off2,
                                        spans[i], g.data() + o * spans[i]);
                          accumulate(p, g);
                        }
                        off2 += spans[i];
                      }
                    });
}

template <typename T>
Var<T> slice(const Var<T>& a, int axis, int64_t start, int64_t len) {
  const Shape& is = a.shape();
  const int r = static_cast<int>(is.size());
  if (start < 0 || start + len > is[static_cast<std::size_t>(axis)])
    throw ShapeError("slice out of range");
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= is[static_cast<std::size_t>(i)];
  for (int i = axis + 1; i < r; ++i) inner *= is[static_cast<std::size_t>(i)];
  Shape os = is;
  os[static_cast<std::size_t>(axis)] = len;
  Tensor<T> out(os);
  const int64_t in_span = is[static_cast<std::size_t>(axis)] * inner;
  for (int64_t o = 0; o < outer; ++o)
    std::copy_n(a.value().data() + o * in_span + start * inner, len * inner,
                out.data() + o * len * inner);
  return make_op<T>(std::move(out), {a.node()},
                    [axis, start, len, outer, inner, in_span](Node<T>& self) {
                      (void)axis;
                      Tensor<T> g(self.parents[0]->value.shape());
                      for (int64_t o = 0; o < outer; ++o)
                        std::copy_n(self.grad.data() + o * len * inner, len * inner,
                                    g.data() + o * in_span + start * inner);
                      accumulate(*self.parents[0], g);
                    });
}

template <typename T>
Var<T> sum_all(const Var<T>& a) {
  Tensor<T> out(Shape{1});
  out[0] = kern::ops<T>().sum(static_cast<std::size_t>(a.numel()), a.value().data());
  return make_op<T>(std::move(out), {a.node()}, [](Node<T>& self) {
    Tensor<T> g(self.parents[0]->value.shape(), self.grad[0]);
    accumulate(*self.parents[0], g);
  });
}

template <typename T>
Var<T> mean_all(const Var<T>& a) {
  const T n = static_cast<T>(a.numel());
  Tensor<T> out(Shape{1});
  out[0] = kern::ops<T>().sum(static_cast<std::size_t>(a.numel()), a.value().data()) / n;
  return make_op<T>(std::move(out), {a.node()}, [n](Node<T>& self) {
    Tensor<T> g(self.parents[0]->value.shape(), self.grad[0] / n);
    accumulate(*self.parents[0], g);
  });
}

template <typename T>
Var<T> softmax_lastdim(const Var<T>& a) {
  const Shape& s = a.shape();
  const int64_t cols = s.back();
  const int64_t rows = a.numel() / cols;
  Tensor<T> out(s);
  for (int64_t r = 0; r < rows; ++r) {
    const T* x = a.value().data() + r * cols;
    T* y = out.data() + r * cols;
    T mx = x[0];
    for (int64_t j = 1; j < cols; ++j) mx = std::max(mx, x[j]);
    T z = 0;
    for (int64_t j = 0; j < cols; ++j) {
      y[j] = std::exp(x[j] - mx);
      z += y[j];
    }
    for (int64_t j = 0; j < cols; ++j) y[j] /= z;
  }
  return make_op<T>(std::move(out), {a.node()}, [rows, cols](Node<T>& self) {
    Tensor<T> g(self.value.shape());
    for (int64_t r = 0; r < rows; ++r) {
      const T* p = self.value.data() + r * cols;
      const T* dy = self.grad.data() + r * cols;
      T dotv = 0;
      for (int64_t j = 0; j < cols; ++j) dotv += p[j] * dy[j];
      T* dx = g.data() + r * cols;
      for (int64_t j = 0; j < cols; ++j) dx[j] = p[j] * (dy[j] - dotv);
    }
    accumulate(*self.parents[0], g);
  });
}

// batched matmul: a (...,M,K) x b (...,K,N) -> (...,M,N); set trans_b to read
// b as (...,N,K). Leading batch dims must match exactly.
template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b, bool trans_b = false) {
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  if (as.size() != bs.size() || as.size() < 2) throw ShapeError("matmul: rank mismatch");
  const int r = static_cast<int>(as.size());
  int64_t batch = 1;
  for (int i = 0; i < r - 2; ++i) {
    if (as[static_cast<std::size_t>(i)] != bs[static_cast<std::size_t>(i)])
      throw ShapeError("matmul: batch dims differ");
    batch *= as[static_cast<std::size_t>(i)];
  }
  const int64_t m = as[static_cast<std::size_t>(r - 2)];
  const int64_t k = as[static_cast<std::size_t>(r - 1)];
  const int64_t kb = trans_b ? bs[static_cast<std::size_t>(r - 1)] : bs[static_cast<std::size_t>(r - 2)];
  const int64_t n = trans_b ? bs[static_cast<std::size_t>(r - 2)] : bs[static_cast<std::size_t>(r - 1)];
  if (k != kb) throw ShapeError("matmul: inner dims differ");
  Shape os = as;
  os[static_cast<std::size_t>(r - 1)] = n;
  Tensor<T> out(os);
  const auto& K = kern::ops<T>();
  for (int64_t i = 0; i < batch; ++i)
    K.gemm(false, trans_b, static_cast<std::size_t>(m), static_cast<std::size_t>(n),
           static_cast<std::size_t>(k), T(1), a.value().data() + i * m * k,
           static_cast<std::size_t>(k), b.value().data() + i * k * n,
           static_cast<std::size_t>(trans_b ? k : n), T(0), out.data() + i * m * n,
           static_cast<std::size_t>(n));
  return make_op<T>(std::move(out), {a.node(), b.node()},
                    [batch, m, n, k, trans_b](Node<T>& self) {
                      const auto& K2 = kern::ops<T>();
                      auto& pa = *self.parents[0];
                      auto& pb = *self.parents[1];
                      if (pa.requires_grad) {
                        Tensor<T> ga(pa.value.shape());
                        for (int64_t i = 0; i < batch; ++i)
                          K2.gemm(false, !trans_b, static_cast<std::size_t>(m),
                                  static_cast<std::size_t>(k), static_cast<std::size_t>(n), T(1),
                                  self.grad.data() + i * m * n, static_cast<std::size_t>(n),
                                  pb.value.data() + i * k * n,
                                  static_cast<std::size_t>(trans_b ? k : n), T(0),
                                  ga.data() + i * m * k, static_cast<std::size_t>(k));
                        accumulate(pa, ga);
                      }
                      if (pb.requires_grad) {
                        Tensor<T> gb(pb.value.shape());
                        for (int64_t i = 0; i < batch; ++i) {
                          if (!trans_b)  // dB(K,N) = A^T dC
                            K2.gemm(true, false, static_cast<std::size_t>(k),
                                    static_cast<std::size_t>(n), static_cast<std::size_t>(m), T(1),
                                    pa.value.data() + i * m * k, static_cast<std::size_t>(k),
                                    self.grad.data() + i * m * n, static_cast<std::size_t>(n),
                                    T(0), gb.data() + i * k * n, static_cast<std::size_t>(n));
                          else  // dB(N,K) = dC^T A
                            K2.gemm(true, false, static_cast<std::size_t>(n),
                                    static_cast<std::size_t>(k), static_cast<std::size_t>(m), T(1),
                                    self.grad.data() + i * m * n, static_cast<std::size_t>(n),
                                    pa.value.data() + i * m * k, static_cast<std::size_t>(k), T(0),
                                    gb.data() + i * n * k, static_cast<std::size_t>(k));
                        }
                        accumulate(pb, gb);
                      }
                    });
}

// x (...,K) * W(O,K)^T + b -> (...,O)
template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& b) {
  const Shape& xs = x.shape();
  const int64_t k = xs.back();
  const int64_t rows = x.numel() / k;
  const int64_t o = w.shape()[0];
  if (w.shape()[1] != k) throw ShapeError("linear: weight/input dim mismatch");
  Shape os = xs;
  os.back() = o;
  Tensor<T> out(os);
  kern::ops<T>().gemm(false, true, static_cast<std::size_t>(rows), static_cast<std::size_t>(o),
                      static_cast<std::size_t>(k), T(1), x.value().data(),
                      static_cast<std::size_t>(k), w.value().data(), static_cast<std::size_t>(k),
                      T(0), out.data(), static_cast<std::size_t>(o));
  if (b.defined())
    for (int64_t r = 0; r < rows; ++r)
      kern::ops<T>().axpy(static_cast<std::size_t>(o), T(1), b.value().data(),
                          out.data() + r * o);
  return make_op<T>(std::move(out), {x.node(), w.node(), b.defined() ? b.node() : nullptr},
                    [rows, k, o](Node<T>& self) {
                      const auto& K2 = kern::ops<T>();
                      auto& px = *self.parents[0];
                      auto& pw = *self.parents[1];
                      if (px.requires_grad) {
                        Tensor<T> gx(px.value.shape());
                        K2.gemm(false, false, static_cast<std::size_t>(rows),
                                static_cast<std::size_t>(k), static_cast<std::size_t>(o), T(1),
                                self.grad.data(), static_cast<std::size_t>(o), pw.value.data(),
                                static_cast<std::size_t>(k), T(0), gx.data(),
                                static_cast<std::size_t>(k));
                        accumulate(px, gx);
                      }
                      if (pw.requires_grad) {
                        Tensor<T> gw(pw.value.shape());
                        K2.gemm(true, false, static_cast<std::size_t>(o),
                                static_cast<std::size_t>(k), static_cast<std::size_t>(rows), T(1),
                                self.grad.data(), static_cast<std::size_t>(o), px.value.data(),
                                static_cast<std::size_t>(k), T(0), gw.data(),
                                static_cast<std::size_t>(k));
                        accumulate(pw, gw);
                      }
                      if (self.parents[2] && self.parents[2]->requires_grad) {
                        Tensor<T> gb(self.parents[2]->value.shape());
                        for (int64_t r = 0; r < rows; ++r)
                          kern::ops<T>().axpy(static_cast<std::size_t>(o), T(1),
                                              self.grad.data() + r * o, gb.data());
                        accumulate(*self.parents[2], gb);
                      }
                    });
}

// layer norm over the last axis with affine parameters
template <typename T>
Var<T> layer_norm_lastdim(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps) {
  const int64_t c = x.shape().back();
  const int64_t rows = x.numel() / c;
  if (gamma.numel() != c || beta.numel() != c) throw ShapeError("layer_norm: affine size");
  Tensor<T> out(x.shape());
  Tensor<T> inv_sd(Shape{rows});
  Tensor<T> mean(Shape{rows});
  for (int64_t r = 0; r < rows; ++r) {
    const T* xp = x.value().data() + r * c;
    T mu = kern::ops<T>().sum(static_cast<std::size_t>(c), xp) / static_cast<T>(c);
    T var = 0;
    for (int64_t j = 0; j < c; ++j) var += (xp[j] - mu) * (xp[j] - mu);
    var /= static_cast<T>(c);
    T inv = T(1) / std::sqrt(var + eps);
    mean[r] = mu;
    inv_sd[r] = inv;
    T* yp = out.data() + r * c;
    const T* g = gamma.value().data();
    const T* b = beta.value().data();
    for (int64_t j = 0; j < c; ++j) yp[j] = g[j] * (xp[j] - mu) * inv + b[j];
  }
  return make_op<T>(std::move(out), {x.node(), gamma.node(), beta.node()},
                    [rows, c, mean, inv_sd](Node<T>& self) {
                      auto& px = *self.parents[0];
                      auto& pg = *self.parents[1];
                      auto& pb = *self.parents[2];
                      Tensor<T> gx(px.value.shape());
                      Tensor<T> gg(Shape{c});
                      Tensor<T> gb(Shape{c});
                      const T* gamma_v = pg.value.data();
                      for (int64_t r = 0; r < rows; ++r) {
                        const T* xp = px.value.data() + r * c;
                        const T* dy = self.grad.data() + r * c;
                        const T mu = mean[r];
                        const T inv = inv_sd[r];
                        T sum_dyg = 0, sum_dyg_xhat = 0;
                        for (int64_t j = 0; j < c; ++j) {
                          const T xhat = (xp[j] - mu) * inv;
                          const T dyg = dy[j] * gamma_v[j];
                          sum_dyg += dyg;
                          sum_dyg_xhat += dyg * xhat;
                          gg[j] += dy[j] * xhat;
                          gb[j] += dy[j];
                        }
                        const T inv_c = T(1) / static_cast<T>(c);
                        T* dx = gx.data() + r * c;
                        for (int64_t j = 0; j < c; ++j) {
                          const T xhat = (xp[j] - mu) * inv;
                          dx[j] = inv * (dy[j] * gamma_v[j] - sum_dyg * inv_c -
                                         xhat * sum_dyg_xhat * inv_c);
                        }
                      }
                      accumulate(px, gx);
                      accumulate(pg, gg);
                      accumulate(pb, gb);
                    });
}

// (B,C,spatial...) scaled per channel by g (B,C)
template <typename T>
Var<T> channel_scale(const Var<T>& x, const Var<T>& g) {
  const Shape& xs = x.shape();
  const int64_t bsz = xs[0], c = xs[1];
  const int64_t inner = x.numel() / (bsz * c);
  if (g.shape() != Shape{bsz, c}) throw ShapeError("channel_scale: gate shape");
  Tensor<T> out(xs);
  for (int64_t b = 0; b < bsz; ++b)
    for (int64_t ch = 0; ch < c; ++ch) {
      const T gv = g.value()[b * c + ch];
      const T* xp = x.value().data() + (b * c + ch) * inner;
      T* yp = out.data() + (b * c + ch) * inner;
      for (int64_t i = 0; i < inner; ++i) yp[i] = xp[i] * gv;
    }
  return make_op<T>(std::move(out), {x.node(), g.node()}, [bsz, c, inner](Node<T>& self) {
    auto& px = *self.parents[0];
    auto& pg = *self.parents[1];
    if (px.requires_grad) {
      Tensor<T> gx(px.value.shape());
      for (int64_t b = 0; b < bsz; ++b)
        for (int64_t ch = 0; ch < c; ++ch) {
          const T gv = pg.value[b * c + ch];
          const T* dy = self.grad.data() + (b * c + ch) * inner;
          T* dx = gx.data() + (b * c + ch) * inner;
          for (int64_t i = 0; i < inner; ++i) dx[i] = dy[i] * gv;
        }
      accumulate(px, gx);
    }
    if (pg.requires_grad) {
      Tensor<T> gg(pg.value.shape());
      for (int64_t b = 0; b < bsz; ++b)
        for (int64_t ch = 0; ch < c; ++ch)
          gg[b * c + ch] = kern::ops<T>().dot(static_cast<std::size_t>(inner),
                                              self.grad.data() + (b * c + ch) * inner,
                                              px.value.data() + (b * c + ch) * inner);
      accumulate(pg, gg);
    }
  });
}

// cyclic shift of the three spatial axes of a (B,C,D,H,W) field;
// out[d] = in[(d - sd) mod D] etc.
template <typename T>
Var<T> roll3d(const Var<T>& x, int64_t sd, int64_t sh, int64_t sw) {
  const Shape& s = x.shape();
  const int64_t D = s[2], H = s[3], W = s[4];
  auto wrap = [](int64_t i, int64_t n) { return ((i % n) + n) % n; };
  const int64_t planes = s[0] * s[1];
  auto apply = [planes, D, H, W, wrap](const Tensor<T>& in, Tensor<T>& out, int64_t ad,
                                       int64_t ah, int64_t aw) {
    for (int64_t p = 0; p < planes; ++p) {
      const T* ip = in.data() + p * D * H * W;
      T* op = out.data() + p * D * H * W;
      for (int64_t d = 0; d < D; ++d) {
        const int64_t sd2 = wrap(d - ad, D);
        for (int64_t h = 0; h < H; ++h) {
          const int64_t sh2 = wrap(h - ah, H);
          const T* src = ip + (sd2 * H + sh2) * W;
          T* dst = op + (d * H + h) * W;
          if (aw == 0) {
            std::copy_n(src, W, dst);
          } else {
            for (int64_t w = 0; w < W; ++w) dst[w] = src[wrap(w - aw, W)];
          }
        }
      }
    }
  };
  Tensor<T> out(s);
  apply(x.value(), out, sd, sh, sw);
  return make_op<T>(std::move(out), {x.node()}, [sd, sh, sw, apply](Node<T>& self) {
    Tensor<T> g(self.parents[0]->value.shape());
    apply(self.grad, g, -sd, -sh, -sw);
    accumulate(*self.parents[0], g);
  });
}

// mean cross entropy over the batch; labels are class indices
template <typename T>
Var<T> cross_entropy(const Var<T>& logits, const std::vector<int>& labels) {
  const Shape& s = logits.shape();
  if (s.size() != 2) throw ShapeError("cross_entropy expects (B,K) logits");
  const int64_t bsz = s[0], k = s[1];
  if (static_cast<int64_t>(labels.size()) != bsz) throw ShapeError("cross_entropy: label count");
  Tensor<T> probs(s);
  T loss = 0;
  for (int64_t b = 0; b < bsz; ++b) {
    const T* x = logits.value().data() + b * k;
    T* p = probs.data() + b * k;
    T mx = x[0];
    for (int64_t j = 1; j < k; ++j) mx = std::max(mx, x[j]);
    T z = 0;
    for (int64_t j = 0; j < k; ++j) {
      p[j] = std::exp(x[j] - mx);
      z += p[j];
    }
    for (int64_t j = 0; j < k; ++j) p[j] /= z;
    loss -= std::log(std::max(p[labels[static_cast<std::size_t>(b)]], T(1e-30)));
  }
  Tensor<T> out(Shape{1});
  out[0] = loss / static_cast<T>(bsz);
  return make_op<T>(std::move(out), {logits.node()}, [probs, labels, bsz, k](Node<T>& self) {
    Tensor<T> g(self.parents[0]->value.shape());
    const T scale_g = self.grad[0] / static_cast<T>(bsz);
    for (int64_t b = 0; b < bsz; ++b) {
      const T* p = probs.data() + b * k;
      T* dx = g.data() + b * k;
      for (int64_t j = 0; j < k; ++j) dx[j] = p[j] * scale_g;
      dx[labels[static_cast<std::size_t>(b)]] -= scale_g;
    }
    accumulate(*self.parents[0], g);
  });
}

}  // namespace sdrf::ag
