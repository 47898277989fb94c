#pragma once
// Volumetric ops over (B,C,D,H,W) fields. Convolution is im2col + gemm; the
// column buffer is rebuilt in the backward pass rather than cached.

#include <array>

#include "sdrf/autograd.hpp"

namespace sdrf::ag {

struct Conv3dGeom {
  int64_t kd = 1, kh = 1, kw = 1;
  int64_t sd = 1, sh = 1, sw = 1;
  int64_t pd = 0, ph = 0, pw = 0;
  int64_t out_d(int64_t d) const { return (d + 2 * pd - kd) / sd + 1; }
  int64_t out_h(int64_t h) const { return (h + 2 * ph - kh) / sh + 1; }
  int64_t out_w(int64_t w) const { return (w + 2 * pw - kw) / sw + 1; }
};

namespace detail {

template <typename T>
void im2col(const T* x, int64_t cin, int64_t D, int64_t H, int64_t W,
            const Conv3dGeom& g, int64_t od, int64_t oh, int64_t ow, T* col) {
  const int64_t n = od * oh * ow;
  int64_t row = 0;
  for (int64_t c = 0; c < cin; ++c) {
    const T* xc = x + c * D * H * W;
    for (int64_t kz = 0; kz < g.kd; ++kz)
      for (int64_t ky = 0; ky < g.kh; ++ky)
        for (int64_t kx = 0; kx < g.kw; ++kx, ++row) {
          T* out = col + row * n;
          for (int64_t z = 0; z < od; ++z) {
            const int64_t iz = z * g.sd - g.pd + kz;
            const bool zin = iz >= 0 && iz < D;
            for (int64_t y = 0; y < oh; ++y) {
              const int64_t iy = y * g.sh - g.ph + ky;
              const bool yin = zin && iy >= 0 && iy < H;
              T* orow = out + (z * oh + y) * ow;
              if (!yin) {
                for (int64_t w = 0; w < ow; ++w) orow[w] = 0;
                continue;
              }
              const T* xrow = xc + (iz * H + iy) * W;
              for (int64_t w = 0; w < ow; ++w) {
                const int64_t ix = w * g.sw - g.pw + kx;
                orow[w] = (ix >= 0 && ix < W) ? xrow[ix] : T(0);
              }
            }
          }
        }
  }
}

template <typename T>
void col2im(const T* col, int64_t cin, int64_t D, int64_t H, int64_t W,
            const Conv3dGeom& g, int64_t od, int64_t oh, int64_t ow, T* x) {
  const int64_t n = od * oh * ow;
  int64_t row = 0;
  for (int64_t c = 0; c < cin; ++c) {
    T* xc = x + c * D * H * W;
    for (int64_t kz = 0; kz < g.kd; ++kz)
      for (int64_t ky = 0; ky < g.kh; ++ky)
        for (int64_t kx = 0; kx < g.kw; ++kx, ++row) {
          const T* in = col + row * n;
          for (int64_t z = 0; z < od; ++z) {
            const int64_t iz = z * g.sd - g.pd + kz;
            if (iz < 0 || iz >= D) continue;
            for (int64_t y = 0; y < oh; ++y) {
              const int64_t iy = y * g.sh - g.ph + ky;
              if (iy < 0 || iy >= H) continue;
              const T* irow = in + (z * oh + y) * ow;
              T* xrow = xc + (iz * H + iy) * W;
              for (int64_t w = 0; w < ow; ++w) {
                const int64_t ix = w * g.sw - g.pw + kx;
                if (ix >= 0 && ix < W) xrow[ix] += irow[w];
              }
            }
          }
        }
  }
}

}  // namespace detail

template <typename T>
Var<T> conv3d(const Var<T>& x, const Var<T>& w, const Var<T>& bias, const Conv3dGeom& g) {
  const Shape& xs = x.shape();
  const Shape& ws = w.shape();
  if (xs.size() != 5 || ws.size() != 5) throw ShapeError("conv3d expects 5D input and weight");
  const int64_t bsz = xs[0], cin = xs[1], D = xs[2], H = xs[3], W = xs[4];
  const int64_t cout = ws[0];
  if (ws[1] != cin || ws[2] != g.kd || ws[3] != g.kh || ws[4] != g.kw)
    throw ShapeError("conv3d: weight shape mismatch for input " + shape_str(xs));
  const int64_t od = g.out_d(D), oh = g.out_h(H), ow = g.out_w(W);
  if (od < 1 || oh < 1 || ow < 1) throw ShapeError("conv3d: empty output");
  const int64_t kdim = cin * g.kd * g.kh * g.kw;
  const int64_t n = od * oh * ow;

  Tensor<T> out(Shape{bsz, cout, od, oh, ow});
  {
    Tensor<T> col(Shape{kdim, n});
    for (int64_t b = 0; b < bsz; ++b) {
      detail::im2col(x.value().data() + b * cin * D * H * W, cin, D, H, W, g, od, oh, ow,
                     col.data());
      kern::ops<T>().gemm(false, false, static_cast<std::size_t>(cout),
                          static_cast<std::size_t>(n), static_cast<std::size_t>(kdim), T(1),
                          w.value().data(), static_cast<std::size_t>(kdim), col.data(),
                          static_cast<std::size_t>(n), T(0), out.data() + b * cout * n,
                          static_cast<std::size_t>(n));
      if (bias.defined())
        for (int64_t c = 0; c < cout; ++c) {
          const T bv = bias.value()[c];
          T* orow = out.data() + (b * cout + c) * n;
          for (int64_t i = 0; i < n; ++i) orow[i] += bv;
        }
    }
  }
  return make_op<T>(
      std::move(out), {x.node(), w.node(), bias.defined() ? bias.node() : nullptr},
      [g, bsz, cin, cout, D, H, W, od, oh, ow, kdim, n](Node<T>& self) {
        auto& px = *self.parents[0];
        auto& pw = *self.parents[1];
        const auto& K = kern::ops<T>();
        Tensor<T> col(Shape{kdim, n});
        Tensor<T> gw, gx, gcol;
        const bool need_w = pw.requires_grad;
        const bool need_x = px.requires_grad;
        if (need_w) gw = Tensor<T>(pw.value.shape());
        if (need_x) {
          gx = Tensor<T>(px.value.shape());
          gcol = Tensor<T>(Shape{kdim, n});
        }
        for (int64_t b = 0; b < bsz; ++b) {
          const T* gout = self.grad.data() + b * cout * n;
          if (need_w) {
            detail::im2col(px.value.data() + b * cin * D * H * W, cin, D, H, W, g, od, oh,
                           ow, col.data());
            K.gemm(false, true, static_cast<std::size_t>(cout), static_cast<std::size_t>(kdim),
                   static_cast<std::size_t>(n), T(1), gout, static_cast<std::size_t>(n),
                   col.data(), static_cast<std::size_t>(n), T(1), gw.data(),
                   static_cast<std::size_t>(kdim));
          }
          if (need_x) {
            K.gemm(true, false, static_cast<std::size_t>(kdim), static_cast<std::size_t>(n),
                   static_cast<std::size_t>(cout), T(1), pw.value.data(),
                   static_cast<std::size_t>(kdim), gout, static_cast<std::size_t>(n), T(0),
                   gcol.data(), static_cast<std::size_t>(n));
            detail::col2im(gcol.data(), cin, D, H, W, g, od, oh, ow,
                           gx.data() + b * cin * D * H * W);
          }
        }
        if (need_w) accumulate(pw, gw);
        if (need_x) accumulate(px, gx);
        if (self.parents[2] && self.parents[2]->requires_grad) {
          Tensor<T> gb(self.parents[2]->value.shape());
          for (int64_t b = 0; b < bsz; ++b)
            for (int64_t c = 0; c < cout; ++c)
              gb[c] += K.sum(static_cast<std::size_t>(n), self.grad.data() + (b * cout + c) * n);
          accumulate(*self.parents[2], gb);
        }
      });
}

// Batch norm over (B, spatial) per channel. Training mode normalizes by
// batch statistics and updates the running buffers in place; eval mode uses
// the buffers.
template <typename T>
Var<T> batch_norm3d(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta,
                    Tensor<T>& running_mean, Tensor<T>& running_var, bool training,
                    T momentum, T eps) {
  const Shape& s = x.shape();
  const int64_t bsz = s[0], c = s[1];
  const int64_t inner = x.numel() / (bsz * c);
  const int64_t m = bsz * inner;
  Tensor<T> mean(Shape{c}), inv_sd(Shape{c});
  if (training) {
    for (int64_t ch = 0; ch < c; ++ch) {
      T mu = 0;
      for (int64_t b = 0; b < bsz; ++b)
        mu += kern::ops<T>().sum(static_cast<std::size_t>(inner),
                                 x.value().data() + (b * c + ch) * inner);
      mu /= static_cast<T>(m);
      T var = 0;
      for (int64_t b = 0; b < bsz; ++b) {
        const T* xp = x.value().data() + (b * c + ch) * inner;
        for (int64_t i = 0; i < inner; ++i) var += (xp[i] - mu) * (xp[i] - mu);
      }
      var /= static_cast<T>(m);
      mean[ch] = mu;
      inv_sd[ch] = T(1) / std::sqrt(var + eps);
      const T unbiased = m > 1 ? var * static_cast<T>(m) / static_cast<T>(m - 1) : var;
      running_mean[ch] = (T(1) - momentum) * running_mean[ch] + momentum * mu;
      running_var[ch] = (T(1) - momentum) * running_var[ch] + momentum * unbiased;
    }
  } else {
    for (int64_t ch = 0; ch < c; ++ch) {
      mean[ch] = running_mean[ch];
      inv_sd[ch] = T(1) / std::sqrt(running_var[ch] + eps);
    }
  }
  Tensor<T> out(s);
  for (int64_t b = 0; b < bsz; ++b)
    for (int64_t ch = 0; ch < c; ++ch) {
      const T mu = mean[ch], inv = inv_sd[ch];
      const T gv = gamma.value()[ch], bv = beta.value()[ch];
      const T* xp = x.value().data() + (b * c + ch) * inner;
      T* yp = out.data() + (b * c + ch) * inner;
      for (int64_t i = 0; i < inner; ++i) yp[i] = gv * (xp[i] - mu) * inv + bv;
    }
  return make_op<T>(
      std::move(out), {x.node(), gamma.node(), beta.node()},
      [bsz, c, inner, m, mean, inv_sd, training](Node<T>& self) {
        auto& px = *self.parents[0];
        auto& pg = *self.parents[1];
        auto& pb = *self.parents[2];
        Tensor<T> gg(Shape{c}), gb(Shape{c});
        for (int64_t ch = 0; ch < c; ++ch) {
          T sum_dy = 0, sum_dy_xhat = 0;
          for (int64_t b = 0; b < bsz; ++b) {
            const T* dy = self.grad.data() + (b * c + ch) * inner;
            const T* xp = px.value.data() + (b * c + ch) * inner;
            for (int64_t i = 0; i < inner; ++i) {
              sum_dy += dy[i];
              sum_dy_xhat += dy[i] * (xp[i] - mean[ch]) * inv_sd[ch];
            }
          }
          gb[ch] = sum_dy;
          gg[ch] = sum_dy_xhat;
        }
        if (px.requires_grad) {
          Tensor<T> gx(px.value.shape());
          for (int64_t ch = 0; ch < c; ++ch) {
            const T gv = pg.value[ch];
            const T inv = inv_sd[ch];
            const T mu = mean[ch];
            const T mean_dy = gb[ch] / static_cast<T>(m);
            const T mean_dy_xhat = gg[ch] / static_cast<T>(m);
            for (int64_t b = 0; b < bsz; ++b) {
              const T* dy = self.grad.data() + (b * c + ch) * inner;
              const T* xp = px.value.data() + (b * c + ch) * inner;
              T* dx = gx.data() + (b * c + ch) * inner;
              if (training) {
                for (int64_t i = 0; i < inner; ++i) {
                  const T xhat = (xp[i] - mu) * inv;
                  dx[i] = gv * inv * (dy[i] - mean_dy - xhat * mean_dy_xhat);
                }
              } else {
                for (int64_t i = 0; i < inner; ++i) dx[i] = gv * inv * dy[i];
              }
            }
          }
          accumulate(px, gx);
        }
        accumulate(pg, gg);
        accumulate(pb, gb);
      });
}

// non-overlapping average pooling (stride = kernel, floor); remainder
// voxels are dropped
template <typename T>
Var<T> avg_pool3d(const Var<T>& x, int64_t kd, int64_t kh, int64_t kw) {
  const Shape& s = x.shape();
  const int64_t bsz = s[0], c = s[1], D = s[2], H = s[3], W = s[4];
  const int64_t od = D / kd, oh = H / kh, ow = W / kw;
  if (od < 1 || oh < 1 || ow < 1) throw ShapeError("avg_pool3d: kernel larger than input");
  const T norm = T(1) / static_cast<T>(kd * kh * kw);
  Tensor<T> out(Shape{bsz, c, od, oh, ow});
  for (int64_t p = 0; p < bsz * c; ++p) {
    const T* xp = x.value().data() + p * D * H * W;
    T* yp = out.data() + p * od * oh * ow;
    for (int64_t z = 0; z < od; ++z)
      for (int64_t y = 0; y < oh; ++y)
        for (int64_t w = 0; w < ow; ++w) {
          T acc = 0;
          for (int64_t dz = 0; dz < kd; ++dz)
            for (int64_t dy = 0; dy < kh; ++dy)
              for (int64_t dw = 0; dw < kw; ++dw)
                acc += xp[((z * kd + dz) * H + y * kh + dy) * W + w * kw + dw];
          yp[(z * oh + y) * ow + w] = acc * norm;
        }
  }
  return make_op<T>(std::move(out), {x.node()},
                    [bsz, c, D, H, W, od, oh, ow, kd, kh, kw, norm](Node<T>& self) {
                      Tensor<T> g(self.parents[0]->value.shape());
                      for (int64_t p = 0; p < bsz * c; ++p) {
                        const T* dy = self.grad.data() + p * od * oh * ow;
                        T* dx = g.data() + p * D * H * W;
                        for (int64_t z = 0; z < od; ++z)
                          for (int64_t y = 0; y < oh; ++y)
                            for (int64_t w = 0; w < ow; ++w) {
                              const T gv = dy[(z * oh + y) * ow + w] * norm;
                              for (int64_t dz = 0; dz < kd; ++dz)
                                for (int64_t dyy = 0; dyy < kh; ++dyy)
                                  for (int64_t dw = 0; dw < kw; ++dw)
                                    dx[((z * kd + dz) * H + y * kh + dyy) * W + w * kw + dw] += gv;
                            }
                      }
                      accumulate(*self.parents[0], g);
                    });
}

template <typename T>
Var<T> global_avg_pool(const Var<T>& x) {
  const Shape& s = x.shape();
  const int64_t bsz = s[0], c = s[1];
  const int64_t inner = x.numel() / (bsz * c);
  Tensor<T> out(Shape{bsz, c});
  for (int64_t p = 0; p < bsz * c; ++p)
    out[p] = kern::ops<T>().sum(static_cast<std::size_t>(inner), x.value().data() + p * inner) /
             static_cast<T>(inner);
  return make_op<T>(std::move(out), {x.node()}, [bsz, c, inner](Node<T>& self) {
    Tensor<T> g(self.parents[0]->value.shape());
    for (int64_t p = 0; p < bsz * c; ++p) {
      const T gv = self.grad[p] / static_cast<T>(inner);
      T* dx = g.data() + p * inner;
      for (int64_t i = 0; i < inner; ++i) dx[i] = gv;
    }
    accumulate(*self.parents[0], g);
  });
}

namespace detail {
struct LerpAxis {
  int64_t lo, hi;
  double wlo, whi;
};
inline LerpAxis lerp_axis(int64_t out_i, int64_t in_n, int64_t out_n) {
  // half-pixel centers, clamped at the borders
  double src = (static_cast<double>(out_i) + 0.5) * static_cast<double>(in_n) /
                   static_cast<double>(out_n) -
               0.5;
  if (src < 0) src = 0;
  if (src > static_cast<double>(in_n - 1)) src = static_cast<double>(in_n - 1);
  const int64_t lo = static_cast<int64_t>(src);
  const int64_t hi = lo < in_n - 1 ? lo + 1 : lo;
  const double f = src - static_cast<double>(lo);
  return {lo, hi, 1.0 - f, f};
}
}  // namespace detail

template <typename T>
Var<T> upsample_trilinear(const Var<T>& x, int64_t od, int64_t oh, int64_t ow) {
  const Shape& s = x.shape();
  const int64_t bsz = s[0], c = s[1], D = s[2], H = s[3], W = s[4];
  std::vector<detail::LerpAxis> az(static_cast<std::size_t>(od)),
      ay(static_cast<std::size_t>(oh)), ax(static_cast<std::size_t>(ow));
  for (int64_t i = 0; i < od; ++i) az[static_cast<std::size_t>(i)] = detail::lerp_axis(i, D, od);
  for (int64_t i = 0; i < oh; ++i) ay[static_cast<std::size_t>(i)] = detail::lerp_axis(i, H, oh);
  for (int64_t i = 0; i < ow; ++i) ax[static_cast<std::size_t>(i)] = detail::lerp_axis(i, W, ow);
  Tensor<T> out(Shape{bsz, c, od, oh, ow});
  for (int64_t p = 0; p < bsz * c; ++p) {
    const T* xp = x.value().data() + p * D * H * W;
    T* yp = out.data() + p * od * oh * ow;
    for (int64_t z = 0; z < od; ++z)
      for (int64_t y = 0; y < oh; ++y)
        for (int64_t w = 0; w < ow; ++w) {
          const auto& lz = az[static_cast<std::size_t>(z)];
          const auto& ly = ay[static_cast<std::size_t>(y)];
          const auto& lx = ax[static_cast<std::size_t>(w)];
          double acc = 0;
          for (int zi = 0; zi < 2; ++zi)
            for (int yi = 0; yi < 2; ++yi)
              for (int xi = 0; xi < 2; ++xi) {
                const int64_t sz = zi ? lz.hi : lz.lo;
                const int64_t sy = yi ? ly.hi : ly.lo;
                const int64_t sx = xi ? lx.hi : lx.lo;
                const double wt = (zi ? lz.whi : lz.wlo) * (yi ? ly.whi : ly.wlo) *
                                  (xi ? lx.whi : lx.wlo);
                acc += wt * static_cast<double>(xp[(sz * H + sy) * W + sx]);
              }
          yp[(z * oh + y) * ow + w] = static_cast<T>(acc);
        }
  }
  return make_op<T>(std::move(out), {x.node()},
                    [bsz, c, D, H, W, od, oh, ow, az, ay, ax](Node<T>& self) {
                      Tensor<T> g(self.parents[0]->value.shape());
                      for (int64_t p = 0; p < bsz * c; ++p) {
                        const T* dy = self.grad.data() + p * od * oh * ow;
                        T* dx = g.data() + p * D * H * W;
                        for (int64_t z = 0; z < od; ++z)
                          for (int64_t y = 0; y < oh; ++y)
                            for (int64_t w = 0; w < ow; ++w) {
                              const auto& lz = az[static_cast<std::size_t>(z)];
                              const auto& ly = ay[static_cast<std::size_t>(y)];
                              const auto& lx = ax[static_cast<std::size_t>(w)];
                              const T gv = dy[(z * oh + y) * ow + w];
                              for (int zi = 0; zi < 2; ++zi)
                                for (int yi = 0; yi < 2; ++yi)
                                  for (int xi = 0; xi < 2; ++xi) {
                                    const int64_t sz = zi ? lz.hi : lz.lo;
                                    const int64_t sy = yi ? ly.hi : ly.lo;
                                    const int64_t sx = xi ? lx.hi : lx.lo;
                                    const double wt = (zi ? lz.whi : lz.wlo) *
                                                      (yi ? ly.whi : ly.wlo) *
                                                      (xi ? lx.whi : lx.wlo);
                                    dx[(sz * H + sy) * W + sx] += static_cast<T>(wt) * gv;
                                  }
                            }
                      }
                      accumulate(*self.parents[0], g);
                    });
}

// zero-pad the spatial axes (front/back per axis)
template <typename T>
Var<T> pad3d(const Var<T>& x, std::array<int64_t, 6> pads) {
  const Shape& s = x.shape();
  const int64_t bsz = s[0], c = s[1], D = s[2], H = s[3], W = s[4];
  const int64_t od = D + pads[0] + pads[1], oh = H + pads[2] + pads[3],
                ow = W + pads[4] + pads[5];
  Tensor<T> out(Shape{bsz, c, od, oh, ow});
  for (int64_t p = 0; p < bsz * c; ++p) {
    const T* xp = x.value().data() + p * D * H * W;
    T* yp = out.data() + p * od * oh * ow;
    for (int64_t z = 0; z < D; ++z)
      for (int64_t y = 0; y < H; ++y)
        std::copy_n(xp + (z * H + y) * W, W,
                    yp + ((z + pads[0]) * oh + y + pads[2]) * ow + pads[4]);
  }
  return make_op<T>(std::move(out), {x.node()},
                    [bsz, c, D, H, W, od, oh, ow, pads](Node<T>& self) {
                      Tensor<T> g(self.parents[0]->value.shape());
                      for (int64_t p = 0; p < bsz * c; ++p) {
                        const T* dy = self.grad.data() + p * od * oh * ow;
                        T* dx = g.data() + p * D * H * W;
                        for (int64_t z = 0; z < D; ++z)
                          for (int64_t y = 0; y < H; ++y)
                            for (int64_t w = 0; w < W; ++w)
                              dx[(z * H + y) * W + w] =
                                  dy[((z + pads[0]) * oh + y + pads[2]) * ow + w + pads[4]];
                      }
                      accumulate(*self.parents[0], g);
                    });
}

// crop a spatial box; inverse of pad3d
template <typename T>
Var<T> crop3d(const Var<T>& x, std::array<int64_t, 3> off, std::array<int64_t, 3> size) {
  const Shape& s = x.shape();
  const int64_t bsz = s[0], c = s[1], D = s[2], H = s[3], W = s[4];
  const int64_t od = size[0], oh = size[1], ow = size[2];
  if (off[0] + od > D || off[1] + oh > H || off[2] + ow > W)
    throw ShapeError("crop3d out of range");
  Tensor<T> out(Shape{bsz, c, od, oh, ow});
  for (int64_t p = 0; p < bsz * c; ++p) {
    const T* xp = x.value().data() + p * D * H * W;
    T* yp = out.data() + p * od * oh * ow;
    for (int64_t z = 0; z < od; ++z)
      for (int64_t y = 0; y < oh; ++y)
        std::copy_n(xp + ((z + off[0]) * H + y + off[1]) * W + off[2], ow,
                    yp + (z * oh + y) * ow);
  }
  return make_op<T>(std::move(out), {x.node()},
                    [bsz, c, D, H, W, od, oh, ow, off](Node<T>& self) {
                      Tensor<T> g(self.parents[0]->value.shape());
                      for (int64_t p = 0; p < bsz * c; ++p) {
                        const T* dy = self.grad.data() + p * od * oh * ow;
                        T* dx = g.data() + p * D * H * W;
                        for (int64_t z = 0; z < od; ++z)
                          for (int64_t y = 0; y < oh; ++y)
                            for (int64_t w = 0; w < ow; ++w)
                              dx[((z + off[0]) * H + y + off[1]) * W + w + off[2]] +=
                                  dy[(z * oh + y) * ow + w];
                      }
                      accumulate(*self.parents[0], g);
                    });
}

}  // namespace sdrf::ag
