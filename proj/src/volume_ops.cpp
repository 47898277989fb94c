#include <cmath>

#include "sdrf/errors.hpp"
#include "sdrf/ops3d.hpp"
#include "sdrf/volume.hpp"

namespace sdrf::vol {

void AugmentationConfig::validate() const {
  for (double p : flip_prob)
    if (p < 0.0 || p > 1.0) throw ConfigError("flip_prob outside [0,1]");
  if (erase_prob < 0.0 || erase_prob > 1.0) throw ConfigError("erase_prob outside [0,1]");
  if (!(erase_frac_min > 0.0 && erase_frac_min <= erase_frac_max && erase_frac_max < 1.0))
    throw ConfigError("erase fraction range must satisfy 0 < min <= max < 1");
  for (int k : rotations)
    if (k < 0 || k > 3) throw ConfigError("rotations must be quarter-turn counts 0..3");
  if (rotations.empty()) throw ConfigError("rotations set must not be empty");
}

TensorF normalize_volume(const TensorF& voxels) {
  const int64_t n = voxels.numel();
  double mean = 0;
  for (int64_t i = 0; i < n; ++i) mean += voxels[i];
  mean /= static_cast<double>(n);
  double var = 0;
  for (int64_t i = 0; i < n; ++i) {
    const double d = voxels[i] - mean;
    var += d * d;
  }
  var /= static_cast<double>(n);
  TensorF out(voxels.shape());
  if (var <= 0.0) return out;  // constant volume -> zeros
  const double inv = 1.0 / std::sqrt(var);
  for (int64_t i = 0; i < n; ++i)
    out[i] = static_cast<float>((voxels[i] - mean) * inv);
  return out;
}

TensorF resize_volume(const TensorF& voxels, Dims3 target) {
  if (voxels.rank() != 3) throw ShapeError("resize_volume expects (D,H,W)");
  if (target.d < 1 || target.h < 1 || target.w < 1)
    throw ConfigError("resize target dims must be >= 1");
  const int64_t D = voxels.dim(0), H = voxels.dim(1), W = voxels.dim(2);
  if (target.d == D && target.h == H && target.w == W) return voxels;
  using ag::detail::lerp_axis;
  TensorF out(Shape{target.d, target.h, target.w});
  for (int64_t z = 0; z < target.d; ++z) {
    const auto lz = lerp_axis(z, D, target.d);
    for (int64_t y = 0; y < target.h; ++y) {
      const auto ly = lerp_axis(y, H, target.h);
      for (int64_t x = 0; x < target.w; ++x) {
        const auto lx = lerp_axis(x, W, target.w);
        double acc = 0;
        for (int zi = 0; zi < 2; ++zi)
          for (int yi = 0; yi < 2; ++yi)
            for (int xi = 0; xi < 2; ++xi)
              acc += (zi ? lz.whi : lz.wlo) * (yi ? ly.whi : ly.wlo) *
                     (xi ? lx.whi : lx.wlo) *
                     static_cast<double>(voxels.at3(zi ? lz.hi : lz.lo, yi ? ly.hi : ly.lo,
                                                    xi ? lx.hi : lx.lo));
        out.at3(z, y, x) = static_cast<float>(acc);
      }
    }
  }
  return out;
}

PhaseVolume resize_volume(const PhaseVolume& v, Dims3 target) {
  PhaseVolume out = v;
  out.voxels = resize_volume(v.voxels, target);
  return out;
}

CropOffsets crop_offsets(Dims3 in, Dims3 size, CropMode mode, uint64_t seed) {
  if (size.d > in.d || size.h > in.h || size.w > in.w)
    throw ConfigError("crop size exceeds volume dims");
  if (mode == CropMode::kCenter)
    return {(in.d - size.d) / 2, (in.h - size.h) / 2, (in.w - size.w) / 2};
  Rng rng(splitmix64(seed));
  CropOffsets o;
  o.d = rng.uniform_int(0, in.d - size.d);
  o.h = rng.uniform_int(0, in.h - size.h);
  o.w = rng.uniform_int(0, in.w - size.w);
  return o;
}

namespace {
TensorF crop_grid(const TensorF& v, CropOffsets off, Dims3 size) {
  TensorF out(Shape{size.d, size.h, size.w});
  for (int64_t z = 0; z < size.d; ++z)
    for (int64_t y = 0; y < size.h; ++y)
      for (int64_t x = 0; x < size.w; ++x)
        out.at3(z, y, x) = v.at3(z + off.d, y + off.h, x + off.w);
  return out;
}
}  // namespace

MultiPhaseSample crop_sample(const MultiPhaseSample& s, Dims3 size, CropMode mode,
                             uint64_t seed) {
  if (s.phases.empty()) throw Error("crop_sample: empty sample");
  const Dims3 in = s.phases[0].dims();
  const CropOffsets off = crop_offsets(in, size, mode, seed);
  MultiPhaseSample out = s;
  for (auto& p : out.phases) {
    if (p.dims() != in) throw ShapeError("crop_sample: phases disagree on dims");
    p.voxels = crop_grid(p.voxels, off, size);
  }
  return out;
}

AugmentDraw augment_draw(Dims3 dims, const AugmentationConfig& cfg, uint64_t seed) {
  cfg.validate();
  Rng rng(splitmix64(seed ^ 0x61756761ULL));
  AugmentDraw d;
  for (int a = 0; a < 3; ++a) d.flip[static_cast<std::size_t>(a)] = rng.uniform() < cfg.flip_prob[static_cast<std::size_t>(a)];
  d.rot_quarters = cfg.rotations[static_cast<std::size_t>(
      rng.uniform_int(0, static_cast<int64_t>(cfg.rotations.size()) - 1))];
  d.erase = rng.uniform() < cfg.erase_prob;
  if (d.erase) {
    const double frac = rng.uniform(cfg.erase_frac_min, cfg.erase_frac_max);
    const double total = static_cast<double>(dims.numel());
    const double c = std::cbrt(frac);
    auto clampi = [](int64_t v, int64_t lo, int64_t hi) { return std::max(lo, std::min(hi, v)); };
    int64_t dd = clampi(static_cast<int64_t>(std::lround(c * static_cast<double>(dims.d))), 1, dims.d);
    int64_t hh = clampi(static_cast<int64_t>(std::lround(c * static_cast<double>(dims.h))), 1, dims.h);
    int64_t ww = clampi(static_cast<int64_t>(std::lround(frac * total / static_cast<double>(dd * hh))), 1, dims.w);
    // nudge the last edge until the fraction actually lands in range
    auto fraction = [&] { return static_cast<double>(dd * hh * ww) / total; };
    for (int guard = 0; guard < 64 && fraction() < cfg.erase_frac_min; ++guard) {
      if (ww < dims.w) ++ww;
      else if (hh < dims.h) ++hh;
      else if (dd < dims.d) ++dd;
      else break;
    }
    for (int guard = 0; guard < 64 && fraction() > cfg.erase_frac_max; ++guard) {
      if (ww > 1) --ww;
      else if (hh > 1) --hh;
      else if (dd > 1) --dd;
      else break;
    }
    d.erase_size[0] = dd;
    d.erase_size[1] = hh;
    d.erase_size[2] = ww;
    d.erase_off[0] = rng.uniform_int(0, dims.d - dd);
    d.erase_off[1] = rng.uniform_int(0, dims.h - hh);
    d.erase_off[2] = rng.uniform_int(0, dims.w - ww);
  }
  return d;
}

TensorF apply_augment(const TensorF& voxels, const AugmentDraw& draw) {
  const int64_t D = voxels.dim(0), H = voxels.dim(1), W = voxels.dim(2);
  if (draw.rot_quarters % 2 != 0 && H != W)
    throw ConfigError("odd quarter-turn rotation requires H == W");
  TensorF out = voxels;
  // flips
  for (int axis = 0; axis < 3; ++axis) {
    if (!draw.flip[static_cast<std::size_t>(axis)]) continue;
    TensorF t(out.shape());
    for (int64_t z = 0; z < D; ++z)
      for (int64_t y = 0; y < H; ++y)
        for (int64_t x = 0; x < W; ++x) {
          const int64_t sz = axis == 0 ? D - 1 - z : z;
          const int64_t sy = axis == 1 ? H - 1 - y : y;
          const int64_t sx = axis == 2 ? W - 1 - x : x;
          t.at3(z, y, x) = out.at3(sz, sy, sx);
        }
    out = std::move(t);
  }
  // quarter turns in the H-W plane: (h,w) -> (w, H-1-h) per turn; half turns
  // work on any aspect, odd turns need the square guard above
  if (draw.rot_quarters == 2) {
    TensorF t(out.shape());
    for (int64_t z = 0; z < D; ++z)
      for (int64_t y = 0; y < H; ++y)
        for (int64_t x = 0; x < W; ++x) t.at3(z, H - 1 - y, W - 1 - x) = out.at3(z, y, x);
    out = std::move(t);
  } else {
    for (int k = 0; k < draw.rot_quarters; ++k) {
      TensorF t(out.shape());
      for (int64_t z = 0; z < D; ++z)
        for (int64_t y = 0; y < H; ++y)
          for (int64_t x = 0; x < W; ++x) t.at3(z, x, H - 1 - y) = out.at3(z, y, x);
      out = std::move(t);
    }
  }
  if (draw.erase) {
    for (int64_t z = 0; z < draw.erase_size[0]; ++z)
      for (int64_t y = 0; y < draw.erase_size[1]; ++y)
        for (int64_t x = 0; x < draw.erase_size[2]; ++x)
          out.at3(z + draw.erase_off[0], y + draw.erase_off[1], x + draw.erase_off[2]) = 0.0f;
  }
  return out;
}

MultiPhaseSample augment_sample(const MultiPhaseSample& s, const AugmentationConfig& cfg,
                                uint64_t seed) {
  if (s.phases.empty()) throw Error("augment_sample: empty sample");
  const AugmentDraw draw = augment_draw(s.phases[0].dims(), cfg, seed);
  MultiPhaseSample out = s;
  for (auto& p : out.phases) p.voxels = apply_augment(p.voxels, draw);
  return out;
}

}  // namespace sdrf::vol
