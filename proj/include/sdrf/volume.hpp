#pragma once
// Volume-domain types and the spatial transforms applied to them. Transforms
// are pure functions of (input, seed); whoever parallelizes sample loading
// gets determinism per sample for free.

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "sdrf/rng.hpp"
#include "sdrf/tensor.hpp"

namespace sdrf::vol {

struct Dims3 {
  int64_t d = 0, h = 0, w = 0;
  bool operator==(const Dims3&) const = default;
  int64_t numel() const { return d * h * w; }
};

struct PhaseVolume {
  TensorF voxels;  // (D,H,W)
  std::string phase_name;
  std::optional<std::array<float, 3>> spacing;  // mm per voxel, if known

  Dims3 dims() const {
    return {voxels.rank() == 3 ? voxels.dim(0) : 0, voxels.rank() == 3 ? voxels.dim(1) : 0,
            voxels.rank() == 3 ? voxels.dim(2) : 0};
  }
};

struct MultiPhaseSample {
  std::string sample_id;
  std::vector<PhaseVolume> phases;
  int label = 0;
  std::string split;  // train | val | test
};

struct AugmentationConfig {
  std::array<double, 3> flip_prob = {0.5, 0.5, 0.5};  // D, H, W
  std::vector<int> rotations = {0, 1, 2, 3};          // quarter turns in the H-W plane
  double erase_prob = 0.5;
  double erase_frac_min = 0.02;
  double erase_frac_max = 0.10;

  void validate() const;
};

// per-volume z-score; constant volumes map to all zeros
TensorF normalize_volume(const TensorF& voxels);

// trilinear resize with half-pixel centers; identity targets return the
// input bit-exactly
TensorF resize_volume(const TensorF& voxels, Dims3 target);
PhaseVolume resize_volume(const PhaseVolume& v, Dims3 target);

enum class CropMode { kRandom, kCenter };

struct CropOffsets {
  int64_t d = 0, h = 0, w = 0;
};

CropOffsets crop_offsets(Dims3 in, Dims3 size, CropMode mode, uint64_t seed);
MultiPhaseSample crop_sample(const MultiPhaseSample& s, Dims3 size, CropMode mode,
                             uint64_t seed);

// One spatial transform drawn per sample, applied to every phase. Erased
// cuboids are zero-filled (inputs are assumed normalized already).
MultiPhaseSample augment_sample(const MultiPhaseSample& s, const AugmentationConfig& cfg,
                                uint64_t seed);

// Draw record for tests and reproducibility probes.
struct AugmentDraw {
  std::array<bool, 3> flip = {false, false, false};
  int rot_quarters = 0;
  bool erase = false;
  int64_t erase_off[3] = {0, 0, 0};
  int64_t erase_size[3] = {0, 0, 0};
};
AugmentDraw augment_draw(Dims3 dims, const AugmentationConfig& cfg, uint64_t seed);
TensorF apply_augment(const TensorF& voxels, const AugmentDraw& draw);

}  // namespace sdrf::vol
