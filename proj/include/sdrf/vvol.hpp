#pragma once
// VVOL binary volume format:
//   magic "VVOL" | u32 version=1 | u32 ndim=3 | u32 dims[3] (D,H,W) |
//   u32 dtype (0 = little-endian float32) | payload, row-major, W fastest.
// All integers little-endian.

#include <filesystem>

#include "sdrf/volume.hpp"

namespace sdrf::vol {

void write_volume(const std::filesystem::path& path, const TensorF& voxels);
TensorF read_volume_grid(const std::filesystem::path& path);
PhaseVolume read_volume(const std::filesystem::path& path);

}  // namespace sdrf::vol
