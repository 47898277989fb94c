#pragma once
// MedMNIST3D adapter: converts an upstream .npz distribution (train/val/test
// images of 28x28x28 uint8 plus integer labels) into VVOL volumes and a
// single-phase manifest, preserving the official splits. Intensities are
// scaled to [0,1]; z-score normalization happens later in the pipeline.

#include "sdrf/dataset.hpp"

namespace sdrf::vol {

DatasetManifest load_medmnist3d(const std::filesystem::path& archive,
                                const std::filesystem::path& out_dir);

}  // namespace sdrf::vol
