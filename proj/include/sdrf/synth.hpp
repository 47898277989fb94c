#pragma once
// Synthetic multi-phase dataset generator: smooth background, one ellipsoidal
// lesion whose per-phase intensity profile is class-dependent, Gaussian
// noise. Byte-reproducible for a fixed seed.

#include "sdrf/dataset.hpp"

namespace sdrf::vol {

// How the class signal is laid out across phases:
//   kDistinct     - each class gets its own random per-phase signature,
//                   pairwise separated by at least `contrast`.
//   kSplit        - signatures are +/-contrast sign patterns on top of a
//                   per-sample random offset; no single phase separates the
//                   classes fully, the cross-phase differences do.
//   kSinglePhase  - classes differ only in `signal_phase`; all other phases
//                   carry the same profile for every class.
enum class SignalMode { kDistinct, kSplit, kSinglePhase };

struct SynthConfig {
  int n_samples = 250;
  int n_phases = 3;
  int n_classes = 2;
  Dims3 dims = {8, 24, 24};
  double contrast = 0.8;
  double noise_sd = 0.3;
  uint64_t seed = 0;
  SignalMode signal_mode = SignalMode::kDistinct;
  int signal_phase = 1;
  double train_frac = 0.7;
  double val_frac = 0.15;  // remainder is test

  void validate() const;
};

// writes VVOL volumes plus manifest.json under out_dir and returns the
// manifest (root set to out_dir)
DatasetManifest generate_synthetic_dataset(const SynthConfig& cfg,
                                           const std::filesystem::path& out_dir);

// the class signature matrix the generator used (K x N), for oracles
std::vector<std::vector<double>> synth_signatures(const SynthConfig& cfg);

// voxel-level ellipsoid test used by generator and analysis oracles
bool inside_lesion(const LesionInfo& lesion, int64_t d, int64_t h, int64_t w);

}  // namespace sdrf::vol
