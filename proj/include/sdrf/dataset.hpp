#pragma once
// Dataset manifest: JSON with class_names, phase_names and one entry per
// sample mapping phase name -> VVOL path. Synthetic manifests also carry the
// lesion geometry so analysis oracles can rebuild the mask.

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sdrf/volume.hpp"

namespace sdrf::vol {

struct LesionInfo {
  std::array<double, 3> center = {0, 0, 0};  // voxel coords (d,h,w)
  std::array<double, 3> radii = {0, 0, 0};
};

struct SampleEntry {
  std::string sample_id;
  int label = 0;
  std::string split;
  std::map<std::string, std::string> phase_paths;  // phase name -> relative path
  std::optional<LesionInfo> lesion;
};

struct DatasetManifest {
  std::vector<std::string> class_names;
  std::vector<std::string> phase_names;
  std::vector<SampleEntry> samples;
  std::filesystem::path root;  // directory paths are relative to

  int num_classes() const { return static_cast<int>(class_names.size()); }
  int num_phases() const { return static_cast<int>(phase_names.size()); }
  std::vector<int> indices_of_split(const std::string& split) const;
};

void save_manifest(const DatasetManifest& m, const std::filesystem::path& path);
DatasetManifest load_manifest(const std::filesystem::path& path);

// checks file existence, label ranges, and that every sample lists exactly
// the manifest's phases
void validate_manifest(const DatasetManifest& m);

// loads the sample's volumes from disk, in manifest phase order
MultiPhaseSample load_sample(const DatasetManifest& m, int index);

// restrict to a subset of phases (by name, in the given order)
DatasetManifest subset_phases(const DatasetManifest& m,
                              const std::vector<std::string>& phases);

}  // namespace sdrf::vol
