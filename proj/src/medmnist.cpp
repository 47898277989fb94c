#include "sdrf/medmnist.hpp"

#include "sdrf/errors.hpp"
#include "sdrf/npz.hpp"
#include "sdrf/vvol.hpp"

namespace sdrf::vol {

DatasetManifest load_medmnist3d(const std::filesystem::path& archive,
                                const std::filesystem::path& out_dir) {
  auto arrays = npz::load_npz(archive);
  const char* splits[3] = {"train", "val", "test"};
  for (const char* s : splits) {
    if (!arrays.count(std::string(s) + "_images"))
      throw IoError(std::string("missing collection ") + s + "_images in " + archive.string());
    if (!arrays.count(std::string(s) + "_labels"))
      throw IoError(std::string("missing collection ") + s + "_labels in " + archive.string());
  }

  std::filesystem::create_directories(out_dir / "volumes");

  // first pass: class count
  int64_t max_label = -1;
  for (const char* s : splits) {
    const auto& lab = arrays.at(std::string(s) + "_labels");
    for (int64_t i = 0; i < lab.numel(); ++i) {
      const int64_t v = lab.scalar_at<int64_t>(i);
      if (v < 0) throw ConfigError("negative label in " + std::string(s));
      max_label = std::max(max_label, v);
    }
  }
  const int k = static_cast<int>(max_label + 1);
  if (k < 2) throw ConfigError("fewer than two classes in archive");

  DatasetManifest m;
  m.root = out_dir;
  m.phase_names = {"volume"};
  for (int c = 0; c < k; ++c) m.class_names.push_back("class_" + std::to_string(c));

  for (const char* s : splits) {
    const auto& img = arrays.at(std::string(s) + "_images");
    const auto& lab = arrays.at(std::string(s) + "_labels");
    if (img.shape.size() != 4)
      throw IoError(std::string(s) + "_images must be (N,D,H,W)");
    const int64_t n = img.shape[0], d = img.shape[1], h = img.shape[2], w = img.shape[3];
    const int64_t n_lab = lab.shape.empty() ? 0 : lab.shape[0];
    if (n_lab != n) throw IoError(std::string(s) + ": image/label count mismatch");
    const int64_t vox = d * h * w;
    for (int64_t i = 0; i < n; ++i) {
      TensorF grid(Shape{d, h, w});
      for (int64_t v = 0; v < vox; ++v)
        grid[v] = img.scalar_at<float>(i * vox + v) / 255.0f;
      SampleEntry e;
      e.sample_id = std::string(s) + "_" + std::to_string(i);
      e.label = static_cast<int>(lab.scalar_at<int64_t>(i));
      if (e.label >= k) throw ConfigError("label out of range in " + std::string(s));
      e.split = s;
      const std::string rel = "volumes/" + e.sample_id + ".vvol";
      write_volume(out_dir / rel, grid);
      e.phase_paths["volume"] = rel;
      m.samples.push_back(std::move(e));
    }
  }
  save_manifest(m, out_dir / "manifest.json");
  return m;
}

}  // namespace sdrf::vol
