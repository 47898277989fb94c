#include "sdrf/dataset.hpp"

#include <fstream>

#include <json.hpp>

#include "sdrf/errors.hpp"
#include "sdrf/vvol.hpp"

namespace sdrf::vol {

using nlohmann::json;

std::vector<int> DatasetManifest::indices_of_split(const std::string& split) const {
  std::vector<int> out;
  for (std::size_t i = 0; i < samples.size(); ++i)
    if (samples[i].split == split) out.push_back(static_cast<int>(i));
  return out;
}

void save_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
  json j;
  j["class_names"] = m.class_names;
  j["phase_names"] = m.phase_names;
  j["samples"] = json::array();
  for (const auto& s : m.samples) {
    json e;
    e["sample_id"] = s.sample_id;
    e["label"] = s.label;
    e["split"] = s.split;
    e["phases"] = s.phase_paths;
    if (s.lesion) {
      e["lesion"] = {{"center", s.lesion->center}, {"radii", s.lesion->radii}};
    }
    j["samples"].push_back(std::move(e));
  }
  std::ofstream f(path);
  if (!f) throw IoError("cannot write manifest: " + path.string());
  f << j.dump(1) << "\n";
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open manifest: " + path.string());
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw IoError("manifest parse error: " + std::string(e.what()));
  }
  DatasetManifest m;
  m.root = path.parent_path();
  try {
    m.class_names = j.at("class_names").get<std::vector<std::string>>();
    m.phase_names = j.at("phase_names").get<std::vector<std::string>>();
    for (const auto& e : j.at("samples")) {
      SampleEntry s;
      s.sample_id = e.at("sample_id").get<std::string>();
      s.label = e.at("label").get<int>();
      s.split = e.at("split").get<std::string>();
      s.phase_paths = e.at("phases").get<std::map<std::string, std::string>>();
      if (e.contains("lesion")) {
        LesionInfo li;
        li.center = e["lesion"].at("center").get<std::array<double, 3>>();
        li.radii = e["lesion"].at("radii").get<std::array<double, 3>>();
        s.lesion = li;
      }
      m.samples.push_back(std::move(s));
    }
  } catch (const json::exception& e) {
    throw IoError("manifest field error: " + std::string(e.what()));
  }
  return m;
}

void validate_manifest(const DatasetManifest& m) {
  const int k = m.num_classes();
  for (const auto& s : m.samples) {
    if (s.label < 0 || s.label >= k)
      throw ConfigError("sample " + s.sample_id + ": label " + std::to_string(s.label) +
                        " outside [0," + std::to_string(k) + ")");
    if (s.phase_paths.size() != m.phase_names.size())
      throw ConfigError("sample " + s.sample_id + ": expected " +
                        std::to_string(m.phase_names.size()) + " phases, got " +
                        std::to_string(s.phase_paths.size()));
    for (const auto& name : m.phase_names) {
      auto it = s.phase_paths.find(name);
      if (it == s.phase_paths.end())
        throw ConfigError("sample " + s.sample_id + ": missing phase " + name);
      if (!std::filesystem::exists(m.root / it->second))
        throw IoError("sample " + s.sample_id + ": missing file " + it->second);
    }
  }
}

MultiPhaseSample load_sample(const DatasetManifest& m, int index) {
  const auto& e = m.samples.at(static_cast<std::size_t>(index));
  MultiPhaseSample s;
  s.sample_id = e.sample_id;
  s.label = e.label;
  s.split = e.split;
  for (const auto& name : m.phase_names) {
    PhaseVolume v;
    v.voxels = read_volume_grid(m.root / e.phase_paths.at(name));
    v.phase_name = name;
    s.phases.push_back(std::move(v));
  }
  if (!s.phases.empty()) {
    const Dims3 d0 = s.phases[0].dims();
    for (const auto& p : s.phases)
      if (p.dims() != d0)
        throw ShapeError("sample " + s.sample_id + ": phase dims disagree");
  }
  return s;
}

DatasetManifest subset_phases(const DatasetManifest& m,
                              const std::vector<std::string>& phases) {
  DatasetManifest out = m;
  out.phase_names.clear();
  for (const auto& name : phases) {
    bool known = false;
    for (const auto& p : m.phase_names) known |= p == name;
    if (!known) throw ConfigError("unknown phase name: " + name);
    out.phase_names.push_back(name);
  }
  for (auto& s : out.samples) {
    std::map<std::string, std::string> keep;
    for (const auto& name : out.phase_names) keep[name] = s.phase_paths.at(name);
    s.phase_paths = std::move(keep);
  }
  return out;
}

}  // namespace sdrf::vol
