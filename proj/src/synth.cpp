#include "sdrf/synth.hpp"

#include <cmath>

#include "sdrf/errors.hpp"
#include "sdrf/vvol.hpp"

namespace sdrf::vol {
namespace {

constexpr double kTau = 6.283185307179586477;

double pairwise_min_dist(const std::vector<std::vector<double>>& sig) {
  double best = 1e30;
  for (std::size_t a = 0; a < sig.size(); ++a)
    for (std::size_t b = a + 1; b < sig.size(); ++b) {
      double d2 = 0;
      for (std::size_t j = 0; j < sig[a].size(); ++j) {
        const double d = sig[a][j] - sig[b][j];
        d2 += d * d;
      }
      best = std::min(best, std::sqrt(d2));
    }
  return best;
}

}  // namespace

void SynthConfig::validate() const {
  if (n_classes < 2) throw ConfigError("n_classes must be >= 2");
  if (n_phases < 1) throw ConfigError("n_phases must be >= 1");
  if (n_samples < n_classes) throw ConfigError("need at least one sample per class");
  if (dims.d < 4 || dims.h < 4 || dims.w < 4) throw ConfigError("dims too small");
  if (contrast <= 0.0) throw ConfigError("contrast must be positive");
  if (noise_sd < 0.0) throw ConfigError("noise_sd must be >= 0");
  if (signal_mode == SignalMode::kSinglePhase &&
      (signal_phase < 0 || signal_phase >= n_phases))
    throw ConfigError("signal_phase outside phase range");
  if (train_frac <= 0.0 || val_frac < 0.0 || train_frac + val_frac > 1.0)
    throw ConfigError("bad split fractions");
}

std::vector<std::vector<double>> synth_signatures(const SynthConfig& cfg) {
  const int k = cfg.n_classes, n = cfg.n_phases;
  std::vector<std::vector<double>> sig(static_cast<std::size_t>(k),
                                       std::vector<double>(static_cast<std::size_t>(n), 0.0));
  switch (cfg.signal_mode) {
    case SignalMode::kDistinct: {
      Rng rng(splitmix64(cfg.seed ^ hash_str("signatures")));
      for (int guard = 0; guard < 1000; ++guard) {
        for (auto& row : sig)
          for (auto& v : row) v = 0.5 + 2.0 * cfg.contrast * rng.uniform();
        if (pairwise_min_dist(sig) >= cfg.contrast) break;
      }
      if (pairwise_min_dist(sig) < cfg.contrast)
        throw ConfigError("could not separate class signatures; raise n_phases or lower K");
      break;
    }
    case SignalMode::kSplit:
      // sign patterns; distinct for k < 2^n
      for (int c = 0; c < k; ++c)
        for (int j = 0; j < n; ++j)
          sig[static_cast<std::size_t>(c)][static_cast<std::size_t>(j)] =
              ((c >> (j % 60)) & 1) ? cfg.contrast : -cfg.contrast;
      // class 0 vs 1 must differ in phase 0; make low phases the information
      // carriers for small K by flipping parity per class
      for (int c = 0; c < k; ++c)
        for (int j = 0; j < n; ++j)
          if ((j + c) % 2 == 0)
            sig[static_cast<std::size_t>(c)][static_cast<std::size_t>(j)] *= -1.0;
      break;
    case SignalMode::kSinglePhase:
      for (int c = 0; c < k; ++c)
        for (int j = 0; j < n; ++j)
          sig[static_cast<std::size_t>(c)][static_cast<std::size_t>(j)] =
              j == cfg.signal_phase ? 0.5 + cfg.contrast * c : 0.5;
      break;
  }
  return sig;
}

bool inside_lesion(const LesionInfo& lesion, int64_t d, int64_t h, int64_t w) {
  const double zd = (static_cast<double>(d) - lesion.center[0]) / lesion.radii[0];
  const double yh = (static_cast<double>(h) - lesion.center[1]) / lesion.radii[1];
  const double xw = (static_cast<double>(w) - lesion.center[2]) / lesion.radii[2];
  return zd * zd + yh * yh + xw * xw <= 1.0;
}

DatasetManifest generate_synthetic_dataset(const SynthConfig& cfg,
                                           const std::filesystem::path& out_dir) {
  cfg.validate();
  std::error_code ec;
  std::filesystem::create_directories(out_dir / "volumes", ec);
  if (!std::filesystem::exists(out_dir / "volumes"))
    throw IoError("cannot create output directory " + out_dir.string());

  const auto sig = synth_signatures(cfg);
  DatasetManifest m;
  m.root = out_dir;
  for (int c = 0; c < cfg.n_classes; ++c) m.class_names.push_back("class_" + std::to_string(c));
  for (int p = 0; p < cfg.n_phases; ++p) m.phase_names.push_back("phase_" + std::to_string(p));

  // class-balanced, deterministic assignment: round-robin labels, then
  // per-class round-robin over splits so every split sees every class
  const int n_train = static_cast<int>(std::lround(cfg.train_frac * cfg.n_samples));
  const int n_val = static_cast<int>(std::lround(cfg.val_frac * cfg.n_samples));

  Rng master(splitmix64(cfg.seed ^ hash_str("synth")));
  std::vector<int> order(static_cast<std::size_t>(cfg.n_samples));
  for (int i = 0; i < cfg.n_samples; ++i) order[static_cast<std::size_t>(i)] = i;
  master.shuffle(order.begin(), order.end());

  for (int i = 0; i < cfg.n_samples; ++i) {
    const int label = i % cfg.n_classes;
    const int pos = order[static_cast<std::size_t>(i)];
    const std::string split = pos < n_train ? "train" : (pos < n_train + n_val ? "val" : "test");
    Rng rng(splitmix64(cfg.seed ^ splitmix64(static_cast<uint64_t>(i) + 0x5e5eULL)));

    LesionInfo lesion;
    lesion.center = {static_cast<double>(cfg.dims.d) * rng.uniform(0.42, 0.58),
                     static_cast<double>(cfg.dims.h) * rng.uniform(0.42, 0.58),
                     static_cast<double>(cfg.dims.w) * rng.uniform(0.42, 0.58)};
    lesion.radii = {std::max(1.2, static_cast<double>(cfg.dims.d) * rng.uniform(0.18, 0.30)),
                    std::max(1.5, static_cast<double>(cfg.dims.h) * rng.uniform(0.18, 0.30)),
                    std::max(1.5, static_cast<double>(cfg.dims.w) * rng.uniform(0.18, 0.30))};

    // smooth low-frequency background, shared across phases
    const double f1 = rng.uniform(0.5, 1.5), f2 = rng.uniform(0.5, 1.5),
                 f3 = rng.uniform(0.5, 1.5);
    const double p1 = rng.uniform(0.0, kTau), p2 = rng.uniform(0.0, kTau),
                 p3 = rng.uniform(0.0, kTau);

    const double sample_offset =
        cfg.signal_mode == SignalMode::kSplit
            ? rng.uniform(-2.0 * cfg.contrast, 2.0 * cfg.contrast)
            : 0.0;

    SampleEntry entry;
    char idbuf[32];
    std::snprintf(idbuf, sizeof idbuf, "s%05d", i);
    entry.sample_id = idbuf;
    entry.label = label;
    entry.split = split;
    entry.lesion = lesion;

    for (int ph = 0; ph < cfg.n_phases; ++ph) {
      Rng noise = rng.fork(static_cast<uint64_t>(ph) + 101);
      TensorF grid(Shape{cfg.dims.d, cfg.dims.h, cfg.dims.w});
      const double lesion_value =
          sample_offset + sig[static_cast<std::size_t>(label)][static_cast<std::size_t>(ph)];
      for (int64_t z = 0; z < cfg.dims.d; ++z)
        for (int64_t y = 0; y < cfg.dims.h; ++y)
          for (int64_t x = 0; x < cfg.dims.w; ++x) {
            double v;
            if (inside_lesion(lesion, z, y, x)) {
              v = lesion_value;
            } else {
              v = 0.25 * (std::sin(kTau * f1 * static_cast<double>(z) / static_cast<double>(cfg.dims.d) + p1) +
                          std::sin(kTau * f2 * static_cast<double>(y) / static_cast<double>(cfg.dims.h) + p2) +
                          std::sin(kTau * f3 * static_cast<double>(x) / static_cast<double>(cfg.dims.w) + p3)) /
                  3.0;
            }
            if (cfg.noise_sd > 0.0) v += noise.normal(0.0, cfg.noise_sd);
            grid.at3(z, y, x) = static_cast<float>(v);
          }
      const std::string rel = "volumes/" + entry.sample_id + "_phase_" +
                              std::to_string(ph) + ".vvol";
      write_volume(out_dir / rel, grid);
      entry.phase_paths["phase_" + std::to_string(ph)] = rel;
    }
    m.samples.push_back(std::move(entry));
  }
  save_manifest(m, out_dir / "manifest.json");
  return m;
}

}  // namespace sdrf::vol
