#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "cle/core.hpp"

namespace cle {

/// Deterministic CLE-like data: normal frames show closed bright cell-border
/// networks over dark cell bodies; carcinogenic frames show broken borders,
/// bright diffuse leakage and dark cell clusters.
struct SynthConfig {
  int n_patients = 12;
  int images_per_patient = 60;
  int image_size = 576;
  double class_mix = 0.5;  // carcinogenic fraction
  uint64_t seed = 42;
  double patient_style_jitter = 1.0;
  bool hard = false;  // weaker, spatially partial class cues
  int frames_per_sequence = 10;
  double artifact_rate = 0.1;

  void validate() const;
};

struct PatientStyle {
  double cell_diameter = 22.0;  // px at full resolution
  double brightness = 1.0;
  double noise = 0.05;
  double border_width = 1.8;

  friend bool operator==(const PatientStyle&, const PatientStyle&) = default;
};

PatientStyle patient_style(const SynthConfig& config, int patient);

struct RenderInfo {
  double border_fraction = 0.0;  // in-circle pixels drawn as visible border
  std::vector<ArtifactRect> artifacts;
};

CleImage render_image(const SynthConfig& config, const PatientStyle& style, Label label,
                      uint64_t image_seed, RenderInfo* info = nullptr);

/// Writes images/<patient>_<sequence>_f<frame>.pgm and manifest.json below
/// `out_dir`. Image rendering runs in parallel; output bytes do not depend on
/// the thread count.
DatasetManifest generate_dataset(const SynthConfig& config, const std::filesystem::path& out_dir);

}  // namespace cle
