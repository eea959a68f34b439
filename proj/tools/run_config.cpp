#include <fstream>

#include "cli.hpp"

namespace cle::cli {

using nlohmann::json;

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kConfig:
      return kExitConfig;
    case ErrorCode::kIo:
      return kExitIo;
    case ErrorCode::kFormat:
    case ErrorCode::kValidation:
      return kExitData;
    case ErrorCode::kInsufficientPatients:
      return kExitPatients;
    case ErrorCode::kNumeric:
      return kExitNumeric;
  }
  return kExitFailure;
}

void RunConfig::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::kConfig, msg); };
  parse_method(method);
  if (patch_size < 8 || patch_size > 1024) fail("patch_size must lie in [8, 1024]");
  if (!(overlap >= 0.0 && overlap < 1.0)) fail("overlap must lie in [0, 1)");
  if (!(admission_fraction > 0.0 && admission_fraction <= 1.0))
    fail("admission_fraction must lie in (0, 1]");
  if (trees < 1 || trees > 100000) fail("trees must lie in [1, 100000]");
  if (augment < 0 || augment > 64) fail("augment must lie in [0, 64]");
  if (!(threshold >= 0.0 && threshold <= 1.0)) fail("threshold must lie in [0, 1]");
  if (mode != "patches" && mode != "wholeimage") fail("mode must be patches or wholeimage");
  synth_config(*this).validate();
}

json to_json(const RunConfig& c) {
  return json{{"method", c.method},
              {"seed", c.seed},
              {"patch_size", c.patch_size},
              {"overlap", c.overlap},
              {"admission_fraction", c.admission_fraction},
              {"trees", c.trees},
              {"augment", c.augment},
              {"threshold", c.threshold},
              {"recompute_percentiles", c.recompute_percentiles},
              {"wholeimage_baseline", c.wholeimage_baseline},
              {"data", c.data},
              {"probs", c.probs},
              {"model", c.model},
              {"mode", c.mode},
              {"patients", c.patients},
              {"images", c.images},
              {"image_size", c.image_size},
              {"class_mix", c.class_mix},
              {"hard", c.hard}};
}

namespace {

template <class T>
void take(const json& j, const char* key, T& field) {
  try {
    field = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kConfig, std::string("config key '") + key + "': " + e.what());
  }
}

}  // namespace

RunConfig run_config_from_json(const json& doc) {
  if (!doc.is_object()) throw Error(ErrorCode::kConfig, "config must be a JSON object");
  const json& j = doc.contains("config") ? doc.at("config") : doc;
  if (!j.is_object()) throw Error(ErrorCode::kConfig, "config must be a JSON object");
  RunConfig c;
  for (const auto& [key, value] : j.items()) {
    const char* k = key.c_str();
    if (key == "method") take(j, k, c.method);
    else if (key == "seed") take(j, k, c.seed);
    else if (key == "patch_size") take(j, k, c.patch_size);
    else if (key == "overlap") take(j, k, c.overlap);
    else if (key == "admission_fraction") take(j, k, c.admission_fraction);
    else if (key == "trees") take(j, k, c.trees);
    else if (key == "augment") take(j, k, c.augment);
    else if (key == "threshold") take(j, k, c.threshold);
    else if (key == "recompute_percentiles") take(j, k, c.recompute_percentiles);
    else if (key == "wholeimage_baseline") take(j, k, c.wholeimage_baseline);
    else if (key == "data") take(j, k, c.data);
    else if (key == "probs") take(j, k, c.probs);
    else if (key == "model") take(j, k, c.model);
    else if (key == "mode") take(j, k, c.mode);
    else if (key == "patients") take(j, k, c.patients);
    else if (key == "images") take(j, k, c.images);
    else if (key == "image_size") take(j, k, c.image_size);
    else if (key == "class_mix") take(j, k, c.class_mix);
    else if (key == "hard") take(j, k, c.hard);
    else throw Error(ErrorCode::kConfig, "unknown config key '" + key + "'");
  }
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kConfig, path.string() + ": " + e.what());
  }
  return run_config_from_json(j);
}

PipelineConfig pipeline_config(const RunConfig& c) {
  PipelineConfig p;
  p.method = c.method;
  p.seed = c.seed;
  p.grid.patch_size = c.patch_size;
  p.grid.overlap = c.overlap;
  p.grid.admission_fraction = c.admission_fraction;
  p.trees = c.trees;
  p.augment = c.augment;
  p.threshold = c.threshold;
  p.recompute_percentiles = c.recompute_percentiles;
  p.wholeimage_baseline = c.wholeimage_baseline;
  if (!c.probs.empty()) p.probabilities = c.probs;
  return p;
}

SynthConfig synth_config(const RunConfig& c) {
  SynthConfig s;
  s.n_patients = c.patients;
  s.images_per_patient = c.images;
  s.image_size = c.image_size;
  s.class_mix = c.class_mix;
  s.seed = c.seed;
  s.hard = c.hard;
  return s;
}

std::string apply_scale(const std::string& method, const std::string& scale) {
  if (scale != "1.0" && scale != "0.5")
    throw Error(ErrorCode::kConfig, "scale must be 1.0 or 0.5");
  const std::string prefix = method.substr(0, method.find('@'));
  if (prefix == "WHOLEIMAGE")
    throw Error(ErrorCode::kConfig, "WHOLEIMAGE@0.55x has a fixed scale");
  const std::string out = prefix + "@" + scale + "x";
  parse_method(out);
  return out;
}

}  // namespace cle::cli
