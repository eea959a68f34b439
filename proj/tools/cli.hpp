#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>

#include <json.hpp>

#include "cle/core.hpp"
#include "cle/eval.hpp"
#include "cle/synth.hpp"

namespace cle::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitUsage = 2,
  kExitConfig = 3,
  kExitIo = 4,
  kExitData = 5,
  kExitPatients = 6,
  kExitNumeric = 7,
};

int exit_code_for(ErrorCode code);

/// Declarative run configuration. JSON keys equal the field names.
struct RunConfig {
  std::string method = "RF-LBP@0.5x";
  uint64_t seed = 42;
  int patch_size = 80;
  double overlap = 0.5;
  double admission_fraction = 0.97;
  int trees = 500;
  int augment = 2;
  double threshold = 0.5;
  bool recompute_percentiles = true;
  bool wholeimage_baseline = false;
  std::string data;
  std::string probs;
  std::string model;
  std::string mode = "patches";  // preprocess: patches | wholeimage

  // synth
  int patients = 12;
  int images = 60;
  int image_size = 576;
  double class_mix = 0.5;
  bool hard = false;

  void validate() const;
};

nlohmann::json to_json(const RunConfig& config);

/// Accepts a RunConfig object or a summary document carrying one under
/// "config". Unknown keys are rejected.
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);

PipelineConfig pipeline_config(const RunConfig& config);
SynthConfig synth_config(const RunConfig& config);

/// Rewrites the scale suffix of a patch-based method ("RF-LBP@1.0x" with 0.5
/// gives "RF-LBP@0.5x"). A bare prefix such as "PPF" gets the suffix added.
std::string apply_scale(const std::string& method, const std::string& scale);

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace cle::cli
