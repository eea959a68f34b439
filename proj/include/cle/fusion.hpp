#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "cle/core.hpp"
#include "cle/patching.hpp"

namespace cle {

/// A patch location with the classifier's carcinogenic-class posterior.
struct ScoredPatch {
  PatchCoords coords;
  double p_c1 = 0.0;
};

/// Per-pixel fusion rasters over the patched frame.
///   pa: 1 where at least one patch covers the pixel
///   pc: number of covering patches, floored at 1
///   pm: pa / pc * sum of covering patch probabilities
struct FusionMaps {
  int width = 0;
  int height = 0;
  size_t n_patches = 0;
  Raster<uint8_t> pa;
  Raster<int32_t> pc;
  Raster<double> pm;
};

struct ImageProbability {
  double p = 0.0;
  size_t n_active = 0;
  size_t n_patches = 0;
};

/// Rows are processed in parallel; each pixel accumulates its covering
/// patches in input order, so the result is bit-identical to the serial
/// reference.
FusionMaps build_maps(const std::vector<ScoredPatch>& patches, int width, int height);

/// Sum of pm over the number of active pixels. Throws when nothing is active.
ImageProbability image_probability(const FusionMaps& maps);

/// Convenience: build_maps + image_probability.
ImageProbability fuse(const std::vector<ScoredPatch>& patches, int width, int height);

/// pm scaled to [0, 255] with round-half-up, optionally enlarged by an integer
/// nearest-neighbour factor.
Raster<uint8_t> probability_raster(const FusionMaps& maps, int upscale = 1);
void export_probability_map(const FusionMaps& maps, const std::filesystem::path& path,
                            int upscale = 1);

// --- patch-probability CSV: patient,sequence,frame,patch_index,p_c1 ---------

struct PatchProbabilityRow {
  std::string patient;
  std::string sequence;
  int frame = 0;
  int patch_index = 0;
  double p_c1 = 0.0;
};

std::vector<PatchProbabilityRow> read_patch_probabilities(std::istream& in);
std::vector<PatchProbabilityRow> read_patch_probabilities(const std::filesystem::path& path);
void write_patch_probabilities(const std::vector<PatchProbabilityRow>& rows, std::ostream& out);

/// Shortest round-trip text form of a double.
std::string format_real(double v);

}  // namespace cle
