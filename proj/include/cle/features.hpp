#pragma once

#include <string>
#include <utility>
#include <vector>

#include "cle/patching.hpp"

namespace cle {

struct LbpScale {
  int radius = 1;
  int neighbors = 8;
};

struct LbpConfig {
  std::vector<LbpScale> scales = {{1, 8}, {3, 16}, {5, 24}};

  void validate() const;
  /// Per-patch histogram length summed over scales.
  int patch_dims() const;
};

struct GlcmConfig {
  enum class Quantization { kPatchRange, kFixedRange };

  int levels = 16;
  std::vector<std::pair<int, int>> offsets = {{1, 0}, {1, 1}, {0, 1}, {-1, 1}};
  bool symmetric = true;
  bool averaged = true;  // pooled counts; otherwise mean of per-offset matrices
  Quantization quantization = Quantization::kPatchRange;
  double fixed_min = 0.0;
  double fixed_max = 65535.0;

  void validate() const;
};

/// Image-level descriptor with named entries ("mean:<name>", "std:<name>").
struct FeatureVector {
  std::vector<double> values;
  std::vector<std::string> schema;
};

// --- LBP -----------------------------------------------------------------

/// Rotation-invariant uniform (riu2) LBP histogram with neighbors + 2 bins,
/// normalised to sum 1. Neighbours are bilinearly interpolated at offsets
/// quantised to 1/1024 px, so integer-valued patches are compared exactly.
/// A neighbour equal to the centre counts as 1.
std::vector<double> lbp_histogram(const Patch& patch, int radius, int neighbors);

/// Concatenated histograms of every configured scale for one patch.
std::vector<double> lbp_patch_vector(const Patch& patch, const LbpConfig& config);

/// OpenMP over patches.
std::vector<std::vector<double>> lbp_patch_features(const std::vector<Patch>& patches,
                                                    const LbpConfig& config);

std::vector<std::string> lbp_names(const LbpConfig& config);

FeatureVector lbp_image_vector(const std::vector<Patch>& patches, const LbpConfig& config = {});

// --- GLCM ----------------------------------------------------------------

struct Glcm {
  int levels = 0;
  std::vector<double> p;  // row-major levels x levels, sums to 1

  double at(int i, int j) const { return p[static_cast<size_t>(i) * levels + j]; }
};

/// Level index of every patch pixel.
std::vector<int> quantize(const Patch& patch, const GlcmConfig& config);

Glcm glcm(const Patch& patch, const GlcmConfig& config = {});

/// 13 Haralick features followed by dissimilarity and mean, in the order of
/// haralick_names(). Entropies use the natural log with 0 log 0 = 0.
std::vector<double> haralick_features(const Glcm& m);
const std::vector<std::string>& haralick_names();

/// OpenMP over patches.
std::vector<std::vector<double>> glcm_patch_features(const std::vector<Patch>& patches,
                                                     const GlcmConfig& config);

FeatureVector glcm_image_vector(const std::vector<Patch>& patches, const GlcmConfig& config = {});

// --- aggregation ---------------------------------------------------------

/// Per-dimension mean followed by per-dimension population std. Values are
/// summed in sorted order so the result does not depend on patch order.
FeatureVector aggregate_mean_std(const std::vector<std::vector<double>>& per_patch,
                                 const std::vector<std::string>& names);

}  // namespace cle
