#pragma once

#include <vector>

#include "cle/classify.hpp"
#include "cle/features.hpp"
#include "cle/fusion.hpp"

/// Single-threaded reference versions of the OpenMP kernels. Results are
/// bit-identical to the parallel versions.
namespace cle::serial {

std::vector<std::vector<double>> lbp_patch_features(const std::vector<Patch>& patches,
                                                    const LbpConfig& config);

std::vector<std::vector<double>> glcm_patch_features(const std::vector<Patch>& patches,
                                                     const GlcmConfig& config);

/// Accumulates patch by patch instead of row by row.
FusionMaps build_maps(const std::vector<ScoredPatch>& patches, int width, int height);

RandomForestModel train_random_forest(const TrainSet& train, int trees, uint64_t seed);

}  // namespace cle::serial
