#include "cle/serial.hpp"

namespace cle::serial {

std::vector<std::vector<double>> lbp_patch_features(const std::vector<Patch>& patches,
                                                    const LbpConfig& config) {
  config.validate();
  std::vector<std::vector<double>> out;
  out.reserve(patches.size());
  for (const auto& p : patches) out.push_back(lbp_patch_vector(p, config));
  return out;
}

std::vector<std::vector<double>> glcm_patch_features(const std::vector<Patch>& patches,
                                                     const GlcmConfig& config) {
  config.validate();
  std::vector<std::vector<double>> out;
  out.reserve(patches.size());
  for (const auto& p : patches) out.push_back(haralick_features(glcm(p, config)));
  return out;
}

FusionMaps build_maps(const std::vector<ScoredPatch>& patches, int width, int height) {
  if (width <= 0 || height <= 0) throw Error(ErrorCode::kValidation, "empty fusion frame");
  FusionMaps m;
  m.width = width;
  m.height = height;
  m.n_patches = patches.size();
  m.pa = Raster<uint8_t>(width, height, 0);
  m.pc = Raster<int32_t>(width, height, 1);
  m.pm = Raster<double>(width, height, 0.0);
  Raster<int32_t> count(width, height, 0);
  Raster<double> sum(width, height, 0.0);
  for (size_t i = 0; i < patches.size(); ++i) {
    const auto& c = patches[i].coords;
    const double p = patches[i].p_c1;
    if (c.c1 < 0 || c.c3 < 0 || c.c2 > width || c.c4 > height || c.c1 >= c.c2 || c.c3 >= c.c4)
      throw Error(ErrorCode::kValidation, "patch " + std::to_string(i) + " outside the frame");
    if (!(p >= 0.0 && p <= 1.0))
      throw Error(ErrorCode::kValidation,
                  "patch " + std::to_string(i) + " probability outside [0, 1]");
    for (int y = c.c3; y < c.c4; ++y) {
      for (int x = c.c1; x < c.c2; ++x) {
        ++count.at(x, y);
        sum.at(x, y) += p;
      }
    }
  }
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      if (count.at(x, y) == 0) continue;
      m.pa.at(x, y) = 1;
      m.pc.at(x, y) = count.at(x, y);
      m.pm.at(x, y) = sum.at(x, y) / count.at(x, y);
    }
  }
  return m;
}

RandomForestModel train_random_forest(const TrainSet& train, int trees, uint64_t seed) {
  train.validate();
  if (trees < 1) throw Error(ErrorCode::kConfig, "forest needs at least one tree");
  size_t count[2] = {0, 0};
  for (int l : train.labels) ++count[l];
  if (count[0] < 2 || count[1] < 2)
    throw Error(ErrorCode::kValidation, "random forest needs >= 2 rows per class");
  RandomForestModel model;
  model.n_features = train.rows[0].size();
  model.seed = seed;
  const int mtry = default_max_features(model.n_features);
  for (int t = 0; t < trees; ++t)
    model.trees.push_back(train_tree(train, seed ^ static_cast<uint64_t>(t), mtry));
  return model;
}

}  // namespace cle::serial
