#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "cle/core.hpp"
#include "cle/patching.hpp"

namespace testing {

// Fresh directory below the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("cle_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline cle::CleImage random_image(int w, int h, std::mt19937_64& rng, int maxval = 65535) {
  std::uniform_int_distribution<int> px(0, maxval);
  cle::CleImage img;
  img.width = w;
  img.height = h;
  img.mask = cle::default_mask(w, h);
  img.pixels.resize(static_cast<size_t>(w) * h);
  for (auto& p : img.pixels) p = static_cast<uint16_t>(px(rng));
  return img;
}

inline cle::Patch make_patch(int size, const std::vector<double>& values) {
  cle::Patch p;
  p.size = size;
  p.coords = {0, size, 0, size};
  p.values = values;
  return p;
}

inline cle::Patch random_patch(int size, std::mt19937_64& rng, int maxval = 65535) {
  std::uniform_int_distribution<int> px(0, maxval);
  std::vector<double> v(static_cast<size_t>(size) * size);
  for (auto& x : v) x = px(rng);
  return make_patch(size, v);
}

// Patch rotated by 90 degrees counter-clockwise.
inline cle::Patch rot90(const cle::Patch& p) {
  cle::Patch out = p;
  const int n = p.size;
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) out.values[static_cast<size_t>(n - 1 - x) * n + y] = p.at(x, y);
  return out;
}

inline cle::ImageRecord record(const std::string& patient, const std::string& seq, int frame,
                               cle::Label label, const std::string& file = "x.pgm") {
  cle::ImageRecord r;
  r.patient_id = patient;
  r.sequence_id = seq;
  r.frame_index = frame;
  r.label = label;
  r.site = label == cle::Label::kCarcinogenic ? cle::Site::kTumorRegion : cle::Site::kAlveolarRidge;
  r.file = file;
  return r;
}

}  // namespace testing
