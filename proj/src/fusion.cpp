#include "cle/fusion.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace cle {

namespace {

void check_patches(const std::vector<ScoredPatch>& patches, int width, int height) {
  for (size_t i = 0; i < patches.size(); ++i) {
    const auto& c = patches[i].coords;
    if (c.c1 < 0 || c.c3 < 0 || c.c2 > width || c.c4 > height || c.c1 >= c.c2 || c.c3 >= c.c4)
      throw Error(ErrorCode::kValidation, "patch " + std::to_string(i) + " outside the frame");
    const double p = patches[i].p_c1;
    if (!(p >= 0.0 && p <= 1.0))
      throw Error(ErrorCode::kValidation,
                  "patch " + std::to_string(i) + " probability outside [0, 1]");
  }
}

}  // namespace

FusionMaps build_maps(const std::vector<ScoredPatch>& patches, int width, int height) {
  if (width <= 0 || height <= 0) throw Error(ErrorCode::kValidation, "empty fusion frame");
  check_patches(patches, width, height);
  FusionMaps m;
  m.width = width;
  m.height = height;
  m.n_patches = patches.size();
  m.pa = Raster<uint8_t>(width, height, 0);
  m.pc = Raster<int32_t>(width, height, 1);
  m.pm = Raster<double>(width, height, 0.0);
#pragma omp parallel
  {
    std::vector<int32_t> count(width);
    std::vector<double> sum(width);
#pragma omp for schedule(static)
    for (int y = 0; y < height; ++y) {
      std::fill(count.begin(), count.end(), 0);
      std::fill(sum.begin(), sum.end(), 0.0);
      for (const auto& sp : patches) {
        if (y < sp.coords.c3 || y >= sp.coords.c4) continue;
        for (int x = sp.coords.c1; x < sp.coords.c2; ++x) {
          ++count[x];
          sum[x] += sp.p_c1;
        }
      }
      for (int x = 0; x < width; ++x) {
        if (count[x] == 0) continue;
        m.pa.at(x, y) = 1;
        m.pc.at(x, y) = count[x];
        m.pm.at(x, y) = sum[x] / count[x];
      }
    }
  }
  return m;
}

ImageProbability image_probability(const FusionMaps& maps) {
  ImageProbability out;
  out.n_patches = maps.n_patches;
  double total = 0.0;
  for (size_t i = 0; i < maps.pa.size(); ++i) {
    out.n_active += maps.pa.data[i];
    total += maps.pm.data[i];
  }
  if (out.n_active == 0) throw Error(ErrorCode::kValidation, "no admissible patches");
  out.p = total / static_cast<double>(out.n_active);
  return out;
}

ImageProbability fuse(const std::vector<ScoredPatch>& patches, int width, int height) {
  return image_probability(build_maps(patches, width, height));
}

Raster<uint8_t> probability_raster(const FusionMaps& maps, int upscale) {
  if (upscale < 1) throw Error(ErrorCode::kConfig, "upscale factor must be >= 1");
  Raster<uint8_t> out(maps.width * upscale, maps.height * upscale, 0);
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) {
      const int sx = x / upscale, sy = y / upscale;
      if (!maps.pa.at(sx, sy)) continue;
      out.at(x, y) = static_cast<uint8_t>(std::floor(255.0 * maps.pm.at(sx, sy) + 0.5));
    }
  }
  return out;
}

void export_probability_map(const FusionMaps& maps, const std::filesystem::path& path,
                            int upscale) {
  save_pgm8(probability_raster(maps, upscale), path);
}

std::string format_real(double v) {
  char buf[40];
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

std::vector<PatchProbabilityRow> read_patch_probabilities(std::istream& in) {
  std::vector<PatchProbabilityRow> rows;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (lineno == 1 && line.rfind("patient,", 0) == 0) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 5)
      throw Error(ErrorCode::kFormat, "probability csv line " + std::to_string(lineno) +
                                          ": expected 5 fields");
    try {
      PatchProbabilityRow r{f[0], f[1], std::stoi(f[2]), std::stoi(f[3]), std::stod(f[4])};
      if (!(r.p_c1 >= 0.0 && r.p_c1 <= 1.0))
        throw Error(ErrorCode::kFormat, "probability csv line " + std::to_string(lineno) +
                                            ": p_c1 outside [0, 1]");
      rows.push_back(std::move(r));
    } catch (const std::logic_error&) {
      throw Error(ErrorCode::kFormat,
                  "probability csv line " + std::to_string(lineno) + ": bad number");
    }
  }
  return rows;
}

std::vector<PatchProbabilityRow> read_patch_probabilities(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  return read_patch_probabilities(in);
}

void write_patch_probabilities(const std::vector<PatchProbabilityRow>& rows, std::ostream& out) {
  out << "patient,sequence,frame,patch_index,p_c1\n";
  for (const auto& r : rows)
    out << r.patient << ',' << r.sequence << ',' << r.frame << ',' << r.patch_index << ','
        << format_real(r.p_c1) << '\n';
}

}  // namespace cle
