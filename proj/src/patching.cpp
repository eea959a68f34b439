#include "cle/patching.hpp"

#include <algorithm>
#include <cmath>

namespace cle {

int GridConfig::stride() const {
  return static_cast<int>(std::lround(patch_size * (1.0 - overlap)));
}

void GridConfig::validate() const {
  if (patch_size < 1) throw Error(ErrorCode::kConfig, "patch size must be positive");
  if (!(overlap >= 0.0 && overlap < 1.0))
    throw Error(ErrorCode::kConfig, "overlap must lie in [0, 1)");
  if (stride() < 1) throw Error(ErrorCode::kConfig, "overlap leaves a zero stride");
  if (!(admission_fraction >= 0.0 && admission_fraction <= 1.0))
    throw Error(ErrorCode::kConfig, "admission fraction must lie in [0, 1]");
}

CleImage resize_half(const CleImage& image) {
  if (image.width < 2 || image.height < 2) return image;
  CleImage out;
  out.width = image.width / 2;
  out.height = image.height / 2;
  out.pixels.resize(static_cast<size_t>(out.width) * out.height);
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) {
      const uint32_t sum = uint32_t{image.at(2 * x, 2 * y)} + image.at(2 * x + 1, 2 * y) +
                           image.at(2 * x, 2 * y + 1) + image.at(2 * x + 1, 2 * y + 1);
      out.at(x, y) = static_cast<uint16_t>((sum + 2) / 4);
    }
  }
  out.mask = Circle{image.mask.cx / 2.0, image.mask.cy / 2.0, image.mask.r / 2.0};
  return out;
}

double inside_fraction(const PatchCoords& p, const Circle& mask) {
  size_t inside = 0;
  for (int y = p.c3; y < p.c4; ++y)
    for (int x = p.c1; x < p.c2; ++x) inside += mask.contains(x, y);
  return static_cast<double>(inside) / (static_cast<double>(p.width()) * p.height());
}

namespace {

// Origins of a lattice anchored on the centred patch along one axis.
std::vector<int> axis_origins(int extent, int patch, int stride) {
  const int centre = (extent - patch) / 2;
  const int steps = std::min(centre / stride, (extent - patch - centre) / stride);
  std::vector<int> out;
  for (int k = -steps; k <= steps; ++k) out.push_back(centre + k * stride);
  return out;
}

}  // namespace

std::vector<PatchCoords> patch_grid(int width, int height, const std::optional<Circle>& mask,
                                    const GridConfig& config) {
  config.validate();
  const int ps = config.patch_size;
  if (ps > width || ps > height)
    throw Error(ErrorCode::kValidation, "patch larger than raster");
  const int stride = config.stride();
  const auto xs = axis_origins(width, ps, stride);
  const auto ys = axis_origins(height, ps, stride);
  std::vector<PatchCoords> out;
  for (int y0 : ys) {
    for (int x0 : xs) {
      PatchCoords p{x0, x0 + ps, y0, y0 + ps};
      if (mask && inside_fraction(p, *mask) < config.admission_fraction) continue;
      out.push_back(p);
    }
  }
  return out;
}

bool intersects(const PatchCoords& p, const ArtifactRect& r) {
  return p.c1 < r.x1 && r.x0 < p.c2 && p.c3 < r.y1 && r.y0 < p.c4;
}

std::vector<PatchCoords> exclude_artifacts(const std::vector<PatchCoords>& coords,
                                           const std::vector<ArtifactRect>& rects) {
  std::vector<PatchCoords> out;
  out.reserve(coords.size());
  for (const auto& p : coords) {
    const bool hit =
        std::any_of(rects.begin(), rects.end(), [&](const auto& r) { return intersects(p, r); });
    if (!hit) out.push_back(p);
  }
  return out;
}

ArtifactRect scale_rect(const ArtifactRect& rect, double scale) {
  return ArtifactRect{static_cast<int>(std::floor(rect.x0 * scale)),
                      static_cast<int>(std::floor(rect.y0 * scale)),
                      static_cast<int>(std::ceil(rect.x1 * scale)),
                      static_cast<int>(std::ceil(rect.y1 * scale))};
}

Patch extract_patch(const CleImage& image, const PatchCoords& coords) {
  if (coords.c1 < 0 || coords.c3 < 0 || coords.c2 > image.width || coords.c4 > image.height ||
      coords.width() != coords.height() || coords.width() <= 0)
    throw Error(ErrorCode::kValidation, "patch outside raster");
  Patch p;
  p.coords = coords;
  p.size = coords.width();
  p.values.resize(static_cast<size_t>(p.size) * p.size);
  size_t i = 0;
  for (int y = coords.c3; y < coords.c4; ++y)
    for (int x = coords.c1; x < coords.c2; ++x) p.values[i++] = image.at(x, y);
  return p;
}

Patch whiten(Patch patch) {
  const size_t n = patch.values.size();
  if (n == 0) return patch;
  double sum = 0.0;
  for (double v : patch.values) sum += v;
  const double mean = sum / n;
  double ss = 0.0;
  for (double v : patch.values) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / n);
  patch.whitened = true;
  if (sd <= 1e-12 * std::max(1.0, std::abs(mean))) {
    std::fill(patch.values.begin(), patch.values.end(), 0.0);
    patch.degenerate = true;
    return patch;
  }
  for (double& v : patch.values) v = (v - mean) / sd;
  patch.degenerate = false;
  return patch;
}

PatchedFrame prepare_frame(const CleImage& full, const std::vector<ArtifactRect>& rects,
                           double scale, const GridConfig& config) {
  PatchedFrame out;
  std::vector<ArtifactRect> scaled;
  if (scale == 1.0) {
    out.frame = full;
    scaled = rects;
  } else if (scale == 0.5) {
    out.frame = resize_half(full);
    for (const auto& r : rects) scaled.push_back(scale_rect(r, 0.5));
  } else {
    throw Error(ErrorCode::kConfig, "scale must be 1.0 or 0.5");
  }
  out.grid = patch_grid(out.frame.width, out.frame.height, out.frame.mask, config);
  out.coords = exclude_artifacts(out.grid, scaled);
  return out;
}

}  // namespace cle
