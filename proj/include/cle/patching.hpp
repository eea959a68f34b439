#pragma once

#include <optional>
#include <vector>

#include "cle/core.hpp"

namespace cle {

/// Corner quadruple of a square patch: (c1,c3) top-left, (c2,c4) bottom-right,
/// half-open.
struct PatchCoords {
  int c1 = 0, c2 = 0, c3 = 0, c4 = 0;

  int width() const { return c2 - c1; }
  int height() const { return c4 - c3; }
  bool contains(int x, int y) const { return x >= c1 && x < c2 && y >= c3 && y < c4; }
  friend bool operator==(const PatchCoords&, const PatchCoords&) = default;
  friend auto operator<=>(const PatchCoords&, const PatchCoords&) = default;
};

struct Patch {
  PatchCoords coords;
  int size = 0;  // side length
  std::vector<double> values;
  bool whitened = false;
  bool degenerate = false;  // constant input, whitened to all zeros

  double at(int x, int y) const { return values[static_cast<size_t>(y) * size + x]; }
};

struct GridConfig {
  int patch_size = 80;
  double overlap = 0.5;
  double admission_fraction = 0.97;

  int stride() const;
  void validate() const;
};

/// 2x2 box downscale with round-half-up. Odd trailing rows/columns are
/// dropped; the mask centre and radius are halved.
CleImage resize_half(const CleImage& image);

/// Centred square lattice: one patch sits on the frame centre and the lattice
/// extends by whole strides while it stays inside the raster. A patch is
/// admitted when at least `admission_fraction` of its pixels lie inside the
/// mask (no mask = whole raster). Output is row-major.
std::vector<PatchCoords> patch_grid(int width, int height, const std::optional<Circle>& mask,
                                    const GridConfig& config = {});

/// Fraction of patch pixels inside the circle.
double inside_fraction(const PatchCoords& p, const Circle& mask);

bool intersects(const PatchCoords& p, const ArtifactRect& r);

/// Drops every patch touching any rectangle. Order is preserved.
std::vector<PatchCoords> exclude_artifacts(const std::vector<PatchCoords>& coords,
                                           const std::vector<ArtifactRect>& rects);

/// Scales a rectangle with outward rounding so the result covers the original.
ArtifactRect scale_rect(const ArtifactRect& rect, double scale);

Patch extract_patch(const CleImage& image, const PatchCoords& coords);

/// Per-patch standardisation with population std. Constant input becomes all
/// zeros with `degenerate` set.
Patch whiten(Patch patch);

/// Frame ready for patch-level processing: resized when scale == 0.5, the
/// admitted lattice, and artifact-free patch coordinates.
struct PatchedFrame {
  CleImage frame;
  std::vector<PatchCoords> grid;    // admitted lattice before artifact removal
  std::vector<PatchCoords> coords;  // after artifact removal
};

/// `rects` are given at full resolution.
PatchedFrame prepare_frame(const CleImage& full, const std::vector<ArtifactRect>& rects,
                           double scale, const GridConfig& config = {});

}  // namespace cle
