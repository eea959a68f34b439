#pragma once

#include <optional>

#include "cle/core.hpp"

namespace cle {

/// Result of the 16 -> 8 bit dynamic compression.
struct Compressed8 {
  Raster<uint8_t> image;
  double p_low = 0.0;   // 0.5th percentile inside the view circle
  double p_high = 0.0;  // 99.5th percentile inside the view circle
  bool degenerate = false;
};

/// Nearest-rank percentile (rank ceil(q/100 * n), 1-based) of `values`.
/// `values` is sorted in place.
uint16_t nearest_rank_percentile(std::vector<uint16_t>& values, double q);

/// Maps [P0.5, P99.5] of the in-circle intensities onto [0, 255] with
/// rounding and clamping; pixels outside the circle become 0.
Compressed8 percentile_compress(const CleImage& image);

/// Same mapping with externally supplied percentile bounds.
Compressed8 percentile_compress(const CleImage& image, double p_low, double p_high);

struct SquareCrop {
  int side = 0;
  int origin_x = 0;
  int origin_y = 0;
  Raster<uint8_t> pixels;
};

/// Side length floor(sqrt(2) * r) of the largest square inscribed in a circle.
int max_square_side(double radius);

/// Largest axis-aligned square inside the mask circle, centred on it.
SquareCrop max_square_crop(const Raster<uint8_t>& image, const Circle& mask);

/// Bilinear resampling to target x target (pixel-centre aligned).
Raster<uint8_t> resize_to(const Raster<uint8_t>& square, int target = 224);

/// Rotation about the mask centre with bilinear interpolation; pixels whose
/// source falls outside the raster become 0. Multiples of 90 degrees use exact
/// trigonometry so they permute the pixel grid.
CleImage rotate(const CleImage& image, double angle_deg);

/// Bounding box (outward rounded, clipped) of a rectangle after `rotate`.
/// Empty after clipping -> nullopt.
std::optional<ArtifactRect> rotate_rect(const ArtifactRect& rect, double angle_deg,
                                        const Circle& mask, int width, int height);

struct WholeImageConfig {
  int target = 224;
  bool recompute_percentiles = true;  // per rotated copy; otherwise inherit
};

struct WholeImageResult {
  Raster<uint8_t> tensor;  // target x target
  double p_low = 0.0;
  double p_high = 0.0;
  int side = 0;
  int origin_x = 0;
  int origin_y = 0;
  bool degenerate = false;
};

/// Rotation (optional) -> percentile compression -> maximum square -> resize.
WholeImageResult preprocess_whole_image(const CleImage& image,
                                        std::optional<double> rotation_deg,
                                        const WholeImageConfig& config = {});

}  // namespace cle
