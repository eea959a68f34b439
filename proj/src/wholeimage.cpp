#include "cle/wholeimage.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace cle {

uint16_t nearest_rank_percentile(std::vector<uint16_t>& values, double q) {
  if (values.empty()) throw Error(ErrorCode::kValidation, "percentile of empty set");
  std::sort(values.begin(), values.end());
  const double n = static_cast<double>(values.size());
  // Guard against q/100*n landing a hair above an integer.
  auto rank = static_cast<size_t>(std::ceil(q / 100.0 * n - 1e-9));
  rank = std::clamp<size_t>(rank, 1, values.size());
  return values[rank - 1];
}

Compressed8 percentile_compress(const CleImage& image, double p_low, double p_high) {
  Compressed8 out;
  out.p_low = p_low;
  out.p_high = p_high;
  out.image = Raster<uint8_t>(image.width, image.height, 0);
  if (!(p_high > p_low)) {
    out.degenerate = true;
    return out;
  }
  const double gain = 255.0 / (p_high - p_low);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      if (!image.mask.contains(x, y)) continue;
      const double v = std::round(gain * (image.at(x, y) - p_low));
      out.image.at(x, y) = static_cast<uint8_t>(std::clamp(v, 0.0, 255.0));
    }
  }
  return out;
}

Compressed8 percentile_compress(const CleImage& image) {
  std::vector<uint16_t> inside;
  inside.reserve(image.pixels.size());
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x)
      if (image.mask.contains(x, y)) inside.push_back(image.at(x, y));
  if (inside.empty()) throw Error(ErrorCode::kValidation, "mask circle contains no pixels");
  std::vector<uint16_t> scratch = inside;
  const double lo = nearest_rank_percentile(scratch, 0.5);
  const double hi = nearest_rank_percentile(scratch, 99.5);
  return percentile_compress(image, lo, hi);
}

int max_square_side(double radius) {
  return static_cast<int>(std::floor(std::numbers::sqrt2 * radius));
}

SquareCrop max_square_crop(const Raster<uint8_t>& image, const Circle& mask) {
  if (mask.r < 2.0) throw Error(ErrorCode::kValidation, "mask radius below 2 px");
  SquareCrop crop;
  crop.side = max_square_side(mask.r);
  crop.origin_x = static_cast<int>(std::lround(mask.cx - crop.side / 2.0));
  crop.origin_y = static_cast<int>(std::lround(mask.cy - crop.side / 2.0));
  if (crop.origin_x < 0 || crop.origin_y < 0 || crop.origin_x + crop.side > image.width ||
      crop.origin_y + crop.side > image.height)
    throw Error(ErrorCode::kValidation, "square crop exceeds raster; malformed mask");
  crop.pixels = Raster<uint8_t>(crop.side, crop.side);
  for (int y = 0; y < crop.side; ++y)
    for (int x = 0; x < crop.side; ++x)
      crop.pixels.at(x, y) = image.at(crop.origin_x + x, crop.origin_y + y);
  return crop;
}

Raster<uint8_t> resize_to(const Raster<uint8_t>& square, int target) {
  if (square.width < 1 || square.height < 1 || target < 1)
    throw Error(ErrorCode::kValidation, "resize of empty raster");
  Raster<uint8_t> out(target, target);
  const double sx = static_cast<double>(square.width) / target;
  const double sy = static_cast<double>(square.height) / target;
  for (int y = 0; y < target; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, square.height - 1.0);
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, square.height - 1);
    const double ty = fy - y0;
    for (int x = 0; x < target; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, square.width - 1.0);
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, square.width - 1);
      const double tx = fx - x0;
      const double top = (1 - tx) * square.at(x0, y0) + tx * square.at(x1, y0);
      const double bot = (1 - tx) * square.at(x0, y1) + tx * square.at(x1, y1);
      out.at(x, y) = static_cast<uint8_t>(std::lround((1 - ty) * top + ty * bot));
    }
  }
  return out;
}

namespace {

struct Rotation {
  double c = 1.0;
  double s = 0.0;
};

Rotation make_rotation(double angle_deg) {
  double a = std::fmod(angle_deg, 360.0);
  if (a < 0) a += 360.0;
  if (a == 0.0) return {1.0, 0.0};
  if (a == 90.0) return {0.0, 1.0};
  if (a == 180.0) return {-1.0, 0.0};
  if (a == 270.0) return {0.0, -1.0};
  const double rad = a * std::numbers::pi / 180.0;
  return {std::cos(rad), std::sin(rad)};
}

}  // namespace

CleImage rotate(const CleImage& image, double angle_deg) {
  const Rotation rot = make_rotation(angle_deg);
  CleImage out = image;
  if (rot.c == 1.0 && rot.s == 0.0) return out;
  const double cx = image.mask.cx, cy = image.mask.cy;
  const int w = image.width, h = image.height;
#pragma omp parallel for schedule(static)
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      // Inverse map of the output pixel centre.
      const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
      const double fx = rot.c * dx + rot.s * dy + cx - 0.5;
      const double fy = -rot.s * dx + rot.c * dy + cy - 0.5;
      uint16_t v = 0;
      if (fx >= 0.0 && fy >= 0.0 && fx <= w - 1.0 && fy <= h - 1.0) {
        const int x0 = static_cast<int>(fx), y0 = static_cast<int>(fy);
        const int x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
        const double tx = fx - x0, ty = fy - y0;
        const double top = (1 - tx) * image.at(x0, y0) + tx * image.at(x1, y0);
        const double bot = (1 - tx) * image.at(x0, y1) + tx * image.at(x1, y1);
        v = static_cast<uint16_t>(std::clamp(std::lround((1 - ty) * top + ty * bot), 0L, 65535L));
      }
      out.pixels[static_cast<size_t>(y) * w + x] = v;
    }
  }
  return out;
}

std::optional<ArtifactRect> rotate_rect(const ArtifactRect& rect, double angle_deg,
                                        const Circle& mask, int width, int height) {
  const Rotation rot = make_rotation(angle_deg);
  double xmin = 1e300, ymin = 1e300, xmax = -1e300, ymax = -1e300;
  for (double px : {double(rect.x0), double(rect.x1)}) {
    for (double py : {double(rect.y0), double(rect.y1)}) {
      const double dx = px - mask.cx, dy = py - mask.cy;
      const double qx = rot.c * dx - rot.s * dy + mask.cx;
      const double qy = rot.s * dx + rot.c * dy + mask.cy;
      xmin = std::min(xmin, qx);
      xmax = std::max(xmax, qx);
      ymin = std::min(ymin, qy);
      ymax = std::max(ymax, qy);
    }
  }
  // Snap away float noise before outward rounding.
  auto snap = [](double v) { return std::abs(v - std::round(v)) < 1e-9 ? std::round(v) : v; };
  ArtifactRect r{std::max(0, static_cast<int>(std::floor(snap(xmin)))),
                 std::max(0, static_cast<int>(std::floor(snap(ymin)))),
                 std::min(width, static_cast<int>(std::ceil(snap(xmax)))),
                 std::min(height, static_cast<int>(std::ceil(snap(ymax))))};
  if (r.x0 >= r.x1 || r.y0 >= r.y1) return std::nullopt;
  return r;
}

WholeImageResult preprocess_whole_image(const CleImage& image,
                                        std::optional<double> rotation_deg,
                                        const WholeImageConfig& config) {
  Compressed8 c8;
  if (rotation_deg) {
    const CleImage rotated = rotate(image, *rotation_deg);
    if (config.recompute_percentiles) {
      c8 = percentile_compress(rotated);
    } else {
      const Compressed8 base = percentile_compress(image);
      c8 = percentile_compress(rotated, base.p_low, base.p_high);
    }
  } else {
    c8 = percentile_compress(image);
  }
  const SquareCrop crop = max_square_crop(c8.image, image.mask);
  WholeImageResult out;
  out.tensor = resize_to(crop.pixels, config.target);
  out.p_low = c8.p_low;
  out.p_high = c8.p_high;
  out.side = crop.side;
  out.origin_x = crop.origin_x;
  out.origin_y = crop.origin_y;
  out.degenerate = c8.degenerate;
  return out;
}

}  // namespace cle
