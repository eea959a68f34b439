#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "cle/wholeimage.hpp"
#include "helpers.hpp"

using namespace cle;

namespace {

CleImage constant_image(int w, int h, uint16_t v) {
  CleImage img;
  img.width = w;
  img.height = h;
  img.mask = default_mask(w, h);
  img.pixels.assign(static_cast<size_t>(w) * h, v);
  return img;
}

}  // namespace

TEST_CASE("percentile_compress: constant image is degenerate") {
  const Compressed8 c = percentile_compress(constant_image(32, 32, 1234));
  CHECK(c.degenerate);
  CHECK(std::all_of(c.image.data.begin(), c.image.data.end(), [](uint8_t v) { return v == 0; }));
}

TEST_CASE("percentile_compress: two levels map to the endpoints") {
  CleImage img = constant_image(64, 64, 0);
  int k = 0;
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x)
      if (img.mask.contains(x, y)) img.at(x, y) = (k++ % 2) ? 65535 : 0;
  const Compressed8 c = percentile_compress(img);
  CHECK(c.p_low == 0);
  CHECK(c.p_high == 65535);
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x)
      if (img.mask.contains(x, y)) CHECK(c.image.at(x, y) == (img.at(x, y) ? 255 : 0));
}

TEST_CASE("percentile_compress: ramp matches the sort-based nearest-rank oracle") {
  std::vector<uint16_t> ramp(1000);
  for (int i = 0; i < 1000; ++i) ramp[i] = static_cast<uint16_t>(std::lround(i * 65535.0 / 999));
  std::mt19937_64 rng(3);
  std::shuffle(ramp.begin(), ramp.end(), rng);

  // a circle enclosing the whole 40x25 raster, so exactly the ramp populates it
  CleImage ramp_img = constant_image(40, 25, 0);
  ramp_img.mask = Circle{20, 12.5, 100};
  for (int i = 0; i < 1000; ++i) ramp_img.pixels[i] = ramp[i];
  const Compressed8 c = percentile_compress(ramp_img);
  std::vector<uint16_t> sorted = ramp;
  std::sort(sorted.begin(), sorted.end());
  const double lo = sorted[static_cast<size_t>(std::ceil(0.005 * 1000)) - 1];
  const double hi = sorted[static_cast<size_t>(std::ceil(0.995 * 1000)) - 1];
  CHECK(c.p_low == lo);
  CHECK(c.p_high == hi);
  for (int i = 0; i < 1000; ++i) {
    const double expect = std::clamp(std::round(255.0 / (hi - lo) * (ramp[i] - lo)), 0.0, 255.0);
    CHECK(c.image.data[i] == expect);
  }
}

TEST_CASE("percentile_compress: monotone, bounded, zero outside the circle") {
  std::mt19937_64 rng(5);
  const CleImage img = testing::random_image(64, 64, rng);
  const Compressed8 c = percentile_compress(img);
  for (int y = 0; y < 64; ++y) {
    for (int x = 0; x < 64; ++x) {
      if (!img.mask.contains(x, y)) {
        CHECK(c.image.at(x, y) == 0);
        continue;
      }
      for (int k = 0; k < 4; ++k) {
        const int x2 = static_cast<int>(rng() % 64), y2 = static_cast<int>(rng() % 64);
        if (img.mask.contains(x2, y2) && img.at(x, y) <= img.at(x2, y2))
          CHECK(c.image.at(x, y) <= c.image.at(x2, y2));
      }
    }
  }
}

TEST_CASE("max_square_side: examples and discarded area") {
  CHECK(max_square_side(288) == 407);
  CHECK(max_square_side(144) == 203);
  CHECK(max_square_side(100) == 141);
  CHECK(224.0 / 407 == doctest::Approx(0.5504).epsilon(1e-3));
  CHECK(std::abs(1.0 - 2.0 / std::numbers::pi - 0.36) < 0.005);
}

TEST_CASE("max_square_crop: corners stay within r+1 of the centre") {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(10.0, 500.0);
  for (int t = 0; t < 200; ++t) {
    const double r = u(rng);
    const int size = static_cast<int>(std::ceil(2 * r)) + 2;
    Raster<uint8_t> img(size, size, 1);
    const Circle c{size / 2.0, size / 2.0, r};
    const SquareCrop crop = max_square_crop(img, c);
    CHECK(crop.side == static_cast<int>(std::floor(std::sqrt(2.0) * r)));
    for (int dx : {0, crop.side})
      for (int dy : {0, crop.side})
        CHECK(std::hypot(crop.origin_x + dx - c.cx, crop.origin_y + dy - c.cy) <= r + 1);
  }
  CHECK_THROWS_AS(max_square_crop(Raster<uint8_t>(10, 10), Circle{5, 5, 20}), Error);
}

TEST_CASE("resize_to: constant, scale and gradient round trip") {
  Raster<uint8_t> flat(448, 448, 77);
  const auto r = resize_to(flat, 224);
  CHECK(std::all_of(r.data.begin(), r.data.end(), [](uint8_t v) { return v == 77; }));

  Raster<uint8_t> grad(407, 407);
  for (int y = 0; y < 407; ++y)
    for (int x = 0; x < 407; ++x) grad.at(x, y) = static_cast<uint8_t>((x + y) * 255 / 812);
  CHECK(resize_to(grad, 224).width == 224);

  Raster<uint8_t> small(100, 100);
  for (int y = 0; y < 100; ++y)
    for (int x = 0; x < 100; ++x) small.at(x, y) = static_cast<uint8_t>(x + y);
  const auto back = resize_to(resize_to(small, 200), 100);
  for (size_t i = 0; i < small.data.size(); ++i)
    CHECK(std::abs(int(back.data[i]) - int(small.data[i])) <= 2);
}

TEST_CASE("rotate: identity, four quarter turns and half turn") {
  std::mt19937_64 rng(7);
  const CleImage img = testing::random_image(33, 33, rng);
  CHECK(rotate(img, 0.0) == img);
  CleImage r = img;
  for (int i = 0; i < 4; ++i) r = rotate(r, 90.0);
  for (int y = 0; y < 33; ++y)
    for (int x = 0; x < 33; ++x)
      if (img.mask.contains(x, y)) CHECK(r.at(x, y) == img.at(x, y));

  CleImage small;
  small.width = small.height = 3;
  small.mask = default_mask(3, 3);
  small.pixels = {1, 2, 3, 4, 5, 6, 7, 8, 9};
  CHECK(rotate(small, 180.0).pixels == std::vector<uint16_t>{9, 8, 7, 6, 5, 4, 3, 2, 1});
}

TEST_CASE("rotate: in-circle mass is preserved for smooth images") {
  CleImage img = constant_image(128, 128, 0);
  for (int y = 0; y < 128; ++y)
    for (int x = 0; x < 128; ++x)
      img.at(x, y) = static_cast<uint16_t>(20000 + 10000 * std::sin(x / 15.0) * std::cos(y / 20.0));
  auto mass = [](const CleImage& im) {
    double m = 0;
    for (int y = 0; y < im.height; ++y)
      for (int x = 0; x < im.width; ++x)
        if (im.mask.contains(x, y)) m += im.at(x, y);
    return m;
  };
  for (double a : {17.0, 45.0, 133.0, 301.5}) CHECK(std::abs(mass(rotate(img, a)) / mass(img) - 1) < 0.01);
}

TEST_CASE("rotate_rect: quarter turn of a rectangle") {
  const Circle c{50, 50, 50};
  const auto r = rotate_rect({60, 40, 80, 50}, 90.0, c, 100, 100);
  REQUIRE(r.has_value());
  CHECK(*r == ArtifactRect{50, 60, 60, 80});
  CHECK(rotate_rect({20, 30, 40, 45}, 0.0, c, 100, 100) == ArtifactRect{20, 30, 40, 45});
  CHECK_FALSE(rotate_rect({95, 0, 100, 5}, 180.0, Circle{150, 150, 50}, 100, 100).has_value());
}

TEST_CASE("preprocess_whole_image: 576 frame gives a 224 tensor from a 407 crop") {
  std::mt19937_64 rng(8);
  const CleImage img = testing::random_image(576, 576, rng);
  const WholeImageResult res = preprocess_whole_image(img, std::nullopt);
  CHECK(res.side == 407);
  CHECK(res.tensor.width == 224);
  CHECK(res.tensor.height == 224);
  CHECK(res.origin_x == 85);

  WholeImageConfig inherit;
  inherit.recompute_percentiles = false;
  const WholeImageResult a = preprocess_whole_image(img, 30.0, inherit);
  const Compressed8 base = percentile_compress(img);
  CHECK(a.p_low == base.p_low);
  CHECK(a.p_high == base.p_high);
}
