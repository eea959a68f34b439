#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cle/features.hpp"
#include "helpers.hpp"

using namespace cle;

namespace {

bool all_finite(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

Patch rotated(const Patch& p, int quarter_turns) {
  Patch out = p;
  for (int i = 0; i < quarter_turns; ++i) out = testing::rot90(out);
  return out;
}

}  // namespace

TEST_CASE("lbp: constant patch puts all mass in bin P") {
  const auto h = lbp_histogram(testing::make_patch(9, std::vector<double>(81, 42.0)), 1, 8);
  REQUIRE(h.size() == 10);
  CHECK(h[8] == 1.0);
}

TEST_CASE("lbp: bright centre with dark ring gives code 0") {
  std::vector<double> v(9, 0.0);
  v[4] = 5.0;
  const auto h = lbp_histogram(testing::make_patch(3, v), 1, 8);
  CHECK(h[0] == 1.0);
  CHECK(std::accumulate(h.begin(), h.end(), 0.0) == 1.0);
}

TEST_CASE("lbp: vertical step edge yields only uniform codes") {
  std::vector<double> v(20 * 20);
  for (int y = 0; y < 20; ++y)
    for (int x = 0; x < 20; ++x) v[y * 20 + x] = x < 10 ? 0.0 : 100.0;
  for (auto [r, p] : {std::pair{1, 8}, {3, 16}, {5, 24}}) {
    const auto h = lbp_histogram(testing::make_patch(20, v), r, p);
    CHECK(h[p + 1] == 0.0);
    CHECK(std::accumulate(h.begin(), h.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("lbp: exact invariance under quarter turns") {
  std::mt19937_64 rng(21);
  for (int t = 0; t < 200; ++t) {
    const Patch p = testing::random_patch(16, rng, t % 2 ? 65535 : 7);
    const auto h0 = lbp_histogram(p, 1, 8);
    for (int k = 1; k < 4; ++k) CHECK(lbp_histogram(rotated(p, k), 1, 8) == h0);
  }
}

TEST_CASE("lbp: monotone affine rescaling leaves histograms unchanged") {
  std::mt19937_64 rng(22);
  const LbpConfig cfg;
  for (int t = 0; t < 30; ++t) {
    const Patch p = testing::random_patch(24, rng, 1000);
    Patch q = p;
    for (double& v : q.values) v = 3 * v + 17;
    CHECK(lbp_patch_vector(p, cfg) == lbp_patch_vector(q, cfg));
  }
}

TEST_CASE("lbp: small patches are rejected") {
  CHECK_THROWS_AS(lbp_histogram(testing::make_patch(10, std::vector<double>(100, 1)), 5, 24), Error);
}

TEST_CASE("lbp: image vector aggregation") {
  std::mt19937_64 rng(23);
  const LbpConfig cfg;
  CHECK(cfg.patch_dims() == 54);
  const Patch p = testing::random_patch(80, rng);
  const FeatureVector one = lbp_image_vector({p}, cfg);
  REQUIRE(one.values.size() == 108);
  REQUIRE(one.schema.size() == 108);
  CHECK(one.schema[0] == "mean:lbp_r1_p8_b0");
  CHECK(one.schema[54] == "std:lbp_r1_p8_b0");
  const auto hist = lbp_patch_vector(p, cfg);
  for (int i = 0; i < 54; ++i) {
    CHECK(one.values[i] == hist[i]);
    CHECK(one.values[54 + i] == 0.0);
  }
  CHECK(lbp_image_vector({p, p}, cfg).values == one.values);
}

TEST_CASE("glcm: constant patch and checkerboard") {
  const Glcm c = glcm(testing::make_patch(4, std::vector<double>(16, 9.0)));
  CHECK(c.at(0, 0) == 1.0);

  GlcmConfig one_offset;
  one_offset.offsets = {{1, 0}};
  const Glcm m = glcm(testing::make_patch(2, {0, 15, 15, 0}), one_offset);
  CHECK(m.at(0, 15) == 0.5);
  CHECK(m.at(15, 0) == 0.5);
}

TEST_CASE("glcm: symmetric, non-negative, normalised on random patches") {
  std::mt19937_64 rng(24);
  for (int t = 0; t < 200; ++t) {
    GlcmConfig cfg;
    cfg.averaged = t % 3 != 0;
    const Glcm m = glcm(testing::random_patch(20, rng, t % 5 == 0 ? 3 : 65535), cfg);
    double sum = 0.0;
    for (int i = 0; i < m.levels; ++i) {
      for (int j = 0; j < m.levels; ++j) {
        CHECK(m.at(i, j) >= 0.0);
        CHECK(m.at(i, j) == m.at(j, i));
        sum += m.at(i, j);
      }
    }
    CHECK(std::abs(sum - 1.0) <= 1e-12);
  }
}

TEST_CASE("haralick: closed forms") {
  const auto& names = haralick_names();
  REQUIRE(names.size() == 15);
  auto idx = [&](const char* n) { return std::find(names.begin(), names.end(), n) - names.begin(); };

  Glcm diag{16, std::vector<double>(256, 0.0)};
  diag.p[5 * 16 + 5] = 1.0;
  const auto d = haralick_features(diag);
  CHECK(d[idx("asm")] == 1.0);
  CHECK(d[idx("entropy")] == 0.0);
  CHECK(d[idx("contrast")] == 0.0);
  CHECK(d[idx("homogeneity")] == 1.0);
  CHECK(all_finite(d));

  Glcm checker{16, std::vector<double>(256, 0.0)};
  checker.p[15] = checker.p[15 * 16] = 0.5;
  const auto c = haralick_features(checker);
  CHECK(std::abs(c[idx("contrast")] - 225.0) <= 1e-9);
  CHECK(std::abs(c[idx("asm")] - 0.5) <= 1e-9);
  CHECK(std::abs(c[idx("entropy")] - std::log(2.0)) <= 1e-9);
  CHECK(std::abs(c[idx("correlation")] + 1.0) <= 1e-9);

  Glcm uniform{16, std::vector<double>(256, 1.0 / 256)};
  CHECK(haralick_features(uniform)[idx("asm")] == doctest::Approx(1.0 / 256).epsilon(1e-12));
}

TEST_CASE("haralick: ranges on random and degenerate patches") {
  std::mt19937_64 rng(25);
  const auto& names = haralick_names();
  const auto corr = std::find(names.begin(), names.end(), "correlation") - names.begin();
  const auto energy = std::find(names.begin(), names.end(), "asm") - names.begin();
  const auto ent = std::find(names.begin(), names.end(), "entropy") - names.begin();
  for (int t = 0; t < 200; ++t) {
    const auto f = haralick_features(glcm(testing::random_patch(16, rng, 1 + t * 300)));
    CHECK(all_finite(f));
    CHECK(f[corr] >= -1.0);
    CHECK(f[corr] <= 1.0);
    CHECK(f[energy] > 0.0);
    CHECK(f[energy] <= 1.0);
    CHECK(f[ent] >= 0.0);
  }
  CHECK(all_finite(haralick_features(glcm(testing::make_patch(8, std::vector<double>(64, 3))))));
  CHECK(all_finite(lbp_patch_vector(testing::make_patch(16, std::vector<double>(256, 3)), LbpConfig{})));
}

TEST_CASE("glcm: image vector and order independence") {
  std::mt19937_64 rng(26);
  std::vector<Patch> patches;
  for (int i = 0; i < 9; ++i) patches.push_back(testing::random_patch(40, rng));
  const FeatureVector a = glcm_image_vector(patches);
  CHECK(a.values.size() == 30);
  std::shuffle(patches.begin(), patches.end(), rng);
  CHECK(glcm_image_vector(patches).values == a.values);
  const FeatureVector one = glcm_image_vector({patches[0]});
  for (int i = 15; i < 30; ++i) CHECK(one.values[i] == 0.0);
  CHECK_THROWS_AS(glcm_image_vector({}), Error);
}

TEST_CASE("aggregate_mean_std: population statistics") {
  const FeatureVector f = aggregate_mean_std({{10, 1}, {20, 1}, {30, 1}}, {"a", "b"});
  CHECK(f.values[0] == 20.0);
  CHECK(f.values[1] == 1.0);
  CHECK(f.values[2] == doctest::Approx(std::sqrt(200.0 / 3.0)).epsilon(1e-15));
  CHECK(f.values[3] == 0.0);
  CHECK(f.schema == std::vector<std::string>{"mean:a", "mean:b", "std:a", "std:b"});
}
