#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>

#include "cle/core.hpp"
#include "helpers.hpp"

using namespace cle;

namespace {

std::string pgm(const std::string& header, const std::string& payload) { return header + payload; }

DatasetManifest manifest_of(std::vector<ImageRecord> records) {
  DatasetManifest m;
  m.records = std::move(records);
  m.root = ".";
  return m;
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error thrown");
  return ErrorCode::kNumeric;
}

}  // namespace

TEST_CASE("pgm: 16-bit zero pixel") {
  const CleImage img = image_from_pgm(pgm("P5\n1 1\n65535\n", std::string("\0\0", 2)));
  CHECK(img.width == 1);
  CHECK(img.height == 1);
  CHECK(img.pixels == std::vector<uint16_t>{0});
}

TEST_CASE("pgm: 8-bit full scale widens to 65535") {
  const CleImage img = image_from_pgm(pgm("P5 1 1 255\n", "\xff"));
  CHECK(img.pixels == std::vector<uint16_t>{65535});
}

TEST_CASE("pgm: comments and big-endian samples") {
  const Graymap g = decode_pgm(pgm("P5\n# note\n2 1\n65535\n", std::string("\x01\x02\xff\x00", 4)));
  CHECK(g.samples == std::vector<uint16_t>{0x0102, 0xff00});
}

TEST_CASE("pgm: write(load(img)) is byte identical for 100 random rasters") {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> dim(1, 40), px(0, 65535);
  for (int t = 0; t < 100; ++t) {
    const int w = dim(rng), h = dim(rng);
    std::vector<uint16_t> s(static_cast<size_t>(w) * h);
    for (auto& v : s) v = static_cast<uint16_t>(px(rng));
    const std::string bytes = encode_pgm16(w, h, s);
    const Graymap g = decode_pgm(bytes);
    CHECK(g.samples == s);
    CHECK(encode_pgm16(g.width, g.height, g.samples) == bytes);
  }
}

TEST_CASE("pgm: image save/load round trip keeps the mask") {
  std::mt19937_64 rng(5);
  const auto dir = testing::temp_dir("core_rt");
  CleImage img = testing::random_image(31, 20, rng);
  save_image(img, dir / "a.pgm");
  CHECK(load_image(dir / "a.pgm") == img);

  img.mask = Circle{12.0, 9.0, 6.5};
  save_image(img, dir / "b.pgm");
  write_file(dir / "b.pgm.mask.json", R"({"cx": 12.0, "cy": 9.0, "r": 6.5})");
  CHECK(load_image(dir / "b.pgm").mask == img.mask);
}

TEST_CASE("pgm: malformed inputs report byte offsets") {
  auto message = [](const std::string& bytes) {
    try {
      decode_pgm(bytes);
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kFormat);
      return std::string(e.what());
    }
    return std::string("no error");
  };
  CHECK(message("P2\n1 1\n255\n0").find("magic at byte 0") != std::string::npos);
  CHECK(message("P5\n1 1\n1023\n\0").find("unsupported maxval 1023") != std::string::npos);
  CHECK(message("P5\n2 2\n255\n\x01").find("truncated payload") != std::string::npos);
  CHECK(message("P5\nx 1\n255\n").find("at byte 3") != std::string::npos);
  CHECK(message("P5\n0 1\n255\n").find("non-positive") != std::string::npos);
}

TEST_CASE("load_image: missing file is an io error") {
  CHECK(code_of([] { load_image("/nonexistent/frame.pgm"); }) == ErrorCode::kIo);
}

TEST_CASE("manifest: validation") {
  using testing::record;
  SUBCASE("empty") {
    try {
      validate_manifest(manifest_of({}), false);
      FAIL("expected error");
    } catch (const Error& e) {
      CHECK(std::string(e.what()) == "empty manifest");
    }
  }
  SUBCASE("duplicate key") {
    auto m = manifest_of({record("P1", "S1", 0, Label::kNormal), record("P1", "S1", 0, Label::kNormal)});
    try {
      validate_manifest(m, false);
      FAIL("expected error");
    } catch (const Error& e) {
      CHECK(std::string(e.what()).find("record 1") != std::string::npos);
      CHECK(std::string(e.what()).find("duplicate key") != std::string::npos);
    }
  }
  SUBCASE("same frame at a different rotation is distinct") {
    auto aug = record("P1", "S1", 0, Label::kNormal);
    aug.augmented_from = 0;
    aug.rotation_deg = 12.5;
    CHECK_NOTHROW(validate_manifest(manifest_of({record("P1", "S1", 0, Label::kNormal), aug}), false));
  }
  SUBCASE("label contradicting site") {
    auto r = record("P1", "S1", 0, Label::kNormal);
    r.site = Site::kTumorRegion;
    CHECK(code_of([&] { validate_manifest(manifest_of({r}), false); }) == ErrorCode::kValidation);
    r.label_override = true;
    CHECK_NOTHROW(validate_manifest(manifest_of({r}), false));
  }
  SUBCASE("bad rectangle") {
    auto r = record("P1", "S1", 0, Label::kNormal);
    r.artifact_rects = {{5, 5, 5, 9}};
    CHECK(code_of([&] { validate_manifest(manifest_of({r}), false); }) == ErrorCode::kValidation);
  }
  SUBCASE("missing file") {
    CHECK(code_of([&] { validate_manifest(manifest_of({record("P1", "S1", 0, Label::kNormal)}), true); }) ==
          ErrorCode::kValidation);
  }
}

TEST_CASE("manifest: valid 3-record manifest parses and round-trips") {
  const char* text = R"({"root": "data", "records": [
    {"patient": "P1", "sequence": "S1", "frame": 0, "label": "normal", "site": "hard_palate", "file": "a.pgm"},
    {"patient": "P1", "sequence": "S2", "frame": 3, "label": "carcinogenic", "site": "tumor_region",
     "file": "b.pgm", "artifacts": [[1, 2, 30, 40]]},
    {"patient": "P2", "sequence": "S1", "frame": 1, "label": "normal", "site": "inner_labium", "file": "c.pgm",
     "augmented_from": 0, "rotation_deg": 45.5}]})";
  const DatasetManifest m = parse_manifest(text, "/base", false);
  REQUIRE(m.records.size() == 3);
  CHECK(m.root == std::filesystem::path("/base/data"));
  CHECK(m.records[1].artifact_rects == std::vector<ArtifactRect>{{1, 2, 30, 40}});
  CHECK(m.records[2].is_augmented());
  CHECK(*m.records[2].rotation_deg == 45.5);
  CHECK(m.records[1].key() == "P1/S2/3");

  const DatasetManifest again = parse_manifest(manifest_to_json(m), "/base/data", false);
  REQUIRE(again.records.size() == 3);
  for (size_t i = 0; i < 3; ++i) {
    CHECK(again.records[i].key() == m.records[i].key());
    CHECK(again.records[i].artifact_rects == m.records[i].artifact_rects);
    CHECK(again.records[i].site == m.records[i].site);
  }
}

TEST_CASE("manifest: malformed json and unknown enums") {
  CHECK(code_of([] { parse_manifest("{", ".", false); }) == ErrorCode::kFormat);
  CHECK(code_of([] {
          parse_manifest(R"({"records": [{"patient": "P", "sequence": "S", "frame": 0,
                           "label": "benign", "site": "hard_palate", "file": "a"}]})",
                         ".", false);
        }) == ErrorCode::kFormat);
}

namespace {

DatasetManifest counted(const std::vector<std::pair<Site, int>>& counts) {
  DatasetManifest m;
  int n = 0;
  for (const auto& [site, c] : counts) {
    for (int i = 0; i < c; ++i, ++n) {
      ImageRecord r = testing::record("P" + std::to_string(n % 12), "S", n,
                                      site == Site::kTumorRegion ? Label::kCarcinogenic : Label::kNormal);
      r.site = site;
      m.records.push_back(r);
    }
  }
  return m;
}

}  // namespace

TEST_CASE("stats: published site counts") {
  const auto m = counted({{Site::kAlveolarRidge, 1951}, {Site::kInnerLabium, 1317},
                          {Site::kHardPalate, 811}, {Site::kTumorRegion, 3815}});
  const StatsReport s = dataset_stats(m);
  CHECK(s.total == 7894);
  const double expected[] = {24.71, 16.68, 10.27, 48.33};
  double sum = 0.0;
  for (int i = 0; i < 4; ++i) {
    CHECK(std::round(s.sites[i].percent * 100) / 100 == doctest::Approx(expected[i]).epsilon(1e-12));
    sum += std::round(s.sites[i].percent * 100) / 100;
  }
  CHECK(std::abs(sum - 100.0) <= 0.02);
  std::ostringstream csv;
  write_stats_csv(s, csv);
  CHECK(csv.str().find("alveolar_ridge,1951,24.71\n") != std::string::npos);
  CHECK(csv.str().find("tumor_region,3815,48.33\n") != std::string::npos);
}

TEST_CASE("stats: single record is 100 percent of its site") {
  const StatsReport s = dataset_stats(counted({{Site::kHardPalate, 1}}));
  CHECK(s.sites[2].percent == 100.0);
  CHECK(s.sites[0].percent == 0.0);
}

TEST_CASE("stats: invariant under record order and ignores augmented copies") {
  auto m = counted({{Site::kAlveolarRidge, 5}, {Site::kTumorRegion, 9}, {Site::kInnerLabium, 3}});
  const StatsReport a = dataset_stats(m);
  std::mt19937_64 rng(1);
  std::shuffle(m.records.begin(), m.records.end(), rng);
  ImageRecord aug = m.records[0];
  aug.augmented_from = aug.frame_index;
  aug.rotation_deg = 90.0;
  m.records.push_back(aug);
  const StatsReport b = dataset_stats(m);
  CHECK(a.total == b.total);
  for (int i = 0; i < 4; ++i) CHECK(a.sites[i].count == b.sites[i].count);
  CHECK(a.patient_mean == b.patient_mean);
  CHECK(a.patient_std == b.patient_std);
}

TEST_CASE("stats: population std of patient counts") {
  const auto [mean, sd] = mean_pstd({10, 20, 30});
  CHECK(mean == 20.0);
  CHECK(sd == doctest::Approx(std::sqrt(200.0 / 3.0)).epsilon(1e-15));
  CHECK(sd == doctest::Approx(8.1650).epsilon(1e-4));
}
