#include "cle/core.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <tuple>

#include "json.hpp"

namespace cle {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void CleImage::validate() const {
  if (width <= 0 || height <= 0)
    throw Error(ErrorCode::kValidation, "image has empty dimensions");
  if (pixels.size() != static_cast<size_t>(width) * height)
    throw Error(ErrorCode::kValidation, "pixel count does not match dimensions");
  if (!(mask.r > 0.0))
    throw Error(ErrorCode::kValidation, "mask radius must be positive");
  constexpr double kSlack = 1.0;
  if (mask.cx - mask.r < -kSlack || mask.cx + mask.r > width + kSlack ||
      mask.cy - mask.r < -kSlack || mask.cy + mask.r > height + kSlack)
    throw Error(ErrorCode::kValidation, "mask circle exceeds raster bounds");
}

Circle default_mask(int width, int height) {
  return Circle{width / 2.0, height / 2.0, std::min(width, height) / 2.0};
}

std::string_view to_string(Label label) {
  return label == Label::kNormal ? "normal" : "carcinogenic";
}

std::string_view to_string(Site site) {
  switch (site) {
    case Site::kAlveolarRidge: return "alveolar_ridge";
    case Site::kInnerLabium: return "inner_labium";
    case Site::kHardPalate: return "hard_palate";
    case Site::kTumorRegion: return "tumor_region";
  }
  return "?";
}

Label label_from_string(std::string_view s) {
  if (s == "normal") return Label::kNormal;
  if (s == "carcinogenic") return Label::kCarcinogenic;
  throw Error(ErrorCode::kFormat, "unknown label '" + std::string(s) + "'");
}

Site site_from_string(std::string_view s) {
  for (Site site : kAllSites)
    if (to_string(site) == s) return site;
  throw Error(ErrorCode::kFormat, "unknown site '" + std::string(s) + "'");
}

std::string ImageRecord::key() const {
  std::string k = patient_id + "/" + sequence_id + "/" + std::to_string(frame_index);
  if (rotation_deg) k += "@" + format_double(*rotation_deg);
  return k;
}

// --- PGM -----------------------------------------------------------------

Graymap decode_pgm(std::string_view bytes) {
  size_t pos = 0;
  auto fail = [&](const std::string& msg) -> Error {
    return Error(ErrorCode::kFormat, "pgm: " + msg + " at byte " + std::to_string(pos));
  };
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      const char c = bytes[pos];
      if (c == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_int = [&]() -> long {
    skip_space();
    const size_t start = pos;
    long v = 0;
    while (pos < bytes.size() && bytes[pos] >= '0' && bytes[pos] <= '9') {
      v = v * 10 + (bytes[pos] - '0');
      if (v > 1'000'000'000L) throw fail("header value too large");
      ++pos;
    }
    if (pos == start) throw fail("expected decimal integer");
    return v;
  };

  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5')
    throw fail("missing P5 magic");
  pos = 2;
  Graymap g;
  const long w = read_int();
  const long h = read_int();
  const long maxval = read_int();
  if (w <= 0 || h <= 0) throw fail("non-positive dimensions");
  if (maxval != 255 && maxval != 65535)
    throw fail("unsupported maxval " + std::to_string(maxval));
  if (pos >= bytes.size()) throw fail("missing separator after maxval");
  const char sep = bytes[pos];
  if (sep != ' ' && sep != '\t' && sep != '\n' && sep != '\r')
    throw fail("expected single whitespace after maxval");
  ++pos;

  g.width = static_cast<int>(w);
  g.height = static_cast<int>(h);
  g.maxval = static_cast<int>(maxval);
  const size_t n = static_cast<size_t>(w) * static_cast<size_t>(h);
  const size_t bps = maxval > 255 ? 2 : 1;
  if (bytes.size() - pos < n * bps)
    throw fail("truncated payload: need " + std::to_string(n * bps) + " bytes, have " +
               std::to_string(bytes.size() - pos));
  g.samples.resize(n);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + pos);
  if (bps == 2) {
    for (size_t i = 0; i < n; ++i)
      g.samples[i] = static_cast<uint16_t>((p[2 * i] << 8) | p[2 * i + 1]);
  } else {
    for (size_t i = 0; i < n; ++i) g.samples[i] = p[i];
  }
  return g;
}

std::string encode_pgm16(int width, int height, const std::vector<uint16_t>& samples) {
  std::string out = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n65535\n";
  const size_t header = out.size();
  out.resize(header + samples.size() * 2);
  for (size_t i = 0; i < samples.size(); ++i) {
    out[header + 2 * i] = static_cast<char>(samples[i] >> 8);
    out[header + 2 * i + 1] = static_cast<char>(samples[i] & 0xff);
  }
  return out;
}

std::string encode_pgm8(const Raster<uint8_t>& raster) {
  std::string out = "P5\n" + std::to_string(raster.width) + " " +
                    std::to_string(raster.height) + "\n255\n";
  out.append(reinterpret_cast<const char*>(raster.data.data()), raster.data.size());
  return out;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return std::move(ss).str();
}

void write_file(const fs::path& path, std::string_view bytes) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + path.string());
}

CleImage image_from_pgm(std::string_view bytes) {
  Graymap g = decode_pgm(bytes);
  CleImage img;
  img.width = g.width;
  img.height = g.height;
  img.pixels = std::move(g.samples);
  if (g.maxval == 255)
    for (auto& v : img.pixels) v = static_cast<uint16_t>(v * 257);
  img.mask = default_mask(img.width, img.height);
  return img;
}

CleImage load_image(const fs::path& path) {
  CleImage img;
  try {
    img = image_from_pgm(read_file(path));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kFormat)
      throw Error(ErrorCode::kFormat, path.string() + ": " + e.what());
    throw;
  }
  fs::path sidecar = path;
  sidecar += ".mask.json";
  if (fs::exists(sidecar)) {
    try {
      const json j = json::parse(read_file(sidecar));
      img.mask = Circle{j.at("cx").get<double>(), j.at("cy").get<double>(),
                        j.at("r").get<double>()};
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kFormat, sidecar.string() + ": " + e.what());
    }
  }
  img.validate();
  return img;
}

void save_image(const CleImage& image, const fs::path& path) {
  write_file(path, encode_pgm16(image.width, image.height, image.pixels));
}

void save_pgm8(const Raster<uint8_t>& raster, const fs::path& path) {
  write_file(path, encode_pgm8(raster));
}

// --- manifest ------------------------------------------------------------

void validate_manifest(const DatasetManifest& manifest, bool check_files) {
  if (manifest.records.empty()) throw Error(ErrorCode::kValidation, "empty manifest");
  std::set<std::tuple<std::string, std::string, int, std::optional<double>>> seen;
  for (size_t i = 0; i < manifest.records.size(); ++i) {
    const ImageRecord& r = manifest.records[i];
    auto fail = [&](const std::string& msg) {
      return Error(ErrorCode::kValidation,
                   "record " + std::to_string(i) + " (" + r.key() + "): " + msg);
    };
    if (!seen.emplace(r.patient_id, r.sequence_id, r.frame_index, r.rotation_deg).second)
      throw fail("duplicate key");
    if (r.augmented_from.has_value() != r.rotation_deg.has_value())
      throw fail("augmented records need both augmented_from and rotation_deg");
    const bool tumor = r.site == Site::kTumorRegion;
    const bool cancer = r.label == Label::kCarcinogenic;
    if (tumor != cancer && !r.label_override)
      throw fail("label '" + std::string(to_string(r.label)) + "' contradicts site '" +
                 std::string(to_string(r.site)) + "'");
    for (const auto& a : r.artifact_rects)
      if (a.x0 >= a.x1 || a.y0 >= a.y1 || a.x0 < 0 || a.y0 < 0)
        throw fail("invalid artifact rectangle");
    if (check_files && !fs::exists(manifest.image_path(r)))
      throw fail("missing image file " + manifest.image_path(r).string());
  }
}

DatasetManifest parse_manifest(std::string_view json_text, const fs::path& base_dir,
                               bool check_files) {
  DatasetManifest m;
  try {
    const json j = json::parse(json_text);
    fs::path root = j.value("root", std::string("."));
    m.root = root.is_absolute() ? root : base_dir / root;
    for (const json& jr : j.at("records")) {
      ImageRecord r;
      r.patient_id = jr.at("patient").get<std::string>();
      r.sequence_id = jr.at("sequence").get<std::string>();
      r.frame_index = jr.at("frame").get<int>();
      r.label = label_from_string(jr.at("label").get<std::string>());
      r.site = site_from_string(jr.at("site").get<std::string>());
      r.file = jr.at("file").get<std::string>();
      if (jr.contains("artifacts")) {
        for (const json& a : jr.at("artifacts")) {
          if (a.size() != 4) throw Error(ErrorCode::kFormat, "artifact needs 4 coordinates");
          r.artifact_rects.push_back({a[0].get<int>(), a[1].get<int>(), a[2].get<int>(),
                                      a[3].get<int>()});
        }
      }
      if (jr.contains("augmented_from") && !jr["augmented_from"].is_null())
        r.augmented_from = jr["augmented_from"].get<int>();
      if (jr.contains("rotation_deg") && !jr["rotation_deg"].is_null())
        r.rotation_deg = jr["rotation_deg"].get<double>();
      r.label_override = jr.value("label_override", false);
      m.records.push_back(std::move(r));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kFormat, std::string("manifest: ") + e.what());
  }
  validate_manifest(m, check_files);
  return m;
}

fs::path resolve_manifest_path(const fs::path& p) {
  if (fs::is_directory(p)) return p / "manifest.json";
  return p;
}

DatasetManifest load_manifest(const fs::path& path, bool check_files) {
  const fs::path file = resolve_manifest_path(path);
  const fs::path base = file.has_parent_path() ? file.parent_path() : fs::path(".");
  return parse_manifest(read_file(file), base, check_files);
}

std::string manifest_to_json(const DatasetManifest& manifest) {
  json j;
  j["root"] = ".";
  json recs = json::array();
  for (const ImageRecord& r : manifest.records) {
    json jr;
    jr["patient"] = r.patient_id;
    jr["sequence"] = r.sequence_id;
    jr["frame"] = r.frame_index;
    jr["label"] = std::string(to_string(r.label));
    jr["site"] = std::string(to_string(r.site));
    jr["file"] = r.file;
    json arts = json::array();
    for (const auto& a : r.artifact_rects) arts.push_back({a.x0, a.y0, a.x1, a.y1});
    jr["artifacts"] = arts;
    if (r.augmented_from) jr["augmented_from"] = *r.augmented_from;
    if (r.rotation_deg) jr["rotation_deg"] = *r.rotation_deg;
    if (r.label_override) jr["label_override"] = true;
    recs.push_back(std::move(jr));
  }
  j["records"] = std::move(recs);
  return j.dump(1) + "\n";
}

void save_manifest(const DatasetManifest& manifest, const fs::path& path) {
  write_file(path, manifest_to_json(manifest));
}

// --- statistics ----------------------------------------------------------

std::pair<double, double> mean_pstd(const std::vector<double>& values) {
  if (values.empty()) return {0.0, 0.0};
  double sum = 0.0;
  for (double v : values) sum += v;
  const double mean = sum / values.size();
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / values.size())};
}

StatsReport dataset_stats(const DatasetManifest& manifest) {
  std::map<Site, size_t> by_site;
  size_t by_class[2] = {0, 0};
  std::map<std::string, size_t> by_patient;
  StatsReport rep;
  for (const ImageRecord& r : manifest.records) {
    if (r.is_augmented()) continue;
    ++by_site[r.site];
    ++by_class[r.label_value()];
    ++by_patient[r.patient_id];
    ++rep.total;
  }
  if (rep.total == 0) throw Error(ErrorCode::kValidation, "empty manifest");
  const double total = static_cast<double>(rep.total);
  for (Site s : kAllSites) {
    const size_t c = by_site[s];
    rep.sites.push_back({std::string(to_string(s)), c, 100.0 * c / total});
  }
  for (int c = 0; c < 2; ++c)
    rep.classes.push_back({std::string(to_string(static_cast<Label>(c))), by_class[c],
                           100.0 * by_class[c] / total});
  std::vector<double> counts;
  for (const auto& [_, c] : by_patient) counts.push_back(static_cast<double>(c));
  rep.n_patients = counts.size();
  std::tie(rep.patient_mean, rep.patient_std) = mean_pstd(counts);
  return rep;
}

void write_stats_csv(const StatsReport& report, std::ostream& out) {
  char buf[128];
  out << "site,count,percent\n";
  for (const auto& row : report.sites) {
    std::snprintf(buf, sizeof buf, "%s,%zu,%.2f\n", row.name.c_str(), row.count, row.percent);
    out << buf;
  }
  for (const auto& row : report.classes) {
    std::snprintf(buf, sizeof buf, "class:%s,%zu,%.2f\n", row.name.c_str(), row.count,
                  row.percent);
    out << buf;
  }
  std::snprintf(buf, sizeof buf, "#patients mean=%.4f std=%.4f\n", report.patient_mean,
                report.patient_std);
  out << buf;
}

}  // namespace cle
