#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace cle {

/// Failure categories. The CLI maps each one to a distinct exit status.
enum class ErrorCode {
  kFormat,                // malformed file contents
  kValidation,            // well-formed input violating an invariant
  kIo,                    // filesystem failure
  kConfig,                // bad run configuration
  kInsufficientPatients,  // cross-validation needs >= 2 patients
  kNumeric,               // non-finite values during training
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Row-major single-channel raster.
template <class T>
struct Raster {
  int width = 0;
  int height = 0;
  std::vector<T> data;

  Raster() = default;
  Raster(int w, int h, T fill = T{})
      : width(w), height(h), data(static_cast<size_t>(w) * h, fill) {}

  T& at(int x, int y) { return data[static_cast<size_t>(y) * width + x]; }
  const T& at(int x, int y) const {
    return data[static_cast<size_t>(y) * width + x];
  }
  size_t size() const { return data.size(); }
  friend bool operator==(const Raster&, const Raster&) = default;
};

/// Circular field of view. A pixel belongs to the circle when its centre
/// (x + 0.5, y + 0.5) lies strictly inside the radius.
struct Circle {
  double cx = 0.0;
  double cy = 0.0;
  double r = 0.0;

  bool contains(int x, int y) const {
    const double dx = x + 0.5 - cx;
    const double dy = y + 0.5 - cy;
    return dx * dx + dy * dy < r * r;
  }
  friend bool operator==(const Circle&, const Circle&) = default;
};

/// 16-bit CLE frame with its circular view mask.
struct CleImage {
  int width = 0;
  int height = 0;
  std::vector<uint16_t> pixels;
  Circle mask;

  uint16_t at(int x, int y) const {
    return pixels[static_cast<size_t>(y) * width + x];
  }
  uint16_t& at(int x, int y) { return pixels[static_cast<size_t>(y) * width + x]; }

  /// Throws kValidation when pixel count, radius or mask placement are off.
  void validate() const;

  friend bool operator==(const CleImage&, const CleImage&) = default;
};

/// Inscribed circle used when no sidecar overrides the mask.
Circle default_mask(int width, int height);

/// Half-open rectangle [x0,x1) x [y0,y1).
struct ArtifactRect {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  friend bool operator==(const ArtifactRect&, const ArtifactRect&) = default;
};

enum class Label { kNormal = 0, kCarcinogenic = 1 };
enum class Site { kAlveolarRidge, kInnerLabium, kHardPalate, kTumorRegion };

inline constexpr Site kAllSites[] = {Site::kAlveolarRidge, Site::kInnerLabium,
                                     Site::kHardPalate, Site::kTumorRegion};

std::string_view to_string(Label label);
std::string_view to_string(Site site);
Label label_from_string(std::string_view s);
Site site_from_string(std::string_view s);

struct ImageRecord {
  std::string patient_id;
  std::string sequence_id;
  int frame_index = 0;
  Label label = Label::kNormal;
  Site site = Site::kAlveolarRidge;
  std::string file;  // relative to the manifest root
  std::vector<ArtifactRect> artifact_rects;
  std::optional<int> augmented_from;   // frame index of the source original
  std::optional<double> rotation_deg;  // set on augmented copies only
  bool label_override = false;

  bool is_augmented() const { return augmented_from.has_value(); }
  int label_value() const { return static_cast<int>(label); }
  /// "patient/sequence/frame" plus "@angle" for augmented copies.
  std::string key() const;
};

struct DatasetManifest {
  std::vector<ImageRecord> records;
  std::filesystem::path root;

  std::filesystem::path image_path(const ImageRecord& r) const {
    return root / r.file;
  }
};

// --- image IO ------------------------------------------------------------

/// Raw portable graymap payload, samples widened to 16 bit container.
struct Graymap {
  int width = 0;
  int height = 0;
  int maxval = 0;
  std::vector<uint16_t> samples;
};

/// Parses a binary "P5" graymap. Errors carry the byte offset.
Graymap decode_pgm(std::string_view bytes);
std::string encode_pgm16(int width, int height, const std::vector<uint16_t>& samples);
std::string encode_pgm8(const Raster<uint8_t>& raster);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

/// Loads a P5 graymap (maxval 255 or 65535). 8-bit data is widened by 257.
/// A sidecar "<file>.mask.json" holding {"cx","cy","r"} overrides the mask.
CleImage load_image(const std::filesystem::path& path);
CleImage image_from_pgm(std::string_view bytes);
void save_image(const CleImage& image, const std::filesystem::path& path);
void save_pgm8(const Raster<uint8_t>& raster, const std::filesystem::path& path);

// --- manifest ------------------------------------------------------------

/// Parses and validates. Relative roots resolve against the manifest's
/// directory. `check_files` also requires every image to exist.
DatasetManifest load_manifest(const std::filesystem::path& path,
                              bool check_files = true);
DatasetManifest parse_manifest(std::string_view json_text,
                               const std::filesystem::path& base_dir,
                               bool check_files = true);
std::string manifest_to_json(const DatasetManifest& manifest);
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);
void validate_manifest(const DatasetManifest& manifest, bool check_files);

/// Accepts a manifest file or a directory containing manifest.json.
std::filesystem::path resolve_manifest_path(const std::filesystem::path& p);

// --- statistics ----------------------------------------------------------

struct CountRow {
  std::string name;
  size_t count = 0;
  double percent = 0.0;
};

struct StatsReport {
  std::vector<CountRow> sites;    // fixed site order
  std::vector<CountRow> classes;  // normal, carcinogenic
  size_t total = 0;
  size_t n_patients = 0;
  double patient_mean = 0.0;
  double patient_std = 0.0;  // population
};

/// Counts over original (non-augmented) records only.
StatsReport dataset_stats(const DatasetManifest& manifest);
void write_stats_csv(const StatsReport& report, std::ostream& out);

/// Mean and population standard deviation.
std::pair<double, double> mean_pstd(const std::vector<double>& values);

}  // namespace cle
