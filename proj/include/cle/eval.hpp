#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "cle/classify.hpp"
#include "cle/core.hpp"
#include "cle/features.hpp"
#include "cle/patching.hpp"

namespace cle {

enum class MethodKind { kRfLbp, kRfGlcm, kPpf, kWholeImage };

struct Method {
  MethodKind kind = MethodKind::kRfLbp;
  double scale = 0.5;  // patching scale; 0.55 for the whole-image path
  std::string name;
};

/// One of RF-LBP@1.0x, RF-LBP@0.5x, RF-GLCM@1.0x, RF-GLCM@0.5x, PPF@1.0x,
/// PPF@0.5x, WHOLEIMAGE@0.55x.
Method parse_method(std::string_view name);
const std::vector<std::string>& method_names();

// --- folds -----------------------------------------------------------------

struct Fold {
  std::string test_patient;
  std::vector<size_t> train_records;  // originals and augmented copies
  std::vector<size_t> test_records;   // originals only
};

struct FoldPlan {
  std::vector<Fold> folds;  // sorted by patient id
};

/// Leave-one-patient-out folds over an (optionally augmented) manifest.
FoldPlan lopo_folds(const DatasetManifest& manifest);

// --- metrics ---------------------------------------------------------------

struct Confusion {
  size_t tp = 0, fn = 0, tn = 0, fp = 0;
  double accuracy = 0.0;
  double sensitivity = 0.0;  // 0 when there are no positives
  double specificity = 0.0;  // 0 when there are no negatives
};

/// Predicts class 1 iff score >= threshold.
Confusion confusion_metrics(const std::vector<int>& labels, const std::vector<double>& scores,
                            double threshold = 0.5);

struct RocPoint {
  double threshold = 0.0;
  double fpr = 0.0;
  double tpr = 0.0;
};

struct RocCurve {
  std::vector<RocPoint> points;  // (0,0) at +inf ... (1,1) at -inf
  double auc = 0.0;              // Mann-Whitney, ties count 1/2
};

RocCurve roc_auc(const std::vector<int>& labels, const std::vector<double>& scores);
double mann_whitney_auc(const std::vector<int>& labels, const std::vector<double>& scores);
double trapezoid_auc(const std::vector<RocPoint>& points);

// --- per-record inputs -------------------------------------------------------

/// Loads a record's frame; augmented records are rotated about the mask
/// centre and their artifact rectangles follow the rotation.
struct RecordFrame {
  CleImage image;
  std::vector<ArtifactRect> rects;
};
RecordFrame load_record(const DatasetManifest& manifest, const ImageRecord& record);

/// Raw patches of a record at the given scale (artifact patches removed).
struct RecordPatches {
  int frame_width = 0;
  int frame_height = 0;
  std::vector<Patch> patches;
};
RecordPatches record_patches(const DatasetManifest& manifest, const ImageRecord& record,
                             double scale, const GridConfig& grid);

struct PipelineConfig;

/// Model inputs of one record: an image-level row for the RF and whole-image
/// methods, one descriptor per patch for PPF. Not usable when every patch was
/// excluded.
struct RecordFeatures {
  bool usable = false;
  std::vector<double> image_row;
  std::vector<std::vector<double>> patch_rows;
  std::vector<PatchCoords> coords;
  int frame_width = 0;
  int frame_height = 0;
};
RecordFeatures compute_record_features(const DatasetManifest& manifest, const ImageRecord& record,
                                       const Method& method, const PipelineConfig& config);

// --- cross-validation ------------------------------------------------------

struct PipelineConfig {
  std::string method = "RF-LBP@0.5x";
  uint64_t seed = 42;
  GridConfig grid;
  int trees = 500;
  int augment = 2;
  double threshold = 0.5;
  LogisticConfig logistic;
  bool recompute_percentiles = true;
  /// Externally computed patch probabilities (patient,sequence,frame,
  /// patch_index,p_c1). When set, no model is trained.
  std::optional<std::filesystem::path> probabilities;
  /// Required for WHOLEIMAGE@0.55x without injected probabilities: trains
  /// the logistic baseline on the preprocessed crops.
  bool wholeimage_baseline = false;
};

struct ScoredImage {
  size_t record = 0;  // index into the input manifest
  std::string patient;
  std::string sequence;
  int frame = 0;
  int label = 0;
  double p = 0.0;
  bool scored = true;  // false when every patch was excluded (p = 0.5)
};

/// Provenance recorded while running one fold.
struct FoldAudit {
  std::string test_patient;
  uint64_t seed = 0;
  std::set<std::string> balance_input_patients;
  std::set<std::string> model_patients;
  std::vector<size_t> test_records;  // indices into the augmented manifest
  size_t augmented_in_test = 0;
  BalanceStats balance;
  size_t train_rows = 0;
};

struct EvalReport {
  std::string method;
  uint64_t seed = 0;
  double threshold = 0.5;
  std::vector<ScoredImage> results;  // fold order, manifest order within a fold
  Confusion metrics;
  RocCurve roc;
  std::optional<Confusion> patch_metrics;  // patch-level, PPF only
  std::vector<FoldAudit> audit;
  DatasetManifest augmented;  // manifest the folds index into
};

/// Augment -> fold -> balance -> train -> score, concatenated over folds.
/// Deterministic given the seed and independent of the OpenMP thread count.
EvalReport run_cv(const DatasetManifest& manifest, const PipelineConfig& config);

/// Violations found by re-checking the audit: test patients among training
/// provenance and augmented records in test folds.
size_t count_leakage(const EvalReport& report);

void write_results_csv(const EvalReport& report, std::ostream& out);
void write_roc_csv(const RocCurve& roc, std::ostream& out);

}  // namespace cle
