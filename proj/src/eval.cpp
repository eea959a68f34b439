#include "cle/eval.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <memory>
#include <map>
#include <mutex>
#include <ostream>
#include <tuple>

#include "cle/fusion.hpp"
#include "cle/wholeimage.hpp"

namespace cle {

const std::vector<std::string>& method_names() {
  static const std::vector<std::string> names = {"RF-LBP@1.0x", "RF-LBP@0.5x", "RF-GLCM@1.0x",
                                                 "RF-GLCM@0.5x", "PPF@1.0x",   "PPF@0.5x",
                                                 "WHOLEIMAGE@0.55x"};
  return names;
}

Method parse_method(std::string_view name) {
  const auto at = name.find('@');
  const std::string_view base = name.substr(0, at);
  const std::string_view scale = at == std::string_view::npos ? "" : name.substr(at + 1);
  Method m;
  m.name = std::string(name);
  if (base == "WHOLEIMAGE" && scale == "0.55x") {
    m.kind = MethodKind::kWholeImage;
    m.scale = 0.55;
    return m;
  }
  if (base == "RF-LBP") m.kind = MethodKind::kRfLbp;
  else if (base == "RF-GLCM") m.kind = MethodKind::kRfGlcm;
  else if (base == "PPF") m.kind = MethodKind::kPpf;
  else throw Error(ErrorCode::kConfig, "unknown method '" + std::string(name) + "'");
  if (scale == "1.0x") m.scale = 1.0;
  else if (scale == "0.5x") m.scale = 0.5;
  else throw Error(ErrorCode::kConfig, "unknown method scale in '" + std::string(name) + "'");
  return m;
}

// --- folds -----------------------------------------------------------------

FoldPlan lopo_folds(const DatasetManifest& manifest) {
  std::map<std::string, Fold> by_patient;
  for (const auto& r : manifest.records)
    if (!r.is_augmented()) by_patient[r.patient_id].test_patient = r.patient_id;
  if (by_patient.size() < 2)
    throw Error(ErrorCode::kInsufficientPatients,
                "leave-one-patient-out needs at least 2 patients, found " +
                    std::to_string(by_patient.size()));
  FoldPlan plan;
  for (auto& [patient, fold] : by_patient) {
    for (size_t i = 0; i < manifest.records.size(); ++i) {
      const ImageRecord& r = manifest.records[i];
      if (r.patient_id == patient) {
        if (!r.is_augmented()) fold.test_records.push_back(i);
      } else {
        fold.train_records.push_back(i);
      }
    }
    plan.folds.push_back(std::move(fold));
  }
  return plan;
}

// --- metrics ---------------------------------------------------------------

Confusion confusion_metrics(const std::vector<int>& labels, const std::vector<double>& scores,
                            double threshold) {
  if (labels.empty() || labels.size() != scores.size())
    throw Error(ErrorCode::kValidation, "confusion metrics need equal, non-empty inputs");
  Confusion c;
  for (size_t i = 0; i < labels.size(); ++i) {
    if (!std::isfinite(scores[i])) throw Error(ErrorCode::kValidation, "non-finite score");
    const bool pred = scores[i] >= threshold;
    if (labels[i] == 1) (pred ? c.tp : c.fn)++;
    else (pred ? c.fp : c.tn)++;
  }
  const double n = static_cast<double>(labels.size());
  c.accuracy = (c.tp + c.tn) / n;
  c.sensitivity = c.tp + c.fn ? static_cast<double>(c.tp) / (c.tp + c.fn) : 0.0;
  c.specificity = c.tn + c.fp ? static_cast<double>(c.tn) / (c.tn + c.fp) : 0.0;
  return c;
}

namespace {

std::pair<size_t, size_t> class_counts(const std::vector<int>& labels) {
  size_t pos = 0;
  for (int l : labels) pos += l == 1;
  return {pos, labels.size() - pos};
}

}  // namespace

double mann_whitney_auc(const std::vector<int>& labels, const std::vector<double>& scores) {
  const auto [npos, nneg] = class_counts(labels);
  if (npos == 0 || nneg == 0)
    throw Error(ErrorCode::kValidation, "AUC needs both classes present");
  std::vector<size_t> order(scores.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return scores[a] < scores[b]; });
  double rank_sum = 0.0;
  for (size_t i = 0; i < order.size();) {
    size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = (i + 1 + j) / 2.0;  // mean of ranks i+1..j
    for (size_t k = i; k < j; ++k)
      if (labels[order[k]] == 1) rank_sum += avg_rank;
    i = j;
  }
  const double u = rank_sum - npos * (npos + 1.0) / 2.0;
  return u / (static_cast<double>(npos) * nneg);
}

double trapezoid_auc(const std::vector<RocPoint>& points) {
  double area = 0.0;
  for (size_t k = 1; k < points.size(); ++k)
    area += (points[k].fpr - points[k - 1].fpr) * (points[k].tpr + points[k - 1].tpr) / 2.0;
  return area;
}

RocCurve roc_auc(const std::vector<int>& labels, const std::vector<double>& scores) {
  if (labels.size() != scores.size())
    throw Error(ErrorCode::kValidation, "labels and scores differ in length");
  const auto [npos, nneg] = class_counts(labels);
  if (npos == 0 || nneg == 0)
    throw Error(ErrorCode::kValidation, "ROC needs both classes present");
  std::vector<size_t> order(scores.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return scores[a] > scores[b]; });
  RocCurve roc;
  const double inf = std::numeric_limits<double>::infinity();
  roc.points.push_back({inf, 0.0, 0.0});
  size_t tp = 0, fp = 0;
  for (size_t i = 0; i < order.size();) {
    const double s = scores[order[i]];
    while (i < order.size() && scores[order[i]] == s) {
      (labels[order[i]] == 1 ? tp : fp)++;
      ++i;
    }
    roc.points.push_back({s, static_cast<double>(fp) / nneg, static_cast<double>(tp) / npos});
  }
  roc.points.push_back({-inf, 1.0, 1.0});
  roc.auc = mann_whitney_auc(labels, scores);
  return roc;
}

// --- per-record inputs -------------------------------------------------------

RecordFrame load_record(const DatasetManifest& manifest, const ImageRecord& record) {
  RecordFrame out;
  CleImage img = load_image(manifest.image_path(record));
  for (const auto& r : record.artifact_rects)
    if (r.x1 > img.width || r.y1 > img.height)
      throw Error(ErrorCode::kValidation, record.key() + ": artifact rectangle exceeds raster");
  if (record.rotation_deg) {
    out.image = rotate(img, *record.rotation_deg);
    for (const auto& r : record.artifact_rects)
      if (auto rr = rotate_rect(r, *record.rotation_deg, img.mask, img.width, img.height))
        out.rects.push_back(*rr);
  } else {
    out.image = std::move(img);
    out.rects = record.artifact_rects;
  }
  return out;
}

RecordPatches record_patches(const DatasetManifest& manifest, const ImageRecord& record,
                             double scale, const GridConfig& grid) {
  const RecordFrame rf = load_record(manifest, record);
  const PatchedFrame pf = prepare_frame(rf.image, rf.rects, scale, grid);
  RecordPatches out;
  out.frame_width = pf.frame.width;
  out.frame_height = pf.frame.height;
  for (const auto& c : pf.coords) out.patches.push_back(extract_patch(pf.frame, c));
  return out;
}

RecordFeatures compute_record_features(const DatasetManifest& manifest, const ImageRecord& record,
                                       const Method& method, const PipelineConfig& config) {
  RecordFeatures f;
  if (method.kind == MethodKind::kWholeImage) {
    const CleImage img = load_image(manifest.image_path(record));
    WholeImageConfig wc;
    wc.recompute_percentiles = config.recompute_percentiles;
    const WholeImageResult pre = preprocess_whole_image(img, record.rotation_deg, wc);
    Patch p;
    p.size = pre.tensor.width;
    p.coords = {0, pre.tensor.width, 0, pre.tensor.height};
    p.values.assign(pre.tensor.data.begin(), pre.tensor.data.end());
    f.image_row = patch_descriptor(whiten(std::move(p)));
    f.coords = {PatchCoords{0, pre.tensor.width, 0, pre.tensor.height}};
    f.frame_width = pre.tensor.width;
    f.frame_height = pre.tensor.height;
    f.usable = true;
    return f;
  }
  RecordPatches rp = record_patches(manifest, record, method.scale, config.grid);
  f.frame_width = rp.frame_width;
  f.frame_height = rp.frame_height;
  for (const auto& p : rp.patches) f.coords.push_back(p.coords);
  if (rp.patches.empty()) return f;
  f.usable = true;
  switch (method.kind) {
    case MethodKind::kRfLbp:
      f.image_row = lbp_image_vector(rp.patches, LbpConfig{}).values;
      break;
    case MethodKind::kRfGlcm:
      f.image_row = glcm_image_vector(rp.patches, GlcmConfig{}).values;
      break;
    case MethodKind::kPpf:
      for (auto& p : rp.patches) f.patch_rows.push_back(patch_descriptor(whiten(std::move(p))));
      break;
    case MethodKind::kWholeImage:
      break;
  }
  return f;
}

// --- cross-validation ------------------------------------------------------

namespace {

using RecordKey = std::tuple<std::string, std::string, int>;

// Captures the first exception thrown inside an OpenMP region.
class ExceptionSlot {
 public:
  template <class F>
  void run(F&& f) {
    try {
      f();
    } catch (...) {
      std::lock_guard lock(mu_);
      if (!ptr_) ptr_ = std::current_exception();
    }
  }
  void rethrow() const {
    if (ptr_) std::rethrow_exception(ptr_);
  }

 private:
  std::mutex mu_;
  std::exception_ptr ptr_;
};

struct FoldOutput {
  std::vector<ScoredImage> results;
  std::vector<int> patch_labels;
  std::vector<double> patch_scores;
  FoldAudit audit;
};

}  // namespace

EvalReport run_cv(const DatasetManifest& manifest, const PipelineConfig& config) {
  const Method method = parse_method(config.method);
  config.grid.validate();
  if (!(config.threshold >= 0.0 && config.threshold <= 1.0))
    throw Error(ErrorCode::kConfig, "threshold must lie in [0, 1]");
  const bool injected = config.probabilities.has_value();
  if (method.kind == MethodKind::kWholeImage && !injected && !config.wholeimage_baseline)
    throw Error(ErrorCode::kConfig,
                "WHOLEIMAGE@0.55x needs injected probabilities (--probs) or the in-repo "
                "logistic baseline (--wholeimage-baseline); the transfer-learning network is "
                "not part of this tool");
  for (const auto& r : manifest.records)
    if (r.is_augmented())
      throw Error(ErrorCode::kValidation, "run_cv expects a manifest of original records");

  EvalReport report;
  report.method = method.name;
  report.seed = config.seed;
  report.threshold = config.threshold;
  report.augmented = augment_rotations(manifest, injected ? 0 : config.augment, config.seed);
  const DatasetManifest& data = report.augmented;
  const FoldPlan plan = lopo_folds(data);

  std::map<RecordKey, std::map<int, double>> probs;
  if (injected) {
    for (const auto& row : read_patch_probabilities(*config.probabilities))
      probs[{row.patient, row.sequence, row.frame}][row.patch_index] = row.p_c1;
  }

  // Features are pure per-record functions, so one pass serves every fold.
  std::vector<RecordFeatures> feats(data.records.size());
  {
    ExceptionSlot slot;
    const int n = static_cast<int>(data.records.size());
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < n; ++i)
      slot.run([&] { feats[i] = compute_record_features(data, data.records[i], method, config); });
    slot.rethrow();
  }

  std::vector<FoldOutput> outputs(plan.folds.size());
  ExceptionSlot slot;
  const int nfolds = static_cast<int>(plan.folds.size());
#pragma omp parallel for schedule(dynamic)
  for (int fi = 0; fi < nfolds; ++fi) {
    slot.run([&] {
      const Fold& fold = plan.folds[fi];
      FoldOutput& out = outputs[fi];
      FoldAudit& audit = out.audit;
      audit.test_patient = fold.test_patient;
      audit.seed = mix_seed(config.seed, stable_hash(fold.test_patient));
      audit.test_records = fold.test_records;
      for (size_t idx : fold.test_records) audit.augmented_in_test += data.records[idx].is_augmented();
      if (audit.augmented_in_test > 0)
        throw Error(ErrorCode::kValidation,
                    "augmented record in test fold of patient " + fold.test_patient);

      std::unique_ptr<ProbabilisticClassifier> model;
      if (!injected) {
        TrainSet train;
        for (size_t idx : fold.train_records) {
          const RecordFeatures& f = feats[idx];
          if (!f.usable) continue;
          const ImageRecord& r = data.records[idx];
          const RowProvenance prov{idx, r.patient_id, r.is_augmented()};
          if (method.kind == MethodKind::kPpf) {
            for (const auto& row : f.patch_rows) train.push(row, r.label_value(), prov);
          } else {
            train.push(f.image_row, r.label_value(), prov);
          }
        }
        for (const auto& p : train.provenance) audit.balance_input_patients.insert(p.patient);
        const TrainSet balanced = balance_classes(train, mix_seed(audit.seed, 1), &audit.balance);
        for (const auto& p : balanced.provenance) audit.model_patients.insert(p.patient);
        audit.train_rows = balanced.size();
        const uint64_t model_seed = mix_seed(audit.seed, 2);
        if (method.kind == MethodKind::kRfLbp || method.kind == MethodKind::kRfGlcm) {
          auto rf = std::make_unique<RandomForestModel>(
              train_random_forest(balanced, config.trees, model_seed));
          model = std::move(rf);
        } else {
          LogisticConfig lc = config.logistic;
          lc.seed = model_seed;
          model = std::make_unique<LogisticModel>(train_logistic(balanced, lc));
        }
      }

      for (size_t idx : fold.test_records) {
        const ImageRecord& r = data.records[idx];
        const RecordFeatures& f = feats[idx];
        ScoredImage s{idx, r.patient_id, r.sequence_id, r.frame_index, r.label_value(), 0.5, false};
        if (f.usable) {
          s.scored = true;
          if (injected) {
            const auto it = probs.find({r.patient_id, r.sequence_id, r.frame_index});
            if (it == probs.end())
              throw Error(ErrorCode::kValidation, "no injected probabilities for " + r.key());
            std::vector<ScoredPatch> sp;
            for (size_t k = 0; k < f.coords.size(); ++k) {
              const auto pk = it->second.find(static_cast<int>(k));
              if (pk == it->second.end())
                throw Error(ErrorCode::kValidation, "missing patch " + std::to_string(k) +
                                                        " probability for " + r.key());
              sp.push_back({f.coords[k], pk->second});
              out.patch_labels.push_back(r.label_value());
              out.patch_scores.push_back(pk->second);
            }
            s.p = fuse(sp, f.frame_width, f.frame_height).p;
          } else if (method.kind == MethodKind::kPpf) {
            std::vector<ScoredPatch> sp;
            for (size_t k = 0; k < f.coords.size(); ++k) {
              const double p = model->classify(f.patch_rows[k]).p1;
              sp.push_back({f.coords[k], p});
              out.patch_labels.push_back(r.label_value());
              out.patch_scores.push_back(p);
            }
            s.p = fuse(sp, f.frame_width, f.frame_height).p;
          } else {
            s.p = model->classify(f.image_row).p1;
          }
        }
        out.results.push_back(std::move(s));
      }
    });
  }
  slot.rethrow();

  std::vector<int> labels, patch_labels;
  std::vector<double> scores, patch_scores;
  for (auto& o : outputs) {
    for (auto& s : o.results) {
      labels.push_back(s.label);
      scores.push_back(s.p);
      report.results.push_back(std::move(s));
    }
    patch_labels.insert(patch_labels.end(), o.patch_labels.begin(), o.patch_labels.end());
    patch_scores.insert(patch_scores.end(), o.patch_scores.begin(), o.patch_scores.end());
    report.audit.push_back(std::move(o.audit));
  }
  report.metrics = confusion_metrics(labels, scores, config.threshold);
  report.roc = roc_auc(labels, scores);
  if (!patch_labels.empty() &&
      (method.kind == MethodKind::kPpf || (injected && method.kind != MethodKind::kWholeImage)))
    report.patch_metrics = confusion_metrics(patch_labels, patch_scores, config.threshold);
  return report;
}

size_t count_leakage(const EvalReport& report) {
  size_t violations = 0;
  for (const auto& a : report.audit) {
    violations += a.balance_input_patients.count(a.test_patient);
    violations += a.model_patients.count(a.test_patient);
    for (size_t idx : a.test_records) {
      const ImageRecord& r = report.augmented.records.at(idx);
      violations += r.is_augmented();
      violations += r.patient_id != a.test_patient;
    }
  }
  return violations;
}

void write_results_csv(const EvalReport& report, std::ostream& out) {
  out << "method,patient,sequence,frame,label,p_image,pred@" << format_real(report.threshold)
      << "\n";
  for (const auto& s : report.results)
    out << report.method << ',' << s.patient << ',' << s.sequence << ',' << s.frame << ','
        << s.label << ',' << format_real(s.p) << ',' << (s.p >= report.threshold ? 1 : 0)
        << '\n';
}

void write_roc_csv(const RocCurve& roc, std::ostream& out) {
  out << "threshold,fpr,tpr\n";
  for (const auto& p : roc.points)
    out << format_real(p.threshold) << ',' << format_real(p.fpr) << ',' << format_real(p.tpr)
        << '\n';
}

}  // namespace cle
