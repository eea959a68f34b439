#include "cli.hpp"

#include <omp.h>

#include <algorithm>
#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>

#include "cle/fusion.hpp"
#include "cle/wholeimage.hpp"

namespace cle::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const char* kFooter =
    "Exit codes:\n"
    "  0  success\n"
    "  1  unexpected failure\n"
    "  2  usage error (unknown flag, missing argument)\n"
    "  3  invalid configuration\n"
    "  4  file system error\n"
    "  5  malformed or invalid input data\n"
    "  6  too few patients for cross-validation\n"
    "  7  numeric failure during training\n";

struct Context {
  RunConfig config;
  fs::path out;
  std::ostream& log;
  std::ostream& warn;
};

DatasetManifest require_data(const RunConfig& c) {
  if (c.data.empty()) throw Error(ErrorCode::kConfig, "--data is required");
  return load_manifest(resolve_manifest_path(c.data));
}

std::vector<size_t> originals(const DatasetManifest& m) {
  std::vector<size_t> idx;
  for (size_t i = 0; i < m.records.size(); ++i)
    if (!m.records[i].is_augmented()) idx.push_back(i);
  return idx;
}

// Runs f(i) for i in [0, n) in parallel and rethrows the first failure.
template <class F>
void parallel_for(size_t n, F&& f) {
  std::mutex mu;
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < static_cast<long>(n); ++i) {
    try {
      f(static_cast<size_t>(i));
    } catch (...) {
      std::lock_guard lock(mu);
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
}

std::vector<std::string> feature_schema(const Method& m) {
  std::vector<std::string> names;
  switch (m.kind) {
    case MethodKind::kRfLbp:
      names = lbp_names(LbpConfig{});
      break;
    case MethodKind::kRfGlcm:
      names = haralick_names();
      break;
    case MethodKind::kPpf:
    case MethodKind::kWholeImage:
      return patch_descriptor_names();
  }
  std::vector<std::string> out;
  for (const auto& n : names) out.push_back("mean:" + n);
  for (const auto& n : names) out.push_back("std:" + n);
  return out;
}

void require_wholeimage_source(const Method& m, const RunConfig& c) {
  if (m.kind == MethodKind::kWholeImage && !c.wholeimage_baseline)
    throw Error(ErrorCode::kConfig,
                "WHOLEIMAGE@0.55x needs injected probabilities (--probs) or the in-repo "
                "logistic baseline (--wholeimage-baseline)");
}

// --- subcommands -------------------------------------------------------------

void cmd_synth(Context& ctx) {
  const DatasetManifest m = generate_dataset(synth_config(ctx.config), ctx.out);
  ctx.log << "wrote " << m.records.size() << " images to " << ctx.out.string() << "\n";
}

void cmd_stats(Context& ctx) {
  const StatsReport s = dataset_stats(require_data(ctx.config));
  std::ostringstream csv;
  write_stats_csv(s, csv);
  write_file(ctx.out / "stats.csv", csv.str());
  ctx.log << csv.str();
}

void cmd_preprocess(Context& ctx) {
  const DatasetManifest m = require_data(ctx.config);
  const std::vector<size_t> idx = originals(m);
  std::vector<std::string> lines(idx.size());
  if (ctx.config.mode == "wholeimage") {
    WholeImageConfig wc;
    wc.recompute_percentiles = ctx.config.recompute_percentiles;
    parallel_for(idx.size(), [&](size_t i) {
      const ImageRecord& r = m.records[idx[i]];
      const WholeImageResult res = preprocess_whole_image(load_image(m.image_path(r)), std::nullopt, wc);
      const std::string file = "crops/" + fs::path(r.file).stem().string() + ".pgm";
      save_pgm8(res.tensor, ctx.out / file);
      std::ostringstream line;
      line << r.patient_id << ',' << r.sequence_id << ',' << r.frame_index << ',' << file << ','
           << format_real(res.p_low) << ',' << format_real(res.p_high) << ',' << res.side << ','
           << res.origin_x << ',' << res.origin_y << ',' << (res.degenerate ? 1 : 0) << '\n';
      lines[i] = line.str();
    });
    std::string csv = "patient,sequence,frame,file,p_low,p_high,side,origin_x,origin_y,degenerate\n";
    for (const auto& l : lines) csv += l;
    write_file(ctx.out / "preprocess.csv", csv);
  } else {
    const Method method = parse_method(ctx.config.method);
    if (method.kind == MethodKind::kWholeImage)
      throw Error(ErrorCode::kConfig, "--mode patches needs a patch-based method");
    const PipelineConfig pc = pipeline_config(ctx.config);
    parallel_for(idx.size(), [&](size_t i) {
      const ImageRecord& r = m.records[idx[i]];
      const RecordFrame rf = load_record(m, r);
      const PatchedFrame pf = prepare_frame(rf.image, rf.rects, method.scale, pc.grid);
      std::ostringstream line;
      for (size_t k = 0; k < pf.coords.size(); ++k) {
        const auto& c = pf.coords[k];
        line << r.patient_id << ',' << r.sequence_id << ',' << r.frame_index << ',' << k << ','
             << pf.frame.width << ',' << pf.frame.height << ',' << c.c1 << ',' << c.c2 << ','
             << c.c3 << ',' << c.c4 << '\n';
      }
      lines[i] = line.str();
    });
    std::string csv = "patient,sequence,frame,patch_index,frame_width,frame_height,c1,c2,c3,c4\n";
    for (const auto& l : lines) csv += l;
    write_file(ctx.out / "patches.csv", csv);
  }
  ctx.log << "preprocessed " << idx.size() << " images\n";
}

void cmd_featurize(Context& ctx) {
  const DatasetManifest m = require_data(ctx.config);
  const Method method = parse_method(ctx.config.method);
  const PipelineConfig pc = pipeline_config(ctx.config);
  const std::vector<size_t> idx = originals(m);
  std::vector<RecordFeatures> feats(idx.size());
  parallel_for(idx.size(),
               [&](size_t i) { feats[i] = compute_record_features(m, m.records[idx[i]], method, pc); });
  const bool per_patch = method.kind == MethodKind::kPpf;
  std::ostringstream csv;
  csv << "patient,sequence,frame,label";
  if (per_patch) csv << ",patch_index";
  for (const auto& n : feature_schema(method)) csv << ',' << n;
  csv << '\n';
  size_t skipped = 0;
  auto emit = [&](const ImageRecord& r, const std::vector<double>& row, long patch) {
    csv << r.patient_id << ',' << r.sequence_id << ',' << r.frame_index << ',' << r.label_value();
    if (patch >= 0) csv << ',' << patch;
    for (double v : row) csv << ',' << format_real(v);
    csv << '\n';
  };
  for (size_t i = 0; i < idx.size(); ++i) {
    const ImageRecord& r = m.records[idx[i]];
    if (!feats[i].usable) {
      ++skipped;
      continue;
    }
    if (per_patch) {
      for (size_t k = 0; k < feats[i].patch_rows.size(); ++k) emit(r, feats[i].patch_rows[k], k);
    } else {
      emit(r, feats[i].image_row, -1);
    }
  }
  write_file(ctx.out / "features.csv", csv.str());
  if (skipped) ctx.warn << "warning: " << skipped << " images without admissible patches skipped\n";
  ctx.log << "featurized " << idx.size() - skipped << " images\n";
}

void cmd_train(Context& ctx) {
  const DatasetManifest base = require_data(ctx.config);
  const Method method = parse_method(ctx.config.method);
  require_wholeimage_source(method, ctx.config);
  const PipelineConfig pc = pipeline_config(ctx.config);
  const DatasetManifest m = augment_rotations(base, pc.augment, pc.seed);
  std::vector<RecordFeatures> feats(m.records.size());
  parallel_for(m.records.size(),
               [&](size_t i) { feats[i] = compute_record_features(m, m.records[i], method, pc); });
  TrainSet train;
  for (size_t i = 0; i < m.records.size(); ++i) {
    if (!feats[i].usable) continue;
    const ImageRecord& r = m.records[i];
    const RowProvenance prov{i, r.patient_id, r.is_augmented()};
    if (method.kind == MethodKind::kPpf) {
      for (const auto& row : feats[i].patch_rows) train.push(row, r.label_value(), prov);
    } else {
      train.push(feats[i].image_row, r.label_value(), prov);
    }
  }
  const TrainSet balanced = balance_classes(train, mix_seed(pc.seed, 1));
  ModelFile file;
  file.method = method.name;
  file.seed = mix_seed(pc.seed, 2);
  if (method.kind == MethodKind::kRfLbp || method.kind == MethodKind::kRfGlcm) {
    file.model = train_random_forest(balanced, pc.trees, file.seed);
  } else {
    LogisticConfig lc = pc.logistic;
    lc.seed = file.seed;
    file.model = train_logistic(balanced, lc);
  }
  save_model(file, ctx.out / "model.clef");
  ctx.log << "trained " << method.name << " on " << balanced.size() << " rows\n";
}

void cmd_predict(Context& ctx) {
  if (ctx.config.model.empty()) throw Error(ErrorCode::kConfig, "--model is required");
  const ModelFile file = load_model(ctx.config.model);
  const DatasetManifest m = require_data(ctx.config);
  const Method method = parse_method(file.method);
  RunConfig rc = ctx.config;
  rc.method = file.method;
  const PipelineConfig pc = pipeline_config(rc);
  const std::vector<size_t> idx = originals(m);
  std::vector<RecordFeatures> feats(idx.size());
  parallel_for(idx.size(),
               [&](size_t i) { feats[i] = compute_record_features(m, m.records[idx[i]], method, pc); });
  const ProbabilisticClassifier& model = file.classifier();
  std::ostringstream csv, patches;
  csv << "patient,sequence,frame,label,p_image,pred@" << format_real(pc.threshold) << '\n';
  std::vector<PatchProbabilityRow> patch_rows;
  for (size_t i = 0; i < idx.size(); ++i) {
    const ImageRecord& r = m.records[idx[i]];
    const RecordFeatures& f = feats[i];
    double p = 0.5;
    if (f.usable) {
      if (method.kind == MethodKind::kPpf) {
        std::vector<ScoredPatch> sp;
        for (size_t k = 0; k < f.coords.size(); ++k) {
          const double pk = model.classify(f.patch_rows[k]).p1;
          sp.push_back({f.coords[k], pk});
          patch_rows.push_back({r.patient_id, r.sequence_id, r.frame_index, static_cast<int>(k), pk});
        }
        p = fuse(sp, f.frame_width, f.frame_height).p;
      } else {
        p = model.classify(f.image_row).p1;
      }
    }
    csv << r.patient_id << ',' << r.sequence_id << ',' << r.frame_index << ',' << r.label_value()
        << ',' << format_real(p) << ',' << (p >= pc.threshold ? 1 : 0) << '\n';
  }
  write_file(ctx.out / "predictions.csv", csv.str());
  if (method.kind == MethodKind::kPpf) {
    write_patch_probabilities(patch_rows, patches);
    write_file(ctx.out / "patch_probabilities.csv", patches.str());
  }
  ctx.log << "predicted " << idx.size() << " images\n";
}

void cmd_fuse(Context& ctx) {
  if (ctx.config.probs.empty()) throw Error(ErrorCode::kConfig, "--probs is required");
  const DatasetManifest m = require_data(ctx.config);
  const Method method = parse_method(ctx.config.method);
  const PipelineConfig pc = pipeline_config(ctx.config);
  std::map<std::tuple<std::string, std::string, int>, std::map<int, double>> probs;
  for (const auto& row : read_patch_probabilities(fs::path(ctx.config.probs)))
    probs[{row.patient, row.sequence, row.frame}][row.patch_index] = row.p_c1;

  const std::vector<size_t> idx = originals(m);
  std::vector<double> p(idx.size(), 0.5);
  parallel_for(idx.size(), [&](size_t i) {
    const ImageRecord& r = m.records[idx[i]];
    std::vector<PatchCoords> coords;
    int width = 0, height = 0;
    if (method.kind == MethodKind::kWholeImage) {
      width = height = WholeImageConfig{}.target;
      coords.push_back({0, width, 0, height});
    } else {
      const RecordFrame rf = load_record(m, r);
      const PatchedFrame pf = prepare_frame(rf.image, rf.rects, method.scale, pc.grid);
      coords = pf.coords;
      width = pf.frame.width;
      height = pf.frame.height;
    }
    if (coords.empty()) return;
    const auto it = probs.find({r.patient_id, r.sequence_id, r.frame_index});
    if (it == probs.end()) throw Error(ErrorCode::kValidation, "no probabilities for " + r.key());
    std::vector<ScoredPatch> sp;
    for (size_t k = 0; k < coords.size(); ++k) {
      const auto pk = it->second.find(static_cast<int>(k));
      if (pk == it->second.end())
        throw Error(ErrorCode::kValidation,
                    "missing patch " + std::to_string(k) + " probability for " + r.key());
      sp.push_back({coords[k], pk->second});
    }
    p[i] = fuse(sp, width, height).p;
  });
  std::ostringstream csv;
  csv << "patient,sequence,frame,label,p_image\n";
  for (size_t i = 0; i < idx.size(); ++i) {
    const ImageRecord& r = m.records[idx[i]];
    csv << r.patient_id << ',' << r.sequence_id << ',' << r.frame_index << ',' << r.label_value()
        << ',' << format_real(p[i]) << '\n';
  }
  write_file(ctx.out / "fused.csv", csv.str());
  ctx.log << "fused " << idx.size() << " images\n";
}

json confusion_json(const Confusion& c) {
  return json{{"accuracy", c.accuracy}, {"sensitivity", c.sensitivity},
              {"specificity", c.specificity}, {"tp", c.tp}, {"fn", c.fn},
              {"tn", c.tn}, {"fp", c.fp}};
}

void cmd_cv(Context& ctx) {
  const DatasetManifest m = require_data(ctx.config);
  const EvalReport report = run_cv(m, pipeline_config(ctx.config));

  std::ostringstream results, roc;
  write_results_csv(report, results);
  write_roc_csv(report.roc, roc);
  write_file(ctx.out / "results.csv", results.str());
  write_file(ctx.out / "roc.csv", roc.str());

  size_t unscored = 0;
  for (const auto& s : report.results) unscored += !s.scored;
  json folds = json::array();
  json fold_seeds = json::object();
  for (const auto& a : report.audit) {
    fold_seeds[a.test_patient] = a.seed;
    folds.push_back({{"test_patient", a.test_patient},
                     {"seed", a.seed},
                     {"balance_seed", mix_seed(a.seed, 1)},
                     {"model_seed", mix_seed(a.seed, 2)},
                     {"test_images", a.test_records.size()},
                     {"train_rows", a.train_rows},
                     {"removed_augmented", a.balance.removed_augmented},
                     {"removed_original", a.balance.removed_original}});
  }
  json summary = {{"method", report.method},
                  {"seed", report.seed},
                  {"threshold", report.threshold},
                  {"accuracy", report.metrics.accuracy},
                  {"sensitivity", report.metrics.sensitivity},
                  {"specificity", report.metrics.specificity},
                  {"auc", report.roc.auc},
                  {"n_images", report.results.size()},
                  {"n_unscored", unscored},
                  {"confusion", confusion_json(report.metrics)},
                  {"patch_accuracy", nullptr},
                  {"leakage_violations", count_leakage(report)},
                  {"fold_seeds", fold_seeds},
                  {"folds", folds},
                  {"config", to_json(ctx.config)}};
  if (report.patch_metrics) {
    summary["patch_accuracy"] = report.patch_metrics->accuracy;
    summary["patch_confusion"] = confusion_json(*report.patch_metrics);
  }
  write_file(ctx.out / "summary.json", summary.dump(1) + "\n");
  char line[160];
  std::snprintf(line, sizeof line, "%s  acc %.4f  sens %.4f  spec %.4f  auc %.4f  (%zu images)\n",
                report.method.c_str(), report.metrics.accuracy, report.metrics.sensitivity,
                report.metrics.specificity, report.roc.auc, report.results.size());
  ctx.log << line;
}

void cmd_report(Context& ctx) {
  if (ctx.config.data.empty()) throw Error(ErrorCode::kConfig, "--data is required");
  const fs::path in = ctx.config.data;
  std::vector<fs::path> files;
  if (fs::is_regular_file(in)) {
    files.push_back(in);
  } else if (fs::is_directory(in)) {
    if (fs::exists(in / "summary.json")) files.push_back(in / "summary.json");
    for (const auto& e : fs::directory_iterator(in))
      if (e.is_directory() && fs::exists(e.path() / "summary.json"))
        files.push_back(e.path() / "summary.json");
  } else {
    throw Error(ErrorCode::kIo, "no such file or directory: " + in.string());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw Error(ErrorCode::kIo, "no summary.json below " + in.string());

  std::ostringstream csv;
  csv << "run,method,accuracy,sensitivity,specificity,auc,patch_accuracy,n_images,seed\n";
  char line[200];
  std::snprintf(line, sizeof line, "%-16s %8s %8s %8s %8s %8s\n", "method", "acc", "sens", "spec",
                "auc", "patch");
  ctx.log << line;
  for (const auto& f : files) {
    json s;
    try {
      s = json::parse(read_file(f));
      const std::string patch =
          s.at("patch_accuracy").is_null() ? "" : format_real(s.at("patch_accuracy").get<double>());
      csv << f.parent_path().filename().string() << ',' << s.at("method").get<std::string>() << ','
          << format_real(s.at("accuracy").get<double>()) << ','
          << format_real(s.at("sensitivity").get<double>()) << ','
          << format_real(s.at("specificity").get<double>()) << ','
          << format_real(s.at("auc").get<double>()) << ',' << patch << ','
          << s.at("n_images").get<size_t>() << ',' << s.at("seed").get<uint64_t>() << '\n';
      std::snprintf(line, sizeof line, "%-16s %8.4f %8.4f %8.4f %8.4f %8s\n",
                    s.at("method").get<std::string>().c_str(), s.at("accuracy").get<double>(),
                    s.at("sensitivity").get<double>(), s.at("specificity").get<double>(),
                    s.at("auc").get<double>(), patch.empty() ? "-" : patch.substr(0, 6).c_str());
      ctx.log << line;
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kFormat, f.string() + ": " + e.what());
    }
  }
  write_file(ctx.out / "report.csv", csv.str());
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Cancer screening pipeline for confocal laser endomicroscopy images", "cle"};
  app.require_subcommand(1, 1);
  app.fallthrough();
  app.footer(kFooter);

  RunConfig flags;
  std::string config_path, out_dir, scale;
  int jobs = 0;
  app.add_option("--config", config_path, "JSON run configuration; flags override its values");
  app.add_option("--out", out_dir, "output directory");
  auto* o_data = app.add_option("--data", flags.data, "manifest file or dataset directory");
  auto* o_method = app.add_option("--method", flags.method,
                                  "RF-LBP@1.0x|RF-LBP@0.5x|RF-GLCM@1.0x|RF-GLCM@0.5x|PPF@1.0x|"
                                  "PPF@0.5x|WHOLEIMAGE@0.55x");
  auto* o_seed = app.add_option("--seed", flags.seed, "random seed");
  auto* o_scale = app.add_option("--scale", scale, "patching scale: 1.0 or 0.5");
  app.add_option("--jobs", jobs, "worker threads (default: all cores)")->check(CLI::PositiveNumber);
  auto* o_threshold = app.add_option("--threshold", flags.threshold, "decision threshold");
  auto* o_trees = app.add_option("--trees", flags.trees, "random forest size");
  auto* o_augment = app.add_option("--augment", flags.augment, "rotated copies per training image");
  auto* o_patch = app.add_option("--patch-size", flags.patch_size, "patch side in pixels");
  auto* o_overlap = app.add_option("--overlap", flags.overlap, "patch overlap fraction");
  auto* o_admission =
      app.add_option("--admission", flags.admission_fraction, "minimum in-circle patch fraction");
  auto* o_probs = app.add_option("--probs", flags.probs, "patch probability CSV");
  auto* o_model = app.add_option("--model", flags.model, "model file");
  auto* o_mode = app.add_option("--mode", flags.mode, "preprocess mode: patches|wholeimage");
  auto* o_baseline = app.add_flag("--wholeimage-baseline", flags.wholeimage_baseline,
                                  "train the logistic baseline on whole-image crops");
  auto* o_fixed = app.add_flag("--fixed-percentiles", "reuse the unrotated frame's percentiles");
  auto* o_patients = app.add_option("--patients", flags.patients, "synth: patient count");
  auto* o_images = app.add_option("--images", flags.images, "synth: images per patient");
  auto* o_size = app.add_option("--image-size", flags.image_size, "synth: frame side in pixels");
  auto* o_mix = app.add_option("--class-mix", flags.class_mix, "synth: carcinogenic fraction");
  auto* o_hard = app.add_flag("--hard", flags.hard, "synth: weaker, partial class cues");

  const std::map<std::string, void (*)(Context&)> commands = {
      {"synth", cmd_synth},       {"stats", cmd_stats},     {"preprocess", cmd_preprocess},
      {"featurize", cmd_featurize}, {"train", cmd_train},   {"predict", cmd_predict},
      {"fuse", cmd_fuse},         {"cv", cmd_cv},           {"report", cmd_report}};
  const std::map<std::string, std::string> help = {
      {"synth", "generate a synthetic dataset"},
      {"stats", "site, class and per-patient counts"},
      {"preprocess", "patch geometry or whole-image crops"},
      {"featurize", "feature rows per image (per patch for PPF)"},
      {"train", "train a model on every record"},
      {"predict", "score images with a trained model"},
      {"fuse", "fuse external patch probabilities into image scores"},
      {"cv", "leave-one-patient-out cross-validation"},
      {"report", "tabulate cv summaries"}};
  for (const auto& [name, text] : help) app.add_subcommand(name, text);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "cle: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    RunConfig config = config_path.empty() ? RunConfig{} : load_run_config(config_path);
    auto set = [](CLI::Option* o, auto& field, const auto& value) {
      if (o->count()) field = value;
    };
    set(o_data, config.data, flags.data);
    set(o_method, config.method, flags.method);
    set(o_seed, config.seed, flags.seed);
    set(o_threshold, config.threshold, flags.threshold);
    set(o_trees, config.trees, flags.trees);
    set(o_augment, config.augment, flags.augment);
    set(o_patch, config.patch_size, flags.patch_size);
    set(o_overlap, config.overlap, flags.overlap);
    set(o_admission, config.admission_fraction, flags.admission_fraction);
    set(o_probs, config.probs, flags.probs);
    set(o_model, config.model, flags.model);
    set(o_mode, config.mode, flags.mode);
    set(o_baseline, config.wholeimage_baseline, flags.wholeimage_baseline);
    set(o_patients, config.patients, flags.patients);
    set(o_images, config.images, flags.images);
    set(o_size, config.image_size, flags.image_size);
    set(o_mix, config.class_mix, flags.class_mix);
    set(o_hard, config.hard, flags.hard);
    if (o_fixed->count()) config.recompute_percentiles = false;
    if (o_scale->count()) config.method = apply_scale(config.method, scale);
    config.validate();
    if (out_dir.empty()) throw Error(ErrorCode::kConfig, "--out is required");
    if (jobs > 0) omp_set_num_threads(jobs);

    Context ctx{config, out_dir, out, err};
    std::error_code ec;
    fs::create_directories(ctx.out, ec);
    if (ec) throw Error(ErrorCode::kIo, "cannot create " + out_dir + ": " + ec.message());
    commands.at(app.get_subcommands().front()->get_name())(ctx);
  } catch (const Error& e) {
    err << "cle: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "cle: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitOk;
}

}  // namespace cle::cli
