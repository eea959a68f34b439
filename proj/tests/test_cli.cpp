#include <doctest.h>

#include <omp.h>

#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "helpers.hpp"

using namespace cle;
using nlohmann::json;

namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code = 0;
  std::string out;
  std::string err;
};

Outcome invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "cle");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int saved = omp_get_max_threads();
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  omp_set_num_threads(saved);
  return {code, out.str(), err.str()};
}

const fs::path& dataset() {
  static const fs::path dir = [] {
    const fs::path d = testing::temp_dir("cli_data");
    const Outcome o = invoke({"synth", "--out", d.string(), "--patients", "3", "--images", "4",
                              "--image-size", "288"});
    REQUIRE(o.code == 0);
    return d;
  }();
  return dir;
}

// Column `col` of a CSV keyed by the first three columns.
std::map<std::string, std::string> column(const fs::path& csv, size_t col) {
  std::ifstream in(csv);
  std::string line;
  std::getline(in, line);
  std::map<std::string, std::string> out;
  while (std::getline(in, line)) {
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    out[f[0] + "/" + f[1] + "/" + f[2]] = f.at(col);
  }
  return out;
}

}  // namespace

TEST_CASE("cli: usage errors") {
  CHECK(invoke({}).code == cli::kExitUsage);
  CHECK(invoke({"frobnicate"}).code == cli::kExitUsage);
  CHECK(invoke({"cv", "--no-such-flag"}).code == cli::kExitUsage);
  CHECK(invoke({"cv", "--seed"}).code == cli::kExitUsage);
  const Outcome help = invoke({"--help"});
  CHECK(help.code == 0);
  CHECK(help.out.find("Exit codes") != std::string::npos);
}

TEST_CASE("cli: configuration and io errors") {
  const auto out = testing::temp_dir("cli_errors");
  CHECK(invoke({"cv", "--out", out.string()}).code == cli::kExitConfig);
  CHECK(invoke({"cv", "--data", dataset().string()}).code == cli::kExitConfig);
  CHECK(invoke({"cv", "--out", out.string(), "--data", dataset().string(), "--method", "CNN"}).code ==
        cli::kExitConfig);
  CHECK(invoke({"cv", "--out", out.string(), "--data", dataset().string(), "--threshold", "2"})
            .code == cli::kExitConfig);
  CHECK(invoke({"cv", "--out", out.string(), "--data", (out / "missing").string()}).code ==
        cli::kExitIo);

  write_file(out / "bad.json", "{\"seed\": 1, \"colour\": \"red\"}");
  CHECK(invoke({"cv", "--config", (out / "bad.json").string(), "--out", out.string()}).code ==
        cli::kExitConfig);
  write_file(out / "broken.json", "{");
  CHECK(invoke({"cv", "--config", (out / "broken.json").string(), "--out", out.string()}).code ==
        cli::kExitConfig);
}

TEST_CASE("cli: whole-image method needs a probability source") {
  const auto out = testing::temp_dir("cli_whole");
  const Outcome o = invoke({"cv", "--out", out.string(), "--data", dataset().string(), "--method",
                            "WHOLEIMAGE@0.55x"});
  CHECK(o.code == cli::kExitConfig);
  CHECK(o.err.find("--wholeimage-baseline") != std::string::npos);
  CHECK(invoke({"train", "--out", out.string(), "--data", dataset().string(), "--method",
                "WHOLEIMAGE@0.55x"})
            .code == cli::kExitConfig);
}

TEST_CASE("cli: too few patients") {
  const auto d = testing::temp_dir("cli_one_patient");
  REQUIRE(invoke({"synth", "--out", d.string(), "--patients", "1", "--images", "4", "--image-size",
                  "160"})
              .code == 0);
  const Outcome o = invoke({"cv", "--out", (d / "cv").string(), "--data", d.string()});
  CHECK(o.code == cli::kExitPatients);
}

TEST_CASE("cli: exit code mapping") {
  CHECK(cli::exit_code_for(ErrorCode::kConfig) == 3);
  CHECK(cli::exit_code_for(ErrorCode::kIo) == 4);
  CHECK(cli::exit_code_for(ErrorCode::kFormat) == 5);
  CHECK(cli::exit_code_for(ErrorCode::kValidation) == 5);
  CHECK(cli::exit_code_for(ErrorCode::kInsufficientPatients) == 6);
  CHECK(cli::exit_code_for(ErrorCode::kNumeric) == 7);
}

TEST_CASE("cli: run config round trip and flag precedence") {
  cli::RunConfig c;
  c.method = "PPF@1.0x";
  c.seed = 9;
  c.trees = 31;
  c.hard = true;
  const cli::RunConfig back = cli::run_config_from_json(cli::to_json(c));
  CHECK(cli::to_json(back) == cli::to_json(c));
  CHECK(cli::run_config_from_json(json{{"config", cli::to_json(c)}, {"accuracy", 1.0}}).seed == 9);
  CHECK_THROWS_AS(cli::run_config_from_json(json{{"trees", "many"}}), Error);
  CHECK_THROWS_AS(cli::run_config_from_json(json::array()), Error);

  CHECK(cli::apply_scale("RF-LBP@1.0x", "0.5") == "RF-LBP@0.5x");
  CHECK(cli::apply_scale("PPF", "1.0") == "PPF@1.0x");
  CHECK_THROWS_AS(cli::apply_scale("PPF@0.5x", "0.7"), Error);
  CHECK_THROWS_AS(cli::apply_scale("WHOLEIMAGE@0.55x", "0.5"), Error);

  const auto out = testing::temp_dir("cli_config");
  json cfg = cli::to_json(cli::RunConfig{});
  cfg["method"] = "RF-GLCM@1.0x";
  cfg["trees"] = 7;
  cfg["augment"] = 0;
  cfg["seed"] = 5;
  cfg["data"] = dataset().string();
  write_file(out / "run.json", cfg.dump());
  REQUIRE(invoke({"cv", "--config", (out / "run.json").string(), "--out", (out / "a").string(),
                  "--seed", "6", "--scale", "0.5"})
              .code == 0);
  const json summary = json::parse(read_file(out / "a" / "summary.json"));
  CHECK(summary["method"] == "RF-GLCM@0.5x");
  CHECK(summary["seed"] == 6);
  CHECK(summary["config"]["trees"] == 7);
  CHECK(summary["leakage_violations"] == 0);
  CHECK(summary["n_images"] == 12);
  CHECK(summary["fold_seeds"].size() == 3);

  // a summary replays its own run
  REQUIRE(invoke({"cv", "--config", (out / "a" / "summary.json").string(), "--out",
                  (out / "b").string()})
              .code == 0);
  CHECK(read_file(out / "a" / "results.csv") == read_file(out / "b" / "results.csv"));
  CHECK(read_file(out / "a" / "summary.json") == read_file(out / "b" / "summary.json"));
}

TEST_CASE("cli: cv output is independent of --jobs") {
  const auto out = testing::temp_dir("cli_jobs");
  for (const char* jobs : {"1", "2"}) {
    REQUIRE(invoke({"cv", "--data", dataset().string(), "--out", (out / jobs).string(), "--jobs",
                    jobs, "--trees", "15", "--augment", "1"})
                .code == 0);
  }
  for (const char* f : {"results.csv", "roc.csv", "summary.json"})
    CHECK(read_file(out / "1" / f) == read_file(out / "2" / f));
}

TEST_CASE("cli: train, predict and fuse agree") {
  const auto out = testing::temp_dir("cli_pipeline");
  const std::string data = dataset().string();
  REQUIRE(invoke({"train", "--data", data, "--out", out.string(), "--method", "PPF@0.5x",
                  "--augment", "0"})
              .code == 0);
  REQUIRE(fs::exists(out / "model.clef"));
  REQUIRE(invoke({"predict", "--data", data, "--out", out.string(), "--model",
                  (out / "model.clef").string()})
              .code == 0);
  REQUIRE(invoke({"fuse", "--data", data, "--out", out.string(), "--method", "PPF@0.5x", "--probs",
                  (out / "patch_probabilities.csv").string()})
              .code == 0);
  const auto predicted = column(out / "predictions.csv", 4);
  const auto fused = column(out / "fused.csv", 4);
  CHECK(predicted.size() == 12);
  CHECK(predicted == fused);

  CHECK(invoke({"fuse", "--data", data, "--out", out.string(), "--method", "PPF@1.0x", "--probs",
                (out / "patch_probabilities.csv").string()})
            .code == cli::kExitData);
  CHECK(invoke({"predict", "--data", data, "--out", out.string()}).code == cli::kExitConfig);
}

TEST_CASE("cli: stats, preprocess, featurize, report") {
  const auto out = testing::temp_dir("cli_misc");
  const std::string data = dataset().string();
  REQUIRE(invoke({"stats", "--data", data, "--out", out.string()}).code == 0);
  CHECK(fs::exists(out / "stats.csv"));

  REQUIRE(invoke({"preprocess", "--data", data, "--out", out.string(), "--method", "PPF@1.0x"})
              .code == 0);
  const std::string patches = read_file(out / "patches.csv");
  CHECK(std::count(patches.begin(), patches.end(), '\n') > 12);

  REQUIRE(invoke({"preprocess", "--data", data, "--out", out.string(), "--mode", "wholeimage"})
              .code == 0);
  CHECK(read_file(out / "preprocess.csv").find(",203,") != std::string::npos);

  REQUIRE(invoke({"featurize", "--data", data, "--out", out.string()}).code == 0);
  std::ifstream feats(out / "features.csv");
  std::string header;
  std::getline(feats, header);
  CHECK(std::count(header.begin(), header.end(), ',') == 4 + 108 - 1);

  REQUIRE(invoke({"cv", "--data", data, "--out", (out / "runs" / "lbp").string(), "--trees", "9",
                  "--augment", "0"})
              .code == 0);
  const Outcome rep = invoke({"report", "--data", (out / "runs").string(), "--out", out.string()});
  CHECK(rep.code == 0);
  CHECK(rep.out.find("RF-LBP@0.5x") != std::string::npos);
  CHECK(read_file(out / "report.csv").find("lbp,RF-LBP@0.5x") != std::string::npos);
  CHECK(invoke({"report", "--data", (out / "nothing").string(), "--out", out.string()}).code ==
        cli::kExitIo);
}
