// Serial reference vs OpenMP kernels: wall time and result equality.
#include <omp.h>

#include <chrono>
#include <cstdio>
#include <random>

#include "cle/serial.hpp"

using namespace cle;

namespace {

template <class F>
double best_of(int reps, F&& f) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    f();
    const auto t1 = std::chrono::steady_clock::now();
    best = std::min(best, std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  return best;
}

void report(const char* name, double serial_ms, double parallel_ms, bool equal) {
  std::printf("%-22s serial %9.2f ms  parallel %9.2f ms  speedup %5.2fx  %s\n", name, serial_ms,
              parallel_ms, serial_ms / parallel_ms, equal ? "identical" : "MISMATCH");
}

std::vector<Patch> random_patches(int n, int size, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> px(0, 65535);
  std::vector<Patch> out(n);
  for (auto& p : out) {
    p.size = size;
    p.coords = {0, size, 0, size};
    p.values.resize(static_cast<size_t>(size) * size);
    for (auto& v : p.values) v = px(rng);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  const int reps = argc > 1 ? std::atoi(argv[1]) : 3;
  std::mt19937_64 rng(7);
  std::printf("threads: %d\n", omp_get_max_threads());
  bool ok = true;

  const auto patches = random_patches(121, 80, rng);
  {
    std::vector<std::vector<double>> a, b;
    const double s = best_of(reps, [&] { a = serial::lbp_patch_features(patches, LbpConfig{}); });
    const double p = best_of(reps, [&] { b = lbp_patch_features(patches, LbpConfig{}); });
    report("lbp (121 patches)", s, p, a == b);
    ok &= a == b;
  }
  {
    std::vector<std::vector<double>> a, b;
    const double s = best_of(reps, [&] { a = serial::glcm_patch_features(patches, GlcmConfig{}); });
    const double p = best_of(reps, [&] { b = glcm_patch_features(patches, GlcmConfig{}); });
    report("glcm (121 patches)", s, p, a == b);
    ok &= a == b;
  }
  {
    std::vector<ScoredPatch> sp;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::uniform_int_distribution<int> pos(0, 576 - 80);
    for (int i = 0; i < 200; ++i) {
      const int x = pos(rng), y = pos(rng);
      sp.push_back({{x, x + 80, y, y + 80}, u(rng)});
    }
    FusionMaps a, b;
    const double s = best_of(reps, [&] { a = serial::build_maps(sp, 576, 576); });
    const double p = best_of(reps, [&] { b = build_maps(sp, 576, 576); });
    const bool eq = a.pa == b.pa && a.pc == b.pc && a.pm == b.pm;
    report("fusion maps (576^2)", s, p, eq);
    ok &= eq;
  }
  {
    TrainSet train;
    std::normal_distribution<double> g(0.0, 1.0);
    for (int i = 0; i < 600; ++i) {
      const int label = i % 2;
      std::vector<double> row(108);
      for (auto& v : row) v = g(rng) + 0.3 * label;
      train.push(row, label, {static_cast<size_t>(i), "P", false});
    }
    RandomForestModel a, b;
    const double s = best_of(reps, [&] { a = serial::train_random_forest(train, 100, 11); });
    const double p = best_of(reps, [&] { b = train_random_forest(train, 100, 11); });
    const bool eq = a.trees == b.trees;
    report("forest (100 trees)", s, p, eq);
    ok &= eq;
  }
  return ok ? 0 : 1;
}
