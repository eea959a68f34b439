#include "cle/features.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace cle {

void LbpConfig::validate() const {
  if (scales.empty()) throw Error(ErrorCode::kConfig, "LBP needs at least one scale");
  for (const auto& s : scales) {
    if (s.radius < 1) throw Error(ErrorCode::kConfig, "LBP radius must be >= 1");
    if (s.neighbors < 4 || s.neighbors > 64)
      throw Error(ErrorCode::kConfig, "LBP neighbors must lie in [4, 64]");
  }
}

int LbpConfig::patch_dims() const {
  int d = 0;
  for (const auto& s : scales) d += s.neighbors + 2;
  return d;
}

void GlcmConfig::validate() const {
  if (levels < 2 || levels > 256) throw Error(ErrorCode::kConfig, "GLCM levels must lie in [2, 256]");
  if (offsets.empty()) throw Error(ErrorCode::kConfig, "GLCM needs at least one offset");
  if (quantization == Quantization::kFixedRange && !(fixed_max > fixed_min))
    throw Error(ErrorCode::kConfig, "GLCM fixed range is empty");
}

// --- LBP -----------------------------------------------------------------

namespace {

constexpr int kWeightBits = 10;
constexpr int kWeightOne = 1 << kWeightBits;

struct Tap {
  int dx, dy;
  double weight;  // multiple of 2^-20
};

struct NeighborTaps {
  std::vector<Tap> taps;  // up to four per neighbour
  int first = 0;
  int count = 0;
};

std::vector<NeighborTaps> neighbor_taps(int radius, int neighbors) {
  std::vector<NeighborTaps> out(neighbors);
  std::vector<Tap> all;
  for (int p = 0; p < neighbors; ++p) {
    const double a = 2.0 * std::numbers::pi * p / neighbors;
    const long qx = std::lround(radius * std::cos(a) * kWeightOne);
    const long qy = std::lround(-radius * std::sin(a) * kWeightOne);
    // floor division on the 1/1024 grid
    const long fx = qx >= 0 ? qx / kWeightOne : -((-qx + kWeightOne - 1) / kWeightOne);
    const long fy = qy >= 0 ? qy / kWeightOne : -((-qy + kWeightOne - 1) / kWeightOne);
    const long tx = qx - fx * kWeightOne;
    const long ty = qy - fy * kWeightOne;
    const double scale = 1.0 / (double(kWeightOne) * kWeightOne);
    const long w[4] = {(kWeightOne - tx) * (kWeightOne - ty), tx * (kWeightOne - ty),
                       (kWeightOne - tx) * ty, tx * ty};
    const int ox[4] = {0, 1, 0, 1};
    const int oy[4] = {0, 0, 1, 1};
    NeighborTaps nt;
    for (int k = 0; k < 4; ++k) {
      if (w[k] == 0) continue;
      nt.taps.push_back({static_cast<int>(fx) + ox[k], static_cast<int>(fy) + oy[k], w[k] * scale});
    }
    out[p] = std::move(nt);
  }
  return out;
}

}  // namespace

std::vector<double> lbp_histogram(const Patch& patch, int radius, int neighbors) {
  if (radius < 1 || neighbors < 4 || neighbors > 64)
    throw Error(ErrorCode::kConfig, "invalid LBP radius/neighbors");
  const int n = patch.size;
  if (n < 2 * radius + 1) throw Error(ErrorCode::kValidation, "patch smaller than 2*radius+1");
  const auto taps = neighbor_taps(radius, neighbors);
  std::vector<double> hist(neighbors + 2, 0.0);
  std::vector<int> bits(neighbors);
  const double* v = patch.values.data();
  size_t centres = 0;
  for (int y = radius; y < n - radius; ++y) {
    for (int x = radius; x < n - radius; ++x) {
      const double c = v[static_cast<size_t>(y) * n + x];
      int ones = 0;
      for (int p = 0; p < neighbors; ++p) {
        double s = 0.0;
        for (const Tap& t : taps[p].taps)
          s += t.weight * v[static_cast<size_t>(y + t.dy) * n + (x + t.dx)];
        bits[p] = s >= c ? 1 : 0;
        ones += bits[p];
      }
      int transitions = 0;
      for (int p = 0; p < neighbors; ++p)
        transitions += bits[p] != bits[(p + neighbors - 1) % neighbors];
      const int code = transitions <= 2 ? ones : neighbors + 1;
      hist[code] += 1.0;
      ++centres;
    }
  }
  for (double& h : hist) h /= static_cast<double>(centres);
  return hist;
}

std::vector<double> lbp_patch_vector(const Patch& patch, const LbpConfig& config) {
  std::vector<double> out;
  out.reserve(config.patch_dims());
  for (const auto& s : config.scales) {
    const auto h = lbp_histogram(patch, s.radius, s.neighbors);
    out.insert(out.end(), h.begin(), h.end());
  }
  return out;
}

std::vector<std::vector<double>> lbp_patch_features(const std::vector<Patch>& patches,
                                                    const LbpConfig& config) {
  config.validate();
  std::vector<std::vector<double>> out(patches.size());
  const int n = static_cast<int>(patches.size());
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < n; ++i) out[i] = lbp_patch_vector(patches[i], config);
  return out;
}

std::vector<std::string> lbp_names(const LbpConfig& config) {
  std::vector<std::string> names;
  for (const auto& s : config.scales)
    for (int b = 0; b < s.neighbors + 2; ++b)
      names.push_back("lbp_r" + std::to_string(s.radius) + "_p" + std::to_string(s.neighbors) +
                      "_b" + std::to_string(b));
  return names;
}

FeatureVector lbp_image_vector(const std::vector<Patch>& patches, const LbpConfig& config) {
  if (patches.empty()) throw Error(ErrorCode::kValidation, "no patches to aggregate");
  return aggregate_mean_std(lbp_patch_features(patches, config), lbp_names(config));
}

// --- GLCM ----------------------------------------------------------------

std::vector<int> quantize(const Patch& patch, const GlcmConfig& config) {
  std::vector<int> q(patch.values.size(), 0);
  double lo, hi;
  if (config.quantization == GlcmConfig::Quantization::kPatchRange) {
    const auto [mn, mx] = std::minmax_element(patch.values.begin(), patch.values.end());
    if (mn == patch.values.end()) return q;
    lo = *mn;
    hi = *mx;
  } else {
    lo = config.fixed_min;
    hi = config.fixed_max;
  }
  if (!(hi > lo)) return q;
  const int top = config.levels - 1;
  for (size_t i = 0; i < q.size(); ++i) {
    const double t = (patch.values[i] - lo) / (hi - lo) * config.levels;
    q[i] = std::clamp(static_cast<int>(std::floor(t)), 0, top);
  }
  return q;
}

Glcm glcm(const Patch& patch, const GlcmConfig& config) {
  config.validate();
  const int L = config.levels;
  const int n = patch.size;
  const auto q = quantize(patch, config);
  Glcm out;
  out.levels = L;
  out.p.assign(static_cast<size_t>(L) * L, 0.0);
  std::vector<double> counts(static_cast<size_t>(L) * L);
  double pooled_total = 0.0;
  for (const auto& [dx, dy] : config.offsets) {
    std::fill(counts.begin(), counts.end(), 0.0);
    double total = 0.0;
    for (int y = 0; y < n; ++y) {
      const int y2 = y + dy;
      if (y2 < 0 || y2 >= n) continue;
      for (int x = 0; x < n; ++x) {
        const int x2 = x + dx;
        if (x2 < 0 || x2 >= n) continue;
        const int a = q[static_cast<size_t>(y) * n + x];
        const int b = q[static_cast<size_t>(y2) * n + x2];
        counts[static_cast<size_t>(a) * L + b] += 1.0;
        if (config.symmetric) counts[static_cast<size_t>(b) * L + a] += 1.0;
        total += config.symmetric ? 2.0 : 1.0;
      }
    }
    if (total == 0.0) continue;
    if (config.averaged) {
      for (size_t k = 0; k < counts.size(); ++k) out.p[k] += counts[k];
      pooled_total += total;
    } else {
      for (size_t k = 0; k < counts.size(); ++k) out.p[k] += counts[k] / total;
      pooled_total += 1.0;
    }
  }
  if (pooled_total == 0.0) {
    out.p[0] = 1.0;  // no valid pair at all (1x1 patch)
    return out;
  }
  for (double& v : out.p) v /= pooled_total;
  return out;
}

namespace {

double xlogx_neg(double p) { return p > 0.0 ? -p * std::log(p) : 0.0; }

}  // namespace

const std::vector<std::string>& haralick_names() {
  static const std::vector<std::string> names = {
      "asm",           "contrast",           "correlation",        "sum_of_squares_variance",
      "homogeneity",   "sum_average",        "sum_variance",       "sum_entropy",
      "entropy",       "difference_variance", "difference_entropy", "imc1",
      "imc2",          "dissimilarity",      "mean"};
  return names;
}

std::vector<double> haralick_features(const Glcm& m) {
  const int L = m.levels;
  std::vector<double> px(L, 0.0), py(L, 0.0), psum(2 * L - 1, 0.0), pdiff(L, 0.0);
  double asm_ = 0, contrast = 0, idm = 0, entropy = 0, dissim = 0, ij = 0;
  for (int i = 0; i < L; ++i) {
    for (int j = 0; j < L; ++j) {
      const double p = m.at(i, j);
      if (p == 0.0) continue;
      const int d = std::abs(i - j);
      px[i] += p;
      py[j] += p;
      psum[i + j] += p;
      pdiff[d] += p;
      asm_ += p * p;
      contrast += double(d) * d * p;
      idm += p / (1.0 + double(d) * d);
      entropy += xlogx_neg(p);
      dissim += d * p;
      ij += double(i) * j * p;
    }
  }
  double mux = 0, muy = 0;
  for (int i = 0; i < L; ++i) {
    mux += i * px[i];
    muy += i * py[i];
  }
  double varx = 0, vary = 0, hx = 0, hy = 0;
  for (int i = 0; i < L; ++i) {
    varx += (i - mux) * (i - mux) * px[i];
    vary += (i - muy) * (i - muy) * py[i];
    hx += xlogx_neg(px[i]);
    hy += xlogx_neg(py[i]);
  }
  const double sd = std::sqrt(varx * vary);
  double correlation = sd > 1e-15 ? (ij - mux * muy) / sd : 0.0;
  correlation = std::clamp(correlation, -1.0, 1.0);

  double sum_avg = 0, sum_entropy = 0;
  for (size_t k = 0; k < psum.size(); ++k) {
    sum_avg += k * psum[k];
    sum_entropy += xlogx_neg(psum[k]);
  }
  double sum_var = 0;
  for (size_t k = 0; k < psum.size(); ++k) sum_var += (k - sum_avg) * (k - sum_avg) * psum[k];

  double diff_mean = 0, diff_entropy = 0;
  for (int k = 0; k < L; ++k) {
    diff_mean += k * pdiff[k];
    diff_entropy += xlogx_neg(pdiff[k]);
  }
  double diff_var = 0;
  for (int k = 0; k < L; ++k) diff_var += (k - diff_mean) * (k - diff_mean) * pdiff[k];

  double hxy1 = 0, hxy2 = 0;
  for (int i = 0; i < L; ++i) {
    for (int j = 0; j < L; ++j) {
      const double pp = px[i] * py[j];
      if (pp <= 0.0) continue;
      const double p = m.at(i, j);
      if (p > 0.0) hxy1 -= p * std::log(pp);
      hxy2 -= pp * std::log(pp);
    }
  }
  const double hmax = std::max(hx, hy);
  const double imc1 = hmax > 0.0 ? (entropy - hxy1) / hmax : 0.0;
  const double imc2 = std::sqrt(std::max(0.0, 1.0 - std::exp(-2.0 * (hxy2 - entropy))));

  return {asm_,   contrast, correlation, varx,         idm,  sum_avg,  sum_var, sum_entropy,
          entropy, diff_var, diff_entropy, imc1,        imc2, dissim,   mux};
}

std::vector<std::vector<double>> glcm_patch_features(const std::vector<Patch>& patches,
                                                     const GlcmConfig& config) {
  config.validate();
  std::vector<std::vector<double>> out(patches.size());
  const int n = static_cast<int>(patches.size());
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < n; ++i) out[i] = haralick_features(glcm(patches[i], config));
  return out;
}

FeatureVector glcm_image_vector(const std::vector<Patch>& patches, const GlcmConfig& config) {
  if (patches.empty()) throw Error(ErrorCode::kValidation, "no patches to aggregate");
  return aggregate_mean_std(glcm_patch_features(patches, config), haralick_names());
}

// --- aggregation ---------------------------------------------------------

FeatureVector aggregate_mean_std(const std::vector<std::vector<double>>& per_patch,
                                 const std::vector<std::string>& names) {
  if (per_patch.empty()) throw Error(ErrorCode::kValidation, "no patches to aggregate");
  const size_t d = names.size();
  const size_t n = per_patch.size();
  FeatureVector fv;
  fv.values.assign(2 * d, 0.0);
  std::vector<double> column(n);
  for (size_t k = 0; k < d; ++k) {
    for (size_t i = 0; i < n; ++i) {
      if (per_patch[i].size() != d)
        throw Error(ErrorCode::kValidation, "patch feature length mismatch");
      column[i] = per_patch[i][k];
    }
    std::sort(column.begin(), column.end());
    double sum = 0.0;
    for (double v : column) sum += v;
    const double mean = sum / n;
    double ss = 0.0;
    for (double v : column) ss += (v - mean) * (v - mean);
    fv.values[k] = mean;
    fv.values[d + k] = std::sqrt(ss / n);
  }
  for (const auto& nm : names) fv.schema.push_back("mean:" + nm);
  for (const auto& nm : names) fv.schema.push_back("std:" + nm);
  return fv;
}

}  // namespace cle
