#include "cle/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

#include "cle/classify.hpp"

namespace cle {

namespace fs = std::filesystem;

void SynthConfig::validate() const {
  if (n_patients < 1 || images_per_patient < 1)
    throw Error(ErrorCode::kConfig, "synth counts must be >= 1");
  if (!(class_mix > 0.0 && class_mix < 1.0))
    throw Error(ErrorCode::kConfig, "class mix must lie in (0, 1)");
  if (image_size < 160) throw Error(ErrorCode::kConfig, "synth image size must be >= 160");
  if (frames_per_sequence < 1) throw Error(ErrorCode::kConfig, "frames per sequence must be >= 1");
  if (!(artifact_rate >= 0.0 && artifact_rate <= 1.0))
    throw Error(ErrorCode::kConfig, "artifact rate must lie in [0, 1]");
}

namespace {

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * ((rng() >> 11) * 0x1.0p-53);
}

double hash01(uint64_t a, uint64_t b) { return (mix_seed(a, b) >> 11) * 0x1.0p-53; }

// Bilinear value noise on a coarse lattice, values in [-1, 1].
class ValueNoise {
 public:
  ValueNoise(int size, double cell, std::mt19937_64& rng) : cell_(cell) {
    n_ = static_cast<int>(size / cell) + 2;
    v_.resize(static_cast<size_t>(n_) * n_);
    for (auto& v : v_) v = uniform(rng, -1.0, 1.0);
  }
  double operator()(double x, double y) const {
    const double gx = x / cell_, gy = y / cell_;
    const int x0 = static_cast<int>(gx), y0 = static_cast<int>(gy);
    const double tx = gx - x0, ty = gy - y0;
    const double sx = tx * tx * (3 - 2 * tx), sy = ty * ty * (3 - 2 * ty);
    auto at = [&](int i, int j) { return v_[static_cast<size_t>(j) * n_ + i]; };
    const double a = at(x0, y0) + sx * (at(x0 + 1, y0) - at(x0, y0));
    const double b = at(x0, y0 + 1) + sx * (at(x0 + 1, y0 + 1) - at(x0, y0 + 1));
    return a + sy * (b - a);
  }

 private:
  double cell_;
  int n_ = 0;
  std::vector<double> v_;
};

struct Blob {
  double x, y, sigma, amp;
};

struct Spot {
  double x, y, radius;
};

// Class-dependent appearance parameters.
struct Appearance {
  double keep_border;    // probability that a cell edge is drawn
  double border_level;   // relative border brightness
  double seed_jitter;    // 0 = regular lattice, 1 = fully random
  int blobs_min, blobs_max;
  double blob_amp_min, blob_amp_max;
  int clusters_min, clusters_max;
};

Appearance normal_look(bool hard) {
  if (hard) return {0.9, 0.78, 0.6, 0, 1, 0.05, 0.12, 0, 1};
  return {0.96, 0.8, 0.55, 0, 0, 0.0, 0.0, 0, 0};
}

Appearance cancer_look(bool hard) {
  if (hard) return {0.68, 0.7, 0.85, 1, 3, 0.08, 0.2, 1, 2};
  return {0.35, 0.62, 1.0, 3, 6, 0.25, 0.45, 3, 5};
}

}  // namespace

PatientStyle patient_style(const SynthConfig& config, int patient) {
  std::mt19937_64 rng(mix_seed(mix_seed(config.seed, 0x5717e), patient));
  const double j = config.patient_style_jitter;
  PatientStyle s;
  s.cell_diameter = 22.0 * (1.0 + 0.25 * j * uniform(rng, -1, 1));
  s.brightness = 1.0 + 0.25 * j * uniform(rng, -1, 1);
  s.noise = 0.05 * (1.0 + 0.5 * j * uniform(rng, -1, 1));
  s.border_width = 1.8 * (1.0 + 0.2 * j * uniform(rng, -1, 1));
  return s;
}

CleImage render_image(const SynthConfig& config, const PatientStyle& style, Label label,
                      uint64_t image_seed, RenderInfo* info) {
  const int size = config.image_size;
  std::mt19937_64 rng(image_seed);
  const bool cancer = label == Label::kCarcinogenic;
  const Appearance normal = normal_look(config.hard);
  const Appearance look = cancer ? cancer_look(config.hard) : normal;

  CleImage img;
  img.width = img.height = size;
  img.mask = default_mask(size, size);
  img.pixels.assign(static_cast<size_t>(size) * size, 0);

  // Cell seeds on a jittered lattice.
  const double d = style.cell_diameter;
  const int g = static_cast<int>(std::ceil(size / d)) + 4;
  std::vector<double> sx(static_cast<size_t>(g) * g), sy(sx.size()), body(sx.size());
  for (int gy = 0; gy < g; ++gy) {
    for (int gx = 0; gx < g; ++gx) {
      const size_t k = static_cast<size_t>(gy) * g + gx;
      const double lo = 0.5 - 0.5 * look.seed_jitter, hi = 0.5 + 0.5 * look.seed_jitter;
      sx[k] = (gx - 2 + uniform(rng, lo, hi)) * d;
      sy[k] = (gy - 2 + uniform(rng, lo, hi)) * d;
      body[k] = uniform(rng, -0.04, 0.04);
    }
  }

  // Hard frames confine the abnormal look to a lesion region.
  ValueNoise lesion_field(size, 140.0, rng);
  const double lesion_cut = uniform(rng, -0.35, 0.1);

  std::vector<Blob> blobs;
  const int nblobs = look.blobs_max > 0
                         ? look.blobs_min + static_cast<int>(rng() % (look.blobs_max - look.blobs_min + 1))
                         : 0;
  for (int i = 0; i < nblobs; ++i)
    blobs.push_back({uniform(rng, 0.15, 0.85) * size, uniform(rng, 0.15, 0.85) * size,
                     uniform(rng, 40, 90) * size / 576.0, uniform(rng, look.blob_amp_min, look.blob_amp_max)});
  std::vector<Spot> spots;
  const int nclusters = look.clusters_max > 0
                            ? look.clusters_min + static_cast<int>(rng() % (look.clusters_max - look.clusters_min + 1))
                            : 0;
  for (int c = 0; c < nclusters; ++c) {
    const double cx = uniform(rng, 0.2, 0.8) * size, cy = uniform(rng, 0.2, 0.8) * size;
    const int n = 6 + static_cast<int>(rng() % 7);
    for (int i = 0; i < n; ++i)
      spots.push_back({cx + uniform(rng, -35, 35), cy + uniform(rng, -35, 35), uniform(rng, 4, 8)});
  }

  std::vector<ArtifactRect> artifacts;
  if (uniform(rng, 0, 1) < config.artifact_rate) {
    const int w = static_cast<int>(uniform(rng, 30, 80)), h = static_cast<int>(uniform(rng, 30, 80));
    const double ang = uniform(rng, 0, 2 * 3.141592653589793), rad = uniform(rng, 0, 0.55) * size / 2;
    const int x0 = std::clamp(static_cast<int>(size / 2 + rad * std::cos(ang) - w / 2), 0, size - w);
    const int y0 = std::clamp(static_cast<int>(size / 2 + rad * std::sin(ang) - h / 2), 0, size - h);
    artifacts.push_back({x0, y0, x0 + w, y0 + h});
  }

  std::normal_distribution<double> noise(0.0, 1.0);
  size_t border_px = 0, inside_px = 0;
  const uint64_t edge_salt = mix_seed(image_seed, 0xed9e);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const double n01 = noise(rng);
      if (!img.mask.contains(x, y)) continue;
      ++inside_px;
      const double px = x + 0.5, py = y + 0.5;
      const bool lesion = !config.hard || !cancer || lesion_field(px, py) > lesion_cut;
      const Appearance& a = lesion ? look : normal;

      const int cx = static_cast<int>(px / d) + 2, cy = static_cast<int>(py / d) + 2;
      double d1 = 1e300, d2 = 1e300;
      size_t i1 = 0, i2 = 0;
      for (int j = cy - 2; j <= cy + 2; ++j) {
        for (int i = cx - 2; i <= cx + 2; ++i) {
          if (i < 0 || j < 0 || i >= g || j >= g) continue;
          const size_t k = static_cast<size_t>(j) * g + i;
          const double dd = (sx[k] - px) * (sx[k] - px) + (sy[k] - py) * (sy[k] - py);
          if (dd < d1) {
            d2 = d1;
            i2 = i1;
            d1 = dd;
            i1 = k;
          } else if (dd < d2) {
            d2 = dd;
            i2 = k;
          }
        }
      }
      const double edge = 0.5 * (std::sqrt(d2) - std::sqrt(d1));
      const uint64_t lo = std::min(i1, i2), hi = std::max(i1, i2);
      const bool keep = hash01(edge_salt, lo * 1000003ULL + hi) < a.keep_border;
      double v = 0.15 + body[i1];
      if (keep) {
        const double b = std::exp(-(edge / style.border_width) * (edge / style.border_width));
        v += b * (a.border_level - v);
        border_px += b > 0.5;
      }
      if (lesion) {
        for (const Blob& bl : blobs) {
          const double r2 = (px - bl.x) * (px - bl.x) + (py - bl.y) * (py - bl.y);
          v += bl.amp * std::exp(-r2 / (2 * bl.sigma * bl.sigma));
        }
        for (const Spot& s : spots) {
          const double r = std::hypot(px - s.x, py - s.y);
          if (r < s.radius + 1.5) v *= 0.25 + 0.75 * std::clamp((r - s.radius) / 1.5, 0.0, 1.0);
        }
      }
      for (const auto& ar : artifacts)
        if (x >= ar.x0 && x < ar.x1 && y >= ar.y0 && y < ar.y1) v = 0.9;
      v += style.noise * n01;
      const double out = style.brightness * v * 40000.0 + 1500.0;
      img.at(x, y) = static_cast<uint16_t>(std::clamp(std::lround(out), 0L, 65535L));
    }
  }
  if (info) {
    info->border_fraction = inside_px ? static_cast<double>(border_px) / inside_px : 0.0;
    info->artifacts = artifacts;
  }
  return img;
}

DatasetManifest generate_dataset(const SynthConfig& config, const fs::path& out_dir) {
  config.validate();
  std::error_code ec;
  fs::create_directories(out_dir / "images", ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot create " + (out_dir / "images").string());

  const int total = config.n_patients * config.images_per_patient;
  const int total_cancer = static_cast<int>(std::lround(config.class_mix * total));

  DatasetManifest m;
  m.root = out_dir;
  std::vector<uint64_t> seeds;
  std::vector<PatientStyle> styles;
  const Site normal_sites[] = {Site::kAlveolarRidge, Site::kInnerLabium, Site::kHardPalate};
  int assigned = 0;
  for (int p = 0; p < config.n_patients; ++p) {
    styles.push_back(patient_style(config, p));
    // spread the carcinogenic total as evenly as possible over patients
    const int upto = static_cast<int>(
        (static_cast<long long>(total_cancer) * (p + 1)) / config.n_patients);
    const int n_cancer = std::min(upto - assigned, config.images_per_patient);
    assigned += n_cancer;
    char pid[16];
    std::snprintf(pid, sizeof pid, "P%02d", p + 1);
    int seq = 0;
    for (int cls = 1; cls >= 0; --cls) {
      const int count = cls == 1 ? n_cancer : config.images_per_patient - n_cancer;
      for (int i = 0; i < count; ++i) {
        if (i % config.frames_per_sequence == 0) ++seq;
        ImageRecord r;
        r.patient_id = pid;
        char sid[16];
        std::snprintf(sid, sizeof sid, "S%02d", seq);
        r.sequence_id = sid;
        r.frame_index = i % config.frames_per_sequence;
        r.label = cls == 1 ? Label::kCarcinogenic : Label::kNormal;
        r.site = cls == 1 ? Site::kTumorRegion : normal_sites[(seq - 1) % 3];
        char file[64];
        std::snprintf(file, sizeof file, "images/%s_%s_f%03d.pgm", pid, sid, r.frame_index);
        r.file = file;
        m.records.push_back(std::move(r));
        seeds.push_back(mix_seed(mix_seed(config.seed, 0x1a6e), m.records.size()));
      }
    }
  }

  std::exception_ptr failure;
  const int n = static_cast<int>(m.records.size());
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < n; ++i) {
    try {
      ImageRecord& r = m.records[i];
      const int patient = std::stoi(r.patient_id.substr(1)) - 1;
      RenderInfo info;
      const CleImage img = render_image(config, styles[patient], r.label, seeds[i], &info);
      r.artifact_rects = info.artifacts;
      save_image(img, out_dir / r.file);
    } catch (...) {
#pragma omp critical
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  save_manifest(m, out_dir / "manifest.json");
  m.root = out_dir;
  return m;
}

}  // namespace cle
