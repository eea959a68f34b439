#include "cle/classify.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <iostream>
#include <numeric>
#include <random>

#include "cle/features.hpp"

namespace cle {

void TrainSet::push(std::vector<double> row, int label, RowProvenance prov) {
  rows.push_back(std::move(row));
  labels.push_back(label);
  provenance.push_back(std::move(prov));
}

void TrainSet::validate() const {
  if (rows.size() != labels.size() || rows.size() != provenance.size())
    throw Error(ErrorCode::kValidation, "train set rows/labels/provenance differ in length");
  for (size_t i = 0; i < rows.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1)
      throw Error(ErrorCode::kValidation, "labels must be 0 or 1");
    if (rows[i].size() != rows[0].size())
      throw Error(ErrorCode::kValidation, "ragged train rows");
  }
}

uint64_t mix_seed(uint64_t a, uint64_t b) {
  // splitmix64 finaliser over a ^ rotated b
  uint64_t z = a ^ (b * 0x9e3779b97f4a7c15ULL + 0x632be59bd9b4e019ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

uint64_t stable_hash(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace {

double uniform01(std::mt19937_64& rng) { return (rng() >> 11) * 0x1.0p-53; }

size_t uniform_index(std::mt19937_64& rng, size_t n) {
  return std::uniform_int_distribution<size_t>(0, n - 1)(rng);
}

}  // namespace

// --- augmentation and balancing -------------------------------------------

DatasetManifest augment_rotations(const DatasetManifest& manifest, int k, uint64_t seed) {
  if (k < 0) throw Error(ErrorCode::kConfig, "augmentation factor must be >= 0");
  DatasetManifest out;
  out.root = manifest.root;
  out.records = manifest.records;
  for (const ImageRecord& r : manifest.records) {
    if (r.is_augmented())
      throw Error(ErrorCode::kValidation, "augment_rotations expects originals only");
    for (int c = 0; c < k; ++c) {
      std::mt19937_64 rng(mix_seed(mix_seed(seed, stable_hash(r.key())), c));
      ImageRecord a = r;
      a.augmented_from = r.frame_index;
      a.rotation_deg = 360.0 * uniform01(rng);
      out.records.push_back(std::move(a));
    }
  }
  return out;
}

TrainSet balance_classes(const TrainSet& train, uint64_t seed, BalanceStats* stats) {
  train.validate();
  size_t count[2] = {0, 0};
  for (int l : train.labels) ++count[l];
  if (count[0] == 0 || count[1] == 0)
    throw Error(ErrorCode::kValidation, "balance_classes: one class is absent");
  BalanceStats local;
  if (count[0] == count[1]) {
    if (stats) *stats = local;
    return train;
  }
  const int major = count[0] > count[1] ? 0 : 1;
  size_t excess = count[major] - count[1 - major];

  std::vector<size_t> aug, orig;
  for (size_t i = 0; i < train.size(); ++i) {
    if (train.labels[i] != major) continue;
    (train.provenance[i].augmented ? aug : orig).push_back(i);
  }
  std::mt19937_64 rng(seed);
  std::vector<char> drop(train.size(), 0);
  std::shuffle(aug.begin(), aug.end(), rng);
  const size_t from_aug = std::min(excess, aug.size());
  for (size_t i = 0; i < from_aug; ++i) drop[aug[i]] = 1;
  local.removed_augmented = from_aug;
  excess -= from_aug;
  if (excess > 0) {
    std::shuffle(orig.begin(), orig.end(), rng);
    for (size_t i = 0; i < excess; ++i) drop[orig[i]] = 1;
    local.removed_original = excess;
    local.last_resort = true;
    std::cerr << "warning: class balancing ran out of augmented rows; dropped " << excess
              << " original rows of class " << major << "\n";
  }
  TrainSet out;
  for (size_t i = 0; i < train.size(); ++i)
    if (!drop[i]) out.push(train.rows[i], train.labels[i], train.provenance[i]);
  if (stats) *stats = local;
  return out;
}

// --- random forest --------------------------------------------------------

double DecisionTree::leaf_p1(std::span<const double> row) const {
  int32_t i = 0;
  while (!nodes[i].is_leaf())
    i = row[nodes[i].feature] <= nodes[i].threshold ? nodes[i].left : nodes[i].right;
  const TreeNode& leaf = nodes[i];
  return static_cast<double>(leaf.count1) / (leaf.count0 + leaf.count1);
}

Posterior RandomForestModel::classify(std::span<const double> row) const {
  if (row.size() != n_features)
    throw Error(ErrorCode::kValidation, "row has " + std::to_string(row.size()) +
                                            " features, model expects " +
                                            std::to_string(n_features));
  if (trees.empty()) throw Error(ErrorCode::kValidation, "forest has no trees");
  double sum = 0.0;
  for (const auto& t : trees) sum += t.leaf_p1(row);
  const double p1 = sum / trees.size();
  return {1.0 - p1, p1};
}

Posterior predict_proba(const RandomForestModel& model, std::span<const double> row) {
  return model.classify(row);
}

int default_max_features(size_t dims) {
  return std::max(1, static_cast<int>(std::floor(std::sqrt(static_cast<double>(dims)))));
}

namespace {

struct Split {
  int feature = -1;
  double threshold = 0.0;
  double impurity = 0.0;
};

// Weighted Gini (n * gini) of a two-class count pair.
double weighted_gini(double c0, double c1) {
  const double n = c0 + c1;
  return n > 0 ? n - (c0 * c0 + c1 * c1) / n : 0.0;
}

}  // namespace

DecisionTree train_tree(const TrainSet& train, uint64_t tree_seed, int max_features) {
  const size_t n = train.size();
  const size_t dims = train.rows.empty() ? 0 : train.rows[0].size();
  std::mt19937_64 rng(mix_seed(tree_seed, 0x7ee5));
  std::vector<size_t> samples(n);
  for (auto& s : samples) s = uniform_index(rng, n);

  DecisionTree tree;
  struct Work {
    int32_t node;
    size_t begin, end;
  };
  std::vector<Work> stack;
  tree.nodes.emplace_back();
  stack.push_back({0, 0, n});
  std::vector<int> features(dims);
  std::vector<std::pair<double, int>> buf;
  buf.reserve(n);

  while (!stack.empty()) {
    const Work w = stack.back();
    stack.pop_back();
    uint32_t c[2] = {0, 0};
    for (size_t i = w.begin; i < w.end; ++i) ++c[train.labels[samples[i]]];
    tree.nodes[w.node].count0 = c[0];
    tree.nodes[w.node].count1 = c[1];
    const size_t m = w.end - w.begin;
    if (m < 2 || c[0] == 0 || c[1] == 0) continue;

    std::iota(features.begin(), features.end(), 0);
    Split best;
    best.impurity = std::numeric_limits<double>::infinity();
    int tried = 0;
    for (size_t k = 0; k < dims; ++k) {
      if (tried >= max_features && best.feature >= 0) break;
      std::swap(features[k], features[k + uniform_index(rng, dims - k)]);
      const int f = features[k];
      ++tried;
      buf.clear();
      for (size_t i = w.begin; i < w.end; ++i)
        buf.emplace_back(train.rows[samples[i]][f], train.labels[samples[i]]);
      std::sort(buf.begin(), buf.end());
      if (buf.front().first == buf.back().first) continue;
      double l[2] = {0, 0};
      for (size_t i = 0; i + 1 < m; ++i) {
        l[buf[i].second] += 1;
        if (buf[i].first == buf[i + 1].first) continue;
        const double imp = weighted_gini(l[0], l[1]) + weighted_gini(c[0] - l[0], c[1] - l[1]);
        if (imp < best.impurity) {
          double thr = 0.5 * (buf[i].first + buf[i + 1].first);
          if (!(thr < buf[i + 1].first)) thr = buf[i].first;
          best = {f, thr, imp};
        }
      }
    }
    if (best.feature < 0) continue;  // every feature constant in this node

    auto mid = std::partition(samples.begin() + w.begin, samples.begin() + w.end,
                              [&](size_t s) { return train.rows[s][best.feature] <= best.threshold; });
    const size_t split = static_cast<size_t>(mid - samples.begin());
    const auto left = static_cast<int32_t>(tree.nodes.size());
    tree.nodes.emplace_back();
    tree.nodes.emplace_back();
    TreeNode& node = tree.nodes[w.node];
    node.feature = best.feature;
    node.threshold = best.threshold;
    node.left = left;
    node.right = left + 1;
    stack.push_back({left + 1, split, w.end});
    stack.push_back({left, w.begin, split});
  }
  return tree;
}

namespace {

void check_forest_input(const TrainSet& train, int trees) {
  train.validate();
  if (trees < 1) throw Error(ErrorCode::kConfig, "forest needs at least one tree");
  size_t count[2] = {0, 0};
  for (int l : train.labels) ++count[l];
  if (count[0] < 2 || count[1] < 2)
    throw Error(ErrorCode::kValidation, "random forest needs >= 2 rows per class");
}

}  // namespace

RandomForestModel train_random_forest(const TrainSet& train, int trees, uint64_t seed) {
  check_forest_input(train, trees);
  RandomForestModel model;
  model.n_features = train.rows[0].size();
  model.seed = seed;
  model.trees.resize(trees);
  const int mtry = default_max_features(model.n_features);
#pragma omp parallel for schedule(dynamic)
  for (int t = 0; t < trees; ++t)
    model.trees[t] = train_tree(train, seed ^ static_cast<uint64_t>(t), mtry);
  return model;
}

// --- logistic baseline ------------------------------------------------------

namespace {

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// log(1 + exp(z)) without overflow
double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

}  // namespace

Posterior LogisticModel::classify(std::span<const double> row) const {
  if (row.size() != weights.size())
    throw Error(ErrorCode::kValidation, "row has " + std::to_string(row.size()) +
                                            " features, model expects " +
                                            std::to_string(weights.size()));
  double z = bias;
  for (size_t k = 0; k < weights.size(); ++k) {
    const double m = mean.empty() ? 0.0 : mean[k];
    const double s = scale.empty() ? 1.0 : scale[k];
    z += weights[k] * (row[k] - m) / s;
  }
  const double p1 = sigmoid(z);
  return {1.0 - p1, p1};
}

LossGrad logistic_loss_grad(std::span<const double> weights, double bias,
                            const std::vector<std::vector<double>>& rows,
                            const std::vector<int>& labels, double l2) {
  const size_t n = rows.size(), d = weights.size();
  LossGrad out;
  out.grad_w.assign(d, 0.0);
  for (size_t i = 0; i < n; ++i) {
    double z = bias;
    for (size_t k = 0; k < d; ++k) z += weights[k] * rows[i][k];
    const int y = labels[i];
    // -[y log s(z) + (1-y) log(1-s(z))] = softplus(z) - y z
    out.loss += softplus(z) - y * z;
    const double r = sigmoid(z) - y;
    for (size_t k = 0; k < d; ++k) out.grad_w[k] += r * rows[i][k];
    out.grad_b += r;
  }
  const double inv = n > 0 ? 1.0 / n : 0.0;
  out.loss *= inv;
  out.grad_b *= inv;
  double wsq = 0.0;
  for (size_t k = 0; k < d; ++k) {
    out.grad_w[k] = out.grad_w[k] * inv + l2 * weights[k];
    wsq += weights[k] * weights[k];
  }
  out.loss += 0.5 * l2 * wsq;
  return out;
}

LogisticModel train_logistic(const TrainSet& train, const LogisticConfig& config,
                             std::vector<double>* loss_history) {
  train.validate();
  if (train.size() == 0) throw Error(ErrorCode::kValidation, "empty train set");
  if (config.epochs < 0 || !(config.rate > 0.0))
    throw Error(ErrorCode::kConfig, "logistic epochs/rate out of range");
  const size_t n = train.size(), d = train.rows[0].size();

  LogisticModel model;
  model.mean.assign(d, 0.0);
  model.scale.assign(d, 1.0);
  for (size_t k = 0; k < d; ++k) {
    double s = 0.0;
    for (size_t i = 0; i < n; ++i) s += train.rows[i][k];
    model.mean[k] = s / n;
    double ss = 0.0;
    for (size_t i = 0; i < n; ++i) ss += (train.rows[i][k] - model.mean[k]) * (train.rows[i][k] - model.mean[k]);
    const double sd = std::sqrt(ss / n);
    model.scale[k] = sd > 1e-12 ? sd : 1.0;
  }
  std::vector<std::vector<double>> x(n, std::vector<double>(d));
  for (size_t i = 0; i < n; ++i)
    for (size_t k = 0; k < d; ++k) x[i][k] = (train.rows[i][k] - model.mean[k]) / model.scale[k];

  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> init(0.0, 0.01);
  model.weights.resize(d);
  for (auto& w : model.weights) w = init(rng);
  model.bias = 0.0;

  auto check = [&](double loss, int epoch) {
    if (!std::isfinite(loss))
      throw Error(ErrorCode::kNumeric, "logistic loss became non-finite at epoch " +
                                           std::to_string(epoch) + " (rate " +
                                           std::to_string(config.rate) + ")");
  };
  LossGrad cur = logistic_loss_grad(model.weights, model.bias, x, train.labels, config.l2);
  check(cur.loss, 0);
  if (loss_history) loss_history->assign(1, cur.loss);
  double rate = config.rate;
  std::vector<double> w_next(d);
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    for (;;) {
      for (size_t k = 0; k < d; ++k) w_next[k] = model.weights[k] - rate * cur.grad_w[k];
      const double b_next = model.bias - rate * cur.grad_b;
      LossGrad next = logistic_loss_grad(w_next, b_next, x, train.labels, config.l2);
      check(next.loss, epoch);
      if (next.loss <= cur.loss || rate < 1e-12) {
        if (next.loss <= cur.loss) {
          model.weights = w_next;
          model.bias = b_next;
          cur = std::move(next);
        }
        break;
      }
      rate *= 0.5;
    }
    if (loss_history) loss_history->push_back(cur.loss);
  }
  return model;
}

const std::vector<std::string>& patch_descriptor_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> v;
    for (int b = 0; b < 12; ++b) v.push_back("hist_b" + std::to_string(b));
    for (int b = 0; b < 10; ++b) v.push_back("lbp_r1_p8_b" + std::to_string(b));
    v.insert(v.end(), {"gradient_energy", "skewness", "kurtosis", "bright_fraction",
                       "dark_fraction"});
    return v;
  }();
  return names;
}

std::vector<double> patch_descriptor(const Patch& whitened) {
  const auto& v = whitened.values;
  const int n = whitened.size;
  std::vector<double> out;
  out.reserve(patch_descriptor_names().size());
  std::vector<double> hist(12, 0.0);
  double m3 = 0, m4 = 0, bright = 0, dark = 0;
  for (double x : v) {
    const int b = std::clamp(static_cast<int>(std::floor((x + 3.0) / 0.5)), 0, 11);
    hist[b] += 1.0;
    m3 += x * x * x;
    m4 += x * x * x * x;
    bright += x > 1.5;
    dark += x < -1.5;
  }
  const double cnt = static_cast<double>(v.size());
  for (double& h : hist) h /= cnt;
  out.insert(out.end(), hist.begin(), hist.end());
  const auto lbp = lbp_histogram(whitened, 1, 8);
  out.insert(out.end(), lbp.begin(), lbp.end());
  double grad = 0.0;
  for (int y = 0; y + 1 < n; ++y)
    for (int x = 0; x + 1 < n; ++x)
      grad += std::abs(whitened.at(x + 1, y) - whitened.at(x, y)) +
              std::abs(whitened.at(x, y + 1) - whitened.at(x, y));
  out.push_back(n > 1 ? grad / (2.0 * (n - 1) * (n - 1)) : 0.0);
  out.push_back(m3 / cnt);
  out.push_back(m4 / cnt);
  out.push_back(bright / cnt);
  out.push_back(dark / cnt);
  return out;
}

// --- model files ---------------------------------------------------------

const ProbabilisticClassifier& ModelFile::classifier() const {
  return std::visit([](const auto& m) -> const ProbabilisticClassifier& { return m; }, model);
}

namespace {

constexpr uint32_t kModelVersion = 1;
constexpr uint32_t kKindForest = 1;
constexpr uint32_t kKindLogistic = 2;

class Writer {
 public:
  void u32(uint32_t v) { put(v, 4); }
  void i32(int32_t v) { put(static_cast<uint32_t>(v), 4); }
  void u64(uint64_t v) { put(v, 8); }
  void f64(double v) {
    uint64_t bits;
    std::memcpy(&bits, &v, 8);
    put(bits, 8);
  }
  void bytes(std::string_view s) { out_.append(s); }
  std::string take() { return std::move(out_); }

 private:
  void put(uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view in) : in_(in) {}
  uint32_t u32() { return static_cast<uint32_t>(get(4)); }
  int32_t i32() { return static_cast<int32_t>(static_cast<uint32_t>(get(4))); }
  uint64_t u64() { return get(8); }
  double f64() {
    const uint64_t bits = get(8);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }
  std::string bytes(size_t n) {
    need(n);
    std::string s(in_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  void need(size_t n) {
    if (in_.size() - pos_ < n)
      throw Error(ErrorCode::kFormat, "model file truncated at byte " + std::to_string(pos_));
  }
  uint64_t get(int n) {
    need(n);
    uint64_t v = 0;
    for (int i = 0; i < n; ++i)
      v |= static_cast<uint64_t>(static_cast<unsigned char>(in_[pos_ + i])) << (8 * i);
    pos_ += n;
    return v;
  }
  std::string_view in_;
  size_t pos_ = 0;
};

}  // namespace

std::string serialize_model(const ModelFile& file) {
  Writer w;
  w.bytes("CLEF");
  w.u32(kModelVersion);
  w.u32(std::holds_alternative<RandomForestModel>(file.model) ? kKindForest : kKindLogistic);
  w.u64(file.seed);
  w.u32(static_cast<uint32_t>(file.method.size()));
  w.bytes(file.method);
  if (const auto* rf = std::get_if<RandomForestModel>(&file.model)) {
    w.u32(static_cast<uint32_t>(rf->n_features));
    w.u32(static_cast<uint32_t>(rf->trees.size()));
    for (const auto& t : rf->trees) {
      w.u32(static_cast<uint32_t>(t.nodes.size()));
      for (const auto& nd : t.nodes) {
        w.i32(nd.feature);
        w.f64(nd.threshold);
        w.i32(nd.left);
        w.i32(nd.right);
        w.u32(nd.count0);
        w.u32(nd.count1);
      }
    }
  } else {
    const auto& lm = std::get<LogisticModel>(file.model);
    w.u32(static_cast<uint32_t>(lm.weights.size()));
    w.f64(lm.bias);
    for (double v : lm.weights) w.f64(v);
    for (size_t k = 0; k < lm.weights.size(); ++k) w.f64(lm.mean.empty() ? 0.0 : lm.mean[k]);
    for (size_t k = 0; k < lm.weights.size(); ++k) w.f64(lm.scale.empty() ? 1.0 : lm.scale[k]);
  }
  return w.take();
}

ModelFile deserialize_model(std::string_view bytes) {
  Reader r(bytes);
  if (r.bytes(4) != "CLEF") throw Error(ErrorCode::kFormat, "model file: bad magic");
  const uint32_t version = r.u32();
  if (version != kModelVersion)
    throw Error(ErrorCode::kFormat, "model file: unsupported version " + std::to_string(version));
  const uint32_t kind = r.u32();
  ModelFile file;
  file.seed = r.u64();
  file.method = r.bytes(r.u32());
  if (kind == kKindForest) {
    RandomForestModel rf;
    rf.seed = file.seed;
    rf.n_features = r.u32();
    rf.trees.resize(r.u32());
    for (auto& t : rf.trees) {
      t.nodes.resize(r.u32());
      for (auto& nd : t.nodes) {
        nd.feature = r.i32();
        nd.threshold = r.f64();
        nd.left = r.i32();
        nd.right = r.i32();
        nd.count0 = r.u32();
        nd.count1 = r.u32();
        if (nd.feature >= static_cast<int32_t>(rf.n_features) ||
            (nd.feature >= 0 && (nd.left <= 0 || nd.right <= 0 ||
                                 nd.left >= static_cast<int32_t>(t.nodes.size()) ||
                                 nd.right >= static_cast<int32_t>(t.nodes.size()))))
          throw Error(ErrorCode::kFormat, "model file: corrupt tree node");
      }
      if (t.nodes.empty()) throw Error(ErrorCode::kFormat, "model file: empty tree");
    }
    file.model = std::move(rf);
  } else if (kind == kKindLogistic) {
    LogisticModel lm;
    const uint32_t d = r.u32();
    lm.bias = r.f64();
    lm.weights.resize(d);
    lm.mean.resize(d);
    lm.scale.resize(d);
    for (auto& v : lm.weights) v = r.f64();
    for (auto& v : lm.mean) v = r.f64();
    for (auto& v : lm.scale) v = r.f64();
    file.model = std::move(lm);
  } else {
    throw Error(ErrorCode::kFormat, "model file: unknown model kind " + std::to_string(kind));
  }
  if (!r.done()) throw Error(ErrorCode::kFormat, "model file: trailing bytes");
  return file;
}

void save_model(const ModelFile& file, const std::filesystem::path& path) {
  write_file(path, serialize_model(file));
}

ModelFile load_model(const std::filesystem::path& path) {
  return deserialize_model(read_file(path));
}

}  // namespace cle
