#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "cle/core.hpp"
#include "cle/patching.hpp"

namespace cle {

/// Class posterior pair [p(c=0), p(c=1)].
struct Posterior {
  double p0 = 0.5;
  double p1 = 0.5;
};

/// Anything that maps a feature row to a posterior pair.
class ProbabilisticClassifier {
 public:
  virtual ~ProbabilisticClassifier() = default;
  virtual Posterior classify(std::span<const double> row) const = 0;
  virtual size_t input_dims() const = 0;
};

/// Where a training row came from; eval uses this for the leakage audit.
struct RowProvenance {
  size_t record = 0;  // index into the (augmented) manifest
  std::string patient;
  bool augmented = false;
};

struct TrainSet {
  std::vector<std::vector<double>> rows;
  std::vector<int> labels;  // 0 normal, 1 carcinogenic
  std::vector<RowProvenance> provenance;

  size_t size() const { return rows.size(); }
  void push(std::vector<double> row, int label, RowProvenance prov);
  void validate() const;
};

/// Seeded 64-bit mixer used to derive independent streams.
uint64_t mix_seed(uint64_t a, uint64_t b);
/// FNV-1a, stable across platforms.
uint64_t stable_hash(std::string_view s);

// --- augmentation and balancing -------------------------------------------

/// Adds k rotated copies of every original record. Angles are uniform in
/// [0, 360) and derived from (seed, record key, copy index).
DatasetManifest augment_rotations(const DatasetManifest& manifest, int k, uint64_t seed);

struct BalanceStats {
  size_t removed_augmented = 0;
  size_t removed_original = 0;
  bool last_resort = false;  // original rows had to be dropped
};

/// Drops random augmented rows of the majority class until both classes have
/// equal counts, then random original majority rows if augmented rows ran out.
/// Surviving rows keep their relative order.
TrainSet balance_classes(const TrainSet& train, uint64_t seed, BalanceStats* stats = nullptr);

// --- random forest --------------------------------------------------------

struct TreeNode {
  int32_t feature = -1;  // -1 marks a leaf
  double threshold = 0.0;  // go left when x[feature] <= threshold
  int32_t left = -1;
  int32_t right = -1;
  uint32_t count0 = 0;
  uint32_t count1 = 0;

  bool is_leaf() const { return feature < 0; }
  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

struct DecisionTree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  /// Class-1 fraction of the leaf reached by `row`.
  double leaf_p1(std::span<const double> row) const;
  friend bool operator==(const DecisionTree&, const DecisionTree&) = default;
};

class RandomForestModel : public ProbabilisticClassifier {
 public:
  std::vector<DecisionTree> trees;
  size_t n_features = 0;
  uint64_t seed = 0;

  Posterior classify(std::span<const double> row) const override;
  size_t input_dims() const override { return n_features; }
};

/// Features tried per node: floor(sqrt(D)), at least 1.
int default_max_features(size_t dims);

/// Bootstrap sample, Gini splits over `max_features` random features per node,
/// grown until pure or fewer than 2 samples.
DecisionTree train_tree(const TrainSet& train, uint64_t tree_seed, int max_features);

/// Trees are trained in parallel; tree t uses seed ^ t, so the result does
/// not depend on the thread count.
RandomForestModel train_random_forest(const TrainSet& train, int trees, uint64_t seed);

Posterior predict_proba(const RandomForestModel& model, std::span<const double> row);

// --- logistic baseline ------------------------------------------------------

class LogisticModel : public ProbabilisticClassifier {
 public:
  std::vector<double> weights;
  double bias = 0.0;
  std::vector<double> mean;   // input standardisation
  std::vector<double> scale;

  Posterior classify(std::span<const double> row) const override;
  size_t input_dims() const override { return weights.size(); }
};

struct LogisticConfig {
  int epochs = 300;
  double rate = 0.5;
  double l2 = 1e-4;
  uint64_t seed = 0;
};

struct LossGrad {
  double loss = 0.0;
  std::vector<double> grad_w;
  double grad_b = 0.0;
};

/// Mean cross-entropy plus l2/2 * |w|^2 and its analytic gradient.
LossGrad logistic_loss_grad(std::span<const double> weights, double bias,
                            const std::vector<std::vector<double>>& rows,
                            const std::vector<int>& labels, double l2);

/// Full-batch gradient descent with step halving whenever the loss would
/// rise, so the recorded loss never increases.
LogisticModel train_logistic(const TrainSet& train, const LogisticConfig& config,
                             std::vector<double>* loss_history = nullptr);

/// Fixed encoder feeding the logistic patch classifier: whitened intensity
/// histogram, riu2 LBP(1,8) histogram, gradient energy, skewness, kurtosis and
/// tail fractions.
std::vector<double> patch_descriptor(const Patch& whitened);
const std::vector<std::string>& patch_descriptor_names();

// --- model files ---------------------------------------------------------

struct ModelFile {
  std::string method;
  uint64_t seed = 0;
  std::variant<RandomForestModel, LogisticModel> model;

  const ProbabilisticClassifier& classifier() const;
};

std::string serialize_model(const ModelFile& file);
ModelFile deserialize_model(std::string_view bytes);
void save_model(const ModelFile& file, const std::filesystem::path& path);
ModelFile load_model(const std::filesystem::path& path);

}  // namespace cle
