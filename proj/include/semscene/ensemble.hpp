#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "semscene/topics.hpp"

namespace semscene {

struct LinearClassifier {
  Vector weights;
  double bias = 0;

  double decision(std::span<const double> x) const;
  // Constant classifier returning `value` for every input.
  static LinearClassifier constant(std::size_t dim, double value) { return {Vector(dim, 0.0), value}; }
  bool operator==(const LinearClassifier&) const = default;
};

struct SgdConfig {
  double lambda = 1e-4;
  double eta0 = 0.1;
  std::size_t epochs = 30;
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const SgdConfig&) const = default;
};

std::vector<SgdConfig> default_sgd_grid(std::uint64_t seed = 0);

// (lambda/2)|w|^2 + mean hinge loss; labels are +1 / -1.
double svm_objective(const LinearClassifier& clf, const std::vector<Vector>& x, std::span<const int> y,
                     double lambda);

struct SgdTrace {
  std::vector<double> objectives;  // index 0: w = 0, b = 0; then one per epoch
};

// Hinge-loss SGD with step eta0 / (1 + eta0 * lambda * t) over seeded
// shuffled epochs. The bias is not regularized. Returns the epoch-end
// iterate with the lowest training objective, the zero start included.
LinearClassifier train_binary(const std::vector<Vector>& positives, const std::vector<Vector>& negatives,
                              const SgdConfig& cfg, SgdTrace* trace = nullptr);

// Same, on a labeled set (labels +1 / -1, both present).
LinearClassifier train_labeled(const std::vector<Vector>& x, std::span<const int> y, const SgdConfig& cfg,
                               SgdTrace* trace = nullptr);

struct LabeledSet {
  std::vector<Vector> x;
  std::vector<std::size_t> y;  // class index
  std::size_t classes = 0;
};

// One-vs-rest classifiers for every class, with the constant decisions of
// a degenerate slot when a class has no positives (-1) or no negatives (+1).
std::vector<LinearClassifier> train_one_vs_rest(const LabeledSet& data, const SgdConfig& cfg);

struct CvResult {
  SgdConfig best;
  std::vector<double> mean_accuracy;  // one per grid entry
};

// Stratified k-fold selection by mean validation accuracy; the first grid
// entry wins ties.
CvResult cross_validate(const LabeledSet& data, const std::vector<SgdConfig>& grid, std::size_t folds);

std::size_t argmax_lowest(std::span<const double> scores);

struct TopicMeta {
  std::size_t samples = 0;
  SgdConfig config;
  bool cross_validated = false;
  std::vector<char> degenerate;  // per class
  bool operator==(const TopicMeta&) const = default;
};

struct TopicEnsemble {
  KMeansModel topics;
  std::size_t classes = 0;
  std::vector<LinearClassifier> classifiers;  // [class * topics + topic]
  std::vector<TopicMeta> meta;                // per topic

  std::size_t topic_count() const { return topics.centroids.size(); }
  const LinearClassifier& at(std::size_t c, std::size_t d) const { return classifiers[c * topic_count() + d]; }
  bool operator==(const TopicEnsemble&) const = default;
};

struct EnsembleOptions {
  std::vector<SgdConfig> grid = default_sgd_grid();
  std::size_t folds = 5;
  bool global_cv = false;
};

TopicEnsemble train_ensemble(const LabeledSet& data, const KMeansModel& topics, const EnsembleOptions& opts);

struct Prediction {
  std::size_t label = 0;
  std::vector<double> scores;
};

// Sum over topics of each class's decision value.
Prediction predict(const TopicEnsemble& ens, std::span<const double> descriptor);
// Max over topics, kept for comparison against average pooling.
Prediction predict_max_pool(const TopicEnsemble& ens, std::span<const double> descriptor);

}  // namespace semscene
