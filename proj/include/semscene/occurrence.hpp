#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "semscene/ingest.hpp"

namespace semscene {

// Ascending grid theta_min, theta_min + step, ... not exceeding theta_max.
class ThresholdGrid {
 public:
  ThresholdGrid(double theta_min = 0.0, double theta_max = 1.0, double step = 0.05);

  double theta_min() const { return min_; }
  double theta_max() const { return max_; }
  double step() const { return step_; }
  std::size_t size() const { return count_; }
  double value(std::size_t t) const { return min_ + static_cast<double>(t) * step_; }
  std::vector<double> values() const;

  // Grid index nearest to the score after clamping it into the grid range.
  // A score equidistant from two points maps to the lower one.
  std::size_t nearest_index(double score) const;

  bool operator==(const ThresholdGrid&) const = default;

 private:
  double min_, max_, step_;
  std::size_t count_;
};

// Dense [objects x classes x thresholds] array, threshold axis fastest.
struct Tensor3 {
  std::size_t objects = 0, classes = 0, thresholds = 0;
  std::vector<double> data;

  Tensor3() = default;
  Tensor3(std::size_t o, std::size_t c, std::size_t t) : objects(o), classes(c), thresholds(t), data(o * c * t, 0.0) {}

  double& at(std::size_t o, std::size_t c, std::size_t t) { return data[(o * classes + c) * thresholds + t]; }
  double at(std::size_t o, std::size_t c, std::size_t t) const { return data[(o * classes + c) * thresholds + t]; }
  bool operator==(const Tensor3&) const = default;
};

struct OccurrenceModel {
  ThresholdGrid grid;
  ObjectVocabulary vocabulary;
  SceneClassSet classes;
  Tensor3 probs;  // p(o | c; theta)
};

struct ClassPrior {
  std::vector<double> weights;

  static ClassPrior uniform(std::size_t classes);
  static ClassPrior empirical(const DatasetManifest& train);
  static ClassPrior one_hot(std::size_t classes, std::size_t hot);
  void validate(std::size_t classes) const;
  bool operator==(const ClassPrior&) const = default;
};

enum class FallbackRule { Prior, LastValid };
enum class Aggregation { Max, Mean };

std::string_view to_string(FallbackRule rule);
std::string_view to_string(Aggregation agg);
FallbackRule fallback_rule_from_string(std::string_view s);
Aggregation aggregation_from_string(std::string_view s);

struct PosteriorModel {
  ThresholdGrid grid;
  ObjectVocabulary vocabulary;
  SceneClassSet classes;
  Tensor3 posteriors;  // p(c | o; theta)
  ClassPrior prior;
  FallbackRule fallback = FallbackRule::Prior;
  std::vector<char> fallback_mask;  // [objects x thresholds]; 1 where no class had any occurrence

  bool is_fallback(std::size_t o, std::size_t t) const { return fallback_mask[o * grid.size() + t] != 0; }
  // Class posterior column for (o, t), length |classes|.
  std::vector<double> column(std::size_t o, std::size_t t) const;
};

struct DiscriminantSelection {
  std::vector<double> scores;        // aggregated discriminant power per object
  std::vector<std::size_t> selected; // best first
  Aggregation aggregation = Aggregation::Max;
  bool operator==(const DiscriminantSelection&) const = default;
};

OccurrenceModel build_occurrence_model(const DatasetManifest& train, const ThresholdGrid& grid);

PosteriorModel build_posterior_model(const OccurrenceModel& oom, const ClassPrior& prior,
                                     FallbackRule rule = FallbackRule::Prior);

// Largest gap between consecutive class posteriors ranked in descending
// order. Works on any probability column.
double max_ranked_gap(std::span<const double> column);

double discriminability_at(const PosteriorModel& post, std::size_t object_index, std::size_t theta_index);

DiscriminantSelection select_objects(const PosteriorModel& post, std::size_t count,
                                     Aggregation aggregation = Aggregation::Max);

std::vector<double> posterior_at_score(const PosteriorModel& post, std::size_t object_index, double score);

}  // namespace semscene
