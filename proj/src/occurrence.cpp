#include "semscene/occurrence.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "semscene/error.hpp"
#include "semscene/parallel.hpp"

namespace semscene {

ThresholdGrid::ThresholdGrid(double theta_min, double theta_max, double step)
    : min_(theta_min), max_(theta_max), step_(step) {
  if (!std::isfinite(theta_min) || !std::isfinite(theta_max) || !std::isfinite(step))
    throw argument_error("threshold grid bounds must be finite");
  if (!(step > 0)) throw argument_error("threshold grid step must be positive");
  if (!(theta_min < theta_max)) throw argument_error("threshold grid needs theta_min < theta_max");
  // Tolerance absorbs representation error, e.g. (1.0 - 0.0) / 0.05 = 19.999...
  count_ = static_cast<std::size_t>(std::floor((theta_max - theta_min) / step + 1e-9)) + 1;
  if (count_ < 2) throw argument_error("threshold grid must have at least 2 points");
}

std::vector<double> ThresholdGrid::values() const {
  std::vector<double> v(count_);
  for (std::size_t t = 0; t < count_; ++t) v[t] = value(t);
  return v;
}

std::size_t ThresholdGrid::nearest_index(double score) const {
  if (std::isnan(score) || score <= min_) return 0;
  const std::size_t last = count_ - 1;
  if (score >= value(last)) return last;
  auto lo = static_cast<std::size_t>(std::floor((score - min_) / step_));
  lo = std::min(lo, last - 1);
  // floor can land one cell off when score sits on a grid point.
  if (score < value(lo)) --lo;
  else if (lo + 1 < last && score >= value(lo + 1)) ++lo;
  const double below = score - value(lo);
  const double above = value(lo + 1) - score;
  return above < below ? lo + 1 : lo;
}

ClassPrior ClassPrior::uniform(std::size_t classes) {
  if (classes == 0) throw argument_error("prior over zero classes");
  return {std::vector<double>(classes, 1.0 / static_cast<double>(classes))};
}

ClassPrior ClassPrior::empirical(const DatasetManifest& train) {
  std::vector<double> w(train.classes.size(), 0.0);
  double total = 0;
  for (const auto& r : train.records)
    if (r.scene_class) {
      w[*r.scene_class] += 1;
      total += 1;
    }
  if (total == 0) throw model_error("empirical prior needs labeled records");
  for (auto& x : w) x /= total;
  return {w};
}

ClassPrior ClassPrior::one_hot(std::size_t classes, std::size_t hot) {
  if (hot >= classes) throw argument_error("one-hot prior index out of range");
  std::vector<double> w(classes, 0.0);
  w[hot] = 1.0;
  return {w};
}

void ClassPrior::validate(std::size_t classes) const {
  if (weights.size() != classes) throw dimension_error("prior length does not match class count");
  double sum = 0;
  for (double w : weights) {
    if (!(w >= 0) || !std::isfinite(w)) throw argument_error("prior weights must be finite and non-negative");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw argument_error("prior weights must sum to 1");
}

std::string_view to_string(FallbackRule rule) { return rule == FallbackRule::Prior ? "prior" : "last-valid"; }
std::string_view to_string(Aggregation agg) { return agg == Aggregation::Max ? "max" : "mean"; }

FallbackRule fallback_rule_from_string(std::string_view s) {
  if (s == "prior") return FallbackRule::Prior;
  if (s == "last-valid") return FallbackRule::LastValid;
  throw argument_error("unknown fallback rule '" + std::string(s) + "'");
}

Aggregation aggregation_from_string(std::string_view s) {
  if (s == "max") return Aggregation::Max;
  if (s == "mean") return Aggregation::Mean;
  throw argument_error("unknown aggregation '" + std::string(s) + "'");
}

std::vector<double> PosteriorModel::column(std::size_t o, std::size_t t) const {
  std::vector<double> col(classes.size());
  for (std::size_t c = 0; c < col.size(); ++c) col[c] = posteriors.at(o, c, t);
  return col;
}

OccurrenceModel build_occurrence_model(const DatasetManifest& train, const ThresholdGrid& grid) {
  const std::size_t n_obj = train.vocabulary.size();
  const std::size_t n_cls = train.classes.size();
  const auto per_class = train.images_per_class();
  for (std::size_t c = 0; c < n_cls; ++c)
    if (per_class[c].empty()) throw model_error("scene class '" + train.classes.name(c) + "' has no training images");

  OccurrenceModel model{grid, train.vocabulary, train.classes, Tensor3(n_obj, n_cls, grid.size())};
  const auto thetas = grid.values();
  parallel_for(n_obj, [&](std::size_t o) {
    for (std::size_t c = 0; c < n_cls; ++c) {
      std::vector<std::size_t> counts(thetas.size(), 0);
      for (std::size_t idx : per_class[c]) {
        auto s = image_score(train.records[idx], o);
        if (!s) continue;
        // Indicator is monotone in theta, so stop at the first miss.
        for (std::size_t t = 0; t < thetas.size() && *s >= thetas[t]; ++t) ++counts[t];
      }
      const double n = static_cast<double>(per_class[c].size());
      for (std::size_t t = 0; t < thetas.size(); ++t)
        model.probs.at(o, c, t) = static_cast<double>(counts[t]) / n;
    }
  });
  return model;
}

PosteriorModel build_posterior_model(const OccurrenceModel& oom, const ClassPrior& prior, FallbackRule rule) {
  const std::size_t n_obj = oom.probs.objects, n_cls = oom.probs.classes, n_t = oom.probs.thresholds;
  prior.validate(n_cls);
  PosteriorModel post{oom.grid, oom.vocabulary, oom.classes, Tensor3(n_obj, n_cls, n_t), prior, rule,
                      std::vector<char>(n_obj * n_t, 0)};
  for (std::size_t o = 0; o < n_obj; ++o) {
    std::optional<std::size_t> last_valid;
    for (std::size_t t = 0; t < n_t; ++t) {
      double denom = 0;
      for (std::size_t c = 0; c < n_cls; ++c) denom += oom.probs.at(o, c, t) * prior.weights[c];
      if (denom > 0) {
        for (std::size_t c = 0; c < n_cls; ++c)
          post.posteriors.at(o, c, t) = oom.probs.at(o, c, t) * prior.weights[c] / denom;
        last_valid = t;
        continue;
      }
      post.fallback_mask[o * n_t + t] = 1;
      for (std::size_t c = 0; c < n_cls; ++c)
        post.posteriors.at(o, c, t) = (rule == FallbackRule::LastValid && last_valid)
                                          ? post.posteriors.at(o, c, *last_valid)
                                          : prior.weights[c];
    }
  }
  return post;
}

double max_ranked_gap(std::span<const double> column) {
  if (column.size() < 2) throw argument_error("discriminant power needs at least 2 classes");
  std::vector<double> ranked(column.begin(), column.end());
  std::sort(ranked.begin(), ranked.end(), std::greater<>());
  double best = 0;
  for (std::size_t r = 0; r + 1 < ranked.size(); ++r) best = std::max(best, ranked[r] - ranked[r + 1]);
  return best;
}

double discriminability_at(const PosteriorModel& post, std::size_t object_index, std::size_t theta_index) {
  if (post.classes.size() < 2) throw argument_error("discriminant power needs at least 2 classes");
  if (object_index >= post.vocabulary.size() || theta_index >= post.grid.size())
    throw argument_error("discriminability index out of range");
  if (post.is_fallback(object_index, theta_index)) return 0.0;
  auto col = post.column(object_index, theta_index);
  return max_ranked_gap(col);
}

DiscriminantSelection select_objects(const PosteriorModel& post, std::size_t count, Aggregation aggregation) {
  const std::size_t n_obj = post.vocabulary.size();
  if (count < 1 || count > n_obj)
    throw argument_error("object count " + std::to_string(count) + " outside [1, " + std::to_string(n_obj) + "]");
  DiscriminantSelection sel;
  sel.aggregation = aggregation;
  sel.scores.resize(n_obj);
  for (std::size_t o = 0; o < n_obj; ++o) {
    double acc = 0;
    for (std::size_t t = 0; t < post.grid.size(); ++t) {
      const double phi = discriminability_at(post, o, t);
      acc = aggregation == Aggregation::Max ? std::max(acc, phi) : acc + phi;
    }
    if (aggregation == Aggregation::Mean) acc /= static_cast<double>(post.grid.size());
    sel.scores[o] = acc;
  }
  std::vector<std::size_t> order(n_obj);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return sel.scores[a] > sel.scores[b]; });
  sel.selected.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(count));
  return sel;
}

std::vector<double> posterior_at_score(const PosteriorModel& post, std::size_t object_index, double score) {
  if (object_index >= post.vocabulary.size()) throw argument_error("object index out of range");
  return post.column(object_index, post.grid.nearest_index(score));
}

}  // namespace semscene
