#include "semscene/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "semscene/error.hpp"
#include "semscene/parallel.hpp"
#include "semscene/random.hpp"

namespace semscene {

double LinearClassifier::decision(std::span<const double> x) const {
  if (x.size() != weights.size())
    throw dimension_error("descriptor dimension " + std::to_string(x.size()) + " does not match classifier " +
                          std::to_string(weights.size()));
  double s = bias;
  for (std::size_t i = 0; i < x.size(); ++i) s += weights[i] * x[i];
  return s;
}

void SgdConfig::validate() const {
  if (!(lambda > 0) || !(eta0 > 0) || epochs < 1) throw argument_error("SGD config needs lambda > 0, eta0 > 0, epochs >= 1");
}

std::vector<SgdConfig> default_sgd_grid(std::uint64_t seed) {
  std::vector<SgdConfig> grid;
  for (double lambda : {1e-5, 1e-4, 1e-3})
    for (double eta0 : {0.1, 1.0}) grid.push_back({lambda, eta0, 30, seed});
  return grid;
}

double svm_objective(const LinearClassifier& clf, const std::vector<Vector>& x, std::span<const int> y,
                     double lambda) {
  double hinge = 0;
  for (std::size_t i = 0; i < x.size(); ++i) hinge += std::max(0.0, 1.0 - y[i] * clf.decision(x[i]));
  double norm2 = 0;
  for (double w : clf.weights) norm2 += w * w;
  return 0.5 * lambda * norm2 + hinge / static_cast<double>(x.size());
}

LinearClassifier train_labeled(const std::vector<Vector>& x, std::span<const int> y, const SgdConfig& cfg,
                               SgdTrace* trace) {
  cfg.validate();
  if (x.empty() || x.size() != y.size()) throw argument_error("SGD needs matching non-empty samples and labels");
  const bool has_pos = std::find(y.begin(), y.end(), 1) != y.end();
  const bool has_neg = std::find(y.begin(), y.end(), -1) != y.end();
  if (!has_pos || !has_neg) throw model_error("degenerate training: both positive and negative samples required");
  const std::size_t dim = x.front().size();

  LinearClassifier clf{Vector(dim, 0.0), 0.0};
  LinearClassifier best = clf;
  double best_obj = svm_objective(clf, x, y, cfg.lambda);
  if (trace) trace->objectives = {best_obj};

  // w is stored as scale * v so the shrink step is O(1).
  Vector v(dim, 0.0);
  double scale = 1.0, bias = 0.0;
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(cfg.seed);
  double t = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t i : order) {
      const double eta = cfg.eta0 / (1.0 + cfg.eta0 * cfg.lambda * t);
      const auto& xi = x[i];
      double dot = 0;
      for (std::size_t j = 0; j < dim; ++j) dot += v[j] * xi[j];
      const double margin = y[i] * (scale * dot + bias);
      scale *= 1.0 - eta * cfg.lambda;
      if (margin < 1.0) {
        const double step = eta * y[i] / scale;
        for (std::size_t j = 0; j < dim; ++j) v[j] += step * xi[j];
        bias += eta * y[i];
      }
      if (scale < 1e-9) {
        for (auto& vj : v) vj *= scale;
        scale = 1.0;
      }
      t += 1;
    }
    for (std::size_t j = 0; j < dim; ++j) clf.weights[j] = scale * v[j];
    clf.bias = bias;
    const double obj = svm_objective(clf, x, y, cfg.lambda);
    if (trace) trace->objectives.push_back(obj);
    if (obj < best_obj) {
      best_obj = obj;
      best = clf;
    }
  }
  return best;
}

LinearClassifier train_binary(const std::vector<Vector>& positives, const std::vector<Vector>& negatives,
                              const SgdConfig& cfg, SgdTrace* trace) {
  if (positives.empty() || negatives.empty())
    throw model_error("degenerate training: both positive and negative samples required");
  std::vector<Vector> x(positives);
  x.insert(x.end(), negatives.begin(), negatives.end());
  std::vector<int> y(positives.size(), 1);
  y.resize(x.size(), -1);
  return train_labeled(x, y, cfg, trace);
}

std::vector<LinearClassifier> train_one_vs_rest(const LabeledSet& data, const SgdConfig& cfg) {
  const std::size_t dim = data.x.empty() ? 0 : data.x.front().size();
  std::vector<LinearClassifier> out(data.classes);
  parallel_for(data.classes, [&](std::size_t c) {
    std::vector<int> y(data.y.size());
    std::size_t pos = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
      y[i] = data.y[i] == c ? 1 : -1;
      pos += data.y[i] == c;
    }
    if (pos == 0) out[c] = LinearClassifier::constant(dim, -1.0);
    else if (pos == y.size()) out[c] = LinearClassifier::constant(dim, 1.0);
    else {
      SgdConfig per_class = cfg;
      per_class.seed = Rng::derive(cfg.seed, c);
      out[c] = train_labeled(data.x, y, per_class);
    }
  });
  return out;
}

std::size_t argmax_lowest(std::span<const double> scores) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i)
    if (scores[i] > scores[best]) best = i;
  return best;
}

CvResult cross_validate(const LabeledSet& data, const std::vector<SgdConfig>& grid, std::size_t folds) {
  if (grid.empty()) throw argument_error("cross-validation grid is empty");
  if (folds < 2) throw argument_error("cross-validation needs at least 2 folds");
  if (data.x.size() < folds) throw argument_error("fewer samples than folds");

  // Stratified round-robin: each class's samples are dealt across folds in order.
  std::vector<std::size_t> fold_of(data.x.size());
  std::vector<std::size_t> dealt(data.classes, 0);
  std::size_t offset = 0;
  for (std::size_t c = 0; c < data.classes; ++c) {
    for (std::size_t i = 0; i < data.x.size(); ++i)
      if (data.y[i] == c) fold_of[i] = (offset + dealt[c]++) % folds;
    offset += dealt[c];  // continue dealing where the previous class stopped
  }

  CvResult result;
  result.mean_accuracy.assign(grid.size(), 0.0);
  std::vector<double> fold_acc(grid.size() * folds, 0.0);
  parallel_for(grid.size() * folds, [&](std::size_t job) {
    const std::size_t g = job / folds, f = job % folds;
    LabeledSet train{{}, {}, data.classes};
    std::vector<std::size_t> held;
    for (std::size_t i = 0; i < data.x.size(); ++i) {
      if (fold_of[i] == f) held.push_back(i);
      else {
        train.x.push_back(data.x[i]);
        train.y.push_back(data.y[i]);
      }
    }
    if (held.empty() || train.x.empty()) return;
    auto clfs = train_one_vs_rest(train, grid[g]);
    std::size_t correct = 0;
    std::vector<double> scores(data.classes);
    for (std::size_t i : held) {
      for (std::size_t c = 0; c < data.classes; ++c) scores[c] = clfs[c].decision(data.x[i]);
      correct += argmax_lowest(scores) == data.y[i];
    }
    fold_acc[job] = static_cast<double>(correct) / static_cast<double>(held.size());
  });
  for (std::size_t g = 0; g < grid.size(); ++g) {
    double s = 0;
    for (std::size_t f = 0; f < folds; ++f) s += fold_acc[g * folds + f];
    result.mean_accuracy[g] = s / static_cast<double>(folds);
  }
  result.best = grid[argmax_lowest(result.mean_accuracy)];
  return result;
}

TopicEnsemble train_ensemble(const LabeledSet& data, const KMeansModel& topics, const EnsembleOptions& opts) {
  if (opts.grid.empty()) throw argument_error("hyperparameter grid is empty");
  if (data.x.empty()) throw argument_error("no training descriptors");
  const std::size_t D = topics.centroids.size(), dim = data.x.front().size();
  if (dim != topics.dim()) throw dimension_error("descriptors do not match the topic model dimension");

  std::vector<LabeledSet> parts(D, LabeledSet{{}, {}, data.classes});
  for (std::size_t i = 0; i < data.x.size(); ++i) {
    auto& p = parts[assign_topic(topics, data.x[i]).topic_index];
    p.x.push_back(data.x[i]);
    p.y.push_back(data.y[i]);
  }

  auto can_cv = [&](const LabeledSet& s) {
    std::vector<char> seen(s.classes, 0);
    for (auto y : s.y) seen[y] = 1;
    return s.x.size() >= opts.folds && std::count(seen.begin(), seen.end(), 1) >= 2;
  };

  SgdConfig global = opts.grid.front();
  bool global_done = false;
  if (opts.global_cv && opts.grid.size() > 1 && can_cv(data)) {
    global = cross_validate(data, opts.grid, opts.folds).best;
    global_done = true;
  }

  TopicEnsemble ens;
  ens.topics = topics;
  ens.classes = data.classes;
  ens.classifiers.resize(data.classes * D);
  ens.meta.resize(D);
  for (std::size_t d = 0; d < D; ++d) {
    const auto& part = parts[d];
    TopicMeta& meta = ens.meta[d];
    meta.samples = part.x.size();
    meta.degenerate.assign(data.classes, 0);
    if (opts.global_cv) {
      meta.config = global;
      meta.cross_validated = global_done;
    } else if (opts.grid.size() > 1 && can_cv(part)) {
      meta.config = cross_validate(part, opts.grid, opts.folds).best;
      meta.cross_validated = true;
    } else {
      meta.config = opts.grid.front();
    }
    SgdConfig cfg = meta.config;
    cfg.seed = Rng::derive(meta.config.seed, 1000 + d);
    std::vector<LinearClassifier> clfs;
    if (part.x.empty()) {
      clfs.assign(data.classes, LinearClassifier::constant(dim, -1.0));
    } else {
      clfs = train_one_vs_rest(part, cfg);
    }
    std::vector<std::size_t> pos(data.classes, 0);
    for (auto y : part.y) ++pos[y];
    for (std::size_t c = 0; c < data.classes; ++c) {
      meta.degenerate[c] = pos[c] == 0 || pos[c] == part.x.size();
      ens.classifiers[c * D + d] = std::move(clfs[c]);
    }
  }
  return ens;
}

namespace {

Prediction pooled(const TopicEnsemble& ens, std::span<const double> x, bool use_max) {
  const std::size_t D = ens.topic_count();
  Prediction p;
  p.scores.resize(ens.classes);
  for (std::size_t c = 0; c < ens.classes; ++c) {
    double acc = use_max ? -std::numeric_limits<double>::infinity() : 0.0;
    for (std::size_t d = 0; d < D; ++d) {
      const double f = ens.at(c, d).decision(x);
      acc = use_max ? std::max(acc, f) : acc + f;
    }
    p.scores[c] = acc;
  }
  p.label = argmax_lowest(p.scores);
  return p;
}

}  // namespace

Prediction predict(const TopicEnsemble& ens, std::span<const double> descriptor) {
  return pooled(ens, descriptor, false);
}

Prediction predict_max_pool(const TopicEnsemble& ens, std::span<const double> descriptor) {
  return pooled(ens, descriptor, true);
}

}  // namespace semscene
