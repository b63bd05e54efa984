#include "semscene/topics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "semscene/error.hpp"
#include "semscene/parallel.hpp"
#include "semscene/random.hpp"

namespace semscene {

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

namespace {

struct Nearest {
  std::size_t index;
  double sq;
};

Nearest nearest(const std::vector<Vector>& centroids, std::span<const double> x) {
  Nearest best{0, std::numeric_limits<double>::infinity()};
  for (std::size_t k = 0; k < centroids.size(); ++k) {
    const double d = squared_distance(centroids[k], x);
    if (d < best.sq) best = {k, d};
  }
  return best;
}

std::vector<Vector> seed_plus_plus(const std::vector<Vector>& pts, std::size_t k, Rng& rng) {
  std::vector<Vector> centers;
  centers.push_back(pts[rng.index(pts.size())]);
  std::vector<double> d2(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) d2[i] = squared_distance(pts[i], centers[0]);
  while (centers.size() < k) {
    double total = 0;
    for (double v : d2) total += v;
    std::size_t pick = 0;
    if (total > 0) {
      double r = rng.uniform() * total;
      pick = pts.size() - 1;
      for (std::size_t i = 0; i < pts.size(); ++i) {
        if (d2[i] <= 0) continue;
        r -= d2[i];
        if (r < 0) {
          pick = i;
          break;
        }
      }
      while (d2[pick] <= 0) --pick;  // r landed past the tail through rounding
    } else {
      pick = rng.index(pts.size());  // every point coincides with a center
    }
    centers.push_back(pts[pick]);
    for (std::size_t i = 0; i < pts.size(); ++i) d2[i] = std::min(d2[i], squared_distance(pts[i], centers.back()));
  }
  return centers;
}

}  // namespace

KMeansModel fit_kmeans(const std::vector<Vector>& points, const KMeansOptions& opts) {
  if (opts.clusters < 1) throw argument_error("k-means needs at least one cluster");
  if (opts.clusters > points.size())
    throw argument_error("k-means with " + std::to_string(opts.clusters) + " clusters on " +
                         std::to_string(points.size()) + " samples");
  const std::size_t dim = points.front().size();
  for (const auto& p : points)
    if (p.size() != dim) throw dimension_error("k-means samples differ in dimension");

  Rng rng(opts.seed);
  KMeansModel model;
  model.seed = opts.seed;
  model.centroids = seed_plus_plus(points, opts.clusters, rng);

  const std::size_t n = points.size(), k = opts.clusters;
  std::vector<Nearest> assign(n);
  auto assign_all = [&] {
    parallel_for(n, [&](std::size_t i) { assign[i] = nearest(model.centroids, points[i]); });
    double inertia = 0;
    for (const auto& a : assign) inertia += a.sq;
    return inertia;
  };

  double inertia = assign_all();
  model.inertia_history.push_back(inertia);
  for (std::size_t iter = 0; iter < opts.max_iter; ++iter) {
    std::vector<Vector> sums(k, Vector(dim, 0.0));
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      auto& s = sums[assign[i].index];
      for (std::size_t j = 0; j < dim; ++j) s[j] += points[i][j];
      ++counts[assign[i].index];
    }
    std::vector<char> taken(n, 0);
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] > 0) {
        for (std::size_t j = 0; j < dim; ++j) model.centroids[c][j] = sums[c][j] / static_cast<double>(counts[c]);
        continue;
      }
      // Empty cluster: move it onto the worst-served point not already used.
      std::size_t far = n;
      for (std::size_t i = 0; i < n; ++i)
        if (!taken[i] && (far == n || assign[i].sq > assign[far].sq)) far = i;
      taken[far] = 1;
      model.centroids[c] = points[far];
      assign[far].sq = 0;
    }
    const double next = assign_all();
    model.inertia_history.push_back(next);
    model.iterations_run = iter + 1;
    const double improvement = inertia - next;
    inertia = next;
    if (improvement <= opts.tol * std::max(inertia + improvement, std::numeric_limits<double>::min())) break;
  }
  model.inertia = inertia;
  return model;
}

TopicAssignment assign_topic(const KMeansModel& model, std::span<const double> descriptor) {
  if (descriptor.size() != model.dim())
    throw dimension_error("descriptor dimension " + std::to_string(descriptor.size()) + " does not match topic model " +
                          std::to_string(model.dim()));
  auto best = nearest(model.centroids, descriptor);
  return {best.index, std::sqrt(best.sq)};
}

double kmeans_inertia(const KMeansModel& model, const std::vector<Vector>& points) {
  double s = 0;
  for (const auto& p : points) s += nearest(model.centroids, p).sq;
  return s;
}

double adjusted_rand_index(std::span<const std::size_t> a, std::span<const std::size_t> b) {
  if (a.size() != b.size()) throw dimension_error("label lists differ in length");
  const double n = static_cast<double>(a.size());
  auto choose2 = [](double x) { return x * (x - 1) / 2; };
  std::map<std::pair<std::size_t, std::size_t>, double> joint;
  std::map<std::size_t, double> ra, rb;
  for (std::size_t i = 0; i < a.size(); ++i) {
    joint[{a[i], b[i]}] += 1;
    ra[a[i]] += 1;
    rb[b[i]] += 1;
  }
  double index = 0, sa = 0, sb = 0;
  for (const auto& [_, v] : joint) index += choose2(v);
  for (const auto& [_, v] : ra) sa += choose2(v);
  for (const auto& [_, v] : rb) sb += choose2(v);
  const double expected = sa * sb / choose2(n);
  const double max_index = 0.5 * (sa + sb);
  if (max_index == expected) return 1.0;  // both partitions trivial
  return (index - expected) / (max_index - expected);
}

}  // namespace semscene
