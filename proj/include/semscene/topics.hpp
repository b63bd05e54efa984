#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace semscene {

using Vector = std::vector<double>;

double squared_distance(std::span<const double> a, std::span<const double> b);

struct KMeansOptions {
  std::size_t clusters = 5;
  std::uint64_t seed = 0;
  std::size_t max_iter = 300;
  double tol = 1e-6;  // relative inertia improvement
};

struct KMeansModel {
  std::vector<Vector> centroids;
  double inertia = 0;
  std::uint64_t seed = 0;
  std::size_t iterations_run = 0;
  std::vector<double> inertia_history;  // after each assignment step

  std::size_t dim() const { return centroids.empty() ? 0 : centroids.front().size(); }
  bool operator==(const KMeansModel&) const = default;
};

struct TopicAssignment {
  std::size_t topic_index = 0;
  double distance = 0;
};

// Lloyd iterations from k-means++ seeding. Empty clusters are reseeded
// with the point farthest from its centroid.
KMeansModel fit_kmeans(const std::vector<Vector>& points, const KMeansOptions& opts);

inline KMeansModel fit_topics(const std::vector<Vector>& descriptors, std::size_t d, std::uint64_t seed,
                              std::size_t max_iter = 300, double tol = 1e-6) {
  return fit_kmeans(descriptors, {d, seed, max_iter, tol});
}

// Nearest centroid; lowest index wins ties.
TopicAssignment assign_topic(const KMeansModel& model, std::span<const double> descriptor);

double kmeans_inertia(const KMeansModel& model, const std::vector<Vector>& points);

double adjusted_rand_index(std::span<const std::size_t> a, std::span<const std::size_t> b);

}  // namespace semscene
