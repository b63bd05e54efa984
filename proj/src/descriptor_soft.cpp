#include "semscene/descriptor_soft.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "semscene/error.hpp"

namespace semscene {

std::vector<PatchPosteriorMatrix> patch_matrices(const ImageRecord& record, const PosteriorModel& post,
                                                 const DiscriminantSelection& sel) {
  const auto& patches = record.soft();
  const std::size_t n_cls = post.classes.size();
  std::vector<PatchPosteriorMatrix> out;
  out.reserve(patches.size());
  for (const auto& p : patches) {
    if (p.scores.size() != post.vocabulary.size())
      throw dimension_error("record '" + record.image_id + "' patch score vector does not match the vocabulary");
    PatchPosteriorMatrix m{sel.selected.size(), n_cls, std::vector<double>(sel.selected.size() * n_cls)};
    for (std::size_t i = 0; i < sel.selected.size(); ++i) {
      const std::size_t o = sel.selected[i];
      const std::size_t t = post.grid.nearest_index(p.scores.at(o));
      for (std::size_t c = 0; c < n_cls; ++c) m.values[i * n_cls + c] = post.posteriors.at(o, c, t);
    }
    out.push_back(std::move(m));
  }
  return out;
}

std::vector<Vector> flattened_patches(const ImageRecord& record, const PosteriorModel& post,
                                      const DiscriminantSelection& sel) {
  std::vector<Vector> out;
  for (auto& m : patch_matrices(record, post, sel)) out.push_back(std::move(m.values));
  return out;
}

Vector PcaTransform::project(std::span<const double> x) const {
  if (x.size() != input_dim) throw dimension_error("PCA input dimension mismatch");
  Vector y(output_dim, 0.0);
  for (std::size_t i = 0; i < input_dim; ++i) {
    const double centered = x[i] - mean[i];
    if (centered == 0) continue;
    const double* row = basis.data() + i * output_dim;
    for (std::size_t p = 0; p < output_dim; ++p) y[p] += centered * row[p];
  }
  return y;
}

Vector PcaTransform::reconstruct(std::span<const double> y) const {
  if (y.size() != output_dim) throw dimension_error("PCA output dimension mismatch");
  Vector x(mean);
  for (std::size_t i = 0; i < input_dim; ++i)
    for (std::size_t p = 0; p < output_dim; ++p) x[i] += basis_at(i, p) * y[p];
  return x;
}

PcaTransform fit_pca(const std::vector<Vector>& samples, std::size_t out_dim) {
  if (out_dim < 1) throw argument_error("PCA output dimension must be at least 1");
  if (samples.size() < out_dim || samples.size() < 2)
    throw argument_error("PCA to " + std::to_string(out_dim) + " dimensions needs at least that many samples, got " +
                         std::to_string(samples.size()));
  const std::size_t n = samples.size(), dim = samples.front().size();
  if (out_dim > dim) throw argument_error("PCA output dimension exceeds input dimension");

  Eigen::MatrixXd X(n, dim);
  for (std::size_t i = 0; i < n; ++i) {
    if (samples[i].size() != dim) throw dimension_error("PCA samples differ in dimension");
    for (std::size_t j = 0; j < dim; ++j) X(i, j) = samples[i][j];
  }
  Eigen::VectorXd mean = X.colwise().mean().transpose();
  X.rowwise() -= mean.transpose();
  const double scale = 1.0 / static_cast<double>(n - 1);

  Eigen::MatrixXd vectors(dim, out_dim);
  Eigen::VectorXd values(out_dim);
  if (n < dim) {
    // Gram route: eigenvectors of X X^T map to covariance eigenvectors via X^T.
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es((X * X.transpose()) * scale);
    for (std::size_t p = 0; p < out_dim; ++p) {
      const Eigen::Index src = static_cast<Eigen::Index>(n - 1 - p);
      const double lambda = std::max(es.eigenvalues()(src), 0.0);
      Eigen::VectorXd v = X.transpose() * es.eigenvectors().col(src);
      const double norm = v.norm();
      if (norm > 1e-12) {
        v /= norm;
      } else {
        // Null direction: complete the basis with Gram-Schmidt on unit vectors.
        for (std::size_t e = 0; e < dim; ++e) {
          v = Eigen::VectorXd::Unit(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(e));
          for (std::size_t q = 0; q < p; ++q) v -= vectors.col(q).dot(v) * vectors.col(q);
          if (v.norm() > 1e-6) break;
        }
        v.normalize();
      }
      vectors.col(p) = v;
      values(p) = lambda;
    }
  } else {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es((X.transpose() * X) * scale);
    for (std::size_t p = 0; p < out_dim; ++p) {
      const Eigen::Index src = static_cast<Eigen::Index>(dim - 1 - p);
      vectors.col(p) = es.eigenvectors().col(src);
      values(p) = std::max(es.eigenvalues()(src), 0.0);
    }
  }

  PcaTransform pca;
  pca.input_dim = dim;
  pca.output_dim = out_dim;
  pca.mean.assign(mean.data(), mean.data() + dim);
  pca.basis.resize(dim * out_dim);
  pca.eigenvalues.assign(values.data(), values.data() + out_dim);
  for (std::size_t p = 0; p < out_dim; ++p) {
    double sign = 1.0;
    for (std::size_t i = 0; i < dim; ++i)
      if (std::abs(vectors(i, p)) > 1e-12) {
        sign = vectors(i, p) < 0 ? -1.0 : 1.0;
        break;
      }
    for (std::size_t i = 0; i < dim; ++i) pca.basis[i * out_dim + p] = sign * vectors(i, p);
  }
  return pca;
}

VladCodebook fit_codebook(const std::vector<Vector>& projected, std::size_t k, std::uint64_t seed) {
  if (k < 1 || k > projected.size())
    throw argument_error("codebook size " + std::to_string(k) + " outside [1, " + std::to_string(projected.size()) + "]");
  KMeansModel km = fit_kmeans(projected, {k, seed, 300, 1e-6});
  double total = 0;
  for (const auto& v : projected) total += assign_topic(km, v).distance;
  VladCodebook cb{std::move(km.centroids), total / static_cast<double>(projected.size())};
  // Every sample sits on a center; any positive scale gives hard assignment.
  if (!(cb.sigma > 0)) cb.sigma = 1.0;
  return cb;
}

Vector soft_assignment(const VladCodebook& cb, std::span<const double> v) {
  const std::size_t k = cb.centers.size();
  Vector logits(k);
  for (std::size_t j = 0; j < k; ++j) logits[j] = -squared_distance(v, cb.centers[j]) / (2 * cb.sigma * cb.sigma);
  const double top = *std::max_element(logits.begin(), logits.end());
  double sum = 0;
  for (auto& l : logits) {
    l = std::exp(l - top);
    sum += l;
  }
  for (auto& l : logits) l /= sum;
  return logits;
}

Vector vlad_accumulate(const VladCodebook& cb, const std::vector<Vector>& projected) {
  const std::size_t k = cb.centers.size(), dim = cb.dim();
  Vector out(k * dim, 0.0);
  for (const auto& v : projected) {
    if (v.size() != dim) throw dimension_error("VLAD input dimension mismatch");
    const Vector w = soft_assignment(cb, v);
    for (std::size_t j = 0; j < k; ++j)
      for (std::size_t d = 0; d < dim; ++d) out[j * dim + d] += w[j] * (v[d] - cb.centers[j][d]);
  }
  return out;
}

void power_l2_normalize(Vector& v) {
  double norm2 = 0;
  for (auto& x : v) {
    x = std::copysign(std::sqrt(std::abs(x)), x);
    norm2 += x * x;
  }
  if (norm2 == 0) return;
  const double inv = 1.0 / std::sqrt(norm2);
  for (auto& x : v) x *= inv;
}

Vector encode_soft(const ImageRecord& record, const PosteriorModel& post, const DiscriminantSelection& sel,
                   const PcaTransform& pca, const VladCodebook& cb, const SoftEncodeOptions& opts) {
  const auto& patches = record.soft();
  if (patches.empty()) throw argument_error("empty bag: record '" + record.image_id + "' has no patches");
  if (pca.output_dim != cb.dim()) throw dimension_error("PCA output does not match codebook dimension");

  // Accumulate in a canonical order so the result does not depend on the
  // order patches were listed.
  auto flat = flattened_patches(record, post, sel);
  std::vector<Vector> projected;
  projected.reserve(flat.size());
  for (const auto& f : flat) projected.push_back(pca.project(f));
  std::sort(projected.begin(), projected.end());

  Vector v = vlad_accumulate(cb, projected);
  if (opts.normalize) power_l2_normalize(v);
  return v;
}

}  // namespace semscene
