#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "semscene/ingest.hpp"
#include "semscene/occurrence.hpp"
#include "semscene/topics.hpp"

namespace semscene {

// Row-major [selected objects x classes] posterior matrix of one patch.
struct PatchPosteriorMatrix {
  std::size_t rows = 0, cols = 0;
  std::vector<double> values;
  double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
};

std::vector<PatchPosteriorMatrix> patch_matrices(const ImageRecord& record, const PosteriorModel& post,
                                                 const DiscriminantSelection& sel);

struct PcaTransform {
  Vector mean;
  std::size_t input_dim = 0, output_dim = 0;
  std::vector<double> basis;        // row-major [input_dim x output_dim], orthonormal columns
  std::vector<double> eigenvalues;  // sample-covariance eigenvalues, descending

  double basis_at(std::size_t i, std::size_t p) const { return basis[i * output_dim + p]; }
  Vector project(std::span<const double> x) const;
  Vector reconstruct(std::span<const double> y) const;
  bool operator==(const PcaTransform&) const = default;
};

// Principal basis of the (n-1)-normalized sample covariance. Each column's
// first entry with magnitude above 1e-12 is made positive.
PcaTransform fit_pca(const std::vector<Vector>& samples, std::size_t out_dim);

struct VladCodebook {
  std::vector<Vector> centers;
  double sigma = 1.0;
  std::size_t dim() const { return centers.empty() ? 0 : centers.front().size(); }
  bool operator==(const VladCodebook&) const = default;
};

VladCodebook fit_codebook(const std::vector<Vector>& projected, std::size_t k, std::uint64_t seed);

// Gaussian soft-assignment weights of one vector over the codebook centers;
// non-negative and summing to 1.
Vector soft_assignment(const VladCodebook& cb, std::span<const double> v);

// Accumulates weighted residuals of already-projected patch vectors.
Vector vlad_accumulate(const VladCodebook& cb, const std::vector<Vector>& projected);

// Signed square root followed by L2 normalization; an all-zero vector is
// returned unchanged.
void power_l2_normalize(Vector& v);

struct SoftEncodeOptions {
  bool normalize = true;
};

Vector encode_soft(const ImageRecord& record, const PosteriorModel& post, const DiscriminantSelection& sel,
                   const PcaTransform& pca, const VladCodebook& cb, const SoftEncodeOptions& opts = {});

// Flattened patch matrices of every record, used as PCA training samples.
std::vector<Vector> flattened_patches(const ImageRecord& record, const PosteriorModel& post,
                                      const DiscriminantSelection& sel);

}  // namespace semscene
