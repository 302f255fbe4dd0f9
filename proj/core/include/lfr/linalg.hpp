#pragma once

#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

#include "lfr/feature_model.hpp"

namespace lfr {

struct KMeansModel {
  std::vector<Descriptor> centroids;
  double inertia = 0.0;
  /// Inertia recorded after every assignment pass; non-increasing.
  std::vector<double> iteration_inertia;

  std::size_t k() const { return centroids.size(); }
  std::size_t dim() const { return centroids.empty() ? 0 : centroids.front().size(); }
};

struct PcaModel {
  Descriptor mean;
  /// Row-orthonormal projection matrix, one row per output dimension,
  /// ordered by descending explained variance.
  std::vector<Descriptor> components;
  std::vector<double> explained_variance;

  std::size_t in_dim() const { return mean.size(); }
  std::size_t out_dim() const { return components.size(); }
};

/// v / ||v||; vectors with norm <= 1e-12 are returned unchanged.
Descriptor l2_normalize(const Descriptor& v);

/// Lloyd's algorithm with k-means++ seeding. Deterministic for a given seed.
/// Empty clusters are re-seeded to the point farthest from its assigned
/// centroid. Stops when assignments are stable or after max_iters updates.
KMeansModel kmeans_train(const std::vector<Descriptor>& points, std::size_t k,
                         std::size_t max_iters, std::uint64_t seed);

/// Index of the nearest centroid (ties to the lowest index) and the squared
/// Euclidean distance to it.
std::pair<std::size_t, double> kmeans_assign(const KMeansModel& model, const Descriptor& point);

/// PCA by dense symmetric eigendecomposition (cyclic Jacobi) of the sample
/// covariance. Component sign convention: the largest-magnitude entry of each
/// row is positive. Requires |points| > out_dim.
PcaModel pca_train(const std::vector<Descriptor>& points, std::size_t out_dim);

/// Full orthonormal eigenbasis of the covariance, tolerant of rank-deficient
/// input (any |points| >= 1). Used for local rotations.
PcaModel pca_basis(const std::vector<Descriptor>& points);

/// components * (v - mean)
Descriptor pca_project(const PcaModel& model, const Descriptor& v);

/// L2-normalize, project, L2-normalize again. A zero input (or one that
/// projects to zero) passes through as the zero vector of out_dim.
Descriptor reduce_descriptor(const PcaModel& model, const Descriptor& raw);

}  // namespace lfr
