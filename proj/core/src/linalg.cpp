#include "lfr/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "lfr/errors.hpp"
#include "lfr/rng.hpp"

namespace lfr {

namespace {

double squared_distance(const double* a, const double* b, std::size_t d) {
  double s = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    const double diff = a[i] - b[i];
    s += diff * diff;
  }
  return s;
}

std::size_t check_uniform_dim(const std::vector<Descriptor>& points, const char* who) {
  if (points.empty()) throw InvalidInput(std::string(who) + ": empty point set");
  const std::size_t d = points.front().size();
  for (const auto& p : points) {
    if (p.size() != d) throw InvalidInput(std::string(who) + ": dimension mismatch");
  }
  return d;
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Returns
/// eigenvalues and the matrix whose COLUMNS are the eigenvectors, both
/// sorted by descending eigenvalue.
void jacobi_eigen(std::vector<double> a, std::size_t n, std::vector<double>& eigenvalues,
                  std::vector<double>& eigenvectors) {
  std::vector<double> v(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;

  auto off_diag_sq = [&]() {
    double s = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) s += a[p * n + q] * a[p * n + q];
    return s;
  };

  double scale = 0.0;
  for (std::size_t i = 0; i < n * n; ++i) scale = std::max(scale, std::abs(a[i]));
  const double tol = (scale > 0.0 ? scale : 1.0) * 1e-14;

  for (int sweep = 0; sweep < 100 && off_diag_sq() > tol * tol; ++sweep) {
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a[p * n + q];
        if (std::abs(apq) <= tol * 1e-4) continue;
        const double app = a[p * n + p];
        const double aqq = a[q * n + q];
        const double tau = (aqq - app) / (2.0 * apq);
        const double t = (tau >= 0.0 ? 1.0 : -1.0) / (std::abs(tau) + std::sqrt(1.0 + tau * tau));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = t * c;
        for (std::size_t i = 0; i < n; ++i) {
          const double aip = a[i * n + p];
          const double aiq = a[i * n + q];
          a[i * n + p] = c * aip - s * aiq;
          a[i * n + q] = s * aip + c * aiq;
        }
        for (std::size_t i = 0; i < n; ++i) {
          const double api = a[p * n + i];
          const double aqi = a[q * n + i];
          a[p * n + i] = c * api - s * aqi;
          a[q * n + i] = s * api + c * aqi;
        }
        for (std::size_t i = 0; i < n; ++i) {
          const double vip = v[i * n + p];
          const double viq = v[i * n + q];
          v[i * n + p] = c * vip - s * viq;
          v[i * n + q] = s * vip + c * viq;
        }
      }
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return a[x * n + x] > a[y * n + y]; });

  eigenvalues.resize(n);
  eigenvectors.assign(n * n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    eigenvalues[j] = std::max(0.0, a[order[j] * n + order[j]]);
    for (std::size_t i = 0; i < n; ++i) eigenvectors[i * n + j] = v[i * n + order[j]];
  }
}

PcaModel pca_from_points(const std::vector<Descriptor>& points, std::size_t out_dim) {
  const std::size_t d = points.front().size();
  const std::size_t n = points.size();

  PcaModel model;
  model.mean.assign(d, 0.0);
  for (const auto& p : points)
    for (std::size_t i = 0; i < d; ++i) model.mean[i] += p[i];
  for (double& m : model.mean) m /= static_cast<double>(n);

  std::vector<double> cov(d * d, 0.0);
  std::vector<double> centered(d);
  for (const auto& p : points) {
    for (std::size_t i = 0; i < d; ++i) centered[i] = p[i] - model.mean[i];
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = i; j < d; ++j) cov[i * d + j] += centered[i] * centered[j];
  }
  const double denom = n > 1 ? static_cast<double>(n - 1) : 1.0;
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = i; j < d; ++j) {
      cov[i * d + j] /= denom;
      cov[j * d + i] = cov[i * d + j];
    }

  std::vector<double> eigenvalues;
  std::vector<double> eigenvectors;
  jacobi_eigen(std::move(cov), d, eigenvalues, eigenvectors);

  model.components.assign(out_dim, Descriptor(d));
  model.explained_variance.assign(eigenvalues.begin(),
                                  eigenvalues.begin() + static_cast<long>(out_dim));
  for (std::size_t r = 0; r < out_dim; ++r) {
    for (std::size_t i = 0; i < d; ++i) model.components[r][i] = eigenvectors[i * d + r];
    // Sign convention: the largest-magnitude entry of each component is positive.
    std::size_t arg = 0;
    for (std::size_t i = 1; i < d; ++i)
      if (std::abs(model.components[r][i]) > std::abs(model.components[r][arg])) arg = i;
    if (model.components[r][arg] < 0.0)
      for (double& x : model.components[r]) x = -x;
  }
  return model;
}

}  // namespace

Descriptor l2_normalize(const Descriptor& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  const double norm = std::sqrt(s);
  if (norm <= 1e-12) return v;
  Descriptor out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] / norm;
  return out;
}

KMeansModel kmeans_train(const std::vector<Descriptor>& points, std::size_t k,
                         std::size_t max_iters, std::uint64_t seed) {
  const std::size_t d = check_uniform_dim(points, "kmeans_train");
  const std::size_t n = points.size();
  if (k < 1 || n < k) throw InvalidInput("kmeans_train: need |points| >= k >= 1");

  std::vector<double> data(n * d);
  for (std::size_t i = 0; i < n; ++i)
    std::copy(points[i].begin(), points[i].end(), data.begin() + static_cast<long>(i * d));

  Rng rng(seed);
  std::vector<double> centroids(k * d);
  std::vector<char> chosen(n, 0);

  // k-means++ seeding.
  {
    const std::size_t first = rng.below(n);
    chosen[first] = 1;
    std::copy_n(data.begin() + static_cast<long>(first * d), d, centroids.begin());
    std::vector<double> min_d2(n);
    for (std::size_t i = 0; i < n; ++i)
      min_d2[i] = squared_distance(&data[i * d], &centroids[0], d);
    for (std::size_t c = 1; c < k; ++c) {
      double total = 0.0;
      for (double x : min_d2) total += x;
      std::size_t pick = n;
      if (total > 0.0) {
        const double r = rng.next_double() * total;
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          acc += min_d2[i];
          if (acc >= r) {
            pick = i;
            break;
          }
        }
        if (pick == n) pick = n - 1;
      } else {
        // All remaining distances are zero (duplicate-heavy data): take the
        // first unchosen point.
        for (std::size_t i = 0; i < n; ++i)
          if (!chosen[i]) {
            pick = i;
            break;
          }
        if (pick == n) pick = c % n;
      }
      chosen[pick] = 1;
      std::copy_n(data.begin() + static_cast<long>(pick * d), d,
                  centroids.begin() + static_cast<long>(c * d));
      for (std::size_t i = 0; i < n; ++i)
        min_d2[i] = std::min(min_d2[i], squared_distance(&data[i * d], &centroids[c * d], d));
    }
  }

  auto assign_all = [&](std::vector<std::uint32_t>& assign, std::vector<double>& dist) {
    double inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      double best_d = squared_distance(&data[i * d], &centroids[0], d);
      for (std::size_t c = 1; c < k; ++c) {
        const double dd = squared_distance(&data[i * d], &centroids[c * d], d);
        if (dd < best_d) {
          best_d = dd;
          best = c;
        }
      }
      assign[i] = static_cast<std::uint32_t>(best);
      dist[i] = best_d;
      inertia += best_d;
    }
    return inertia;
  };

  KMeansModel model;
  std::vector<std::uint32_t> assign(n), prev_assign(n);
  std::vector<double> dist(n);
  double inertia = assign_all(assign, dist);
  model.iteration_inertia.push_back(inertia);

  std::vector<double> sums(k * d);
  std::vector<std::size_t> counts(k);
  for (std::size_t iter = 0; iter < max_iters; ++iter) {
    std::fill(sums.begin(), sums.end(), 0.0);
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t c = assign[i];
      ++counts[c];
      for (std::size_t j = 0; j < d; ++j) sums[c * d + j] += data[i * d + j];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;
      for (std::size_t j = 0; j < d; ++j)
        centroids[c * d + j] = sums[c * d + j] / static_cast<double>(counts[c]);
    }
    // Re-seed empty clusters to the points farthest from their centroids.
    std::vector<std::size_t> empties;
    for (std::size_t c = 0; c < k; ++c)
      if (counts[c] == 0) empties.push_back(c);
    if (!empties.empty()) {
      std::vector<std::size_t> far(n);
      std::iota(far.begin(), far.end(), 0);
      std::stable_sort(far.begin(), far.end(),
                       [&](std::size_t a, std::size_t b) { return dist[a] > dist[b]; });
      std::size_t next = 0;
      for (std::size_t c : empties) {
        if (next >= n) break;
        std::copy_n(data.begin() + static_cast<long>(far[next] * d), d,
                    centroids.begin() + static_cast<long>(c * d));
        ++next;
      }
    }

    prev_assign = assign;
    inertia = assign_all(assign, dist);
    model.iteration_inertia.push_back(inertia);
    if (assign == prev_assign) break;
  }

  model.inertia = inertia;
  model.centroids.assign(k, Descriptor(d));
  for (std::size_t c = 0; c < k; ++c)
    std::copy_n(centroids.begin() + static_cast<long>(c * d), d, model.centroids[c].begin());
  return model;
}

std::pair<std::size_t, double> kmeans_assign(const KMeansModel& model, const Descriptor& point) {
  if (model.centroids.empty()) throw InvalidInput("kmeans_assign: empty model");
  if (point.size() != model.dim()) throw InvalidInput("kmeans_assign: dimension mismatch");
  std::size_t best = 0;
  double best_d = squared_distance(point.data(), model.centroids[0].data(), point.size());
  for (std::size_t c = 1; c < model.k(); ++c) {
    const double d = squared_distance(point.data(), model.centroids[c].data(), point.size());
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return {best, best_d};
}

PcaModel pca_train(const std::vector<Descriptor>& points, std::size_t out_dim) {
  const std::size_t d = check_uniform_dim(points, "pca_train");
  if (out_dim < 1 || out_dim > d) throw InvalidInput("pca_train: out_dim must be in [1, dim]");
  if (points.size() <= out_dim) throw InvalidInput("pca_train: need more points than out_dim");
  return pca_from_points(points, out_dim);
}

PcaModel pca_basis(const std::vector<Descriptor>& points) {
  const std::size_t d = check_uniform_dim(points, "pca_basis");
  return pca_from_points(points, d);
}

Descriptor pca_project(const PcaModel& model, const Descriptor& v) {
  if (v.size() != model.in_dim()) throw InvalidInput("pca_project: dimension mismatch");
  Descriptor centered(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) centered[i] = v[i] - model.mean[i];
  Descriptor out(model.out_dim(), 0.0);
  for (std::size_t r = 0; r < model.out_dim(); ++r) {
    double s = 0.0;
    const Descriptor& row = model.components[r];
    for (std::size_t i = 0; i < centered.size(); ++i) s += row[i] * centered[i];
    out[r] = s;
  }
  return out;
}

Descriptor reduce_descriptor(const PcaModel& model, const Descriptor& raw) {
  if (raw.size() != model.in_dim()) throw InvalidInput("reduce_descriptor: dimension mismatch");
  double s = 0.0;
  for (double x : raw) s += x * x;
  if (std::sqrt(s) <= 1e-12) return Descriptor(model.out_dim(), 0.0);
  return l2_normalize(pca_project(model, l2_normalize(raw)));
}

}  // namespace lfr
