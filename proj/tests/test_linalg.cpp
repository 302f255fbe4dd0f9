#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "lfr/errors.hpp"
#include "lfr/linalg.hpp"
#include "lfr/rng.hpp"

using namespace lfr;

namespace {

std::vector<Descriptor> random_points(std::size_t n, std::size_t d, std::uint64_t seed,
                                      double sigma = 1.0) {
  Rng rng(seed);
  std::vector<Descriptor> out(n, Descriptor(d));
  for (auto& p : out)
    for (double& v : p) v = rng.normal(0.0, sigma);
  return out;
}

double norm(const Descriptor& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

/// Exhaustive oracle for 2-means on a tiny point set: tries every bipartition.
std::pair<std::vector<Descriptor>, double> two_means_oracle(const std::vector<Descriptor>& pts) {
  const std::size_t n = pts.size();
  const std::size_t d = pts.front().size();
  double best_inertia = 1e300;
  std::vector<Descriptor> best_centroids;
  for (std::size_t mask = 1; mask + 1 < (std::size_t{1} << n); ++mask) {
    Descriptor c0(d, 0.0);
    Descriptor c1(d, 0.0);
    std::size_t n0 = 0;
    std::size_t n1 = 0;
    for (std::size_t i = 0; i < n; ++i) {
      auto& c = (mask >> i) & 1 ? c0 : c1;
      ((mask >> i) & 1 ? n0 : n1) += 1;
      for (std::size_t j = 0; j < d; ++j) c[j] += pts[i][j];
    }
    if (n0 == 0 || n1 == 0) continue;
    for (std::size_t j = 0; j < d; ++j) {
      c0[j] /= static_cast<double>(n0);
      c1[j] /= static_cast<double>(n1);
    }
    double inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto& c = (mask >> i) & 1 ? c0 : c1;
      double s = 0.0;
      for (std::size_t j = 0; j < d; ++j) s += (pts[i][j] - c[j]) * (pts[i][j] - c[j]);
      inertia += s;
    }
    if (inertia < best_inertia) {
      best_inertia = inertia;
      best_centroids = {c0, c1};
    }
  }
  return {best_centroids, best_inertia};
}

}  // namespace

TEST_SUITE("linalg") {

TEST_CASE("l2 normalize") {
  const Descriptor v = l2_normalize({3.0, 4.0});
  CHECK(v[0] == doctest::Approx(0.6));
  CHECK(v[1] == doctest::Approx(0.8));
  const Descriptor z = l2_normalize({0.0, 0.0});
  CHECK(z == Descriptor{0.0, 0.0});
}

TEST_CASE("l2 normalize gives unit norm on random vectors") {
  for (auto& p : random_points(50, 40, 11)) {
    CHECK(std::abs(norm(l2_normalize(p)) - 1.0) <= 1e-12);
  }
}

TEST_CASE("kmeans recovers two separated clusters") {
  const std::vector<Descriptor> pts = {{0, 0}, {0, 2}, {10, 0}, {10, 2}};
  const auto [oracle_centroids, oracle_inertia] = two_means_oracle(pts);
  CHECK(oracle_inertia == doctest::Approx(4.0));

  const auto model = kmeans_train(pts, 2, 50, 3);
  CHECK(model.inertia == doctest::Approx(oracle_inertia));
  std::vector<Descriptor> got = model.centroids;
  std::sort(got.begin(), got.end());
  std::vector<Descriptor> want = oracle_centroids;
  std::sort(want.begin(), want.end());
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t j = 0; j < 2; ++j) CHECK(got[c][j] == doctest::Approx(want[c][j]));
}

TEST_CASE("kmeans with k=1 returns the mean") {
  const auto pts = random_points(37, 5, 19);
  const auto model = kmeans_train(pts, 1, 10, 0);
  Descriptor mean(5, 0.0);
  for (const auto& p : pts)
    for (std::size_t j = 0; j < 5; ++j) mean[j] += p[j] / 37.0;
  for (std::size_t j = 0; j < 5; ++j) CHECK(model.centroids[0][j] == doctest::Approx(mean[j]));
}

TEST_CASE("kmeans is deterministic for a fixed seed") {
  const auto pts = random_points(200, 8, 5);
  const auto a = kmeans_train(pts, 16, 25, 99);
  const auto b = kmeans_train(pts, 16, 25, 99);
  CHECK(a.centroids == b.centroids);
  CHECK(a.inertia == b.inertia);
}

TEST_CASE("kmeans inertia trace is non-increasing") {
  const auto pts = random_points(500, 6, 21);
  const auto model = kmeans_train(pts, 10, 40, 4);
  for (std::size_t i = 1; i < model.iteration_inertia.size(); ++i)
    CHECK(model.iteration_inertia[i] <= model.iteration_inertia[i - 1] + 1e-9);
}

TEST_CASE("kmeans rejects k > n") {
  CHECK_THROWS_AS(kmeans_train(random_points(3, 2, 0), 4, 5, 0), InvalidInput);
}

TEST_CASE("assignment matches a linear-scan oracle") {
  const auto pts = random_points(300, 4, 8);
  const auto model = kmeans_train(pts, 12, 20, 1);
  const auto queries = random_points(1000, 4, 9);
  for (const auto& q : queries) {
    std::size_t best = 0;
    double best_d = 1e300;
    for (std::size_t c = 0; c < model.k(); ++c) {
      double s = 0.0;
      for (std::size_t j = 0; j < 4; ++j)
        s += (q[j] - model.centroids[c][j]) * (q[j] - model.centroids[c][j]);
      if (s < best_d) {
        best_d = s;
        best = c;
      }
    }
    const auto [idx, d2] = kmeans_assign(model, q);
    CHECK(idx == best);
    CHECK(d2 == doctest::Approx(best_d));
  }
}

TEST_CASE("assignment exact hit and nearest by inspection") {
  KMeansModel model;
  model.centroids = {{0, 1}, {10, 1}};
  const auto [i0, d0] = kmeans_assign(model, {1, 1});
  CHECK(i0 == 0);
  CHECK(d0 == doctest::Approx(1.0));
  const auto [i1, d1] = kmeans_assign(model, {10, 1});
  CHECK(i1 == 1);
  CHECK(d1 == 0.0);
  CHECK_THROWS_AS(kmeans_assign(model, {1, 2, 3}), InvalidInput);
}

TEST_CASE("pca on a diagonal line finds the diagonal direction") {
  std::vector<Descriptor> pts;
  for (int i = -10; i <= 10; ++i) pts.push_back({double(i), double(i)});
  const auto model = pca_train(pts, 1);
  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  CHECK(model.components[0][0] == doctest::Approx(inv_sqrt2));
  CHECK(model.components[0][1] == doctest::Approx(inv_sqrt2));
}

TEST_CASE("pca explained variance is nearly isotropic on isotropic data") {
  const auto pts = random_points(20000, 4, 13);
  const auto model = pca_train(pts, 4);
  for (std::size_t i = 0; i < 4; ++i)
    CHECK(model.explained_variance[i] == doctest::Approx(1.0).epsilon(0.05));
  CHECK(std::is_sorted(model.explained_variance.rbegin(), model.explained_variance.rend()));
}

TEST_CASE("pca components are orthonormal and full-rank projection reconstructs") {
  const auto pts = random_points(300, 10, 17);
  const auto model = pca_train(pts, 10);
  for (std::size_t a = 0; a < 10; ++a) {
    for (std::size_t b = 0; b < 10; ++b) {
      double dot = 0.0;
      for (std::size_t j = 0; j < 10; ++j) dot += model.components[a][j] * model.components[b][j];
      CHECK(std::abs(dot - (a == b ? 1.0 : 0.0)) <= 1e-8);
    }
  }
  for (const auto& x : random_points(20, 10, 18)) {
    const auto proj = pca_project(model, x);
    Descriptor rec = model.mean;
    for (std::size_t r = 0; r < 10; ++r)
      for (std::size_t j = 0; j < 10; ++j) rec[j] += model.components[r][j] * proj[r];
    for (std::size_t j = 0; j < 10; ++j) CHECK(std::abs(rec[j] - x[j]) <= 1e-8);
  }
}

TEST_CASE("full-rank projection preserves pairwise squared distances") {
  const auto pts = random_points(100, 6, 23);
  const auto model = pca_train(pts, 6);
  for (std::size_t i = 0; i + 1 < 20; i += 2) {
    const auto pa = pca_project(model, pts[i]);
    const auto pb = pca_project(model, pts[i + 1]);
    double d_orig = 0.0;
    double d_proj = 0.0;
    for (std::size_t j = 0; j < 6; ++j) {
      d_orig += (pts[i][j] - pts[i + 1][j]) * (pts[i][j] - pts[i + 1][j]);
      d_proj += (pa[j] - pb[j]) * (pa[j] - pb[j]);
    }
    CHECK(std::abs(d_orig - d_proj) <= 1e-8 * std::max(1.0, d_orig));
  }
}

TEST_CASE("projection basics and oracle") {
  const auto pts = random_points(100, 8, 29);
  const auto model = pca_train(pts, 3);
  // Projecting the mean gives zero.
  const auto at_mean = pca_project(model, model.mean);
  for (double v : at_mean) CHECK(std::abs(v) <= 1e-10);
  // mean + first component maps to e0.
  Descriptor shifted = model.mean;
  for (std::size_t j = 0; j < 8; ++j) shifted[j] += model.components[0][j];
  const auto e0 = pca_project(model, shifted);
  CHECK(e0[0] == doctest::Approx(1.0));
  CHECK(std::abs(e0[1]) <= 1e-10);
  CHECK(std::abs(e0[2]) <= 1e-10);
  // Dense matrix-multiply oracle.
  for (const auto& x : random_points(10, 8, 31)) {
    const auto proj = pca_project(model, x);
    for (std::size_t r = 0; r < 3; ++r) {
      double s = 0.0;
      for (std::size_t j = 0; j < 8; ++j) s += model.components[r][j] * (x[j] - model.mean[j]);
      CHECK(std::abs(proj[r] - s) <= 1e-10);
    }
  }
  CHECK_THROWS_AS(pca_project(model, Descriptor(5, 0.0)), InvalidInput);
}

TEST_CASE("pca input validation") {
  CHECK_THROWS_AS(pca_train(random_points(3, 8, 0), 3), InvalidInput);
  CHECK_THROWS_AS(pca_train(random_points(10, 4, 0), 5), InvalidInput);
}

TEST_CASE("reduce_descriptor chain") {
  const auto pts = random_points(200, 8, 37);
  const auto model = pca_train(pts, 4);
  // Zero passes through as the zero vector of the output dimension.
  const auto zero = reduce_descriptor(model, Descriptor(8, 0.0));
  CHECK(zero == Descriptor(4, 0.0));
  // Anything with a nonzero projection comes out unit norm.
  for (const auto& x : random_points(20, 8, 38)) {
    const auto r = reduce_descriptor(model, x);
    REQUIRE(r.size() == 4);
    const double n = norm(r);
    CHECK((n == 0.0 || std::abs(n - 1.0) <= 1e-12));
  }
  // Deterministic across repeated calls.
  const auto a = reduce_descriptor(model, pts[0]);
  const auto b = reduce_descriptor(model, pts[0]);
  CHECK(a == b);
}

}  // TEST_SUITE
