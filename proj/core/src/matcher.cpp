#include "lfr/matcher.hpp"

#include <algorithm>
#include <cmath>

#include "lfr/errors.hpp"
#include "lfr/rng.hpp"

namespace lfr {

namespace {

constexpr double kDegenerateDet = 1e-9;

/// Solve the 3x3 system M x = rhs by Gaussian elimination with partial
/// pivoting. Returns false when the pivot collapses.
bool solve3(double m[3][3], double rhs[3], double out[3]) {
  int piv[3] = {0, 1, 2};
  for (int col = 0; col < 3; ++col) {
    int best = col;
    for (int r = col + 1; r < 3; ++r)
      if (std::abs(m[piv[r]][col]) > std::abs(m[piv[best]][col])) best = r;
    std::swap(piv[col], piv[best]);
    const double p = m[piv[col]][col];
    if (std::abs(p) < 1e-12) return false;
    for (int r = col + 1; r < 3; ++r) {
      const double f = m[piv[r]][col] / p;
      for (int c = col; c < 3; ++c) m[piv[r]][c] -= f * m[piv[col]][c];
      rhs[piv[r]] -= f * rhs[piv[col]];
    }
  }
  for (int col = 2; col >= 0; --col) {
    double s = rhs[piv[col]];
    for (int c = col + 1; c < 3; ++c) s -= m[piv[col]][c] * out[c];
    out[col] = s / m[piv[col]][col];
  }
  return true;
}

std::optional<AffineModel> affine_from_normal_equations(
    const std::vector<Correspondence>& corrs, const std::vector<std::size_t>& subset) {
  // Normal equations of p' ~ [qx qy 1] for each output coordinate.
  double g[3][3] = {{0, 0, 0}, {0, 0, 0}, {0, 0, 0}};
  double bx[3] = {0, 0, 0};
  double by[3] = {0, 0, 0};
  for (std::size_t i : subset) {
    const double r[3] = {corrs[i].query.x, corrs[i].query.y, 1.0};
    for (int a = 0; a < 3; ++a) {
      for (int b = 0; b < 3; ++b) g[a][b] += r[a] * r[b];
      bx[a] += r[a] * corrs[i].db.x;
      by[a] += r[a] * corrs[i].db.y;
    }
  }
  double gx[3][3];
  double gy[3][3];
  std::copy(&g[0][0], &g[0][0] + 9, &gx[0][0]);
  std::copy(&g[0][0], &g[0][0] + 9, &gy[0][0]);
  double rowx[3];
  double rowy[3];
  if (!solve3(gx, bx, rowx) || !solve3(gy, by, rowy)) return std::nullopt;
  AffineModel model{rowx[0], rowx[1], rowy[0], rowy[1], rowx[2], rowy[2]};
  if (std::abs(model.det()) <= kDegenerateDet) return std::nullopt;
  return model;
}

}  // namespace

std::optional<AffineModel> estimate_affine(const std::array<Correspondence, 3>& sample) {
  const auto& s = sample;
  // Twice the signed area of the query triangle.
  const double area2 = (s[1].query.x - s[0].query.x) * (s[2].query.y - s[0].query.y) -
                       (s[2].query.x - s[0].query.x) * (s[1].query.y - s[0].query.y);
  if (std::abs(area2) < kDegenerateDet) return std::nullopt;

  double m[3][3] = {{s[0].query.x, s[0].query.y, 1.0},
                    {s[1].query.x, s[1].query.y, 1.0},
                    {s[2].query.x, s[2].query.y, 1.0}};
  double mx[3][3];
  double my[3][3];
  std::copy(&m[0][0], &m[0][0] + 9, &mx[0][0]);
  std::copy(&m[0][0], &m[0][0] + 9, &my[0][0]);
  double bx[3] = {s[0].db.x, s[1].db.x, s[2].db.x};
  double by[3] = {s[0].db.y, s[1].db.y, s[2].db.y};
  double rowx[3];
  double rowy[3];
  if (!solve3(mx, bx, rowx) || !solve3(my, by, rowy)) return std::nullopt;
  AffineModel model{rowx[0], rowx[1], rowy[0], rowy[1], rowx[2], rowy[2]};
  if (std::abs(model.det()) <= kDegenerateDet) return std::nullopt;
  return model;
}

std::vector<std::size_t> model_inliers(const AffineModel& model,
                                       const std::vector<Correspondence>& correspondences,
                                       double tol) {
  std::vector<std::size_t> inliers;
  const double tol2 = tol * tol;
  for (std::size_t i = 0; i < correspondences.size(); ++i) {
    const Point2 p = model.apply(correspondences[i].query);
    const double dx = p.x - correspondences[i].db.x;
    const double dy = p.y - correspondences[i].db.y;
    if (dx * dx + dy * dy <= tol2) inliers.push_back(i);
  }
  return inliers;
}

std::optional<AffineModel> fit_affine_least_squares(
    const std::vector<Correspondence>& correspondences, const std::vector<std::size_t>& subset) {
  if (subset.size() < 3) return std::nullopt;
  return affine_from_normal_equations(correspondences, subset);
}

VerificationResult ransac_verify(const std::vector<Correspondence>& correspondences,
                                 const RansacParams& params) {
  if (!(params.inlier_tol > 0.0)) throw InvalidInput("ransac_verify: inlier_tol must be > 0");
  VerificationResult result;
  result.total_correspondences = correspondences.size();
  const std::size_t n = correspondences.size();
  if (n < 3) return result;  // model none, inlier_count 0

  Rng rng(params.seed);
  std::optional<AffineModel> best_model;
  std::size_t best_count = 0;
  for (std::size_t iter = 0; iter < params.iters; ++iter) {
    std::size_t i0 = rng.below(n);
    std::size_t i1 = rng.below(n);
    std::size_t i2 = rng.below(n);
    if (i0 == i1 || i1 == i2 || i0 == i2) continue;
    const auto model =
        estimate_affine({correspondences[i0], correspondences[i1], correspondences[i2]});
    if (!model) continue;
    const std::size_t count = model_inliers(*model, correspondences, params.inlier_tol).size();
    if (count > best_count) {  // ties keep the earlier iteration
      best_count = count;
      best_model = model;
    }
  }

  result.raw_best_inliers = best_count;
  result.inlier_count = best_count;
  if (!best_model || best_count < params.min_inliers) return result;

  const auto support = model_inliers(*best_model, correspondences, params.inlier_tol);
  if (const auto refit = fit_affine_least_squares(correspondences, support)) {
    result.model = refit;
    result.inlier_count = model_inliers(*refit, correspondences, params.inlier_tol).size();
  } else {
    result.model = best_model;
  }
  if (result.inlier_count < params.min_inliers) {
    result.model.reset();
    result.inlier_count = best_count;
  }
  return result;
}

std::vector<VerificationResult> rank_results(
    const std::map<std::string, std::vector<Correspondence>>& candidates,
    const RansacParams& params) {
  std::vector<VerificationResult> kept;
  for (const auto& [image_id, corrs] : candidates) {
    // Too few matches can never reach min_inliers; skip the sampling loop.
    if (corrs.size() < std::max<std::size_t>(3, params.min_inliers)) continue;
    RansacParams per_image = params;
    per_image.seed = derive_seed(params.seed, image_id);
    VerificationResult r = ransac_verify(corrs, per_image);
    r.image_id = image_id;
    if (r.model && r.inlier_count >= params.min_inliers) kept.push_back(std::move(r));
  }
  std::sort(kept.begin(), kept.end(), [](const VerificationResult& a, const VerificationResult& b) {
    if (a.inlier_count != b.inlier_count) return a.inlier_count > b.inlier_count;
    return a.image_id < b.image_id;
  });
  return kept;
}

}  // namespace lfr
