#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace lfr {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

/// A matched pair of feature locations: query image point and the database
/// image point it was matched to.
struct Correspondence {
  Point2 query;
  Point2 db;
};

/// p' = A p + t mapping query coordinates into database-image coordinates.
struct AffineModel {
  double a11 = 1.0, a12 = 0.0;
  double a21 = 0.0, a22 = 1.0;
  double tx = 0.0, ty = 0.0;

  Point2 apply(Point2 p) const {
    return {a11 * p.x + a12 * p.y + tx, a21 * p.x + a22 * p.y + ty};
  }
  double det() const { return a11 * a22 - a12 * a21; }
};

struct RansacParams {
  std::size_t iters = 1000;
  double inlier_tol = 3.0;  // pixels
  std::size_t min_inliers = 10;
  std::uint64_t seed = 0;
};

struct VerificationResult {
  std::string image_id;
  std::size_t inlier_count = 0;
  std::optional<AffineModel> model;
  std::size_t total_correspondences = 0;
  /// Consensus of the best raw 3-point sample, before the least-squares refit.
  std::size_t raw_best_inliers = 0;
};

/// Exact 6-parameter solve mapping three query points onto three db points.
/// Returns nullopt when the query points are (near-)collinear or the solved
/// map is rank deficient.
std::optional<AffineModel> estimate_affine(const std::array<Correspondence, 3>& sample);

/// Indices of correspondences within `tol` pixels of the model's prediction.
std::vector<std::size_t> model_inliers(const AffineModel& model,
                                       const std::vector<Correspondence>& correspondences,
                                       double tol);

/// Least-squares affine fit over the selected correspondences (needs >= 3
/// with non-degenerate geometry).
std::optional<AffineModel> fit_affine_least_squares(
    const std::vector<Correspondence>& correspondences, const std::vector<std::size_t>& subset);

/// Seeded RANSAC over 3-point samples; the winning model is refit by least
/// squares on its inlier set and the inlier count recomputed. Fewer than 3
/// correspondences or a best count below min_inliers yields model = nullopt.
VerificationResult ransac_verify(const std::vector<Correspondence>& correspondences,
                                 const RansacParams& params);

/// Verify every candidate image, drop rejected ones (no model or fewer than
/// min_inliers inliers), and rank the rest by descending inlier count, ties
/// by image id. Per-image RANSAC seeds derive from params.seed and the id.
std::vector<VerificationResult> rank_results(
    const std::map<std::string, std::vector<Correspondence>>& candidates,
    const RansacParams& params);

}  // namespace lfr
