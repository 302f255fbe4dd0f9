#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace lfr {

struct GeoRecord {
  std::string image_id;
  double lat = 0.0;
  double lon = 0.0;
  std::string landmark_id;  // empty for query records without a cluster label
};

/// Relevance ground truth: per query the set of landmarks within the
/// distance threshold (empty set = distractor query), plus the landmark of
/// every database image. Landmarks with too few photos are absent entirely.
struct GroundTruth {
  std::map<std::string, std::set<std::string>> relevant;
  std::map<std::string, std::string> landmark_of;
};

struct ScoredImage {
  std::string image_id;
  double score = 0.0;
};

struct RetrievalRun {
  std::map<std::string, std::vector<ScoredImage>> queries;
};

struct PrPoint {
  double threshold = 0.0;
  double precision = 0.0;
  std::uint64_t recall = 0;  // unnormalized: total true positives
};

/// Great-circle distance, Earth radius 6371.0 km.
double haversine_km(double lat1, double lon1, double lat2, double lon2);

/// Drop landmarks with fewer than min_photos images; a query is relevant to
/// a landmark iff its distance to the landmark's image-coordinate centroid
/// is strictly below threshold_km.
GroundTruth build_ground_truth(const std::vector<GeoRecord>& db,
                               const std::vector<GeoRecord>& queries, double threshold_km = 25.0,
                               std::size_t min_photos = 3);

/// Keep only the top-scoring image per landmark (score ties to the smaller
/// image id); output ordered by descending score, ties by image id.
std::vector<ScoredImage> dedup_top_per_landmark(const std::vector<ScoredImage>& results,
                                                const std::map<std::string, std::string>& landmark_of);

/// Joint precision and unnormalized recall over all queries at every
/// distinct score threshold (descending). Thresholds where nothing is
/// retrieved are skipped.
std::vector<PrPoint> pr_sweep(const RetrievalRun& run, const GroundTruth& gt);

/// Macro-averaged average precision over queries with at least one relevant
/// database image; distractor queries are excluded.
double mean_average_precision(const RetrievalRun& run, const GroundTruth& gt);

/// Convex combination of per-query min-max-normalized scores:
/// weight * local + (1 - weight) * global over the union of candidates,
/// missing entries scoring 0 before normalization.
RetrievalRun late_fusion(const RetrievalRun& local, const RetrievalRun& global,
                         double weight = 0.25);

}  // namespace lfr
