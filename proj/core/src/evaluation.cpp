#include "lfr/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "lfr/errors.hpp"

namespace lfr {

namespace {

constexpr double kEarthRadiusKm = 6371.0;

void check_coords(double lat, double lon) {
  if (!(std::abs(lat) <= 90.0) || !(std::abs(lon) <= 180.0))
    throw InvalidInput("haversine_km: coordinates out of range");
}

std::vector<ScoredImage> sorted_desc(std::vector<ScoredImage> v) {
  std::sort(v.begin(), v.end(), [](const ScoredImage& a, const ScoredImage& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.image_id < b.image_id;
  });
  return v;
}

}  // namespace

double haversine_km(double lat1, double lon1, double lat2, double lon2) {
  check_coords(lat1, lon1);
  check_coords(lat2, lon2);
  const double to_rad = std::numbers::pi / 180.0;
  const double dphi = (lat2 - lat1) * to_rad;
  const double dlambda = (lon2 - lon1) * to_rad;
  const double a = std::sin(dphi / 2.0) * std::sin(dphi / 2.0) +
                   std::cos(lat1 * to_rad) * std::cos(lat2 * to_rad) *
                       std::sin(dlambda / 2.0) * std::sin(dlambda / 2.0);
  return 2.0 * kEarthRadiusKm * std::asin(std::min(1.0, std::sqrt(a)));
}

GroundTruth build_ground_truth(const std::vector<GeoRecord>& db,
                               const std::vector<GeoRecord>& queries, double threshold_km,
                               std::size_t min_photos) {
  if (db.empty()) throw InvalidInput("build_ground_truth: empty database");

  struct Cluster {
    double lat_sum = 0.0;
    double lon_sum = 0.0;
    std::size_t count = 0;
  };
  std::map<std::string, Cluster> clusters;
  for (const auto& rec : db) {
    if (rec.landmark_id.empty())
      throw InvalidInput("build_ground_truth: database record without landmark label");
    check_coords(rec.lat, rec.lon);
    auto& c = clusters[rec.landmark_id];
    c.lat_sum += rec.lat;
    c.lon_sum += rec.lon;
    ++c.count;
  }

  // Arithmetic-mean centroid; adequate away from the poles and antimeridian.
  std::map<std::string, std::pair<double, double>> centroids;
  for (const auto& [id, c] : clusters) {
    if (c.count < min_photos) continue;
    centroids[id] = {c.lat_sum / static_cast<double>(c.count),
                     c.lon_sum / static_cast<double>(c.count)};
  }

  GroundTruth gt;
  for (const auto& rec : db) {
    if (centroids.count(rec.landmark_id)) gt.landmark_of[rec.image_id] = rec.landmark_id;
  }
  for (const auto& q : queries) {
    check_coords(q.lat, q.lon);
    auto& rel = gt.relevant[q.image_id];
    for (const auto& [id, c] : centroids) {
      if (haversine_km(q.lat, q.lon, c.first, c.second) < threshold_km) rel.insert(id);
    }
  }
  return gt;
}

std::vector<ScoredImage> dedup_top_per_landmark(
    const std::vector<ScoredImage>& results, const std::map<std::string, std::string>& landmark_of) {
  std::map<std::string, ScoredImage> best;
  for (const auto& r : results) {
    const auto it = landmark_of.find(r.image_id);
    if (it == landmark_of.end())
      throw InvalidInput("dedup_top_per_landmark: unknown image id " + r.image_id);
    auto [slot, inserted] = best.try_emplace(it->second, r);
    if (!inserted) {
      if (r.score > slot->second.score ||
          (r.score == slot->second.score && r.image_id < slot->second.image_id))
        slot->second = r;
    }
  }
  std::vector<ScoredImage> out;
  out.reserve(best.size());
  for (const auto& [landmark, img] : best) out.push_back(img);
  return sorted_desc(std::move(out));
}

std::vector<PrPoint> pr_sweep(const RetrievalRun& run, const GroundTruth& gt) {
  std::vector<double> thresholds;
  for (const auto& [qid, results] : run.queries)
    for (const auto& r : results) thresholds.push_back(r.score);
  std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

  static const std::set<std::string> kNoRelevant;
  std::vector<PrPoint> points;
  for (double tau : thresholds) {
    std::uint64_t retrieved = 0;
    std::uint64_t true_positive = 0;
    for (const auto& [qid, results] : run.queries) {
      const auto rel_it = gt.relevant.find(qid);
      const auto& rel = rel_it == gt.relevant.end() ? kNoRelevant : rel_it->second;
      for (const auto& r : results) {
        if (r.score < tau) continue;
        ++retrieved;
        const auto lm = gt.landmark_of.find(r.image_id);
        if (lm != gt.landmark_of.end() && rel.count(lm->second)) ++true_positive;
      }
    }
    if (retrieved == 0) continue;  // precision undefined, point omitted
    points.push_back(PrPoint{tau, static_cast<double>(true_positive) / static_cast<double>(retrieved),
                             true_positive});
  }
  return points;
}

double mean_average_precision(const RetrievalRun& run, const GroundTruth& gt) {
  // Ground-truth positives per landmark set are counted over database images.
  double ap_sum = 0.0;
  std::size_t n_queries = 0;
  for (const auto& [qid, results] : run.queries) {
    const auto rel_it = gt.relevant.find(qid);
    if (rel_it == gt.relevant.end() || rel_it->second.empty()) continue;  // distractor
    const auto& rel = rel_it->second;
    std::size_t n_relevant = 0;
    for (const auto& [img, lm] : gt.landmark_of)
      if (rel.count(lm)) ++n_relevant;
    if (n_relevant == 0) continue;

    const auto ranked = sorted_desc(results);
    double ap = 0.0;
    std::size_t hits = 0;
    for (std::size_t rank = 0; rank < ranked.size(); ++rank) {
      const auto lm = gt.landmark_of.find(ranked[rank].image_id);
      if (lm != gt.landmark_of.end() && rel.count(lm->second)) {
        ++hits;
        ap += static_cast<double>(hits) / static_cast<double>(rank + 1);
      }
    }
    ap_sum += ap / static_cast<double>(n_relevant);
    ++n_queries;
  }
  if (n_queries == 0) throw InvalidInput("mean_average_precision: no evaluable queries");
  return ap_sum / static_cast<double>(n_queries);
}

RetrievalRun late_fusion(const RetrievalRun& local, const RetrievalRun& global, double weight) {
  if (!(weight >= 0.0 && weight <= 1.0)) throw InvalidInput("late_fusion: weight outside [0, 1]");

  std::set<std::string> query_ids;
  for (const auto& [qid, _] : local.queries) query_ids.insert(qid);
  for (const auto& [qid, _] : global.queries) query_ids.insert(qid);

  RetrievalRun fused;
  for (const auto& qid : query_ids) {
    std::map<std::string, std::pair<double, double>> scores;  // image -> (local, global)
    if (auto it = local.queries.find(qid); it != local.queries.end())
      for (const auto& r : it->second) scores[r.image_id].first = r.score;
    if (auto it = global.queries.find(qid); it != global.queries.end())
      for (const auto& r : it->second) scores[r.image_id].second = r.score;
    if (scores.empty()) continue;

    auto normalize = [&](auto pick) {
      double lo = pick(scores.begin()->second);
      double hi = lo;
      for (const auto& [img, s] : scores) {
        lo = std::min(lo, pick(s));
        hi = std::max(hi, pick(s));
      }
      return std::pair<double, double>{lo, hi};
    };
    const auto [llo, lhi] = normalize([](const auto& s) { return s.first; });
    const auto [glo, ghi] = normalize([](const auto& s) { return s.second; });

    std::vector<ScoredImage> out;
    out.reserve(scores.size());
    for (const auto& [img, s] : scores) {
      const double ln = lhi > llo ? (s.first - llo) / (lhi - llo) : 0.0;
      const double gn = ghi > glo ? (s.second - glo) / (ghi - glo) : 0.0;
      out.push_back(ScoredImage{img, weight * ln + (1.0 - weight) * gn});
    }
    fused.queries[qid] = sorted_desc(std::move(out));
  }
  return fused;
}

}  // namespace lfr
