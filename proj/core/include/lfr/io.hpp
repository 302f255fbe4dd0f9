#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lfr/attention.hpp"
#include "lfr/evaluation.hpp"
#include "lfr/feature_model.hpp"

namespace lfr {

/// Feature files.
/// JSONL: one object per image,
///   {"image_id": ..., "features": [{"x","y","scale","score","descriptor"}]}
/// Binary (.dlf): little-endian, magic "DLF1", u32 record count, u32
/// descriptor dim, then fixed-width records of (32-byte image id, f32 x, y,
/// scale, score, dim x f32 descriptor), one per feature, grouped by image.
/// The binary form stores f32 and is therefore lossy for f64 descriptors.
void write_features_jsonl(const std::vector<ImageFeatures>& images,
                          const std::filesystem::path& path);
std::vector<ImageFeatures> read_features_jsonl(const std::filesystem::path& path);
void write_features_binary(const std::vector<ImageFeatures>& images,
                           const std::filesystem::path& path);
std::vector<ImageFeatures> read_features_binary(const std::filesystem::path& path);

/// Picks JSONL or binary by extension (".dlf" = binary).
void write_features(const std::vector<ImageFeatures>& images, const std::filesystem::path& path);
std::vector<ImageFeatures> read_features(const std::filesystem::path& path);

/// Geo CSVs. Database: "image_id,lat,lon,landmark_id"; queries:
/// "query_id,lat,lon". Both carry a header row.
void write_geo_csv(const std::vector<GeoRecord>& records, const std::filesystem::path& path,
                   bool with_landmark);
std::vector<GeoRecord> read_geo_csv(const std::filesystem::path& path, bool with_landmark);

/// Bags JSONL: {"label": int, "descriptors": [[...], ...]} per line.
void write_bags_jsonl(const std::vector<FeatureBag>& bags, const std::filesystem::path& path);
std::vector<FeatureBag> read_bags_jsonl(const std::filesystem::path& path);

/// Ranked-run JSONL: {"query_id","image_id","inliers","total"} per line.
struct RankedMatch {
  std::string query_id;
  std::string image_id;
  std::uint64_t inliers = 0;
  std::uint64_t total = 0;
};
void write_run_jsonl(const std::vector<RankedMatch>& matches, const std::filesystem::path& path);

/// Reads either ranked-run lines (score = inliers) or generic scored lines
/// {"query_id","image_id","score"}.
RetrievalRun read_run_jsonl(const std::filesystem::path& path);
void write_scored_run_jsonl(const RetrievalRun& run, const std::filesystem::path& path);

/// Score CSV "query_id,image_id,score" with header row.
void write_scores_csv(const RetrievalRun& run, const std::filesystem::path& path);
RetrievalRun read_scores_csv(const std::filesystem::path& path);

/// PR CSV "threshold,precision,recall" with header row.
void write_pr_csv(const std::vector<PrPoint>& points, const std::filesystem::path& path);
std::vector<PrPoint> read_pr_csv(const std::filesystem::path& path);

}  // namespace lfr
