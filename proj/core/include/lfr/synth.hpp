#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "lfr/attention.hpp"
#include "lfr/evaluation.hpp"
#include "lfr/feature_model.hpp"
#include "lfr/matcher.hpp"

namespace lfr {

/// Deterministic stand-in for a real extractor and dataset: landmark
/// descriptor clusters with geotags, warped feature grids, and distractor
/// queries that match nothing.
struct SynthConfig {
  std::size_t n_landmarks = 50;
  std::size_t images_per_landmark = 20;
  std::size_t features_per_image = 25;
  std::size_t raw_dim = 64;
  std::size_t n_discriminative_dims = 8;
  double noise_sigma = 0.1;
  std::size_t queries_per_landmark = 1;
  std::size_t distractor_queries = 100;
  double geo_spread_km = 5.0;
  std::uint64_t seed = 1;
};

struct LandmarkDataset {
  std::vector<ImageFeatures> db_features;
  std::vector<GeoRecord> db_geo;
  std::vector<ImageFeatures> query_features;
  std::vector<GeoRecord> query_geo;
  /// Query id -> planted landmark id; distractor queries are absent.
  std::map<std::string, std::string> query_landmark;
  /// One bag per database image, labelled by landmark ordinal.
  std::vector<FeatureBag> bags;
  std::vector<std::string> landmark_ids;
};

LandmarkDataset gen_landmark_dataset(const SynthConfig& config);

struct GeometryPair {
  std::vector<Correspondence> correspondences;  // inliers first, then outliers
  std::vector<char> inlier_mask;
  AffineModel planted;
};

/// Correspondences under a planted affine transform: n_inliers noisy matches
/// plus n_outliers uniform pairs over a frame x frame image. Needs
/// n_inliers >= 3.
GeometryPair gen_geometry_pair(std::size_t n_inliers, std::size_t n_outliers,
                               const AffineModel& planted, double noise_px, std::uint64_t seed,
                               double frame = 1000.0);

struct ClassificationBags {
  std::vector<FeatureBag> bags;
  /// Per bag, per feature: 1 when the feature carries the class signature.
  std::vector<std::vector<char>> discriminative_mask;
};

/// Bags where a fraction of each bag's features carry a class-specific
/// signature direction plus noise_sigma perturbation and the rest are pure
/// noise of comparable norm.
ClassificationBags gen_classification_bags(std::size_t n_classes, std::size_t bags_per_class,
                                           std::size_t features_per_bag, std::size_t dim,
                                           double discriminative_fraction, std::uint64_t seed,
                                           double noise_sigma = 0.25);

}  // namespace lfr
