#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

namespace lfr {

using Descriptor = std::vector<double>;

/// One local feature: descriptor plus its keypoint geometry. `x`/`y` are
/// pixel coordinates in the original image, `scale` is the pyramid level the
/// feature was extracted at, `score` its keypoint relevance (>= 0).
struct LocalFeature {
  Descriptor descriptor;
  double x = 0.0;
  double y = 0.0;
  double scale = 1.0;
  double score = 0.0;
};

struct ImageFeatures {
  std::string image_id;
  std::vector<LocalFeature> features;
};

/// Geometric sequence of pyramid scales: scales[i] = min_scale * factor^i,
/// clipped to max_scale.
struct ScaleSchedule {
  double min_scale = 0.25;
  double max_scale = 2.0;
  double factor = 1.4142135623730951;
  std::vector<double> scales;
};

/// Receptive-field geometry of the (external) feature extractor at scale 1.0.
struct ReceptiveFieldSpec {
  int base_size = 291;
  int base_stride = 32;
};

/// Keep the `cap` features with the largest score, ordered by descending
/// score; equal scores keep their original relative order.
std::vector<LocalFeature> select_top_by_score(const std::vector<LocalFeature>& features,
                                              std::size_t cap);

/// Euclidean norm of each (unnormalized) descriptor; the norm-based keypoint
/// score used when no trained attention model is available.
std::vector<double> l2_norm_scores(const std::vector<Descriptor>& descriptors);

/// Build the scale schedule. Defaults (0.25, 2.0, sqrt 2) produce 7 scales
/// with exact endpoints.
ScaleSchedule make_scale_schedule(double min_scale, double max_scale, double factor);

/// Receptive-field side length in original-image pixels at the given pyramid
/// scale; inversely proportional to scale, rounded half up.
int receptive_field_size(const ReceptiveFieldSpec& spec, double scale);

/// Original-image coordinates (x, y) of the center of feature-grid cell
/// (row, col) at the given scale.
std::pair<double, double> feature_center(const ReceptiveFieldSpec& spec, int row, int col,
                                         double scale);

}  // namespace lfr
