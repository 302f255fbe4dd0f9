#include "lfr/feature_model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lfr/errors.hpp"

namespace lfr {

std::vector<LocalFeature> select_top_by_score(const std::vector<LocalFeature>& features,
                                              std::size_t cap) {
  std::vector<std::size_t> order(features.size());
  std::iota(order.begin(), order.end(), 0);
  // Stable sort keeps the original order among equal scores.
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return features[a].score > features[b].score;
  });
  const std::size_t n = std::min(cap, features.size());
  std::vector<LocalFeature> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(features[order[i]]);
  return out;
}

std::vector<double> l2_norm_scores(const std::vector<Descriptor>& descriptors) {
  if (descriptors.empty()) throw InvalidInput("l2_norm_scores: empty descriptor list");
  const std::size_t dim = descriptors.front().size();
  std::vector<double> scores;
  scores.reserve(descriptors.size());
  for (const auto& d : descriptors) {
    if (d.size() != dim) throw InvalidInput("l2_norm_scores: descriptor dimension mismatch");
    double s = 0.0;
    for (double v : d) s += v * v;
    scores.push_back(std::sqrt(s));
  }
  return scores;
}

ScaleSchedule make_scale_schedule(double min_scale, double max_scale, double factor) {
  if (!(min_scale > 0.0) || !(max_scale >= min_scale))
    throw InvalidInput("scale schedule: need 0 < min_scale <= max_scale");
  if (!(factor > 1.0)) throw InvalidInput("scale schedule: factor must be > 1");
  ScaleSchedule schedule{min_scale, max_scale, factor, {}};
  for (int i = 0;; ++i) {
    double s = min_scale * std::pow(factor, i);
    if (s > max_scale * (1.0 + 1e-9)) break;
    // Snap the endpoint so the last scale is exact.
    if (std::abs(s - max_scale) <= 1e-9 * max_scale) s = max_scale;
    schedule.scales.push_back(s);
  }
  return schedule;
}

int receptive_field_size(const ReceptiveFieldSpec& spec, double scale) {
  if (!(scale > 0.0)) throw InvalidInput("receptive_field_size: scale must be positive");
  return static_cast<int>(std::floor(spec.base_size / scale + 0.5));
}

std::pair<double, double> feature_center(const ReceptiveFieldSpec& spec, int row, int col,
                                         double scale) {
  if (!(scale > 0.0)) throw InvalidInput("feature_center: scale must be positive");
  const double stride = static_cast<double>(spec.base_stride);
  return {(col + 0.5) * stride / scale, (row + 0.5) * stride / scale};
}

}  // namespace lfr
