#include "lfr/synth.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>

#include "lfr/errors.hpp"
#include "lfr/linalg.hpp"
#include "lfr/rng.hpp"

namespace lfr {

namespace {

constexpr double kKmPerDegLat = 111.19492664455873;  // pi * 6371 / 180

std::string format_id(const char* fmt, std::size_t a, std::size_t b) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), fmt, a, b);
  return buf;
}

std::string format_id(const char* fmt, std::size_t a) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), fmt, a);
  return buf;
}

Descriptor gaussian_vector(Rng& rng, std::size_t dim, double sigma) {
  Descriptor v(dim);
  for (double& x : v) x = rng.normal(0.0, sigma);
  return v;
}

AffineModel random_warp(Rng& rng) {
  const double theta = rng.uniform(-0.26, 0.26);
  const double s = rng.uniform(0.9, 1.1);
  const double tx = rng.uniform(-20.0, 20.0);
  const double ty = rng.uniform(-20.0, 20.0);
  const double c = std::cos(theta);
  const double sn = std::sin(theta);
  return AffineModel{s * c, -s * sn, s * sn, s * c, tx, ty};
}

}  // namespace

LandmarkDataset gen_landmark_dataset(const SynthConfig& config) {
  if (config.n_landmarks < 1 || config.images_per_landmark < 1 || config.features_per_image < 1 ||
      config.raw_dim < 1 || config.queries_per_landmark < 1)
    throw InvalidInput("gen_landmark_dataset: counts must be >= 1");
  if (config.n_discriminative_dims < 1 || config.n_discriminative_dims > config.raw_dim)
    throw InvalidInput("gen_landmark_dataset: bad discriminative dimension count");
  if (config.noise_sigma < 0.0) throw InvalidInput("gen_landmark_dataset: negative noise");

  Rng rng(config.seed);
  LandmarkDataset ds;

  // Landmark centers on a 1-degree grid near the equator: neighbors are
  // at least ~78 km apart, far beyond the 25 km relevance threshold.
  const std::size_t grid_cols = static_cast<std::size_t>(
      std::ceil(std::sqrt(static_cast<double>(config.n_landmarks))));
  std::vector<std::pair<double, double>> centers(config.n_landmarks);
  for (std::size_t l = 0; l < config.n_landmarks; ++l) {
    const double lat = -30.0 + static_cast<double>(l / grid_cols) * 1.0;
    const double lon = -60.0 + static_cast<double>(l % grid_cols) * 1.0;
    centers[l] = {lat, lon};
    ds.landmark_ids.push_back(format_id("L%03zu", l));
  }

  // One shared background prototype per feature-grid cell plus a per-landmark
  // signature on the leading discriminative dims.
  const std::size_t g = config.features_per_image;
  std::vector<Descriptor> background(g);
  for (std::size_t c = 0; c < g; ++c) background[c] = gaussian_vector(rng, config.raw_dim, 1.0);
  std::vector<Descriptor> signature(config.n_landmarks);
  for (std::size_t l = 0; l < config.n_landmarks; ++l)
    signature[l] = gaussian_vector(rng, config.n_discriminative_dims, 1.0);

  // Each landmark lays its prototypes out on its own permutation of the grid
  // cells. Within a landmark every image shares the layout (up to its warp),
  // so matches verify; across landmarks the layouts disagree, so descriptor
  // coincidences are geometrically inconsistent.
  std::vector<std::vector<std::size_t>> layout(config.n_landmarks);
  for (std::size_t l = 0; l < config.n_landmarks; ++l) {
    layout[l].resize(g);
    for (std::size_t c = 0; c < g; ++c) layout[l][c] = c;
    rng.shuffle(layout[l]);
  }

  const ReceptiveFieldSpec rf;
  const std::size_t feat_cols = static_cast<std::size_t>(
      std::ceil(std::sqrt(static_cast<double>(g))));

  auto make_image = [&](const std::string& id, std::size_t landmark,
                        bool distractor) -> ImageFeatures {
    ImageFeatures image;
    image.image_id = id;
    const AffineModel warp = random_warp(rng);
    image.features.reserve(g);
    for (std::size_t c = 0; c < g; ++c) {
      LocalFeature f;
      if (distractor) {
        f.descriptor = gaussian_vector(rng, config.raw_dim, 1.0);
      } else {
        f.descriptor = background[c];
        for (std::size_t i = 0; i < config.n_discriminative_dims; ++i)
          f.descriptor[i] += signature[landmark][i];
        if (config.noise_sigma > 0.0)
          for (double& x : f.descriptor) x += rng.normal(0.0, config.noise_sigma);
      }
      const std::size_t cell = distractor ? c : layout[landmark][c];
      const auto [cx, cy] = feature_center(rf, static_cast<int>(cell / feat_cols),
                                           static_cast<int>(cell % feat_cols), 1.0);
      const Point2 p = warp.apply({cx, cy});
      f.x = p.x;
      f.y = p.y;
      f.scale = 1.0;
      double norm2 = 0.0;
      for (double x : f.descriptor) norm2 += x * x;
      f.score = std::sqrt(norm2);  // norm-based baseline score
      image.features.push_back(std::move(f));
    }
    return image;
  };

  auto geo_near = [&](const std::string& id, std::size_t landmark,
                      const std::string& label) -> GeoRecord {
    const auto [clat, clon] = centers[landmark];
    const double dlat = rng.uniform(-config.geo_spread_km, config.geo_spread_km) / kKmPerDegLat;
    const double dlon = rng.uniform(-config.geo_spread_km, config.geo_spread_km) /
                        (kKmPerDegLat * std::cos(clat * std::numbers::pi / 180.0));
    return GeoRecord{id, clat + dlat, clon + dlon, label};
  };

  for (std::size_t l = 0; l < config.n_landmarks; ++l) {
    for (std::size_t i = 0; i < config.images_per_landmark; ++i) {
      const std::string id = format_id("db_L%03zu_i%03zu", l, i);
      ds.db_features.push_back(make_image(id, l, false));
      ds.db_geo.push_back(geo_near(id, l, ds.landmark_ids[l]));
      FeatureBag bag;
      bag.label = l;
      for (const auto& f : ds.db_features.back().features) bag.features.push_back(f.descriptor);
      ds.bags.push_back(std::move(bag));
    }
  }

  for (std::size_t l = 0; l < config.n_landmarks; ++l) {
    for (std::size_t q = 0; q < config.queries_per_landmark; ++q) {
      const std::string id = format_id("q_L%03zu_k%02zu", l, q);
      ds.query_features.push_back(make_image(id, l, false));
      ds.query_geo.push_back(geo_near(id, l, ""));
      ds.query_landmark[id] = ds.landmark_ids[l];
    }
  }

  // Distractors live on a far-away grid (thousands of km from any landmark)
  // and draw descriptors unrelated to every prototype.
  for (std::size_t k = 0; k < config.distractor_queries; ++k) {
    const std::string id = format_id("q_dx%04zu", k);
    ds.query_features.push_back(make_image(id, 0, true));
    const double lat = -75.0 + static_cast<double>(k / 256) * 0.05;
    const double lon = 150.0 + static_cast<double>(k % 256) * 0.05;
    ds.query_geo.push_back(GeoRecord{id, lat, lon, ""});
  }

  return ds;
}

GeometryPair gen_geometry_pair(std::size_t n_inliers, std::size_t n_outliers,
                               const AffineModel& planted, double noise_px, std::uint64_t seed,
                               double frame) {
  if (n_inliers < 3) throw InvalidInput("gen_geometry_pair: need at least 3 inliers");
  if (noise_px < 0.0 || !(frame > 0.0)) throw InvalidInput("gen_geometry_pair: bad noise or frame");

  Rng rng(seed);
  GeometryPair pair;
  pair.planted = planted;
  pair.correspondences.reserve(n_inliers + n_outliers);
  pair.inlier_mask.reserve(n_inliers + n_outliers);
  for (std::size_t i = 0; i < n_inliers; ++i) {
    const Point2 q{rng.uniform(0.0, frame), rng.uniform(0.0, frame)};
    Point2 p = planted.apply(q);
    if (noise_px > 0.0) {
      p.x += rng.normal(0.0, noise_px);
      p.y += rng.normal(0.0, noise_px);
    }
    pair.correspondences.push_back(Correspondence{q, p});
    pair.inlier_mask.push_back(1);
  }
  for (std::size_t i = 0; i < n_outliers; ++i) {
    const Point2 q{rng.uniform(0.0, frame), rng.uniform(0.0, frame)};
    const Point2 p{rng.uniform(0.0, frame), rng.uniform(0.0, frame)};
    pair.correspondences.push_back(Correspondence{q, p});
    pair.inlier_mask.push_back(0);
  }
  return pair;
}

ClassificationBags gen_classification_bags(std::size_t n_classes, std::size_t bags_per_class,
                                           std::size_t features_per_bag, std::size_t dim,
                                           double discriminative_fraction, std::uint64_t seed,
                                           double noise_sigma) {
  if (n_classes < 1 || bags_per_class < 1 || features_per_bag < 1 || dim < 1)
    throw InvalidInput("gen_classification_bags: counts must be >= 1");
  if (discriminative_fraction < 0.0 || discriminative_fraction > 1.0)
    throw InvalidInput("gen_classification_bags: fraction outside [0, 1]");
  if (noise_sigma < 0.0) throw InvalidInput("gen_classification_bags: negative noise");

  Rng rng(seed);
  std::vector<Descriptor> signatures(n_classes);
  for (auto& s : signatures) s = l2_normalize(gaussian_vector(rng, dim, 1.0));

  const auto n_disc = static_cast<std::size_t>(
      std::llround(discriminative_fraction * static_cast<double>(features_per_bag)));
  const double noise_unit = 1.0 / std::sqrt(static_cast<double>(dim));
  // Clutter features carry twice the signature norm, so unweighted pooling is
  // dominated by them and the scorer has something to learn.
  const double clutter_unit = 2.0 * noise_unit;

  ClassificationBags out;
  for (std::size_t c = 0; c < n_classes; ++c) {
    for (std::size_t b = 0; b < bags_per_class; ++b) {
      FeatureBag bag;
      bag.label = c;
      std::vector<char> mask;
      for (std::size_t f = 0; f < features_per_bag; ++f) {
        Descriptor v;
        if (f < n_disc) {
          v = signatures[c];
          if (noise_sigma > 0.0)
            for (std::size_t i = 0; i < dim; ++i)
              v[i] += rng.normal(0.0, noise_sigma * noise_unit);
          mask.push_back(1);
        } else {
          v = gaussian_vector(rng, dim, clutter_unit);
          mask.push_back(0);
        }
        bag.features.push_back(std::move(v));
      }
      out.bags.push_back(std::move(bag));
      out.discriminative_mask.push_back(std::move(mask));
    }
  }
  return out;
}

}  // namespace lfr
