#include <doctest.h>

#include <cmath>
#include <numbers>

#include "lfr/errors.hpp"
#include "lfr/evaluation.hpp"
#include "lfr/rng.hpp"

using namespace lfr;

namespace {

/// Quadratic brute-force recount of one PR point, independent of pr_sweep.
PrPoint recount(const RetrievalRun& run, const GroundTruth& gt, double tau) {
  std::uint64_t retrieved = 0;
  std::uint64_t tp = 0;
  for (const auto& [qid, results] : run.queries) {
    for (const auto& r : results) {
      if (r.score < tau) continue;
      ++retrieved;
      const auto lm = gt.landmark_of.find(r.image_id);
      if (lm == gt.landmark_of.end()) continue;
      const auto rel = gt.relevant.find(qid);
      if (rel != gt.relevant.end() && rel->second.count(lm->second)) ++tp;
    }
  }
  return PrPoint{tau, retrieved ? double(tp) / double(retrieved) : -1.0, tp};
}

/// Independent AP: walk the ranked list, average precision at relevant hits
/// over the ground-truth positive count.
double ap_reference(std::vector<ScoredImage> ranked, const std::set<std::string>& rel,
                    const std::map<std::string, std::string>& landmark_of) {
  std::sort(ranked.begin(), ranked.end(), [](const ScoredImage& a, const ScoredImage& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.image_id < b.image_id;
  });
  std::size_t n_rel = 0;
  for (const auto& [img, lm] : landmark_of)
    if (rel.count(lm)) ++n_rel;
  double ap = 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    const auto lm = landmark_of.find(ranked[i].image_id);
    if (lm != landmark_of.end() && rel.count(lm->second)) {
      ++hits;
      ap += double(hits) / double(i + 1);
    }
  }
  return n_rel ? ap / double(n_rel) : 0.0;
}

GroundTruth simple_gt() {
  GroundTruth gt;
  gt.landmark_of = {{"a", "L0"}, {"b", "L0"}, {"c", "L1"}, {"d", "L2"}};
  gt.relevant["q1"] = {"L0"};
  gt.relevant["q2"] = {"L2"};
  gt.relevant["qd"] = {};
  return gt;
}

}  // namespace

TEST_SUITE("evaluation") {

TEST_CASE("haversine basic values") {
  CHECK(haversine_km(12.0, 34.0, 12.0, 34.0) == 0.0);
  CHECK(haversine_km(0.0, 0.0, 0.0, 180.0) ==
        doctest::Approx(std::numbers::pi * 6371.0).epsilon(1e-6));
  CHECK(haversine_km(0.0, 0.0, 1.0, 0.0) ==
        doctest::Approx(6371.0 * std::numbers::pi / 180.0).epsilon(1e-6));
  CHECK(haversine_km(10, 20, 30, 40) == haversine_km(30, 40, 10, 20));
  CHECK_THROWS_AS(haversine_km(91.0, 0.0, 0.0, 0.0), InvalidInput);
  CHECK_THROWS_AS(haversine_km(0.0, 181.0, 0.0, 0.0), InvalidInput);
}

TEST_CASE("ground truth threshold is strict at 25 km") {
  // Place the query along a meridian: distance is exactly R * dphi.
  const double km_to_deg = 180.0 / (std::numbers::pi * 6371.0);
  std::vector<GeoRecord> db = {
      {"a", 0.0, 0.0, "L0"}, {"b", 0.0, 0.0, "L0"}, {"c", 0.0, 0.0, "L0"}};
  std::vector<GeoRecord> queries = {
      {"q_in", 24.999 * km_to_deg, 0.0, ""},
      {"q_out", 25.001 * km_to_deg, 0.0, ""},
      {"q_at", 0.0, 0.0, ""},
  };
  const auto gt = build_ground_truth(db, queries, 25.0, 3);
  CHECK(gt.relevant.at("q_in").count("L0") == 1);
  CHECK(gt.relevant.at("q_out").empty());
  CHECK(gt.relevant.at("q_at").count("L0") == 1);
}

TEST_CASE("landmarks below the photo minimum vanish") {
  std::vector<GeoRecord> db = {
      {"a", 0, 0, "L0"}, {"b", 0, 0, "L0"}, {"c", 0, 0, "L0"},
      {"d", 5, 5, "L1"}, {"e", 5, 5, "L1"},  // only two photos
  };
  std::vector<GeoRecord> queries = {{"q", 5, 5, ""}};
  const auto gt = build_ground_truth(db, queries, 25.0, 3);
  CHECK(gt.landmark_of.count("d") == 0);
  CHECK(gt.landmark_of.count("e") == 0);
  CHECK(gt.relevant.at("q").count("L1") == 0);
  CHECK(gt.landmark_of.at("a") == "L0");
}

TEST_CASE("ground truth relevance grows with the threshold") {
  Rng rng(3);
  std::vector<GeoRecord> db;
  for (int l = 0; l < 8; ++l)
    for (int i = 0; i < 3; ++i)
      db.push_back(
          {"img" + std::to_string(l * 3 + i), double(l), double(l), "L" + std::to_string(l)});
  std::vector<GeoRecord> queries;
  for (int q = 0; q < 10; ++q)
    queries.push_back({"q" + std::to_string(q), rng.uniform(0, 8), rng.uniform(0, 8), ""});
  const auto tight = build_ground_truth(db, queries, 10.0, 3);
  const auto loose = build_ground_truth(db, queries, 25.0, 3);
  for (const auto& [qid, rel] : tight.relevant) {
    for (const auto& lm : rel) CHECK(loose.relevant.at(qid).count(lm) == 1);
  }
}

TEST_CASE("ground truth rejects bad input") {
  CHECK_THROWS_AS(build_ground_truth({}, {}, 25.0, 3), InvalidInput);
  CHECK_THROWS_AS(build_ground_truth({{"a", 0, 0, ""}}, {}, 25.0, 1), InvalidInput);
}

TEST_CASE("dedup keeps the best image per landmark") {
  const auto gt = simple_gt();
  const std::vector<ScoredImage> results = {{"a", 5.0}, {"b", 9.0}, {"c", 4.0}};
  const auto deduped = dedup_top_per_landmark(results, gt.landmark_of);
  REQUIRE(deduped.size() == 2);
  CHECK(deduped[0].image_id == "b");
  CHECK(deduped[0].score == 9.0);
  CHECK(deduped[1].image_id == "c");
}

TEST_CASE("dedup with distinct landmarks is the identity up to ordering") {
  const auto gt = simple_gt();
  const std::vector<ScoredImage> results = {{"a", 1.0}, {"c", 3.0}, {"d", 2.0}};
  const auto deduped = dedup_top_per_landmark(results, gt.landmark_of);
  REQUIRE(deduped.size() == 3);
  CHECK(deduped[0].image_id == "c");
  CHECK(deduped[1].image_id == "d");
  CHECK(deduped[2].image_id == "a");
}

TEST_CASE("dedup output size equals the number of distinct landmarks retrieved") {
  Rng rng(5);
  std::map<std::string, std::string> landmark_of;
  for (int i = 0; i < 50; ++i)
    landmark_of["img" + std::to_string(i)] = "L" + std::to_string(i % 7);
  std::vector<ScoredImage> results;
  std::set<std::string> distinct;
  for (int i = 0; i < 30; ++i) {
    const std::string img = "img" + std::to_string(rng.below(50));
    results.push_back({img, rng.next_double()});
    distinct.insert(landmark_of[img]);
  }
  CHECK(dedup_top_per_landmark(results, landmark_of).size() == distinct.size());
  CHECK_THROWS_AS(dedup_top_per_landmark({{"unknown", 1.0}}, landmark_of), InvalidInput);
}

TEST_CASE("dedup ties go to the lexicographically smaller id") {
  std::map<std::string, std::string> landmark_of = {{"x2", "L"}, {"x1", "L"}};
  const auto deduped = dedup_top_per_landmark({{"x2", 4.0}, {"x1", 4.0}}, landmark_of);
  REQUIRE(deduped.size() == 1);
  CHECK(deduped[0].image_id == "x1");
}

TEST_CASE("pr sweep reproduces the two-query worked example") {
  const auto gt = simple_gt();
  RetrievalRun run;
  run.queries["q1"] = {{"a", 3.0}, {"b", 2.0}, {"c", 1.0}};  // TPs: a, b
  run.queries["q2"] = {{"d", 1.5}};                          // TP: d
  const auto points = pr_sweep(run, gt);
  REQUIRE(!points.empty());
  // The lowest threshold admits everything: Pre = 3/4, Rec = 3.
  const auto& last = points.back();
  CHECK(last.precision == doctest::Approx(0.75));
  CHECK(last.recall == 3);
}

TEST_CASE("pr sweep emits nothing for an empty run") {
  CHECK(pr_sweep(RetrievalRun{}, simple_gt()).empty());
}

TEST_CASE("pr sweep matches the brute-force recount everywhere") {
  Rng rng(7);
  GroundTruth gt;
  for (int i = 0; i < 40; ++i)
    gt.landmark_of["img" + std::to_string(i)] = "L" + std::to_string(i % 10);
  for (int q = 0; q < 12; ++q) {
    std::set<std::string> rel;
    const auto n_rel = rng.below(4);  // distractors included when 0
    for (std::uint64_t j = 0; j < n_rel; ++j) rel.insert("L" + std::to_string(rng.below(10)));
    gt.relevant["q" + std::to_string(q)] = rel;
  }
  RetrievalRun run;
  for (int q = 0; q < 12; ++q) {
    std::vector<ScoredImage> results;
    const auto n = rng.below(15);
    for (std::uint64_t j = 0; j < n; ++j)
      results.push_back({"img" + std::to_string(rng.below(40)),
                         double(rng.below(6))});  // deliberately many score ties
    run.queries["q" + std::to_string(q)] = results;
  }

  const auto points = pr_sweep(run, gt);
  for (const auto& p : points) {
    const auto want = recount(run, gt, p.threshold);
    CHECK(p.precision == want.precision);
    CHECK(p.recall == want.recall);
  }
  // Recall is non-increasing as the threshold rises (points are descending
  // by threshold, so recall ascends along the vector).
  for (std::size_t i = 1; i < points.size(); ++i) {
    CHECK(points[i].recall >= points[i - 1].recall);
    CHECK(points[i].precision <= 1.0);
  }
}

TEST_CASE("mean average precision basics") {
  const auto gt = simple_gt();
  RetrievalRun run;
  run.queries["q2"] = {{"d", 9.0}, {"a", 3.0}};
  CHECK(mean_average_precision(run, gt) == doctest::Approx(1.0));
  run.queries["q2"] = {{"a", 9.0}, {"d", 3.0}};  // relevant image second of two
  CHECK(mean_average_precision(run, gt) == doctest::Approx(0.5));
}

TEST_CASE("map ignores distractors and errors when nothing is evaluable") {
  const auto gt = simple_gt();
  RetrievalRun run;
  run.queries["qd"] = {{"a", 5.0}};
  CHECK_THROWS_AS(mean_average_precision(run, gt), InvalidInput);
}

TEST_CASE("map matches an independent reference implementation") {
  Rng rng(11);
  GroundTruth gt;
  for (int i = 0; i < 30; ++i)
    gt.landmark_of["img" + std::to_string(i)] = "L" + std::to_string(i % 6);
  RetrievalRun run;
  for (int q = 0; q < 8; ++q) {
    gt.relevant["q" + std::to_string(q)] = {"L" + std::to_string(q % 6)};
    std::vector<ScoredImage> results;
    for (int j = 0; j < 12; ++j)
      results.push_back({"img" + std::to_string(rng.below(30)), rng.next_double()});
    run.queries["q" + std::to_string(q)] = results;
  }
  double expected = 0.0;
  for (const auto& [qid, results] : run.queries)
    expected += ap_reference(results, gt.relevant.at(qid), gt.landmark_of);
  expected /= double(run.queries.size());
  CHECK(mean_average_precision(run, gt) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("map is invariant to image id relabeling") {
  GroundTruth gt1;
  gt1.landmark_of = {{"x", "A"}, {"y", "B"}};
  gt1.relevant["q"] = {"A"};
  RetrievalRun run1;
  run1.queries["q"] = {{"y", 2.0}, {"x", 1.0}};

  GroundTruth gt2;
  gt2.landmark_of = {{"u", "A"}, {"v", "B"}};
  gt2.relevant["q"] = {"A"};
  RetrievalRun run2;
  run2.queries["q"] = {{"v", 2.0}, {"u", 1.0}};
  CHECK(mean_average_precision(run1, gt1) == mean_average_precision(run2, gt2));
}

TEST_CASE("fusion weights and normalization") {
  RetrievalRun local;
  local.queries["q"] = {{"a", 10.0}, {"b", 0.0}};
  RetrievalRun global;
  global.queries["q"] = {{"a", 0.0}, {"b", 7.0}};

  // Normalized local is 1 for a; normalized global is 0 for a.
  const auto fused = late_fusion(local, global, 0.25);
  const auto& results = fused.queries.at("q");
  for (const auto& r : results) {
    if (r.image_id == "a") CHECK(r.score == doctest::Approx(0.25));
    if (r.image_id == "b") CHECK(r.score == doctest::Approx(0.75));
  }

  // Weight 0 reproduces the global ranking, weight 1 the local one.
  const auto g_only = late_fusion(local, global, 0.0);
  CHECK(g_only.queries.at("q")[0].image_id == "b");
  const auto l_only = late_fusion(local, global, 1.0);
  CHECK(l_only.queries.at("q")[0].image_id == "a");

  CHECK_THROWS_AS(late_fusion(local, global, 1.5), InvalidInput);
  CHECK_THROWS_AS(late_fusion(local, global, -0.1), InvalidInput);
}

TEST_CASE("fused scores stay inside the convex hull of normalized inputs") {
  Rng rng(13);
  RetrievalRun local;
  RetrievalRun global;
  for (int q = 0; q < 5; ++q) {
    const std::string qid = "q" + std::to_string(q);
    for (int i = 0; i < 8; ++i) {
      const std::string img = "img" + std::to_string(i);
      if (rng.next_double() < 0.8) local.queries[qid].push_back({img, rng.uniform(0, 50)});
      if (rng.next_double() < 0.8) global.queries[qid].push_back({img, rng.uniform(0, 5)});
    }
  }
  const auto fused = late_fusion(local, global, 0.25);
  for (const auto& [qid, results] : fused.queries) {
    for (const auto& r : results) {
      CHECK(r.score >= 0.0);
      CHECK(r.score <= 1.0);
    }
  }
}

TEST_CASE("missing entries in one source default to zero before fusion") {
  RetrievalRun local;
  local.queries["q"] = {{"only_local", 4.0}, {"shared", 2.0}};
  RetrievalRun global;
  global.queries["q"] = {{"shared", 9.0}};
  const auto fused = late_fusion(local, global, 0.5);
  REQUIRE(fused.queries.at("q").size() == 2);
  // "only_local" has normalized global 0 and normalized local 1.
  for (const auto& r : fused.queries.at("q")) {
    if (r.image_id == "only_local") CHECK(r.score == doctest::Approx(0.5));
    if (r.image_id == "shared") CHECK(r.score == doctest::Approx(0.5));
  }
}

}  // TEST_SUITE
