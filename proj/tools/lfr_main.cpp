// lfr: local-feature retrieval pipeline driver.
//
// Subcommands: gen, train-attention, build-index, query, evaluate, fuse.
// All randomness flows from explicit --seed flags; identical inputs produce
// byte-identical outputs. Logs go to stderr, data to files.
// Exit codes: 0 success, 1 I/O failure, 2 validation/config error.

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "lfr/attention.hpp"
#include "lfr/errors.hpp"
#include "lfr/evaluation.hpp"
#include "lfr/feature_model.hpp"
#include "lfr/index.hpp"
#include "lfr/io.hpp"
#include "lfr/linalg.hpp"
#include "lfr/matcher.hpp"
#include "lfr/rng.hpp"
#include "lfr/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void log_line(const std::string& msg) { std::fprintf(stderr, "lfr: %s\n", msg.c_str()); }

void round_pca_to_f32(lfr::PcaModel& pca) {
  for (double& v : pca.mean) v = double(float(v));
  for (auto& row : pca.components)
    for (double& v : row) v = double(float(v));
  for (double& v : pca.explained_variance) v = double(float(v));
}

// ---------------------------------------------------------------- gen ------

struct GenOpts {
  std::string out_dir;
  std::string format = "jsonl";
  lfr::SynthConfig config;
};

int run_gen(const GenOpts& opts) {
  fs::create_directories(opts.out_dir);
  const auto ds = lfr::gen_landmark_dataset(opts.config);
  const fs::path dir(opts.out_dir);
  const std::string ext = opts.format == "binary" ? ".dlf" : ".jsonl";

  lfr::write_features(ds.db_features, dir / ("db_features" + ext));
  lfr::write_features(ds.query_features, dir / ("query_features" + ext));
  lfr::write_geo_csv(ds.db_geo, dir / "db_geo.csv", true);
  lfr::write_geo_csv(ds.query_geo, dir / "query_geo.csv", false);
  lfr::write_bags_jsonl(ds.bags, dir / "bags.jsonl");
  {
    std::ofstream out(dir / "query_landmarks.csv");
    if (!out) throw lfr::IoError("cannot write query_landmarks.csv");
    out << "query_id,landmark_id\n";
    for (const auto& [qid, lm] : ds.query_landmark) out << qid << ',' << lm << '\n';
  }
  log_line("gen: " + std::to_string(ds.db_features.size()) + " db images, " +
           std::to_string(ds.query_features.size()) + " query images -> " + opts.out_dir);
  return 0;
}

// ------------------------------------------------------ train-attention ----

struct TrainOpts {
  std::string bags_path;
  std::string out_path;
  std::string trace_path;
  lfr::TrainHyper hyper;
};

int run_train(const TrainOpts& opts) {
  const auto bags = lfr::read_bags_jsonl(opts.bags_path);
  const auto result = lfr::train_attention(bags, opts.hyper);
  lfr::save_checkpoint(result.scorer, result.classifier, opts.out_path);
  if (!opts.trace_path.empty()) {
    std::ofstream out(opts.trace_path);
    if (!out) throw lfr::IoError("cannot write loss trace: " + opts.trace_path);
    out << "step,loss\n";
    char buf[40];
    for (std::size_t i = 0; i < result.loss_trace.size(); ++i) {
      std::snprintf(buf, sizeof(buf), "%.17g", result.loss_trace[i]);
      out << i << ',' << buf << '\n';
    }
  }
  log_line("train-attention: " + std::to_string(bags.size()) + " bags, " +
           std::to_string(opts.hyper.steps) + " steps -> " + opts.out_path);
  return 0;
}

// ---------------------------------------------------------- build-index ----

struct BuildOpts {
  std::string features_path;
  std::string out_path;
  std::string attention_path;
  std::string stats_path;
  lfr::IndexConfig config;
  std::uint32_t pca_dim = 40;
  std::uint32_t feature_cap = 1000;
  std::uint64_t seed = 1;
};

int run_build(const BuildOpts& opts) {
  auto images = lfr::read_features(opts.features_path);
  if (images.empty()) throw lfr::InvalidInput("build-index: no images in " + opts.features_path);

  if (!opts.attention_path.empty()) {
    const auto [scorer, classifier] = lfr::load_checkpoint(opts.attention_path);
    (void)classifier;
    for (auto& image : images) image = lfr::attach_scores(scorer, std::move(image));
    log_line("build-index: attached attention scores from " + opts.attention_path);
  }
  for (auto& image : images) image.features = lfr::select_top_by_score(image.features, opts.feature_cap);

  std::optional<lfr::PcaModel> pca;
  lfr::IndexConfig config = opts.config;
  if (opts.pca_dim > 0) {
    std::vector<lfr::Descriptor> selected;
    for (const auto& image : images)
      for (const auto& f : image.features) selected.push_back(lfr::l2_normalize(f.descriptor));
    pca = lfr::pca_train(selected, opts.pca_dim);
    round_pca_to_f32(*pca);  // queries and the database see one transform
    for (auto& image : images)
      for (auto& f : image.features) f.descriptor = lfr::reduce_descriptor(*pca, f.descriptor);
    config.descriptor_dim = opts.pca_dim;
  } else if (!images.front().features.empty()) {
    config.descriptor_dim =
        static_cast<std::uint32_t>(images.front().features.front().descriptor.size());
  }

  const auto index = lfr::build_index(images, config, opts.seed, std::move(pca));
  const std::uint64_t bytes = lfr::save_index(index, opts.out_path);

  if (!opts.stats_path.empty()) {
    json histogram = json::object();
    {
      std::map<std::uint64_t, std::uint64_t> buckets;  // by power of two
      for (const auto s : index.stats.leaf_sizes) {
        std::uint64_t b = 1;
        while (b < s) b <<= 1;
        ++buckets[b];
      }
      for (const auto& [bucket, count] : buckets)
        histogram["<=" + std::to_string(bucket)] = count;
    }
    const json stats = {
        {"n_images", index.stats.n_images},
        {"n_descriptors", index.stats.n_descriptors},
        {"n_nonempty_cells", index.stats.n_nonempty_cells},
        {"n_leaves", index.stats.n_leaves},
        {"max_leaf_postings", index.stats.max_leaf_postings},
        {"code_bytes_per_posting", index.stats.code_bytes_per_posting},
        {"index_bytes", bytes},
        {"bytes_per_descriptor",
         index.stats.n_descriptors
             ? static_cast<double>(bytes) / static_cast<double>(index.stats.n_descriptors)
             : 0.0},
        {"leaf_histogram", histogram},
    };
    std::ofstream out(opts.stats_path);
    if (!out) throw lfr::IoError("cannot write stats: " + opts.stats_path);
    out << stats.dump(2) << '\n';
  }
  log_line("build-index: " + std::to_string(index.stats.n_descriptors) + " descriptors, " +
           std::to_string(index.stats.n_leaves) + " leaves, " + std::to_string(bytes) +
           " bytes -> " + opts.out_path);
  return 0;
}

// ----------------------------------------------------------------- query ---

struct QueryOpts {
  std::string index_path;
  std::string features_path;
  std::string out_path;
  std::string attention_path;
  std::uint32_t feature_cap = 1000;
  lfr::SearchParams search;
  lfr::RansacParams ransac;
  std::uint64_t seed = 1;
  std::uint32_t threads = 0;
};

int run_query(const QueryOpts& opts) {
  const auto index = lfr::load_index(opts.index_path);
  auto queries = lfr::read_features(opts.features_path);

  std::optional<lfr::AttentionScorer> scorer;
  if (!opts.attention_path.empty()) scorer = lfr::load_checkpoint(opts.attention_path).first;

  auto process = [&](const lfr::ImageFeatures& raw) {
    lfr::ImageFeatures image = raw;
    if (scorer) image = lfr::attach_scores(*scorer, std::move(image));
    image.features = lfr::select_top_by_score(image.features, opts.feature_cap);
    if (index.pca) {
      for (auto& f : image.features) f.descriptor = lfr::reduce_descriptor(*index.pca, f.descriptor);
    }
    const auto candidates = lfr::search_image(index, image, opts.search);
    lfr::RansacParams params = opts.ransac;
    params.seed = lfr::derive_seed(opts.seed, image.image_id);
    const auto ranked = lfr::rank_results(candidates, params);
    std::vector<lfr::RankedMatch> lines;
    lines.reserve(ranked.size());
    for (const auto& r : ranked)
      lines.push_back(lfr::RankedMatch{image.image_id, r.image_id, r.inlier_count,
                                       r.total_correspondences});
    return lines;
  };

  std::vector<std::vector<lfr::RankedMatch>> per_query(queries.size());
  const std::uint32_t n_threads = opts.threads > 0
                                      ? opts.threads
                                      : std::max(1u, std::thread::hardware_concurrency());
  if (n_threads <= 1 || queries.size() <= 1) {
    for (std::size_t i = 0; i < queries.size(); ++i) per_query[i] = process(queries[i]);
  } else {
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= queries.size()) break;
        per_query[i] = process(queries[i]);
      }
    };
    std::vector<std::thread> pool;
    for (std::uint32_t t = 1; t < n_threads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
  }

  std::vector<lfr::RankedMatch> all;
  for (auto& lines : per_query)
    for (auto& line : lines) all.push_back(std::move(line));
  lfr::write_run_jsonl(all, opts.out_path);
  log_line("query: " + std::to_string(queries.size()) + " queries, " +
           std::to_string(all.size()) + " ranked matches -> " + opts.out_path);
  return 0;
}

// -------------------------------------------------------------- evaluate ---

struct EvaluateOpts {
  std::string run_path;
  std::string db_geo_path;
  std::string queries_geo_path;
  std::string out_dir;
  double threshold_km = 25.0;
  std::uint32_t min_photos = 3;
};

int run_evaluate(const EvaluateOpts& opts) {
  const auto run = lfr::read_run_jsonl(opts.run_path);
  const auto db_geo = lfr::read_geo_csv(opts.db_geo_path, true);
  const auto queries_geo = lfr::read_geo_csv(opts.queries_geo_path, false);
  const auto gt = lfr::build_ground_truth(db_geo, queries_geo, opts.threshold_km, opts.min_photos);

  lfr::RetrievalRun deduped;
  for (const auto& [qid, results] : run.queries)
    deduped.queries[qid] = lfr::dedup_top_per_landmark(results, gt.landmark_of);
  const auto pr = lfr::pr_sweep(deduped, gt);

  fs::create_directories(opts.out_dir);
  const fs::path dir(opts.out_dir);
  lfr::write_pr_csv(pr, dir / "pr.csv");

  json map_value;
  try {
    map_value = lfr::mean_average_precision(run, gt);
  } catch (const lfr::InvalidInput&) {
    map_value = nullptr;  // nothing evaluable (e.g. distractors only)
  }

  std::size_t n_distractors = 0;
  std::size_t rejected = 0;
  for (const auto& [qid, rel] : gt.relevant) {
    if (!rel.empty()) continue;
    ++n_distractors;
    const auto it = run.queries.find(qid);
    if (it == run.queries.end() || it->second.empty()) ++rejected;
  }

  double max_precision = 0.0;
  std::uint64_t recall_at_max = 0;
  for (const auto& p : pr) {
    if (p.precision > max_precision ||
        (p.precision == max_precision && p.recall > recall_at_max)) {
      max_precision = p.precision;
      recall_at_max = p.recall;
    }
  }

  const json summary = {
      {"n_queries", gt.relevant.size()},
      {"n_distractor_queries", n_distractors},
      {"n_rejected_distractors", rejected},
      {"distractor_rejection_rate",
       n_distractors ? static_cast<double>(rejected) / static_cast<double>(n_distractors) : 1.0},
      {"map", map_value},
      {"max_precision", max_precision},
      {"recall_at_max_precision", recall_at_max},
      {"n_pr_points", pr.size()},
  };
  std::ofstream out(dir / "summary.json");
  if (!out) throw lfr::IoError("cannot write summary.json");
  out << summary.dump(2) << '\n';
  log_line("evaluate: " + std::to_string(pr.size()) + " pr points, summary -> " + opts.out_dir);
  return 0;
}

// ------------------------------------------------------------------ fuse ---

struct FuseOpts {
  std::string local_path;
  std::string global_path;
  std::string out_path;
  double weight = 0.25;
};

lfr::RetrievalRun read_scores_any(const std::string& path) {
  if (fs::path(path).extension() == ".jsonl") return lfr::read_run_jsonl(path);
  return lfr::read_scores_csv(path);
}

int run_fuse(const FuseOpts& opts) {
  const auto local = read_scores_any(opts.local_path);
  const auto global = read_scores_any(opts.global_path);
  const auto fused = lfr::late_fusion(local, global, opts.weight);
  lfr::write_scored_run_jsonl(fused, opts.out_path);
  log_line("fuse: weight " + std::to_string(opts.weight) + " -> " + opts.out_path);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"lfr: attentive local-feature image retrieval pipeline"};
  app.require_subcommand(1);
  app.set_config("--config", "", "INI config file; keys mirror the long flag names")
      ->configurable(false);
  app.allow_config_extras(CLI::config_extras_mode::error);

  GenOpts gen;
  auto* cmd_gen = app.add_subcommand("gen", "Generate a synthetic landmark corpus with geotags");
  cmd_gen->add_option("--out", gen.out_dir, "Output directory")->required();
  cmd_gen->add_option("--seed", gen.config.seed, "Generator seed")->capture_default_str();
  cmd_gen->add_option("--landmarks", gen.config.n_landmarks, "Number of landmarks")
      ->capture_default_str();
  cmd_gen->add_option("--images-per-landmark", gen.config.images_per_landmark,
                      "Database images per landmark")
      ->capture_default_str();
  cmd_gen->add_option("--features-per-image", gen.config.features_per_image,
                      "Features per image")
      ->capture_default_str();
  cmd_gen->add_option("--raw-dim", gen.config.raw_dim, "Raw descriptor dimension")
      ->capture_default_str();
  cmd_gen->add_option("--discriminative-dims", gen.config.n_discriminative_dims,
                      "Leading dims carrying the landmark signature")
      ->capture_default_str();
  cmd_gen->add_option("--noise-sigma", gen.config.noise_sigma, "Descriptor noise")
      ->capture_default_str();
  cmd_gen->add_option("--queries-per-landmark", gen.config.queries_per_landmark,
                      "Landmark query images per landmark")
      ->capture_default_str();
  cmd_gen->add_option("--distractors", gen.config.distractor_queries,
                      "Distractor queries (match nothing)")
      ->capture_default_str();
  cmd_gen->add_option("--geo-spread-km", gen.config.geo_spread_km,
                      "Geotag spread around each landmark, km")
      ->capture_default_str();
  cmd_gen->add_option("--format", gen.format, "Feature file format: jsonl or binary")
      ->check(CLI::IsMember({"jsonl", "binary"}))
      ->capture_default_str();

  TrainOpts train;
  auto* cmd_train = app.add_subcommand(
      "train-attention", "Train the attention scorer and classifier on feature bags");
  cmd_train->add_option("--bags", train.bags_path, "Bags JSONL file")->required();
  cmd_train->add_option("--out", train.out_path, "Checkpoint output path")->required();
  cmd_train->add_option("--loss-trace", train.trace_path, "Loss trace CSV output path");
  cmd_train->add_option("--steps", train.hyper.steps, "SGD steps")->capture_default_str();
  cmd_train->add_option("--lr", train.hyper.lr, "Learning rate")->capture_default_str();
  cmd_train->add_option("--hidden", train.hyper.hidden, "Scorer hidden width")
      ->capture_default_str();
  cmd_train->add_option("--seed", train.hyper.seed, "Training seed")->capture_default_str();

  BuildOpts build;
  auto* cmd_build = app.add_subcommand(
      "build-index", "Select features, reduce them, and build the retrieval index");
  cmd_build->add_option("--features", build.features_path, "Database feature file")->required();
  cmd_build->add_option("--out", build.out_path, "Index output path")->required();
  cmd_build->add_option("--attention", build.attention_path,
                        "Attention checkpoint; scores replace the stored ones");
  cmd_build->add_option("--stats", build.stats_path, "Build-stats JSON output path");
  cmd_build->add_option("--coarse-k", build.config.coarse_k, "Coarse codebook size")
      ->capture_default_str();
  cmd_build->add_option("--kd-leaf-max", build.config.kd_leaf_max,
                        "Split cells with more postings than this")
      ->capture_default_str();
  cmd_build->add_option("--pq-m", build.config.pq_m, "Product-quantizer subvector count")
      ->capture_default_str();
  cmd_build->add_option("--pq-bits", build.config.pq_bits, "Bits per subvector")
      ->capture_default_str();
  cmd_build->add_option("--pca-dim", build.pca_dim,
                        "Reduced descriptor dimension (0 = use raw descriptors)")
      ->capture_default_str();
  cmd_build->add_option("--feature-cap", build.feature_cap,
                        "Keep at most this many features per image")
      ->capture_default_str();
  cmd_build->add_option("--kmeans-iters", build.config.kmeans_iters, "K-means iterations")
      ->capture_default_str();
  cmd_build->add_option("--seed", build.seed, "Build seed")->capture_default_str();

  QueryOpts query;
  auto* cmd_query = app.add_subcommand(
      "query", "Search the index and rank database images by verified inliers");
  cmd_query->add_option("--index", query.index_path, "Index file")->required();
  cmd_query->add_option("--features", query.features_path, "Query feature file")->required();
  cmd_query->add_option("--out", query.out_path, "Ranked run JSONL output path")->required();
  cmd_query->add_option("--attention", query.attention_path,
                        "Attention checkpoint for re-scoring query features");
  cmd_query->add_option("--feature-cap", query.feature_cap,
                        "Keep at most this many features per query image")
      ->capture_default_str();
  cmd_query->add_option("--top-k", query.search.top_k, "Nearest neighbors per query feature")
      ->capture_default_str();
  cmd_query->add_option("--soft-assign", query.search.soft_assign,
                        "Coarse cells probed per query feature")
      ->capture_default_str();
  cmd_query->add_option("--leaf-budget", query.search.leaf_budget,
                        "Total leaves visited per query feature")
      ->capture_default_str();
  cmd_query->add_option("--ransac-iters", query.ransac.iters, "RANSAC iterations")
      ->capture_default_str();
  cmd_query->add_option("--ransac-tol", query.ransac.inlier_tol, "RANSAC inlier tolerance, px")
      ->capture_default_str();
  cmd_query->add_option("--min-inliers", query.ransac.min_inliers,
                        "Verified matches below this are rejected")
      ->capture_default_str();
  cmd_query->add_option("--seed", query.seed, "Query seed (drives RANSAC)")
      ->capture_default_str();
  cmd_query->add_option("--threads", query.threads,
                        "Worker threads (0 = machine parallelism)")
      ->capture_default_str();

  EvaluateOpts evaluate;
  auto* cmd_eval = app.add_subcommand(
      "evaluate", "Score a run against GPS ground truth: PR sweep and mAP");
  cmd_eval->add_option("--run", evaluate.run_path, "Run JSONL file")->required();
  cmd_eval->add_option("--db-geo", evaluate.db_geo_path, "Database geo CSV")->required();
  cmd_eval->add_option("--queries-geo", evaluate.queries_geo_path, "Query geo CSV")->required();
  cmd_eval->add_option("--out-dir", evaluate.out_dir, "Output directory")->required();
  cmd_eval->add_option("--threshold-km", evaluate.threshold_km,
                       "Ground-truth distance threshold, km")
      ->capture_default_str();
  cmd_eval->add_option("--min-photos", evaluate.min_photos,
                       "Drop landmarks with fewer photos than this")
      ->capture_default_str();

  FuseOpts fuse;
  auto* cmd_fuse = app.add_subcommand(
      "fuse", "Late fusion of local and global scores (weighted, per-query normalized)");
  cmd_fuse->add_option("--local", fuse.local_path, "Local scores (CSV or run JSONL)")->required();
  cmd_fuse->add_option("--global", fuse.global_path, "Global scores (CSV or run JSONL)")
      ->required();
  cmd_fuse->add_option("--weight", fuse.weight, "Weight of the local score")
      ->capture_default_str();
  cmd_fuse->add_option("--out", fuse.out_path, "Fused run JSONL output path")->required();

  // Parent options (--config) may appear after the subcommand name.
  for (auto* sub : {cmd_gen, cmd_train, cmd_build, cmd_query, cmd_eval, cmd_fuse})
    sub->fallthrough();

  try {
    app.parse(argc, argv);
    if (*cmd_gen) return run_gen(gen);
    if (*cmd_train) return run_train(train);
    if (*cmd_build) return run_build(build);
    if (*cmd_query) return run_query(query);
    if (*cmd_eval) return run_evaluate(evaluate);
    if (*cmd_fuse) return run_fuse(fuse);
    return 2;
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  } catch (const lfr::IoError& e) {
    std::fprintf(stderr, "lfr: io error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "lfr: error: %s\n", e.what());
    return 2;
  }
}
