#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "lfr/feature_model.hpp"
#include "lfr/linalg.hpp"
#include "lfr/matcher.hpp"
#include "lfr/quantizer.hpp"

namespace lfr {

struct IndexConfig {
  std::uint32_t coarse_k = 8192;
  std::uint32_t kd_leaf_max = 30000;
  std::uint32_t pq_m = 10;
  std::uint32_t pq_bits = 5;
  std::uint32_t descriptor_dim = 40;
  std::uint32_t kmeans_iters = 25;
};

struct SearchParams {
  std::uint32_t soft_assign = 5;
  std::uint64_t leaf_budget = 10000;
  std::uint32_t top_k = 60;
};

struct Posting {
  std::uint32_t image_index = 0;
  std::uint32_t feature_ordinal = 0;
  PqCode code;
};

/// Interior node of a cell's KD-tree. `leaf` >= 0 marks a leaf node and
/// indexes into the cell's leaf array; interior nodes carry the split plane
/// and child node ids.
struct KdNode {
  std::int32_t split_dim = -1;
  double split_value = 0.0;
  std::int32_t left = -1;
  std::int32_t right = -1;
  std::int32_t leaf = -1;
};

struct KdLeaf {
  bool uses_global_pq = false;
  LocalPq lpq;  // unused when uses_global_pq
  std::vector<Posting> postings;
};

/// Pre-order node list plus leaves for one coarse cell; empty for cells that
/// received no postings.
struct CellTree {
  std::vector<KdNode> nodes;
  std::vector<KdLeaf> leaves;
};

struct ImageEntry {
  std::string id;
  std::vector<double> x;
  std::vector<double> y;
  std::vector<double> scale;
};

struct BuildStats {
  std::uint64_t n_images = 0;
  std::uint64_t n_descriptors = 0;
  std::uint64_t n_nonempty_cells = 0;
  std::uint64_t n_leaves = 0;
  std::uint64_t max_leaf_postings = 0;
  std::uint64_t code_bytes_per_posting = 0;
  std::vector<std::uint64_t> leaf_sizes;
};

struct RetrievalIndex {
  IndexConfig config;
  std::optional<PcaModel> pca;  // raw -> descriptor_dim reduction, if any
  KMeansModel coarse;
  std::vector<CellTree> cells;
  std::vector<ImageEntry> images;
  std::optional<ProductQuantizer> global_residual_pq;
  BuildStats stats;

  bool built() const { return !coarse.centroids.empty(); }
};

struct SearchHit {
  std::uint32_t image_index = 0;
  std::uint32_t feature_ordinal = 0;
  double distance = 0.0;
};

/// Build the inverted index: coarse codebook by k-means (k clamped to the
/// number of distinct descriptors), hard assignment, per-cell KD-tree splits
/// by median on the maximum-variance residual dimension whenever a node
/// exceeds kd_leaf_max postings, and a local quantizer per leaf (falling back
/// to one shared residual quantizer for leaves smaller than 2^bits).
/// Model parameters are rounded to f32 so a save/load roundtrip is lossless.
RetrievalIndex build_index(const std::vector<ImageFeatures>& corpus, const IndexConfig& config,
                           std::uint64_t seed, std::optional<PcaModel> pca = std::nullopt);

/// The t nearest coarse centroids, ascending by squared distance, ties to
/// the lower cell id.
std::vector<std::pair<std::uint32_t, double>> soft_assign(const KMeansModel& coarse,
                                                          const Descriptor& query, std::size_t t);

/// Probe the soft-assigned cells in ascending coarse distance; within each
/// cell visit leaves best-first by residual lower bound until the global
/// leaf budget runs out. Returns the top_k postings by ADC distance, ties by
/// (image id, feature ordinal).
std::vector<SearchHit> search_descriptor(const RetrievalIndex& index, const Descriptor& query,
                                         const SearchParams& params);

/// Run search_descriptor for every query feature and group the matches per
/// database image as location correspondences.
std::map<std::string, std::vector<Correspondence>> search_image(const RetrievalIndex& index,
                                                                const ImageFeatures& query,
                                                                const SearchParams& params);

/// Little-endian binary index file, magic "DIDX". Returns bytes written.
std::uint64_t save_index(const RetrievalIndex& index, const std::filesystem::path& path);
RetrievalIndex load_index(const std::filesystem::path& path);

}  // namespace lfr
