#include "lfr/index.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <numeric>
#include <queue>
#include <unordered_set>

#include "lfr/errors.hpp"
#include "lfr/rng.hpp"

namespace lfr {

namespace {

double round_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

void round_f32(Descriptor& v) {
  for (double& x : v) x = round_f32(x);
}

void round_f32(std::vector<Descriptor>& m) {
  for (auto& row : m) round_f32(row);
}

void round_f32_pq(ProductQuantizer& pq) {
  for (auto& book : pq.codebooks) round_f32(book);
}

void round_f32_pca(PcaModel& pca) {
  round_f32(pca.mean);
  round_f32(pca.components);
  for (double& v : pca.explained_variance) v = round_f32(v);
}

struct DescriptorRef {
  std::uint32_t image_index;
  std::uint32_t ordinal;
};

/// Recursive KD split of one cell's member set. Members are indices into the
/// flat descriptor array; residuals are relative to the cell centroid.
struct CellBuilder {
  const std::vector<double>& data;  // n x d flat descriptors
  std::size_t d;
  const Descriptor& centroid;
  std::uint32_t leaf_max;
  CellTree& tree;
  std::vector<std::vector<std::size_t>> leaf_members;

  double residual(std::size_t member, std::size_t dim) const {
    return data[member * d + dim] - centroid[dim];
  }

  std::int32_t build(std::vector<std::size_t>& members) {
    const auto node_id = static_cast<std::int32_t>(tree.nodes.size());
    tree.nodes.push_back(KdNode{});
    if (members.size() <= leaf_max) {
      tree.nodes[node_id].leaf = static_cast<std::int32_t>(leaf_members.size());
      leaf_members.push_back(std::move(members));
      return node_id;
    }

    // Split on the maximum-variance residual dimension at the median.
    std::size_t split_dim = 0;
    double best_var = -1.0;
    for (std::size_t dim = 0; dim < d; ++dim) {
      double sum = 0.0;
      double sum2 = 0.0;
      for (std::size_t m : members) {
        const double r = residual(m, dim);
        sum += r;
        sum2 += r * r;
      }
      const double n = static_cast<double>(members.size());
      const double var = sum2 / n - (sum / n) * (sum / n);
      if (var > best_var) {
        best_var = var;
        split_dim = dim;
      }
    }

    std::stable_sort(members.begin(), members.end(), [&](std::size_t a, std::size_t b) {
      return residual(a, split_dim) < residual(b, split_dim);
    });
    const std::size_t mid = members.size() / 2;
    const double split_value = round_f32(residual(members[mid], split_dim));

    std::vector<std::size_t> left(members.begin(), members.begin() + static_cast<long>(mid));
    std::vector<std::size_t> right(members.begin() + static_cast<long>(mid), members.end());
    members.clear();
    members.shrink_to_fit();

    const std::int32_t l = build(left);
    const std::int32_t r = build(right);
    tree.nodes[node_id].split_dim = static_cast<std::int32_t>(split_dim);
    tree.nodes[node_id].split_value = split_value;
    tree.nodes[node_id].left = l;
    tree.nodes[node_id].right = r;
    return node_id;
  }
};

struct Candidate {
  double distance;
  std::uint32_t image_index;
  std::uint32_t feature_ordinal;
  const std::string* image_id;
};

/// "a ranks ahead of b" for result ordering.
bool candidate_better(const Candidate& a, const Candidate& b) {
  if (a.distance != b.distance) return a.distance < b.distance;
  if (*a.image_id != *b.image_id) return *a.image_id < *b.image_id;
  return a.feature_ordinal < b.feature_ordinal;
}

}  // namespace

RetrievalIndex build_index(const std::vector<ImageFeatures>& corpus, const IndexConfig& config,
                           std::uint64_t seed, std::optional<PcaModel> pca) {
  if (corpus.empty()) throw InvalidInput("build_index: empty corpus");
  if (config.descriptor_dim == 0 || config.pq_m == 0 ||
      config.descriptor_dim % config.pq_m != 0)
    throw InvalidInput("build_index: descriptor_dim must be divisible by pq_m");
  if (config.coarse_k == 0 || config.kd_leaf_max == 0)
    throw InvalidInput("build_index: coarse_k and kd_leaf_max must be positive");

  const std::size_t d = config.descriptor_dim;

  RetrievalIndex index;
  index.config = config;
  if (pca) {
    round_f32_pca(*pca);
    index.pca = std::move(pca);
  }

  // Flatten the corpus and build the image table.
  std::vector<double> data;
  std::vector<DescriptorRef> refs;
  index.images.reserve(corpus.size());
  for (std::size_t img = 0; img < corpus.size(); ++img) {
    const auto& image = corpus[img];
    ImageEntry entry;
    entry.id = image.image_id;
    entry.x.reserve(image.features.size());
    for (std::size_t f = 0; f < image.features.size(); ++f) {
      const auto& feat = image.features[f];
      if (feat.descriptor.size() != d)
        throw InvalidInput("build_index: descriptor dimension does not match config");
      data.insert(data.end(), feat.descriptor.begin(), feat.descriptor.end());
      refs.push_back(DescriptorRef{static_cast<std::uint32_t>(img), static_cast<std::uint32_t>(f)});
      entry.x.push_back(round_f32(feat.x));
      entry.y.push_back(round_f32(feat.y));
      entry.scale.push_back(round_f32(feat.scale));
    }
    index.images.push_back(std::move(entry));
  }
  const std::size_t n = refs.size();
  if (n == 0) throw InvalidInput("build_index: corpus has no features");

  // Coarse codebook; k never exceeds the number of distinct descriptors.
  std::size_t distinct = 0;
  {
    std::unordered_set<std::string_view> seen;
    seen.reserve(n * 2);
    for (std::size_t i = 0; i < n; ++i) {
      seen.insert(std::string_view(reinterpret_cast<const char*>(&data[i * d]),
                                   d * sizeof(double)));
    }
    distinct = seen.size();
  }
  const std::size_t k = std::min<std::size_t>(config.coarse_k, distinct);

  {
    std::vector<Descriptor> points(n, Descriptor(d));
    for (std::size_t i = 0; i < n; ++i)
      std::copy_n(data.begin() + static_cast<long>(i * d), d, points[i].begin());
    index.coarse = kmeans_train(points, k, config.kmeans_iters, derive_seed(seed, "coarse"));
    round_f32(index.coarse.centroids);
    index.coarse.inertia = round_f32(index.coarse.inertia);
  }

  // Hard assignment of every descriptor to its nearest coarse centroid.
  std::vector<std::uint32_t> assignment(n);
  std::vector<std::vector<std::size_t>> cell_members(k);
  {
    Descriptor point(d);
    for (std::size_t i = 0; i < n; ++i) {
      std::copy_n(data.begin() + static_cast<long>(i * d), d, point.begin());
      assignment[i] = static_cast<std::uint32_t>(kmeans_assign(index.coarse, point).first);
      cell_members[assignment[i]].push_back(i);
    }
  }

  // Residuals to the assigned centroid feed both the shared fallback
  // quantizer and each leaf's local quantizer.
  auto residual_of = [&](std::size_t member, std::size_t cell) {
    Descriptor r(d);
    const Descriptor& c = index.coarse.centroids[cell];
    for (std::size_t j = 0; j < d; ++j) r[j] = data[member * d + j] - c[j];
    return r;
  };

  index.cells.resize(k);
  struct PendingLeaf {
    std::size_t cell;
    std::size_t leaf;
    std::vector<std::size_t> members;
  };
  std::vector<PendingLeaf> global_leaves;

  for (std::size_t cell = 0; cell < k; ++cell) {
    if (cell_members[cell].empty()) continue;
    CellTree& tree = index.cells[cell];
    CellBuilder builder{data, d, index.coarse.centroids[cell], config.kd_leaf_max, tree, {}};
    builder.build(cell_members[cell]);

    tree.leaves.resize(builder.leaf_members.size());
    for (std::size_t leaf = 0; leaf < builder.leaf_members.size(); ++leaf) {
      auto& members = builder.leaf_members[leaf];
      std::vector<Descriptor> vectors;
      vectors.reserve(members.size());
      for (std::size_t m : members) {
        Descriptor v(d);
        std::copy_n(data.begin() + static_cast<long>(m * d), d, v.begin());
        vectors.push_back(std::move(v));
      }
      auto lpq = lopq_train(vectors, index.coarse.centroids[cell], config.pq_m, config.pq_bits,
                            config.kmeans_iters, derive_seed(derive_seed(seed, cell), leaf));
      if (lpq) {
        round_f32(lpq->rotation);
        round_f32_pq(lpq->pq);
        KdLeaf& out = tree.leaves[leaf];
        out.lpq = std::move(*lpq);
        out.postings.reserve(members.size());
        for (std::size_t m : members) {
          Descriptor v(d);
          std::copy_n(data.begin() + static_cast<long>(m * d), d, v.begin());
          out.postings.push_back(Posting{refs[m].image_index, refs[m].ordinal,
                                         lopq_encode(out.lpq, v, index.coarse.centroids[cell])});
        }
      } else {
        tree.leaves[leaf].uses_global_pq = true;
        global_leaves.push_back(PendingLeaf{cell, leaf, std::move(members)});
      }
    }
  }

  if (!global_leaves.empty()) {
    // Shared fallback quantizer, trained on every residual in corpus order.
    std::vector<Descriptor> residuals;
    residuals.reserve(n);
    for (std::size_t i = 0; i < n; ++i) residuals.push_back(residual_of(i, assignment[i]));
    ProductQuantizer gpq = pq_train_clamped(residuals, config.pq_m, config.pq_bits,
                                            config.kmeans_iters, derive_seed(seed, "global_pq"));
    round_f32_pq(gpq);
    index.global_residual_pq = std::move(gpq);
    for (auto& pending : global_leaves) {
      KdLeaf& leaf = index.cells[pending.cell].leaves[pending.leaf];
      leaf.postings.reserve(pending.members.size());
      for (std::size_t m : pending.members) {
        leaf.postings.push_back(
            Posting{refs[m].image_index, refs[m].ordinal,
                    pq_encode(*index.global_residual_pq, residual_of(m, pending.cell))});
      }
    }
  }

  // Stats.
  index.stats.n_images = corpus.size();
  index.stats.n_descriptors = n;
  index.stats.code_bytes_per_posting = (config.pq_m * config.pq_bits + 7) / 8;
  for (const auto& tree : index.cells) {
    if (!tree.leaves.empty()) ++index.stats.n_nonempty_cells;
    for (const auto& leaf : tree.leaves) {
      ++index.stats.n_leaves;
      index.stats.leaf_sizes.push_back(leaf.postings.size());
      index.stats.max_leaf_postings = std::max(index.stats.max_leaf_postings,
                                               static_cast<std::uint64_t>(leaf.postings.size()));
    }
  }
  return index;
}

std::vector<std::pair<std::uint32_t, double>> soft_assign(const KMeansModel& coarse,
                                                          const Descriptor& query, std::size_t t) {
  if (query.size() != coarse.dim()) throw InvalidInput("soft_assign: dimension mismatch");
  if (t > coarse.k()) t = coarse.k();
  std::vector<std::pair<std::uint32_t, double>> all(coarse.k());
  for (std::size_t c = 0; c < coarse.k(); ++c) {
    double s = 0.0;
    const Descriptor& cent = coarse.centroids[c];
    for (std::size_t j = 0; j < query.size(); ++j) {
      const double diff = query[j] - cent[j];
      s += diff * diff;
    }
    all[c] = {static_cast<std::uint32_t>(c), s};
  }
  std::partial_sort(all.begin(), all.begin() + static_cast<long>(t), all.end(),
                    [](const auto& a, const auto& b) {
                      if (a.second != b.second) return a.second < b.second;
                      return a.first < b.first;
                    });
  all.resize(t);
  return all;
}

std::vector<SearchHit> search_descriptor(const RetrievalIndex& index, const Descriptor& query,
                                         const SearchParams& params) {
  if (!index.built()) throw StateError("search_descriptor: index is not built");
  if (query.size() != index.config.descriptor_dim)
    throw InvalidInput("search_descriptor: dimension mismatch");
  if (params.soft_assign == 0 || params.top_k == 0 || params.leaf_budget == 0)
    throw InvalidInput("search_descriptor: params must be >= 1");

  const std::size_t d = query.size();
  const auto probes = soft_assign(index.coarse, query, params.soft_assign);

  // Bounded result set: a max-heap keyed by "worst candidate on top".
  std::vector<Candidate> heap;
  heap.reserve(params.top_k + 1);
  auto heap_cmp = [](const Candidate& a, const Candidate& b) { return candidate_better(a, b); };
  auto offer = [&](Candidate c) {
    if (heap.size() < params.top_k) {
      heap.push_back(c);
      std::push_heap(heap.begin(), heap.end(), heap_cmp);
    } else if (candidate_better(c, heap.front())) {
      std::pop_heap(heap.begin(), heap.end(), heap_cmp);
      heap.back() = c;
      std::push_heap(heap.begin(), heap.end(), heap_cmp);
    }
  };

  std::uint64_t budget = params.leaf_budget;
  Descriptor residual(d);

  struct HeapEntry {
    double lb;
    std::uint64_t seq;
    std::int32_t node;
    std::vector<double> offsets;
  };
  auto entry_cmp = [](const HeapEntry& a, const HeapEntry& b) {
    if (a.lb != b.lb) return a.lb > b.lb;  // min-heap on lb
    return a.seq > b.seq;                  // FIFO among equal bounds
  };

  for (const auto& [cell_id, cell_dist] : probes) {
    if (budget == 0) break;
    const CellTree& tree = index.cells[cell_id];
    if (tree.leaves.empty()) continue;

    const Descriptor& centroid = index.coarse.centroids[cell_id];
    for (std::size_t j = 0; j < d; ++j) residual[j] = query[j] - centroid[j];

    std::priority_queue<HeapEntry, std::vector<HeapEntry>, decltype(entry_cmp)> frontier(entry_cmp);
    std::uint64_t seq = 0;
    frontier.push(HeapEntry{0.0, seq++, 0, std::vector<double>(d, 0.0)});

    while (!frontier.empty() && budget > 0) {
      HeapEntry entry = frontier.top();
      frontier.pop();
      const KdNode& node = tree.nodes[static_cast<std::size_t>(entry.node)];
      if (node.leaf >= 0) {
        --budget;
        const KdLeaf& leaf = tree.leaves[static_cast<std::size_t>(node.leaf)];
        const ProductQuantizer& pq =
            leaf.uses_global_pq ? *index.global_residual_pq : leaf.lpq.pq;
        const Descriptor rotated =
            leaf.uses_global_pq ? residual : lopq_rotate(leaf.lpq, residual);
        const AdcTable table = adc_table(pq, rotated);
        for (const auto& posting : leaf.postings) {
          const double dist = adc_distance(table, posting.code);
          offer(Candidate{dist, posting.image_index, posting.feature_ordinal,
                          &index.images[posting.image_index].id});
        }
        continue;
      }
      const auto dim = static_cast<std::size_t>(node.split_dim);
      const double delta = residual[dim] - node.split_value;
      const std::int32_t near = delta < 0.0 ? node.left : node.right;
      const std::int32_t far = delta < 0.0 ? node.right : node.left;
      const double old_off = entry.offsets[dim];
      const double far_lb = entry.lb - old_off * old_off + delta * delta;

      HeapEntry far_entry{std::max(far_lb, entry.lb), seq++, far, entry.offsets};
      far_entry.offsets[dim] = std::abs(delta);
      HeapEntry near_entry{entry.lb, seq++, near, std::move(entry.offsets)};
      frontier.push(std::move(near_entry));
      frontier.push(std::move(far_entry));
    }
  }

  std::sort(heap.begin(), heap.end(), candidate_better);
  std::vector<SearchHit> hits;
  hits.reserve(heap.size());
  for (const auto& c : heap)
    hits.push_back(SearchHit{c.image_index, c.feature_ordinal, c.distance});
  return hits;
}

std::map<std::string, std::vector<Correspondence>> search_image(const RetrievalIndex& index,
                                                                const ImageFeatures& query,
                                                                const SearchParams& params) {
  std::map<std::string, std::vector<Correspondence>> out;
  for (const auto& feat : query.features) {
    const auto hits = search_descriptor(index, feat.descriptor, params);
    for (const auto& hit : hits) {
      const ImageEntry& entry = index.images[hit.image_index];
      out[entry.id].push_back(Correspondence{
          Point2{feat.x, feat.y},
          Point2{entry.x[hit.feature_ordinal], entry.y[hit.feature_ordinal]}});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Serialization: little-endian binary, magic "DIDX", version 1, counts u64,
// floats f32 on disk with f64 arithmetic in memory.

namespace {

constexpr char kIndexMagic[4] = {'D', 'I', 'D', 'X'};
constexpr std::uint32_t kIndexVersion = 1;

class Writer {
 public:
  explicit Writer(const std::filesystem::path& path) : out_(path, std::ios::binary) {
    if (!out_) throw IoError("cannot open index file for writing: " + path.string());
  }
  void bytes(const void* p, std::size_t n) {
    out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
    written_ += n;
  }
  void u8(std::uint8_t v) { bytes(&v, 1); }
  void u32(std::uint32_t v) { bytes(&v, 4); }
  void u64(std::uint64_t v) { bytes(&v, 8); }
  void i32(std::int32_t v) { bytes(&v, 4); }
  void f32(double v) {
    const float f = static_cast<float>(v);
    bytes(&f, 4);
  }
  void f32_vec(const Descriptor& v) {
    for (double x : v) f32(x);
  }
  void str(const std::string& s) {
    u64(s.size());
    bytes(s.data(), s.size());
  }
  std::uint64_t written() const { return written_; }
  void check() {
    if (!out_) throw IoError("index write failed");
  }

 private:
  std::ofstream out_;
  std::uint64_t written_ = 0;
};

class Reader {
 public:
  explicit Reader(const std::filesystem::path& path) : in_(path, std::ios::binary) {
    if (!in_) throw IoError("cannot open index file: " + path.string());
  }
  void bytes(void* p, std::size_t n, const char* field) {
    in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (!in_) throw FormatError(std::string("index file truncated in field: ") + field);
  }
  std::uint8_t u8(const char* f) {
    std::uint8_t v;
    bytes(&v, 1, f);
    return v;
  }
  std::uint32_t u32(const char* f) {
    std::uint32_t v;
    bytes(&v, 4, f);
    return v;
  }
  std::uint64_t u64(const char* f) {
    std::uint64_t v;
    bytes(&v, 8, f);
    return v;
  }
  std::int32_t i32(const char* f) {
    std::int32_t v;
    bytes(&v, 4, f);
    return v;
  }
  double f32(const char* f) {
    float v;
    bytes(&v, 4, f);
    return static_cast<double>(v);
  }
  Descriptor f32_vec(std::size_t n, const char* f) {
    Descriptor v(n);
    for (double& x : v) x = f32(f);
    return v;
  }
  std::string str(const char* f) {
    const std::uint64_t n = u64(f);
    if (n > (std::uint64_t{1} << 32)) throw FormatError(std::string("absurd string length: ") + f);
    std::string s(n, '\0');
    if (n) bytes(s.data(), n, f);
    return s;
  }

 private:
  std::ifstream in_;
};

void write_pq(Writer& w, const ProductQuantizer& pq) {
  w.u64(pq.m);
  w.u64(pq.bits);
  w.u64(pq.sub_dim);
  for (const auto& book : pq.codebooks)
    for (const auto& cent : book) w.f32_vec(cent);
}

ProductQuantizer read_pq(Reader& r) {
  ProductQuantizer pq;
  pq.m = r.u64("pq.m");
  pq.bits = r.u64("pq.bits");
  pq.sub_dim = r.u64("pq.sub_dim");
  if (pq.m == 0 || pq.m > 4096 || pq.bits == 0 || pq.bits > 16)
    throw FormatError("index file: implausible quantizer shape");
  pq.codebooks.assign(pq.m, {});
  for (auto& book : pq.codebooks) {
    book.assign(pq.ksub(), {});
    for (auto& cent : book) cent = r.f32_vec(pq.sub_dim, "pq.codebook");
  }
  return pq;
}

}  // namespace

std::uint64_t save_index(const RetrievalIndex& index, const std::filesystem::path& path) {
  Writer w(path);
  w.bytes(kIndexMagic, 4);
  w.u32(kIndexVersion);

  w.u32(index.config.coarse_k);
  w.u32(index.config.kd_leaf_max);
  w.u32(index.config.pq_m);
  w.u32(index.config.pq_bits);
  w.u32(index.config.descriptor_dim);
  w.u32(index.config.kmeans_iters);

  w.u8(index.pca.has_value() ? 1 : 0);
  if (index.pca) {
    w.u64(index.pca->in_dim());
    w.u64(index.pca->out_dim());
    w.f32_vec(index.pca->mean);
    for (const auto& row : index.pca->components) w.f32_vec(row);
    for (double v : index.pca->explained_variance) w.f32(v);
  }

  w.u64(index.coarse.k());
  w.u64(index.coarse.dim());
  for (const auto& c : index.coarse.centroids) w.f32_vec(c);
  w.f32(index.coarse.inertia);

  w.u8(index.global_residual_pq.has_value() ? 1 : 0);
  if (index.global_residual_pq) write_pq(w, *index.global_residual_pq);

  const std::size_t code_bytes = (index.config.pq_m * index.config.pq_bits + 7) / 8;
  w.u64(index.cells.size());
  for (const auto& tree : index.cells) {
    w.u64(tree.nodes.size());
    for (const auto& node : tree.nodes) {
      w.i32(node.split_dim);
      w.f32(node.split_value);
      w.i32(node.left);
      w.i32(node.right);
      w.i32(node.leaf);
    }
    w.u64(tree.leaves.size());
    for (const auto& leaf : tree.leaves) {
      w.u8(leaf.uses_global_pq ? 1 : 0);
      if (!leaf.uses_global_pq) {
        for (const auto& row : leaf.lpq.rotation) w.f32_vec(row);
        write_pq(w, leaf.lpq.pq);
      }
      w.u64(leaf.postings.size());
      for (const auto& p : leaf.postings) {
        w.u32(p.image_index);
        w.u32(p.feature_ordinal);
        w.bytes(p.code.packed.data(), code_bytes);
      }
    }
  }

  w.u64(index.images.size());
  for (const auto& entry : index.images) {
    w.str(entry.id);
    w.u64(entry.x.size());
    for (double v : entry.x) w.f32(v);
    for (double v : entry.y) w.f32(v);
    for (double v : entry.scale) w.f32(v);
  }
  w.check();
  return w.written();
}

RetrievalIndex load_index(const std::filesystem::path& path) {
  Reader r(path);
  char magic[4];
  r.bytes(magic, 4, "magic");
  if (std::memcmp(magic, kIndexMagic, 4) != 0)
    throw FormatError("index file: bad magic (expected DIDX)");
  const std::uint32_t version = r.u32("version");
  if (version != kIndexVersion) throw VersionError("index file: unsupported version");

  RetrievalIndex index;
  index.config.coarse_k = r.u32("config.coarse_k");
  index.config.kd_leaf_max = r.u32("config.kd_leaf_max");
  index.config.pq_m = r.u32("config.pq_m");
  index.config.pq_bits = r.u32("config.pq_bits");
  index.config.descriptor_dim = r.u32("config.descriptor_dim");
  index.config.kmeans_iters = r.u32("config.kmeans_iters");

  if (r.u8("pca.present")) {
    const std::uint64_t in_dim = r.u64("pca.in_dim");
    const std::uint64_t out_dim = r.u64("pca.out_dim");
    if (in_dim > 1u << 20 || out_dim > in_dim) throw FormatError("index file: bad pca dims");
    PcaModel pca;
    pca.mean = r.f32_vec(in_dim, "pca.mean");
    pca.components.assign(out_dim, {});
    for (auto& row : pca.components) row = r.f32_vec(in_dim, "pca.components");
    pca.explained_variance.resize(out_dim);
    for (double& v : pca.explained_variance) v = r.f32("pca.explained_variance");
    index.pca = std::move(pca);
  }

  const std::uint64_t k = r.u64("coarse.k");
  const std::uint64_t dim = r.u64("coarse.dim");
  if (dim != index.config.descriptor_dim) throw FormatError("index file: coarse dim mismatch");
  index.coarse.centroids.assign(k, {});
  for (auto& c : index.coarse.centroids) c = r.f32_vec(dim, "coarse.centroids");
  index.coarse.inertia = r.f32("coarse.inertia");

  if (r.u8("global_pq.present")) index.global_residual_pq = read_pq(r);

  const std::size_t code_bytes = (index.config.pq_m * index.config.pq_bits + 7) / 8;
  const std::uint64_t n_cells = r.u64("cells.count");
  if (n_cells != k) throw FormatError("index file: cell count mismatch");
  index.cells.resize(n_cells);
  for (auto& tree : index.cells) {
    const std::uint64_t n_nodes = r.u64("cell.nodes");
    tree.nodes.resize(n_nodes);
    for (auto& node : tree.nodes) {
      node.split_dim = r.i32("node.split_dim");
      node.split_value = r.f32("node.split_value");
      node.left = r.i32("node.left");
      node.right = r.i32("node.right");
      node.leaf = r.i32("node.leaf");
    }
    const std::uint64_t n_leaves = r.u64("cell.leaves");
    tree.leaves.resize(n_leaves);
    for (auto& leaf : tree.leaves) {
      leaf.uses_global_pq = r.u8("leaf.uses_global_pq") != 0;
      if (!leaf.uses_global_pq) {
        leaf.lpq.rotation.assign(index.config.descriptor_dim, {});
        for (auto& row : leaf.lpq.rotation)
          row = r.f32_vec(index.config.descriptor_dim, "leaf.rotation");
        leaf.lpq.pq = read_pq(r);
      }
      const std::uint64_t n_postings = r.u64("leaf.postings");
      leaf.postings.resize(n_postings);
      for (auto& p : leaf.postings) {
        p.image_index = r.u32("posting.image_index");
        p.feature_ordinal = r.u32("posting.feature_ordinal");
        p.code.packed.resize(code_bytes);
        r.bytes(p.code.packed.data(), code_bytes, "posting.code");
      }
    }
  }

  const std::uint64_t n_images = r.u64("images.count");
  index.images.resize(n_images);
  for (auto& entry : index.images) {
    entry.id = r.str("image.id");
    const std::uint64_t n_feat = r.u64("image.features");
    entry.x.resize(n_feat);
    entry.y.resize(n_feat);
    entry.scale.resize(n_feat);
    for (double& v : entry.x) v = r.f32("image.x");
    for (double& v : entry.y) v = r.f32("image.y");
    for (double& v : entry.scale) v = r.f32("image.scale");
  }

  // Rebuild stats.
  index.stats.n_images = n_images;
  index.stats.code_bytes_per_posting = code_bytes;
  for (const auto& tree : index.cells) {
    if (!tree.leaves.empty()) ++index.stats.n_nonempty_cells;
    for (const auto& leaf : tree.leaves) {
      ++index.stats.n_leaves;
      index.stats.n_descriptors += leaf.postings.size();
      index.stats.leaf_sizes.push_back(leaf.postings.size());
      index.stats.max_leaf_postings = std::max(index.stats.max_leaf_postings,
                                               static_cast<std::uint64_t>(leaf.postings.size()));
    }
  }
  return index;
}

}  // namespace lfr
