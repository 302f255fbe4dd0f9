#include "lfr/quantizer.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

#include "lfr/errors.hpp"
#include "lfr/rng.hpp"

namespace lfr {

namespace {

std::vector<Descriptor> slice_column(const std::vector<Descriptor>& vectors, std::size_t j,
                                     std::size_t sub_dim) {
  std::vector<Descriptor> out(vectors.size(), Descriptor(sub_dim));
  for (std::size_t i = 0; i < vectors.size(); ++i)
    std::copy_n(vectors[i].begin() + static_cast<long>(j * sub_dim), sub_dim, out[i].begin());
  return out;
}

ProductQuantizer train_impl(const std::vector<Descriptor>& vectors, std::size_t m,
                            std::size_t bits, std::size_t iters, std::uint64_t seed, bool clamp) {
  if (vectors.empty()) throw InvalidInput("pq_train: empty training set");
  const std::size_t d = vectors.front().size();
  if (m < 1 || d % m != 0) throw InvalidInput("pq_train: dimension not divisible by m");
  if (bits < 1 || bits > 16) throw InvalidInput("pq_train: bits must be in [1, 16]");
  const std::size_t ksub = std::size_t{1} << bits;
  if (!clamp && vectors.size() < ksub)
    throw InvalidInput("pq_train: need at least 2^bits training vectors");

  ProductQuantizer pq;
  pq.m = m;
  pq.bits = bits;
  pq.sub_dim = d / m;
  pq.codebooks.resize(m);
  pq.training_inertia.resize(m);
  const std::size_t k = std::min(ksub, vectors.size());
  for (std::size_t j = 0; j < m; ++j) {
    auto sub = slice_column(vectors, j, pq.sub_dim);
    KMeansModel km = kmeans_train(sub, k, iters, derive_seed(seed, j));
    pq.training_inertia[j] = km.iteration_inertia;
    pq.codebooks[j] = std::move(km.centroids);
    // Keep the advertised codebook size; padded duplicates never win a
    // nearest-centroid tie because ties go to the lowest index.
    while (pq.codebooks[j].size() < ksub) pq.codebooks[j].push_back(pq.codebooks[j].back());
  }
  return pq;
}

std::uint32_t nearest_sub_centroid(const std::vector<Descriptor>& codebook, const double* v,
                                   std::size_t sub_dim) {
  std::uint32_t best = 0;
  double best_d = 0.0;
  for (std::size_t i = 0; i < sub_dim; ++i) {
    const double diff = v[i] - codebook[0][i];
    best_d += diff * diff;
  }
  for (std::size_t c = 1; c < codebook.size(); ++c) {
    double d = 0.0;
    for (std::size_t i = 0; i < sub_dim; ++i) {
      const double diff = v[i] - codebook[c][i];
      d += diff * diff;
    }
    if (d < best_d) {
      best_d = d;
      best = static_cast<std::uint32_t>(c);
    }
  }
  return best;
}

}  // namespace

std::vector<std::uint8_t> pack_indices(std::span<const std::uint32_t> indices, std::size_t bits) {
  const std::size_t total_bits = indices.size() * bits;
  std::vector<std::uint8_t> packed((total_bits + 7) / 8, 0);
  for (std::size_t j = 0; j < indices.size(); ++j) {
    for (std::size_t b = 0; b < bits; ++b) {
      if ((indices[j] >> b) & 1u) {
        const std::size_t pos = j * bits + b;
        packed[pos >> 3] |= static_cast<std::uint8_t>(1u << (pos & 7));
      }
    }
  }
  return packed;
}

std::vector<std::uint32_t> unpack_indices(std::span<const std::uint8_t> packed, std::size_t m,
                                          std::size_t bits) {
  std::vector<std::uint32_t> indices(m, 0);
  for (std::size_t j = 0; j < m; ++j) {
    for (std::size_t b = 0; b < bits; ++b) {
      const std::size_t pos = j * bits + b;
      if (packed[pos >> 3] & (1u << (pos & 7))) indices[j] |= 1u << b;
    }
  }
  return indices;
}

ProductQuantizer pq_train(const std::vector<Descriptor>& vectors, std::size_t m, std::size_t bits,
                          std::size_t iters, std::uint64_t seed) {
  return train_impl(vectors, m, bits, iters, seed, false);
}

ProductQuantizer pq_train_clamped(const std::vector<Descriptor>& vectors, std::size_t m,
                                  std::size_t bits, std::size_t iters, std::uint64_t seed) {
  return train_impl(vectors, m, bits, iters, seed, true);
}

PqCode pq_encode(const ProductQuantizer& pq, const Descriptor& v) {
  if (v.size() != pq.dim()) throw InvalidInput("pq_encode: dimension mismatch");
  std::vector<std::uint32_t> indices(pq.m);
  for (std::size_t j = 0; j < pq.m; ++j)
    indices[j] = nearest_sub_centroid(pq.codebooks[j], v.data() + j * pq.sub_dim, pq.sub_dim);
  return PqCode{pack_indices(indices, pq.bits)};
}

Descriptor pq_decode(const ProductQuantizer& pq, const PqCode& code) {
  if (code.packed.size() != pq.code_bytes()) throw InvalidInput("pq_decode: bad code length");
  const auto indices = unpack_indices(code.packed, pq.m, pq.bits);
  Descriptor out(pq.dim());
  for (std::size_t j = 0; j < pq.m; ++j) {
    const Descriptor& c = pq.codebooks[j][indices[j]];
    std::copy(c.begin(), c.end(), out.begin() + static_cast<long>(j * pq.sub_dim));
  }
  return out;
}

AdcTable adc_table(const ProductQuantizer& pq, const Descriptor& query) {
  if (query.size() != pq.dim()) throw InvalidInput("adc_table: dimension mismatch");
  AdcTable table;
  table.m = pq.m;
  table.ksub = pq.ksub();
  table.d2.resize(pq.m * table.ksub);
  for (std::size_t j = 0; j < pq.m; ++j) {
    const double* q = query.data() + j * pq.sub_dim;
    for (std::size_t c = 0; c < table.ksub; ++c) {
      const Descriptor& cent = pq.codebooks[j][c];
      double s = 0.0;
      for (std::size_t i = 0; i < pq.sub_dim; ++i) {
        const double diff = q[i] - cent[i];
        s += diff * diff;
      }
      table.d2[j * table.ksub + c] = s;
    }
  }
  return table;
}

double adc_distance(const AdcTable& table, const PqCode& code) {
  // ksub is always a power of two, so this recovers the bit width. Indices
  // are read straight out of the little-endian bit stream (bits <= 16, so a
  // 24-bit window always covers one index).
  const auto bits = static_cast<std::size_t>(std::countr_zero(table.ksub));
  const auto mask = static_cast<std::uint32_t>(table.ksub - 1);
  const std::size_t n_bytes = code.packed.size();
  double s = 0.0;
  std::size_t bitpos = 0;
  for (std::size_t j = 0; j < table.m; ++j, bitpos += bits) {
    const std::size_t byte = bitpos >> 3;
    const std::size_t shift = bitpos & 7;
    std::uint32_t w = code.packed[byte];
    if (byte + 1 < n_bytes) w |= static_cast<std::uint32_t>(code.packed[byte + 1]) << 8;
    if (byte + 2 < n_bytes && shift + bits > 16)
      w |= static_cast<std::uint32_t>(code.packed[byte + 2]) << 16;
    s += table.d2[j * table.ksub + ((w >> shift) & mask)];
  }
  return s;
}

std::vector<double> adc_distance_batch(const AdcTable& table, const std::vector<PqCode>& codes) {
  std::vector<double> out;
  out.reserve(codes.size());
  for (const auto& c : codes) out.push_back(adc_distance(table, c));
  return out;
}

std::optional<LocalPq> lopq_train(const std::vector<Descriptor>& cell_vectors,
                                  const Descriptor& coarse_centroid, std::size_t m,
                                  std::size_t bits, std::size_t iters, std::uint64_t seed) {
  if (cell_vectors.size() < (std::size_t{1} << bits)) return std::nullopt;
  const std::size_t d = coarse_centroid.size();
  std::vector<Descriptor> residuals(cell_vectors.size(), Descriptor(d));
  for (std::size_t i = 0; i < cell_vectors.size(); ++i) {
    if (cell_vectors[i].size() != d) throw InvalidInput("lopq_train: dimension mismatch");
    for (std::size_t j = 0; j < d; ++j) residuals[i][j] = cell_vectors[i][j] - coarse_centroid[j];
  }

  LocalPq lpq;
  lpq.rotation = pca_basis(residuals).components;
  for (auto& r : residuals) {
    Descriptor rotated(d, 0.0);
    for (std::size_t row = 0; row < d; ++row) {
      double s = 0.0;
      for (std::size_t j = 0; j < d; ++j) s += lpq.rotation[row][j] * r[j];
      rotated[row] = s;
    }
    r = std::move(rotated);
  }
  lpq.pq = pq_train(residuals, m, bits, iters, seed);
  return lpq;
}

Descriptor lopq_rotate(const LocalPq& lpq, const Descriptor& v) {
  if (lpq.rotation.empty()) return v;
  const std::size_t d = v.size();
  Descriptor out(d, 0.0);
  for (std::size_t row = 0; row < d; ++row) {
    double s = 0.0;
    const Descriptor& r = lpq.rotation[row];
    for (std::size_t j = 0; j < d; ++j) s += r[j] * v[j];
    out[row] = s;
  }
  return out;
}

Descriptor lopq_unrotate(const LocalPq& lpq, const Descriptor& v) {
  if (lpq.rotation.empty()) return v;
  const std::size_t d = v.size();
  Descriptor out(d, 0.0);
  for (std::size_t row = 0; row < d; ++row)
    for (std::size_t j = 0; j < d; ++j) out[j] += lpq.rotation[row][j] * v[row];
  return out;
}

PqCode lopq_encode(const LocalPq& lpq, const Descriptor& v, const Descriptor& coarse_centroid) {
  if (v.size() != coarse_centroid.size()) throw InvalidInput("lopq_encode: dimension mismatch");
  Descriptor residual(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) residual[i] = v[i] - coarse_centroid[i];
  return pq_encode(lpq.pq, lopq_rotate(lpq, residual));
}

}  // namespace lfr
