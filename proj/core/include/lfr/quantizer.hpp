#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "lfr/linalg.hpp"

namespace lfr {

/// Product quantizer: m independent sub-codebooks of 2^bits centroids over
/// equal slices of the input vector. Defaults (m=10, bits=5, sub_dim=4)
/// give 50-bit codes over 40-dimensional descriptors.
struct ProductQuantizer {
  std::size_t m = 10;
  std::size_t bits = 5;
  std::size_t sub_dim = 4;
  /// codebooks[j][c] is centroid c of subquantizer j (sub_dim values).
  std::vector<std::vector<Descriptor>> codebooks;
  /// Per-subquantizer k-means inertia trace (training diagnostics only,
  /// not serialized).
  std::vector<std::vector<double>> training_inertia;

  std::size_t dim() const { return m * sub_dim; }
  std::size_t ksub() const { return std::size_t{1} << bits; }
  std::size_t code_bits() const { return m * bits; }
  std::size_t code_bytes() const { return (m * bits + 7) / 8; }
};

/// Bit-packed code. Sub-index j occupies bits [j*bits, (j+1)*bits) of the
/// stream; bit k of the stream lives in byte k/8 at position k%8 (LSB first).
/// Trailing pad bits are zero.
struct PqCode {
  std::vector<std::uint8_t> packed;
  bool operator==(const PqCode&) const = default;
};

/// Per-query table of squared partial distances: at(j, c) = squared distance
/// between query slice j and centroid c of codebook j.
struct AdcTable {
  std::size_t m = 0;
  std::size_t ksub = 0;
  std::vector<double> d2;

  double at(std::size_t j, std::size_t c) const { return d2[j * ksub + c]; }
};

/// Locally optimized quantizer for one cell: an orthonormal rotation (PCA
/// basis of the cell's residuals) followed by a PQ trained in rotated space.
struct LocalPq {
  /// Row-major d x d orthonormal matrix; empty means identity.
  std::vector<Descriptor> rotation;
  ProductQuantizer pq;
};

std::vector<std::uint8_t> pack_indices(std::span<const std::uint32_t> indices, std::size_t bits);
std::vector<std::uint32_t> unpack_indices(std::span<const std::uint8_t> packed, std::size_t m,
                                          std::size_t bits);

/// Train one k-means codebook per subvector slice. Requires dim divisible by
/// m and at least 2^bits training vectors.
ProductQuantizer pq_train(const std::vector<Descriptor>& vectors, std::size_t m, std::size_t bits,
                          std::size_t iters, std::uint64_t seed);

/// Like pq_train but clamps the centroid count per book to the number of
/// training vectors, padding codebooks with copies of the last centroid so
/// the code width stays m*bits. Lets an index quantize arbitrarily small
/// residual sets.
ProductQuantizer pq_train_clamped(const std::vector<Descriptor>& vectors, std::size_t m,
                                  std::size_t bits, std::size_t iters, std::uint64_t seed);

PqCode pq_encode(const ProductQuantizer& pq, const Descriptor& v);
Descriptor pq_decode(const ProductQuantizer& pq, const PqCode& code);

AdcTable adc_table(const ProductQuantizer& pq, const Descriptor& query);

/// Sum of m table lookups; equals ||query - decode(code)||^2 exactly.
double adc_distance(const AdcTable& table, const PqCode& code);
std::vector<double> adc_distance_batch(const AdcTable& table, const std::vector<PqCode>& codes);

/// Train a local quantizer on residuals to the coarse centroid. Returns
/// nullopt when fewer than 2^bits vectors are available and the caller
/// should fall back to a shared residual quantizer.
std::optional<LocalPq> lopq_train(const std::vector<Descriptor>& cell_vectors,
                                  const Descriptor& coarse_centroid, std::size_t m,
                                  std::size_t bits, std::size_t iters, std::uint64_t seed);

/// rotation * v (identity when rotation is empty).
Descriptor lopq_rotate(const LocalPq& lpq, const Descriptor& v);

/// Inverse rotation (transpose) applied to a rotated-space vector.
Descriptor lopq_unrotate(const LocalPq& lpq, const Descriptor& v);

/// Encode a vector belonging to the cell: pq_encode(rotation * (v - centroid)).
PqCode lopq_encode(const LocalPq& lpq, const Descriptor& v, const Descriptor& coarse_centroid);

}  // namespace lfr
