#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lfr/errors.hpp"
#include "lfr/quantizer.hpp"
#include "lfr/rng.hpp"

using namespace lfr;

namespace {

std::vector<Descriptor> random_vectors(std::size_t n, std::size_t d, std::uint64_t seed,
                                       double sigma = 1.0) {
  Rng rng(seed);
  std::vector<Descriptor> out(n, Descriptor(d));
  for (auto& p : out)
    for (double& v : p) v = rng.normal(0.0, sigma);
  return out;
}

double squared_dist(const Descriptor& a, const Descriptor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

double reconstruction_mse(const ProductQuantizer& pq, const std::vector<Descriptor>& vectors) {
  double total = 0.0;
  for (const auto& v : vectors) total += squared_dist(v, pq_decode(pq, pq_encode(pq, v)));
  return total / static_cast<double>(vectors.size());
}

}  // namespace

TEST_SUITE("quantizer") {

TEST_CASE("bit packing roundtrip on random index tuples") {
  Rng rng(0);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t m = 1 + rng.below(16);
    const std::size_t bits = 1 + rng.below(12);
    std::vector<std::uint32_t> indices(m);
    for (auto& x : indices) x = static_cast<std::uint32_t>(rng.below(std::uint64_t{1} << bits));
    const auto packed = pack_indices(indices, bits);
    CHECK(packed.size() == (m * bits + 7) / 8);
    CHECK(unpack_indices(packed, m, bits) == indices);
    // Pad bits beyond m*bits stay zero.
    if (m * bits % 8 != 0) {
      const std::uint8_t tail = packed.back();
      const std::size_t used = m * bits % 8;
      CHECK((tail >> used) == 0);
    }
  }
}

TEST_CASE("default geometry is a 50-bit code in 7 bytes") {
  const auto vectors = random_vectors(200, 40, 1);
  const auto pq = pq_train(vectors, 10, 5, 10, 7);
  CHECK(pq.code_bits() == 50);
  CHECK(pq.code_bytes() == 7);
  CHECK(pq.sub_dim == 4);
  CHECK(pq.ksub() == 32);
  for (const auto& book : pq.codebooks) CHECK(book.size() == 32);
  const auto code = pq_encode(pq, vectors[0]);
  CHECK(code.packed.size() == 7);
}

TEST_CASE("training set with few distinct subvectors is quantized exactly") {
  // 64 vectors assembled from 8 distinct values per slice: every slice fits
  // in a 5-bit codebook, so reconstruction is exact on the training set.
  Rng rng(3);
  const std::vector<Descriptor> base = random_vectors(8, 8, 4);
  std::vector<Descriptor> vectors;
  for (int i = 0; i < 64; ++i) vectors.push_back(base[rng.below(8)]);
  const auto pq = pq_train(vectors, 2, 5, 20, 5);
  for (const auto& v : vectors) CHECK(squared_dist(v, pq_decode(pq, pq_encode(pq, v))) <= 1e-20);
}

TEST_CASE("per-book training inertia is non-increasing") {
  const auto vectors = random_vectors(5000, 40, 6);
  const auto pq = pq_train(vectors, 10, 5, 15, 8);
  REQUIRE(pq.training_inertia.size() == 10);
  for (const auto& trace : pq.training_inertia) {
    REQUIRE(!trace.empty());
    for (std::size_t i = 1; i < trace.size(); ++i) CHECK(trace[i] <= trace[i - 1] + 1e-9);
  }
}

TEST_CASE("encode of a representable point roundtrips exactly") {
  const auto vectors = random_vectors(300, 8, 9);
  const auto pq = pq_train(vectors, 2, 4, 15, 10);
  Descriptor exact(8);
  // Concatenate centroid 5 of book 0 and centroid 11 of book 1.
  std::copy(pq.codebooks[0][5].begin(), pq.codebooks[0][5].end(), exact.begin());
  std::copy(pq.codebooks[1][11].begin(), pq.codebooks[1][11].end(), exact.begin() + 4);
  const auto code = pq_encode(pq, exact);
  CHECK(squared_dist(exact, pq_decode(pq, code)) <= 1e-24);
  // encode -> decode -> encode is a fixed point.
  CHECK(pq_encode(pq, pq_decode(pq, code)) == code);
}

TEST_CASE("encode minimizes reconstruction error among all 16 codes") {
  const auto vectors = random_vectors(64, 4, 12);
  const auto pq = pq_train(vectors, 2, 2, 20, 13);
  for (const auto& v : random_vectors(50, 4, 14)) {
    const double got = squared_dist(v, pq_decode(pq, pq_encode(pq, v)));
    double best = 1e300;
    for (std::uint32_t c0 = 0; c0 < 4; ++c0) {
      for (std::uint32_t c1 = 0; c1 < 4; ++c1) {
        const std::uint32_t idx[2] = {c0, c1};
        const double d = squared_dist(v, pq_decode(pq, PqCode{pack_indices(idx, 2)}));
        best = std::min(best, d);
      }
    }
    CHECK(got == doctest::Approx(best));
  }
}

TEST_CASE("decode matches the per-slice lookup oracle") {
  const auto vectors = random_vectors(100, 12, 15);
  const auto pq = pq_train(vectors, 3, 3, 10, 16);
  Rng rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::uint32_t> indices(3);
    for (auto& x : indices) x = static_cast<std::uint32_t>(rng.below(8));
    const auto decoded = pq_decode(pq, PqCode{pack_indices(indices, 3)});
    for (std::size_t j = 0; j < 3; ++j)
      for (std::size_t i = 0; i < 4; ++i)
        CHECK(decoded[j * 4 + i] == pq.codebooks[j][indices[j]][i]);
  }
}

TEST_CASE("adc identity: table distance equals reconstruction distance") {
  const auto vectors = random_vectors(500, 40, 18);
  const auto pq = pq_train(vectors, 10, 5, 10, 19);
  const auto queries = random_vectors(50, 40, 20);
  const auto db = random_vectors(50, 40, 21);
  for (const auto& q : queries) {
    const auto table = adc_table(pq, q);
    for (double v : table.d2) {
      CHECK(v >= 0.0);
      CHECK(std::isfinite(v));
    }
    for (const auto& x : db) {
      const auto code = pq_encode(pq, x);
      const double adc = adc_distance(table, code);
      const double exact = squared_dist(q, pq_decode(pq, code));
      CHECK(std::abs(adc - exact) <= 1e-9);
    }
  }
}

TEST_CASE("adc distance of a representable query is zero") {
  const auto vectors = random_vectors(200, 8, 22);
  const auto pq = pq_train(vectors, 2, 4, 15, 23);
  const auto code = pq_encode(pq, vectors[0]);
  const auto rep = pq_decode(pq, code);
  CHECK(adc_distance(adc_table(pq, rep), code) <= 1e-18);
}

TEST_CASE("adc ranking equals exact-reconstruction ranking") {
  const auto vectors = random_vectors(2000, 16, 24);
  const auto pq = pq_train(vectors, 4, 4, 10, 25);
  const Descriptor q = random_vectors(1, 16, 26)[0];
  const auto table = adc_table(pq, q);

  std::vector<PqCode> codes;
  for (int i = 0; i < 1000; ++i) codes.push_back(pq_encode(pq, vectors[i]));
  const auto adc = adc_distance_batch(table, codes);
  std::vector<double> exact;
  for (const auto& c : codes) exact.push_back(squared_dist(q, pq_decode(pq, c)));

  std::vector<std::size_t> by_adc(codes.size());
  std::vector<std::size_t> by_exact(codes.size());
  std::iota(by_adc.begin(), by_adc.end(), 0);
  std::iota(by_exact.begin(), by_exact.end(), 0);
  // Stable tie handling: identical codes have identical distances along both
  // routes, so sort by (value, index).
  std::sort(by_adc.begin(), by_adc.end(), [&](std::size_t a, std::size_t b) {
    if (adc[a] != adc[b]) return adc[a] < adc[b];
    return a < b;
  });
  std::sort(by_exact.begin(), by_exact.end(), [&](std::size_t a, std::size_t b) {
    if (exact[a] != exact[b]) return exact[a] < exact[b];
    return a < b;
  });
  CHECK(by_adc == by_exact);

  // Batch equals scalar elementwise.
  for (std::size_t i = 0; i < codes.size(); ++i)
    CHECK(adc[i] == adc_distance(table, codes[i]));
}

TEST_CASE("zero table gives zero distance") {
  AdcTable table;
  table.m = 4;
  table.ksub = 8;
  table.d2.assign(32, 0.0);
  PqCode code{std::vector<std::uint8_t>{0xFF, 0x0F}};
  CHECK(adc_distance(table, code) == 0.0);
}

TEST_CASE("pq_train validates input") {
  CHECK_THROWS_AS(pq_train(random_vectors(100, 10, 0), 3, 5, 5, 0), InvalidInput);  // 10 % 3
  CHECK_THROWS_AS(pq_train(random_vectors(10, 8, 0), 2, 5, 5, 0), InvalidInput);    // n < 32
  CHECK_THROWS_AS(pq_encode(pq_train(random_vectors(64, 8, 0), 2, 5, 5, 0), Descriptor(5, 0.0)),
                  InvalidInput);
}

TEST_CASE("clamped training pads codebooks and still encodes") {
  const auto vectors = random_vectors(3, 8, 27);
  const auto pq = pq_train_clamped(vectors, 2, 5, 10, 28);
  for (const auto& book : pq.codebooks) CHECK(book.size() == 32);
  for (const auto& v : vectors)
    CHECK(squared_dist(v, pq_decode(pq, pq_encode(pq, v))) <= 1e-18);
}

TEST_CASE("determinism: same data and seed give identical codebooks") {
  const auto vectors = random_vectors(400, 20, 29);
  const auto a = pq_train(vectors, 5, 4, 12, 30);
  const auto b = pq_train(vectors, 5, 4, 12, 30);
  CHECK(a.codebooks == b.codebooks);
  for (const auto& v : vectors) CHECK(pq_encode(a, v) == pq_encode(b, v));
}

TEST_CASE("lopq on anisotropic axis-aligned data aligns with the axes") {
  // Variances 100 >> 1 >> 0.01 ... : eigenvectors are the coordinate axes,
  // so the rotation must be a signed permutation.
  Rng rng(31);
  const std::size_t d = 8;
  std::vector<Descriptor> cell(3000, Descriptor(d));
  Descriptor centroid(d, 0.0);
  for (auto& v : cell)
    for (std::size_t j = 0; j < d; ++j) v[j] = rng.normal(0.0, std::pow(2.0, double(d - j)));
  const auto lpq = lopq_train(cell, centroid, 2, 4, 15, 32);
  REQUIRE(lpq.has_value());
  for (const auto& row : lpq->rotation) {
    double max_abs = 0.0;
    for (double x : row) max_abs = std::max(max_abs, std::abs(x));
    CHECK(max_abs >= 0.98);  // one dominant axis per row
  }
}

TEST_CASE("lopq error is no worse than plain pq on correlated data") {
  // Strongly correlated residuals: the local rotation decorrelates them.
  Rng rng(33);
  const std::size_t d = 8;
  std::vector<Descriptor> cell(4000, Descriptor(d));
  Descriptor centroid(d, 0.5);
  for (auto& v : cell) {
    const double t = rng.normal(0.0, 3.0);
    for (std::size_t j = 0; j < d; ++j) v[j] = centroid[j] + t + rng.normal(0.0, 0.1);
  }
  const auto lpq = lopq_train(cell, centroid, 4, 4, 15, 34);
  REQUIRE(lpq.has_value());

  std::vector<Descriptor> residuals(cell.size(), Descriptor(d));
  for (std::size_t i = 0; i < cell.size(); ++i)
    for (std::size_t j = 0; j < d; ++j) residuals[i][j] = cell[i][j] - centroid[j];
  const auto plain = pq_train(residuals, 4, 4, 15, 34);

  double lopq_err = 0.0;
  for (std::size_t i = 0; i < cell.size(); ++i) {
    const auto code = lopq_encode(*lpq, cell[i], centroid);
    const auto rec_rotated = pq_decode(lpq->pq, code);
    lopq_err += squared_dist(lopq_rotate(*lpq, residuals[i]), rec_rotated);
  }
  const double plain_err = reconstruction_mse(plain, residuals) * double(cell.size());
  CHECK(lopq_err <= plain_err * 1.0001);
}

TEST_CASE("lopq of constant cell vectors has zero error") {
  const Descriptor centroid = {1.0, 2.0, 3.0, 4.0};
  std::vector<Descriptor> cell(40, centroid);
  const auto lpq = lopq_train(cell, centroid, 2, 5, 10, 35);
  REQUIRE(lpq.has_value());
  const auto code = lopq_encode(*lpq, centroid, centroid);
  const auto rec = pq_decode(lpq->pq, code);
  CHECK(squared_dist(rec, Descriptor(4, 0.0)) <= 1e-20);
}

TEST_CASE("lopq roundtrip through the rotation is an isometry") {
  const auto cell = random_vectors(500, 8, 36);
  const Descriptor centroid(8, 0.25);
  const auto lpq = lopq_train(cell, centroid, 2, 4, 15, 37);
  REQUIRE(lpq.has_value());
  for (std::size_t i = 0; i < 30; ++i) {
    Descriptor residual(8);
    for (std::size_t j = 0; j < 8; ++j) residual[j] = cell[i][j] - centroid[j];
    const auto code = lopq_encode(*lpq, cell[i], centroid);
    const auto rec_rotated = pq_decode(lpq->pq, code);
    // Error in original space after unrotation equals error in rotated space.
    const auto rec_original = lopq_unrotate(*lpq, rec_rotated);
    const double err_rotated = squared_dist(lopq_rotate(*lpq, residual), rec_rotated);
    const double err_original = squared_dist(residual, rec_original);
    CHECK(std::abs(err_rotated - err_original) <= 1e-9);
  }
}

TEST_CASE("lopq signals fallback on tiny cells") {
  CHECK_FALSE(lopq_train(random_vectors(10, 8, 38), Descriptor(8, 0.0), 2, 5, 10, 39).has_value());
}

}  // TEST_SUITE
