#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "camdiffuse/coneighbor.hpp"
#include "camdiffuse/error.hpp"
#include "camdiffuse/rng.hpp"
#include "camdiffuse/sparse.hpp"
#include "camdiffuse/synth.hpp"

using namespace camdiffuse;

namespace {

AttentionMatrix matrix_from(std::size_t h, std::size_t w, std::vector<float> data) {
  AttentionMatrix a;
  a.tokens = h * w;
  a.height = h;
  a.width = w;
  a.data = std::move(data);
  return a;
}

AttentionMatrix identity_attention(std::size_t h, std::size_t w) {
  const std::size_t n = h * w;
  std::vector<float> data(n * n, 0.0f);
  for (std::size_t i = 0; i < n; ++i) data[i * n + i] = 1.0f;
  return matrix_from(h, w, std::move(data));
}

AttentionMatrix uniform_attention(std::size_t h, std::size_t w) {
  const std::size_t n = h * w;
  return matrix_from(h, w, std::vector<float>(n * n, 1.0f / static_cast<float>(n)));
}

}  // namespace

TEST_CASE("one-hot rows have disjoint neighborhoods: S is the identity") {
  const AttentionMatrix a = identity_attention(2, 2);
  const SimilarityMatrix s = similarity(a);
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 4; ++j) {
      CHECK(std::abs(s.at(i, j) - (i == j ? 1.0f : 0.0f)) <= 1e-6);
    }
  }
}

TEST_CASE("uniform rows share all neighbors: S is all ones") {
  const AttentionMatrix a = uniform_attention(2, 3);
  const SimilarityMatrix s = similarity(a);
  for (float v : s.data) CHECK(std::abs(v - 1.0f) <= 1e-6);
}

TEST_CASE("Theorem-1 hand instance: overlap 2 of 4 uniform neighbors gives 0.5") {
  const std::size_t n = 8;
  std::vector<float> data(n * n, 0.0f);
  for (std::size_t j = 0; j < 4; ++j) data[0 * n + j] = 0.25f;        // row 0: {0,1,2,3}
  for (std::size_t j = 2; j < 6; ++j) data[1 * n + j] = 0.25f;        // row 1: {2,3,4,5}
  for (std::size_t i = 2; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) data[i * n + j] = 1.0f / n;   // fillers
  }
  const SimilarityMatrix s = similarity(matrix_from(2, 4, std::move(data)));

  CHECK(std::abs(s.at(0, 1) - 0.5f) <= 1e-6);
  const double jaccard = 2.0 / (8.0 - 2.0);
  CHECK(std::abs(2.0 * jaccard / (1.0 + jaccard) - 0.5) <= 1e-12);
}

TEST_CASE("similarity bounds, symmetry and unit diagonal on random inputs") {
  Xoshiro256pp rng(41);
  for (int trial = 0; trial < 10; ++trial) {
    const AttentionMatrix a = random_row_stochastic(3, 3, rng);
    const SimilarityMatrix s = similarity(a);
    for (std::size_t i = 0; i < a.tokens; ++i) {
      CHECK(std::abs(s.at(i, i) - 1.0f) <= 1e-6);
      for (std::size_t j = 0; j < a.tokens; ++j) {
        CHECK(s.at(i, j) >= 0.0f);
        CHECK(s.at(i, j) <= 1.0f + 1e-6f);
        CHECK(s.at(i, j) == s.at(j, i));
      }
    }
  }
}

TEST_CASE("S_ij reaches 1 exactly when the two rows agree") {
  Xoshiro256pp rng(43);
  const std::size_t n = 9;
  AttentionMatrix a = random_row_stochastic(3, 3, rng);
  for (std::size_t j = 0; j < n; ++j) a.data[1 * n + j] = a.data[0 * n + j];
  const SimilarityMatrix s = similarity(a);
  CHECK(std::abs(s.at(0, 1) - 1.0f) <= 1e-6);

  // Perturb one entry noticeably; the coefficient must fall away from 1.
  AttentionMatrix b = a;
  std::vector<double> row(n);
  for (std::size_t j = 0; j < n; ++j) row[j] = b.data[1 * n + j];
  row[0] += 0.2;
  const double total = std::accumulate(row.begin(), row.end(), 0.0);
  for (std::size_t j = 0; j < n; ++j) b.data[1 * n + j] = static_cast<float>(row[j] / total);
  const SimilarityMatrix s2 = similarity(b);
  CHECK(s2.at(0, 1) < 1.0f - 1e-4f);
}

TEST_CASE("Theorem 1 on random uniform-support pairs") {
  Xoshiro256pp rng(47);
  const std::size_t n = 36;
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t support = 1 + rng.below(n / 3);
    const std::size_t overlap = rng.below(support + 1);

    std::vector<std::uint32_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0u);
    for (std::size_t i = 0; i + 1 < n; ++i) {
      const std::size_t j = i + rng.below(n - i);
      std::swap(perm[i], perm[j]);
    }
    // Row 0 uses perm[0 .. support); row 1 shares the first `overlap` of them
    // and continues with fresh indices.
    std::vector<float> data(n * n, 0.0f);
    const float weight = 1.0f / static_cast<float>(support);
    for (std::size_t t = 0; t < support; ++t) data[perm[t]] = weight;
    for (std::size_t t = 0; t < overlap; ++t) data[n + perm[t]] = weight;
    for (std::size_t t = 0; t < support - overlap; ++t) data[n + perm[support + t]] = weight;
    for (std::size_t i = 2; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) data[i * n + j] = 1.0f / static_cast<float>(n);
    }

    const SimilarityMatrix s = similarity(matrix_from(6, 6, std::move(data)));
    const double jaccard = static_cast<double>(overlap) /
                           static_cast<double>(2 * support - overlap);
    const double via_jaccard = 2.0 * jaccard / (1.0 + jaccard);
    const double direct = static_cast<double>(overlap) / static_cast<double>(support);
    CHECK(std::abs(via_jaccard - direct) <= 1e-12);
    CHECK(std::abs(s.at(0, 1) - direct) <= 1e-6);
  }
}

TEST_CASE("similarity rejects non-finite input") {
  AttentionMatrix a = uniform_attention(2, 2);
  a.data[5] = std::nanf("");
  try {
    similarity(a);
    FAIL("expected NonFiniteInput");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::NonFiniteInput);
  }
}

TEST_CASE("refining identity attention keeps the identity at any k") {
  const AttentionMatrix a = identity_attention(2, 2);
  const SimilarityMatrix s = similarity(a);
  for (std::size_t k : {std::size_t{1}, std::size_t{2}, std::size_t{4}}) {
    const RefinedAttention refined = refine(a, s, k);
    REQUIRE(refined.nnz() == 4);
    for (std::size_t i = 0; i < 4; ++i) {
      CHECK(refined.row_offsets[i] == i);
      CHECK(refined.cols[i] == i);
      CHECK(refined.weights[i] == 1.0f);
    }
  }
}

TEST_CASE("uniform attention with k = n is untouched") {
  const AttentionMatrix a = uniform_attention(2, 3);
  const SimilarityMatrix s = similarity(a);
  const RefinedAttention refined = refine(a, s, 6);
  REQUIRE(refined.nnz() == 36);
  for (float w : refined.weights) CHECK(std::abs(w - 1.0f / 6.0f) <= 1e-7f);
}

TEST_CASE("tie-breaking prefers lower column indices") {
  // Uniform attention makes every similarity exactly 1; top-2 must be {0, 1}.
  const AttentionMatrix a = uniform_attention(2, 2);
  const SimilarityMatrix s = similarity(a);
  const RefinedAttention refined = refine(a, s, 2);
  for (std::size_t i = 0; i < 4; ++i) {
    REQUIRE(refined.row_offsets[i + 1] - refined.row_offsets[i] == 2);
    CHECK(refined.cols[refined.row_offsets[i]] == 0);
    CHECK(refined.cols[refined.row_offsets[i] + 1] == 1);
    CHECK(std::abs(refined.weights[refined.row_offsets[i]] - 0.5f) <= 1e-7f);
  }
}

TEST_CASE("4x4 instance with k=2 matches the brute-force selector") {
  Xoshiro256pp rng(53);
  for (int trial = 0; trial < 25; ++trial) {
    const AttentionMatrix a = random_row_stochastic(2, 2, rng);
    const SimilarityMatrix s = similarity(a);
    const RefinedAttention refined = refine(a, s, 2);

    std::vector<double> sim_double(s.data.begin(), s.data.end());
    const std::vector<double> reference = dense_oracle_refine(a.data, sim_double, 4, 2);
    const std::vector<float> dense = csr_to_dense(refined);
    for (std::size_t i = 0; i < 16; ++i) {
      CHECK(std::abs(dense[i] - reference[i]) <= 1e-7);
    }
  }
}

TEST_CASE("rows sum to one with support at most k") {
  Xoshiro256pp rng(59);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t h = 2 + rng.below(3);
    const std::size_t w = 2 + rng.below(3);
    const std::size_t n = h * w;
    const std::size_t k = 1 + rng.below(n);
    const AttentionMatrix a = random_row_stochastic(h, w, rng);
    const RefinedAttention refined = refine(a, similarity(a), k);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t count = refined.row_offsets[i + 1] - refined.row_offsets[i];
      CHECK(count <= k);
      double row_sum = 0.0;
      for (std::uint32_t t = refined.row_offsets[i]; t < refined.row_offsets[i + 1]; ++t) {
        row_sum += refined.weights[t];
      }
      CHECK(std::abs(row_sum - 1.0) <= 1e-6);
    }
    validate_csr(refined);
  }
}

TEST_CASE("masked-out rows fall back to a pure self-loop") {
  // Cyclic one-hot rows: top-1 by similarity is the diagonal, where the
  // attention itself is zero.
  const std::size_t n = 4;
  std::vector<float> data(n * n, 0.0f);
  for (std::size_t i = 0; i < n; ++i) data[i * n + (i + 1) % n] = 1.0f;
  const AttentionMatrix a = matrix_from(2, 2, std::move(data));
  const SimilarityMatrix s = similarity(a);
  const RefinedAttention refined = refine(a, s, 1);
  for (std::size_t i = 0; i < n; ++i) {
    REQUIRE(refined.row_offsets[i + 1] - refined.row_offsets[i] == 1);
    CHECK(refined.cols[refined.row_offsets[i]] == i);
    CHECK(refined.weights[refined.row_offsets[i]] == 1.0f);
  }
}

TEST_CASE("permutation equivariance on a 3x3 grid") {
  Xoshiro256pp rng(61);
  const std::size_t n = 9;
  const AttentionMatrix a = random_row_stochastic(3, 3, rng);

  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const std::size_t j = i + rng.below(n - i);
    std::swap(perm[i], perm[j]);
  }

  AttentionMatrix permuted = a;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      permuted.data[perm[i] * n + perm[j]] = a.data[i * n + j];
    }
  }

  const std::vector<float> base = csr_to_dense(refine(a, similarity(a), 3));
  const std::vector<float> shuffled = csr_to_dense(refine(permuted, similarity(permuted), 3));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      CHECK(std::abs(shuffled[perm[i] * n + perm[j]] - base[i * n + j]) <= 1e-6);
    }
  }
}

TEST_CASE("k out of range") {
  const AttentionMatrix a = uniform_attention(2, 2);
  const SimilarityMatrix s = similarity(a);
  for (std::size_t k : {std::size_t{0}, std::size_t{5}}) {
    try {
      refine(a, s, k);
      FAIL("expected KOutOfRange");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::KOutOfRange);
    }
  }
}

TEST_CASE("CSR disk arrays round-trip the operator") {
  Xoshiro256pp rng(67);
  const AttentionMatrix a = random_row_stochastic(3, 3, rng);
  const RefinedAttention refined = refine(a, similarity(a), 4);
  const auto arrays = refined_to_arrays(refined);
  CHECK(arrays[0].dtype == Dtype::Uint32);
  CHECK(arrays[1].dtype == Dtype::Uint32);
  CHECK(arrays[2].dtype == Dtype::Float32);
  const RefinedAttention back =
      refined_from_arrays(arrays[0], arrays[1], arrays[2], 3, 3);
  CHECK(back.row_offsets == refined.row_offsets);
  CHECK(back.cols == refined.cols);
  CHECK(back.weights == refined.weights);
}
