#pragma once

#include <array>
#include <cstddef>

#include "camdiffuse/array_io.hpp"
#include "camdiffuse/cam.hpp"
#include "camdiffuse/sparse.hpp"

namespace camdiffuse {

// Pairwise co-neighbor similarity of attention rows: symmetric, unit
// diagonal, entries in [0, 1]. S_ij is the Bhattacharyya coefficient between
// rows i and j, so S_ij = 1 exactly when the two rows agree everywhere.
struct SimilarityMatrix {
  std::size_t tokens = 0;
  std::vector<float> data;  // row-major tokens x tokens

  float at(std::size_t i, std::size_t j) const { return data[i * tokens + j]; }
};

// Attention masked to each row's top-k most similar columns and renormalized
// back to row-stochastic. Rows whose surviving mass underflows fall back to a
// pure self-loop.
using RefinedAttention = CsrMatrix;

// S = B B^T with B = sqrt(A) elementwise, computed as a blocked symmetric
// matrix product rather than the O(n^3) scalar triple loop.
SimilarityMatrix similarity(const AttentionMatrix& attention);

// Keep, per row, the k columns with the largest similarity (ties prefer the
// smaller column index), mask the attention row to them and renormalize.
RefinedAttention refine(const AttentionMatrix& attention, const SimilarityMatrix& sim,
                        std::size_t k);

// Disk layout of a refined operator: row offsets (uint32, rows+1), column
// indices (uint32) and weights (float32).
std::array<ArrayFile, 3> refined_to_arrays(const RefinedAttention& att);
RefinedAttention refined_from_arrays(const ArrayFile& row_offsets, const ArrayFile& cols,
                                     const ArrayFile& weights, std::size_t height,
                                     std::size_t width);

}  // namespace camdiffuse
