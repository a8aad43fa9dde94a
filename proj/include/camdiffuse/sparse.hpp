#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace camdiffuse {

// Square sparse matrix over the feature grid in compressed-sparse-row form.
// Column indices are strictly increasing within each row (canonical form).
struct CsrMatrix {
  std::size_t rows = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint32_t> row_offsets;  // rows + 1 entries
  std::vector<std::uint32_t> cols;
  std::vector<float> weights;

  std::size_t nnz() const { return cols.size(); }
};

// Structural validation: offset monotonicity, column bounds and ordering,
// finite nonnegative weights. Throws InvalidShape on violation.
void validate_csr(const CsrMatrix& m);

// Exact transpose; output is canonical.
CsrMatrix transposed(const CsrMatrix& m);

// out[i] = sum_j m[i,j] * v[j]; per-row accumulation in doubles, so results
// do not depend on any threading of the caller.
std::vector<double> row_apply(const CsrMatrix& m, std::span<const double> v);

// Dense row-major matrix -> CSR, dropping exact zeros.
CsrMatrix csr_from_dense(std::span<const float> dense, std::size_t n,
                         std::size_t height, std::size_t width);

// n*n row-major dense copy; test and oracle aid.
std::vector<float> csr_to_dense(const CsrMatrix& m);

}  // namespace camdiffuse
