#include "camdiffuse/sparse.hpp"

#include <cmath>
#include <string>

#include "camdiffuse/error.hpp"

namespace camdiffuse {

void validate_csr(const CsrMatrix& m) {
  if (m.rows != m.height * m.width) {
    raise(Errc::InvalidShape, "CSR row count does not match the grid");
  }
  if (m.row_offsets.size() != m.rows + 1 || m.row_offsets.front() != 0 ||
      m.row_offsets.back() != m.cols.size() || m.cols.size() != m.weights.size()) {
    raise(Errc::InvalidShape, "inconsistent CSR buffers");
  }
  for (std::size_t i = 0; i < m.rows; ++i) {
    const std::uint32_t begin = m.row_offsets[i];
    const std::uint32_t end = m.row_offsets[i + 1];
    if (begin > end) raise(Errc::InvalidShape, "non-monotone CSR offsets");
    for (std::uint32_t t = begin; t < end; ++t) {
      if (m.cols[t] >= m.rows) raise(Errc::InvalidShape, "CSR column out of range");
      if (t > begin && m.cols[t] <= m.cols[t - 1]) {
        raise(Errc::InvalidShape, "CSR columns not strictly increasing in row " +
                                      std::to_string(i));
      }
      if (!std::isfinite(m.weights[t]) || m.weights[t] < 0.0f) {
        raise(Errc::InvalidShape, "CSR weight not finite and nonnegative");
      }
    }
  }
}

CsrMatrix transposed(const CsrMatrix& m) {
  CsrMatrix out;
  out.rows = m.rows;
  out.height = m.height;
  out.width = m.width;
  out.row_offsets.assign(m.rows + 1, 0);
  out.cols.resize(m.nnz());
  out.weights.resize(m.nnz());

  for (std::uint32_t c : m.cols) ++out.row_offsets[c + 1];
  for (std::size_t i = 0; i < m.rows; ++i) out.row_offsets[i + 1] += out.row_offsets[i];

  std::vector<std::uint32_t> cursor(out.row_offsets.begin(), out.row_offsets.end() - 1);
  // Rows scanned in ascending order, so transposed columns come out sorted.
  for (std::size_t i = 0; i < m.rows; ++i) {
    for (std::uint32_t t = m.row_offsets[i]; t < m.row_offsets[i + 1]; ++t) {
      const std::uint32_t c = m.cols[t];
      const std::uint32_t dst = cursor[c]++;
      out.cols[dst] = static_cast<std::uint32_t>(i);
      out.weights[dst] = m.weights[t];
    }
  }
  return out;
}

std::vector<double> row_apply(const CsrMatrix& m, std::span<const double> v) {
  if (v.size() != m.rows) raise(Errc::DimensionMismatch, "vector length != CSR rows");
  std::vector<double> out(m.rows, 0.0);
  for (std::size_t i = 0; i < m.rows; ++i) {
    double acc = 0.0;
    for (std::uint32_t t = m.row_offsets[i]; t < m.row_offsets[i + 1]; ++t) {
      acc += static_cast<double>(m.weights[t]) * v[m.cols[t]];
    }
    out[i] = acc;
  }
  return out;
}

CsrMatrix csr_from_dense(std::span<const float> dense, std::size_t n,
                         std::size_t height, std::size_t width) {
  if (dense.size() != n * n || height * width != n) {
    raise(Errc::InvalidShape, "dense buffer does not match the grid");
  }
  CsrMatrix out;
  out.rows = n;
  out.height = height;
  out.width = width;
  out.row_offsets.reserve(n + 1);
  out.row_offsets.push_back(0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const float v = dense[i * n + j];
      if (v != 0.0f) {
        out.cols.push_back(static_cast<std::uint32_t>(j));
        out.weights.push_back(v);
      }
    }
    out.row_offsets.push_back(static_cast<std::uint32_t>(out.cols.size()));
  }
  return out;
}

std::vector<float> csr_to_dense(const CsrMatrix& m) {
  std::vector<float> dense(m.rows * m.rows, 0.0f);
  for (std::size_t i = 0; i < m.rows; ++i) {
    for (std::uint32_t t = m.row_offsets[i]; t < m.row_offsets[i + 1]; ++t) {
      dense[i * m.rows + m.cols[t]] = m.weights[t];
    }
  }
  return dense;
}

}  // namespace camdiffuse
