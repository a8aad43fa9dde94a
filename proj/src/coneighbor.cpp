#include "camdiffuse/coneighbor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "camdiffuse/error.hpp"

namespace camdiffuse {

namespace {

// Tile sizes keep two row chunks plus a double accumulator tile resident in
// L1 (32*128*4*2 bytes of inputs, 32*32*8 bytes of accumulators).
constexpr std::size_t kRowTile = 32;
constexpr std::size_t kDepthTile = 128;

constexpr double kDegenerateRowSum = 1e-12;

void check_attention_values(const AttentionMatrix& attention) {
  for (float v : attention.data) {
    if (!std::isfinite(v) || v < 0.0f) {
      raise(Errc::NonFiniteInput, "attention entries must be finite and nonnegative");
    }
  }
}

}  // namespace

SimilarityMatrix similarity(const AttentionMatrix& attention) {
  const std::size_t n = attention.tokens;
  if (n == 0 || attention.data.size() != n * n) {
    raise(Errc::ShapeMismatch, "attention matrix is not square");
  }
  check_attention_values(attention);

  std::vector<float> sqrt_rows(n * n);
  for (std::size_t i = 0; i < n * n; ++i) sqrt_rows[i] = std::sqrt(attention.data[i]);

  SimilarityMatrix sim;
  sim.tokens = n;
  sim.data.assign(n * n, 0.0f);

  std::vector<double> acc(kRowTile * kRowTile);
  for (std::size_t ib = 0; ib < n; ib += kRowTile) {
    const std::size_t ie = std::min(ib + kRowTile, n);
    for (std::size_t jb = ib; jb < n; jb += kRowTile) {
      const std::size_t je = std::min(jb + kRowTile, n);
      std::fill(acc.begin(), acc.end(), 0.0);
      for (std::size_t kb = 0; kb < n; kb += kDepthTile) {
        const std::size_t ke = std::min(kb + kDepthTile, n);
        for (std::size_t i = ib; i < ie; ++i) {
          const float* bi = sqrt_rows.data() + i * n;
          const std::size_t j_lo = (jb == ib) ? i : jb;  // upper triangle only
          for (std::size_t j = j_lo; j < je; ++j) {
            const float* bj = sqrt_rows.data() + j * n;
            double dot = 0.0;
            for (std::size_t kk = kb; kk < ke; ++kk) {
              dot += static_cast<double>(bi[kk]) * static_cast<double>(bj[kk]);
            }
            acc[(i - ib) * kRowTile + (j - jb)] += dot;
          }
        }
      }
      for (std::size_t i = ib; i < ie; ++i) {
        const std::size_t j_lo = (jb == ib) ? i : jb;
        for (std::size_t j = j_lo; j < je; ++j) {
          const double raw = acc[(i - ib) * kRowTile + (j - jb)];
          const float v = static_cast<float>(std::clamp(raw, 0.0, 1.0));
          sim.data[i * n + j] = v;
          sim.data[j * n + i] = v;
        }
      }
    }
  }
  return sim;
}

RefinedAttention refine(const AttentionMatrix& attention, const SimilarityMatrix& sim,
                        std::size_t k) {
  const std::size_t n = attention.tokens;
  if (sim.tokens != n) {
    raise(Errc::ShapeMismatch, "similarity and attention disagree on token count");
  }
  if (k < 1 || k > n) {
    raise(Errc::KOutOfRange, "k=" + std::to_string(k) + " with n=" + std::to_string(n));
  }
  check_attention_values(attention);

  RefinedAttention out;
  out.rows = n;
  out.height = attention.height;
  out.width = attention.width;
  out.row_offsets.reserve(n + 1);
  out.row_offsets.push_back(0);
  out.cols.reserve(n * std::min(k, std::size_t{64}));
  out.weights.reserve(out.cols.capacity());

  std::vector<std::uint32_t> order(n);
  for (std::size_t i = 0; i < n; ++i) {
    const float* sim_row = sim.data.data() + i * n;
    const float* att_row = attention.data.data() + i * n;

    std::iota(order.begin(), order.end(), 0u);
    const auto better = [sim_row](std::uint32_t a, std::uint32_t b) {
      const float sa = sim_row[a];
      const float sb = sim_row[b];
      return sa > sb || (sa == sb && a < b);
    };
    if (k < n) {
      std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k),
                       order.end(), better);
    }
    std::sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));

    const std::size_t row_start = out.cols.size();
    double row_sum = 0.0;
    for (std::size_t t = 0; t < k; ++t) {
      const std::uint32_t j = order[t];
      const float a = att_row[j];
      if (a > 0.0f) {
        out.cols.push_back(j);
        out.weights.push_back(a);
        row_sum += a;
      }
    }
    if (row_sum < kDegenerateRowSum) {
      out.cols.resize(row_start);
      out.weights.resize(row_start);
      out.cols.push_back(static_cast<std::uint32_t>(i));
      out.weights.push_back(1.0f);
    } else {
      for (std::size_t t = row_start; t < out.weights.size(); ++t) {
        out.weights[t] = static_cast<float>(out.weights[t] / row_sum);
      }
    }
    out.row_offsets.push_back(static_cast<std::uint32_t>(out.cols.size()));
  }
  return out;
}

std::array<ArrayFile, 3> refined_to_arrays(const RefinedAttention& att) {
  return {
      ArrayFile::from_u32({att.row_offsets.size()}, att.row_offsets),
      ArrayFile::from_u32({att.cols.size()}, att.cols),
      ArrayFile::from_f32({att.weights.size()}, att.weights),
  };
}

RefinedAttention refined_from_arrays(const ArrayFile& row_offsets, const ArrayFile& cols,
                                     const ArrayFile& weights, std::size_t height,
                                     std::size_t width) {
  RefinedAttention att;
  att.rows = height * width;
  att.height = height;
  att.width = width;
  const auto offs = row_offsets.u32();
  const auto cidx = cols.u32();
  const auto w = weights.f32();
  att.row_offsets.assign(offs.begin(), offs.end());
  att.cols.assign(cidx.begin(), cidx.end());
  att.weights.assign(w.begin(), w.end());
  validate_csr(att);
  return att;
}

}  // namespace camdiffuse
