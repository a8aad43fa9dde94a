#include "camdiffuse/rw_refine.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "camdiffuse/error.hpp"

namespace camdiffuse {

namespace {
constexpr double kZeroGuard = 1e-12;

void check_boundary(const BoundaryMap& boundary) {
  if (boundary.height == 0 || boundary.width == 0 ||
      boundary.data.size() != boundary.height * boundary.width) {
    raise(Errc::InvalidShape, "boundary buffer does not match its grid");
  }
  for (float v : boundary.data) {
    if (!std::isfinite(v) || v < 0.0f || v > 1.0f) {
      raise(Errc::InvalidArgument, "boundary values must lie in [0, 1]");
    }
  }
}
}  // namespace

TransitionMatrix build_transition(const BoundaryMap& boundary, double beta) {
  if (!(beta > 0.0)) raise(Errc::InvalidArgument, "beta must be positive");
  check_boundary(boundary);

  const std::size_t h = boundary.height;
  const std::size_t w = boundary.width;
  const std::size_t n = h * w;

  TransitionMatrix out;
  out.rows = n;
  out.height = h;
  out.width = w;
  out.row_offsets.reserve(n + 1);
  out.row_offsets.push_back(0);
  out.cols.reserve(n * 9);
  out.weights.reserve(n * 9);

  std::vector<double> row_weights;
  row_weights.reserve(9);
  std::vector<std::uint32_t> row_cols;
  row_cols.reserve(9);

  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const double bp = boundary.at(y, x);
      row_weights.clear();
      row_cols.clear();
      double total = 0.0;
      // dy/dx scan order yields strictly increasing column indices.
      for (int dy = -1; dy <= 1; ++dy) {
        const long long ny = static_cast<long long>(y) + dy;
        if (ny < 0 || ny >= static_cast<long long>(h)) continue;
        for (int dx = -1; dx <= 1; ++dx) {
          const long long nx = static_cast<long long>(x) + dx;
          if (nx < 0 || nx >= static_cast<long long>(w)) continue;
          double weight;
          if (dy == 0 && dx == 0) {
            weight = 1.0;
          } else {
            const double bq = boundary.at(static_cast<std::size_t>(ny),
                                          static_cast<std::size_t>(nx));
            weight = std::pow(1.0 - std::max(bp, bq), beta);
          }
          row_cols.push_back(static_cast<std::uint32_t>(ny * static_cast<long long>(w) + nx));
          row_weights.push_back(weight);
          total += weight;
        }
      }
      for (std::size_t t = 0; t < row_cols.size(); ++t) {
        const float normalized = static_cast<float>(row_weights[t] / total);
        if (normalized > 0.0f) {
          out.cols.push_back(row_cols[t]);
          out.weights.push_back(normalized);
        }
      }
      out.row_offsets.push_back(static_cast<std::uint32_t>(out.cols.size()));
    }
  }
  return out;
}

ActivationMap rw_refine(const ActivationMap& map, const BoundaryMap& boundary,
                        const TransitionMatrix& transition, std::size_t steps,
                        bool renormalize_output) {
  if (steps < 1) raise(Errc::InvalidArgument, "random walk needs at least one step");
  if (map.height != boundary.height || map.width != boundary.width ||
      map.height != transition.height || map.width != transition.width) {
    raise(Errc::GridMismatch, "map, boundary and transition grids disagree");
  }

  std::vector<double> state(map.data.size());
  for (std::size_t p = 0; p < state.size(); ++p) {
    state[p] = static_cast<double>(map.data[p]) * (1.0 - static_cast<double>(boundary.data[p]));
  }
  for (std::size_t t = 0; t < steps; ++t) state = row_apply(transition, state);

  ActivationMap out;
  out.class_id = map.class_id;
  out.height = map.height;
  out.width = map.width;
  out.data.resize(state.size());
  if (renormalize_output) {
    double peak = 0.0;
    for (double v : state) peak = std::max(peak, v);
    if (peak > kZeroGuard) {
      for (std::size_t p = 0; p < state.size(); ++p) {
        out.data[p] = static_cast<float>(state[p] / peak);
      }
    } else {
      std::fill(out.data.begin(), out.data.end(), 0.0f);
    }
  } else {
    for (std::size_t p = 0; p < state.size(); ++p) {
      out.data[p] = static_cast<float>(state[p]);
    }
  }
  return out;
}

}  // namespace camdiffuse
