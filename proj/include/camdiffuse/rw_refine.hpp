#pragma once

#include <cstddef>
#include <vector>

#include "camdiffuse/cam.hpp"
#include "camdiffuse/sparse.hpp"

namespace camdiffuse {

// Per-pixel class-boundary probability in [0, 1]; 1 = certain boundary.
struct BoundaryMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> data;

  float at(std::size_t y, std::size_t x) const { return data[y * width + x]; }
};

// Row-stochastic transition operator supported on 8-connected grid neighbors
// plus the self-loop.
using TransitionMatrix = CsrMatrix;

// Edge affinity between neighbors p,q is (1 - max(b(p), b(q)))^beta; the
// self-loop has weight 1 before normalization, so no row can degenerate.
TransitionMatrix build_transition(const BoundaryMap& boundary, double beta);

// vec(out) = T^l vec(m * (1 - b)): suppress boundary pixels, walk l steps,
// then renormalize by the max (a zero map stays zero).
ActivationMap rw_refine(const ActivationMap& map, const BoundaryMap& boundary,
                        const TransitionMatrix& transition, std::size_t steps,
                        bool renormalize_output = true);

}  // namespace camdiffuse
