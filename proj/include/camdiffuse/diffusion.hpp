#pragma once

#include <cstddef>
#include <vector>

#include "camdiffuse/cam.hpp"
#include "camdiffuse/coneighbor.hpp"

namespace camdiffuse {

struct DiffusionConfig {
  std::size_t steps = 2;           // T
  bool renormalize_output = true;  // divide by the max; off for raw algebra
};

// T steps of activation diffusion: each step every pixel receives mass from
// the pixels whose refined-attention rows list it as a neighbor,
// v <- A~^T v. With renormalization off, the total activation is conserved.
ActivationMap diffuse(const ActivationMap& initial, const RefinedAttention& attention,
                      const DiffusionConfig& cfg);

// Instrumentation for the caching contract: aggregation, similarity and
// refinement run once per image regardless of the label count.
struct AdCamStats {
  int aggregations = 0;
  int similarity_builds = 0;
  int refines = 0;
  int diffusions = 0;
};

// Full per-image pipeline: CAM per labeled class, one shared
// aggregate -> similarity -> refine chain, then per-class diffusion.
std::vector<ActivationMap> ad_cam(const FeatureMap& features,
                                  const ClassifierWeights& weights,
                                  const AttentionStack& stack,
                                  const std::vector<int>& labels, std::size_t k,
                                  const DiffusionConfig& cfg,
                                  AdCamStats* stats = nullptr);

}  // namespace camdiffuse
