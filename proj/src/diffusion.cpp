#include "camdiffuse/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "camdiffuse/error.hpp"
#include "camdiffuse/sparse.hpp"

namespace camdiffuse {

namespace {
constexpr double kZeroGuard = 1e-12;
}

ActivationMap diffuse(const ActivationMap& initial, const RefinedAttention& attention,
                      const DiffusionConfig& cfg) {
  if (cfg.steps < 1) raise(Errc::InvalidArgument, "diffusion needs at least one step");
  if (initial.height != attention.height || initial.width != attention.width) {
    raise(Errc::GridMismatch, "activation grid " + std::to_string(initial.height) + "x" +
                                  std::to_string(initial.width) + " vs attention grid " +
                                  std::to_string(attention.height) + "x" +
                                  std::to_string(attention.width));
  }
  for (float v : initial.data) {
    if (!std::isfinite(v) || v < 0.0f) {
      raise(Errc::NonFiniteInput, "activation values must be finite and nonnegative");
    }
  }

  // The transpose-apply is a plain row gather on the transposed structure;
  // summation order per output pixel is fixed by the CSR layout.
  const CsrMatrix incoming = transposed(attention);
  std::vector<double> state(initial.data.begin(), initial.data.end());
  for (std::size_t t = 0; t < cfg.steps; ++t) state = row_apply(incoming, state);

  ActivationMap out;
  out.class_id = initial.class_id;
  out.height = initial.height;
  out.width = initial.width;
  out.data.resize(state.size());
  if (cfg.renormalize_output) {
    double peak = 0.0;
    for (double v : state) peak = std::max(peak, v);
    if (peak > kZeroGuard) {
      for (std::size_t i = 0; i < state.size(); ++i) {
        out.data[i] = static_cast<float>(state[i] / peak);
      }
    } else {
      std::fill(out.data.begin(), out.data.end(), 0.0f);
    }
  } else {
    for (std::size_t i = 0; i < state.size(); ++i) {
      out.data[i] = static_cast<float>(state[i]);
    }
  }
  return out;
}

std::vector<ActivationMap> ad_cam(const FeatureMap& features,
                                  const ClassifierWeights& weights,
                                  const AttentionStack& stack,
                                  const std::vector<int>& labels, std::size_t k,
                                  const DiffusionConfig& cfg, AdCamStats* stats) {
  if (labels.empty()) raise(Errc::InvalidArgument, "label list is empty");

  const AttentionMatrix aggregated =
      aggregate_attention(stack, features.height, features.width);
  const SimilarityMatrix sim = similarity(aggregated);
  const RefinedAttention refined = refine(aggregated, sim, k);
  if (stats != nullptr) {
    ++stats->aggregations;
    ++stats->similarity_builds;
    ++stats->refines;
  }

  std::vector<ActivationMap> maps;
  maps.reserve(labels.size());
  for (int label : labels) {
    const ActivationMap cam = compute_cam(features, weights, label);
    maps.push_back(diffuse(cam, refined, cfg));
    if (stats != nullptr) ++stats->diffusions;
  }
  return maps;
}

}  // namespace camdiffuse
