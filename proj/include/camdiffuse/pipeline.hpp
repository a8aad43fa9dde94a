#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "camdiffuse/diffusion.hpp"
#include "camdiffuse/manifest.hpp"
#include "camdiffuse/mask_eval.hpp"

namespace camdiffuse {

struct PipelineConfig {
  std::size_t k = 50;
  DiffusionConfig diffusion;  // steps = 2
};

// Ablation switch: plain CAM, diffusion over the raw aggregated attention, or
// the full co-neighbor-refined diffusion.
enum class CamMode { Vanilla, AttentionDiffusionOnly, AdCam };

std::vector<ActivationMap> run_instance(const Instance& instance,
                                        const PipelineConfig& config, CamMode mode,
                                        AdCamStats* stats = nullptr);

// Pairs the maps (upsampled to ground-truth resolution) with the instance's
// ground truth; requires gt_mask.
EvalImage eval_image_for(const Instance& instance, std::vector<ActivationMap> maps);

// Threshold sweep over the whole dataset for one pipeline mode; confusions
// are reduced in instance order, so reports do not depend on worker count.
std::vector<EvalReport> evaluate_dataset(std::span<const Instance> instances, CamMode mode,
                                         const PipelineConfig& config,
                                         std::span<const double> thresholds,
                                         unsigned workers = 1);

struct SensitivityRow {
  std::size_t k = 0;
  std::size_t steps = 0;
  double best_threshold = 0.0;
  double miou = 0.0;
  double fp_rate = 0.0;
  double fn_rate = 0.0;
};

// Full AD-CAM rerun per (k, T); per instance the attention aggregation, the
// similarity matrix and the per-class CAMs are computed once and shared
// across the grid.
std::vector<SensitivityRow> sensitivity_sweep(std::span<const Instance> instances,
                                              std::span<const std::size_t> k_values,
                                              std::span<const std::size_t> step_values,
                                              std::span<const double> thresholds,
                                              unsigned workers = 1);

}  // namespace camdiffuse
