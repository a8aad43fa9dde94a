#include "camdiffuse/pipeline.hpp"

#include <algorithm>

#include "camdiffuse/coneighbor.hpp"
#include "camdiffuse/error.hpp"
#include "camdiffuse/parallel.hpp"
#include "camdiffuse/sparse.hpp"

namespace camdiffuse {

std::vector<ActivationMap> run_instance(const Instance& instance,
                                        const PipelineConfig& config, CamMode mode,
                                        AdCamStats* stats) {
  if (instance.labels.empty()) raise(Errc::InvalidArgument, "instance has no labels");

  if (mode == CamMode::AdCam) {
    return ad_cam(instance.features, instance.weights, instance.attention,
                  instance.labels, config.k, config.diffusion, stats);
  }

  std::vector<ActivationMap> maps;
  maps.reserve(instance.labels.size());
  if (mode == CamMode::Vanilla) {
    for (int label : instance.labels) {
      maps.push_back(compute_cam(instance.features, instance.weights, label));
    }
    return maps;
  }

  // Diffusion over the raw aggregated attention, no co-neighbor filtering.
  const AttentionMatrix aggregated = aggregate_attention(
      instance.attention, instance.features.height, instance.features.width);
  if (stats != nullptr) ++stats->aggregations;
  const RefinedAttention raw = csr_from_dense(aggregated.data, aggregated.tokens,
                                              aggregated.height, aggregated.width);
  for (int label : instance.labels) {
    const ActivationMap cam = compute_cam(instance.features, instance.weights, label);
    maps.push_back(diffuse(cam, raw, config.diffusion));
    if (stats != nullptr) ++stats->diffusions;
  }
  return maps;
}

EvalImage eval_image_for(const Instance& instance, std::vector<ActivationMap> maps) {
  if (!instance.gt_mask.has_value()) {
    raise(Errc::BadManifest, "instance '" + instance.name + "' has no gt_mask");
  }
  EvalImage image;
  image.gt = *instance.gt_mask;
  image.maps.reserve(maps.size());
  for (ActivationMap& map : maps) {
    if (map.height == image.gt.height && map.width == image.gt.width) {
      image.maps.push_back(std::move(map));
    } else {
      image.maps.push_back(upsample_bilinear(map, image.gt.height, image.gt.width));
    }
  }
  return image;
}

std::vector<EvalReport> evaluate_dataset(std::span<const Instance> instances, CamMode mode,
                                         const PipelineConfig& config,
                                         std::span<const double> thresholds,
                                         unsigned workers) {
  if (instances.empty()) raise(Errc::InvalidArgument, "no instances to evaluate");
  if (thresholds.empty()) raise(Errc::InvalidArgument, "threshold list is empty");

  // Per-instance, per-threshold confusions, reduced in instance order.
  std::vector<std::vector<ConfusionStats>> partial(instances.size());
  parallel_for(instances.size(), workers, [&](std::size_t i) {
    const EvalImage image =
        eval_image_for(instances[i], run_instance(instances[i], config, mode));
    std::vector<ConfusionStats> per_threshold;
    per_threshold.reserve(thresholds.size());
    for (double threshold : thresholds) {
      per_threshold.push_back(confusion(seed_mask(image.maps, threshold), image.gt));
    }
    partial[i] = std::move(per_threshold);
  });

  std::vector<EvalReport> reports;
  reports.reserve(thresholds.size());
  for (std::size_t t = 0; t < thresholds.size(); ++t) {
    ConfusionStats total;
    for (std::size_t i = 0; i < instances.size(); ++i) total.merge(partial[i][t]);
    reports.push_back(miou_report(total, thresholds[t]));
  }
  return reports;
}

std::vector<SensitivityRow> sensitivity_sweep(std::span<const Instance> instances,
                                              std::span<const std::size_t> k_values,
                                              std::span<const std::size_t> step_values,
                                              std::span<const double> thresholds,
                                              unsigned workers) {
  if (k_values.empty() || step_values.empty()) {
    raise(Errc::InvalidArgument, "k and T grids must be nonempty");
  }
  if (instances.empty()) raise(Errc::InvalidArgument, "no instances to sweep");
  if (thresholds.empty()) raise(Errc::InvalidArgument, "threshold list is empty");

  const std::size_t cells = k_values.size() * step_values.size();
  // partial[instance][cell][threshold]
  std::vector<std::vector<std::vector<ConfusionStats>>> partial(instances.size());

  parallel_for(instances.size(), workers, [&](std::size_t i) {
    const Instance& instance = instances[i];
    if (!instance.gt_mask.has_value()) {
      raise(Errc::BadManifest, "instance '" + instance.name + "' has no gt_mask");
    }

    std::vector<ActivationMap> cams;
    cams.reserve(instance.labels.size());
    for (int label : instance.labels) {
      cams.push_back(compute_cam(instance.features, instance.weights, label));
    }
    const AttentionMatrix aggregated = aggregate_attention(
        instance.attention, instance.features.height, instance.features.width);
    const SimilarityMatrix sim = similarity(aggregated);

    std::vector<std::vector<ConfusionStats>> grid(cells);
    std::size_t cell = 0;
    for (std::size_t k : k_values) {
      const RefinedAttention refined = refine(aggregated, sim, k);
      for (std::size_t steps : step_values) {
        const DiffusionConfig cfg{steps, true};
        std::vector<ActivationMap> maps;
        maps.reserve(cams.size());
        for (const ActivationMap& cam : cams) maps.push_back(diffuse(cam, refined, cfg));
        const EvalImage image = eval_image_for(instance, std::move(maps));
        std::vector<ConfusionStats> per_threshold;
        per_threshold.reserve(thresholds.size());
        for (double threshold : thresholds) {
          per_threshold.push_back(confusion(seed_mask(image.maps, threshold), image.gt));
        }
        grid[cell++] = std::move(per_threshold);
      }
    }
    partial[i] = std::move(grid);
  });

  std::vector<SensitivityRow> rows;
  rows.reserve(cells);
  std::size_t cell = 0;
  for (std::size_t k : k_values) {
    for (std::size_t steps : step_values) {
      std::vector<EvalReport> reports;
      reports.reserve(thresholds.size());
      for (std::size_t t = 0; t < thresholds.size(); ++t) {
        ConfusionStats total;
        for (std::size_t i = 0; i < instances.size(); ++i) {
          total.merge(partial[i][cell][t]);
        }
        reports.push_back(miou_report(total, thresholds[t]));
      }
      const EvalReport& best = best_report(reports);
      rows.push_back({k, steps, best.threshold, best.miou, best.fp_rate, best.fn_rate});
      ++cell;
    }
  }
  return rows;
}

}  // namespace camdiffuse
