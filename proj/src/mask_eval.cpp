#include "camdiffuse/mask_eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "camdiffuse/error.hpp"

namespace camdiffuse {

void ConfusionStats::ensure_labels(std::size_t count) {
  if (tp.size() < count) {
    tp.resize(count, 0);
    fp.resize(count, 0);
    fn.resize(count, 0);
  }
}

void ConfusionStats::merge(const ConfusionStats& other) {
  ensure_labels(other.tp.size());
  for (std::size_t c = 0; c < other.tp.size(); ++c) {
    tp[c] += other.tp[c];
    fp[c] += other.fp[c];
    fn[c] += other.fn[c];
  }
  evaluated += other.evaluated;
}

SeedMask seed_mask(std::span<const ActivationMap> maps, double threshold) {
  if (maps.empty()) raise(Errc::InvalidArgument, "no activation maps given");
  if (!(threshold >= 0.0 && threshold <= 1.0)) {
    raise(Errc::InvalidArgument, "threshold must lie in [0, 1]");
  }

  const std::size_t h = maps.front().height;
  const std::size_t w = maps.front().width;
  std::vector<const ActivationMap*> ordered;
  ordered.reserve(maps.size());
  for (const ActivationMap& m : maps) {
    if (m.height != h || m.width != w) {
      raise(Errc::DimensionMismatch, "activation maps disagree on dimensions");
    }
    if (m.class_id < 0 || m.class_id >= 254) {
      raise(Errc::InvalidArgument, "class index " + std::to_string(m.class_id) +
                                       " does not fit the mask convention");
    }
    ordered.push_back(&m);
  }
  std::sort(ordered.begin(), ordered.end(),
            [](const ActivationMap* a, const ActivationMap* b) {
              return a->class_id < b->class_id;
            });
  for (std::size_t i = 1; i < ordered.size(); ++i) {
    if (ordered[i]->class_id == ordered[i - 1]->class_id) {
      raise(Errc::DuplicateClass,
            "class " + std::to_string(ordered[i]->class_id) + " appears twice");
    }
  }

  SeedMask mask;
  mask.height = h;
  mask.width = w;
  mask.data.resize(h * w);
  for (std::size_t p = 0; p < h * w; ++p) {
    double best = -1.0;
    int best_class = -1;
    for (const ActivationMap* m : ordered) {
      const double v = m->data[p];
      if (v > best) {  // strict: ties keep the smaller class index
        best = v;
        best_class = m->class_id;
      }
    }
    mask.data[p] = best >= threshold ? static_cast<std::uint8_t>(best_class + 1) : 0;
  }
  return mask;
}

ConfusionStats confusion(const SeedMask& pred, const SeedMask& gt) {
  if (pred.height != gt.height || pred.width != gt.width) {
    raise(Errc::DimensionMismatch, "prediction and ground truth dimensions differ");
  }
  ConfusionStats stats;
  stats.ensure_labels(1);
  for (std::size_t p = 0; p < gt.data.size(); ++p) {
    const std::uint8_t g = gt.data[p];
    if (g == kIgnoreLabel) continue;
    ++stats.evaluated;
    const std::uint8_t pr = pred.data[p];
    stats.ensure_labels(static_cast<std::size_t>(std::max(g, pr)) + 1);
    if (pr == g) {
      ++stats.tp[g];
    } else {
      ++stats.fp[pr];
      ++stats.fn[g];
    }
  }
  return stats;
}

EvalReport miou_report(const ConfusionStats& stats, double threshold) {
  if (stats.evaluated == 0) raise(Errc::EmptyEvaluation, "no evaluated pixels");

  EvalReport report;
  report.threshold = threshold;
  report.per_class_iou.assign(stats.tp.size(),
                              std::numeric_limits<double>::quiet_NaN());
  double iou_sum = 0.0;
  std::size_t defined = 0;
  std::uint64_t fp_total = 0;
  std::uint64_t fn_total = 0;
  for (std::size_t c = 0; c < stats.tp.size(); ++c) {
    const std::uint64_t denom = stats.tp[c] + stats.fp[c] + stats.fn[c];
    if (denom > 0) {
      report.per_class_iou[c] = static_cast<double>(stats.tp[c]) / static_cast<double>(denom);
      iou_sum += report.per_class_iou[c];
      ++defined;
    }
    if (c >= 1 && c != kIgnoreLabel) {
      fp_total += stats.fp[c];
      fn_total += stats.fn[c];
    }
  }
  report.miou = defined > 0 ? iou_sum / static_cast<double>(defined) : 0.0;
  report.fp_rate = static_cast<double>(fp_total) / static_cast<double>(stats.evaluated);
  report.fn_rate = static_cast<double>(fn_total) / static_cast<double>(stats.evaluated);
  return report;
}

std::vector<EvalReport> sweep_threshold(std::span<const EvalImage> images,
                                        std::span<const double> thresholds) {
  if (thresholds.empty()) raise(Errc::InvalidArgument, "threshold list is empty");

  std::vector<EvalReport> reports;
  reports.reserve(thresholds.size());
  for (double threshold : thresholds) {
    ConfusionStats total;
    for (const EvalImage& image : images) {
      const SeedMask pred = seed_mask(image.maps, threshold);
      total.merge(confusion(pred, image.gt));
    }
    reports.push_back(miou_report(total, threshold));
  }
  return reports;
}

std::vector<double> threshold_grid(double lo, double hi, double step) {
  if (!(lo >= 0.0 && hi <= 1.0 && lo <= hi && step > 0.0)) {
    raise(Errc::InvalidArgument, "threshold grid must satisfy 0 <= lo <= hi <= 1, step > 0");
  }
  // Index form avoids accumulation drift across the grid.
  const std::size_t count =
      static_cast<std::size_t>(std::floor((hi - lo) / step + 0.5)) + 1;
  std::vector<double> grid;
  grid.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    grid.push_back(std::min(lo + static_cast<double>(i) * step, hi));
  }
  return grid;
}

const EvalReport& best_report(std::span<const EvalReport> reports) {
  if (reports.empty()) raise(Errc::InvalidArgument, "no reports to choose from");
  std::size_t best = 0;
  for (std::size_t i = 1; i < reports.size(); ++i) {
    if (reports[i].miou > reports[best].miou) best = i;
  }
  return reports[best];
}

}  // namespace camdiffuse
