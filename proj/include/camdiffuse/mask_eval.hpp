#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "camdiffuse/cam.hpp"

namespace camdiffuse {

// Hard class-index mask: 0 = background, 1..K = foreground classes (a map
// with class_id c becomes label c + 1), 255 = ignore.
inline constexpr std::uint8_t kIgnoreLabel = 255;

struct SeedMask {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> data;

  std::uint8_t at(std::size_t y, std::size_t x) const { return data[y * width + x]; }
};

// Per-label pixel counts; ignore-labeled ground-truth pixels contribute to
// nothing. Merging is associative and commutative, so dataset aggregation is
// order-independent.
struct ConfusionStats {
  std::vector<std::uint64_t> tp;
  std::vector<std::uint64_t> fp;
  std::vector<std::uint64_t> fn;
  std::uint64_t evaluated = 0;  // non-ignore pixels

  void ensure_labels(std::size_t count);
  void merge(const ConfusionStats& other);
};

struct EvalReport {
  double threshold = 0.0;
  std::vector<double> per_class_iou;  // index = mask label; NaN where undefined
  double miou = 0.0;
  double fp_rate = 0.0;  // foreground false-positive pixels / evaluated pixels
  double fn_rate = 0.0;
};

// Argmax over the labeled maps per pixel (ties prefer the smaller class
// index); pixels whose winning activation falls below the threshold become
// background.
SeedMask seed_mask(std::span<const ActivationMap> maps, double threshold);

ConfusionStats confusion(const SeedMask& pred, const SeedMask& gt);

// IoU per defined label (TP+FP+FN > 0), mean over defined labels with the
// background counted as one more class; FP/FN rates aggregate foreground
// labels only.
EvalReport miou_report(const ConfusionStats& stats, double threshold);

// Maps (already at ground-truth resolution) plus ground truth for one image.
struct EvalImage {
  std::vector<ActivationMap> maps;
  SeedMask gt;
};

// One dataset-level report per threshold; confusions are summed over images
// before any IoU is taken.
std::vector<EvalReport> sweep_threshold(std::span<const EvalImage> images,
                                        std::span<const double> thresholds);

std::vector<double> threshold_grid(double lo, double hi, double step);

// Highest mIoU, ties broken toward the lower threshold.
const EvalReport& best_report(std::span<const EvalReport> reports);

}  // namespace camdiffuse
