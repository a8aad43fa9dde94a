#include "camdiffuse/cam.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "camdiffuse/error.hpp"

namespace camdiffuse {

namespace {
constexpr double kZeroGuard = 1e-12;
constexpr double kRowSumTolerance = 1e-4;
}  // namespace

ActivationMap compute_cam(const FeatureMap& features, const ClassifierWeights& weights,
                          int class_id) {
  if (class_id < 0 || static_cast<std::size_t>(class_id) >= weights.num_classes) {
    raise(Errc::ClassOutOfRange,
          "class " + std::to_string(class_id) + " with K=" + std::to_string(weights.num_classes));
  }
  if (weights.channels != features.channels) {
    raise(Errc::ChannelMismatch,
          "weights expect C=" + std::to_string(weights.channels) + ", features have C=" +
              std::to_string(features.channels));
  }

  const std::size_t h = features.height;
  const std::size_t w = features.width;
  const std::size_t plane = h * w;
  const std::size_t k = static_cast<std::size_t>(class_id);

  std::vector<double> response(plane, 0.0);
  for (std::size_t c = 0; c < features.channels; ++c) {
    const double wc = weights.at(k, c);
    const float* channel = features.data.data() + c * plane;
    for (std::size_t p = 0; p < plane; ++p) response[p] += wc * channel[p];
  }

  double peak = 0.0;
  for (std::size_t p = 0; p < plane; ++p) {
    response[p] = std::max(response[p], 0.0);
    peak = std::max(peak, response[p]);
  }

  ActivationMap out;
  out.class_id = class_id;
  out.height = h;
  out.width = w;
  out.data.resize(plane, 0.0f);
  if (peak > kZeroGuard) {
    for (std::size_t p = 0; p < plane; ++p) {
      out.data[p] = static_cast<float>(response[p] / peak);
    }
  }
  return out;
}

AttentionMatrix aggregate_attention(const AttentionStack& stack, std::size_t height,
                                    std::size_t width) {
  const std::size_t n = stack.tokens;
  if (stack.layers == 0 || stack.heads == 0 || n == 0) {
    raise(Errc::ShapeMismatch, "empty attention stack");
  }
  if (height * width != n) {
    raise(Errc::ShapeMismatch, std::to_string(n) + " tokens do not tile a " +
                                   std::to_string(height) + "x" + std::to_string(width) +
                                   " grid");
  }

  std::vector<double> accum(n * n, 0.0);
  for (std::size_t l = 0; l < stack.layers; ++l) {
    for (std::size_t hd = 0; hd < stack.heads; ++hd) {
      const float* slice = stack.slice(l, hd);
      for (std::size_t i = 0; i < n; ++i) {
        const float* row = slice + i * n;
        double* acc_row = accum.data() + i * n;
        double row_sum = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          const float v = row[j];
          if (!std::isfinite(v) || v < 0.0f) {
            raise(Errc::NonFiniteInput, "attention entries must be finite and nonnegative");
          }
          row_sum += v;
          acc_row[j] += v;
        }
        if (std::abs(row_sum - 1.0) > kRowSumTolerance) {
          raise(Errc::InvalidArgument,
                "attention row " + std::to_string(i) + " of layer " + std::to_string(l) +
                    " head " + std::to_string(hd) + " sums to " + std::to_string(row_sum));
        }
      }
    }
  }

  AttentionMatrix out;
  out.tokens = n;
  out.height = height;
  out.width = width;
  out.data.resize(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    double* acc_row = accum.data() + i * n;
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) total += acc_row[j];
    float* out_row = out.data.data() + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      out_row[j] = static_cast<float>(acc_row[j] / total);
    }
  }
  return out;
}

ActivationMap upsample_bilinear(const ActivationMap& map, std::size_t target_height,
                                std::size_t target_width) {
  if (target_height == 0 || target_width == 0) {
    raise(Errc::InvalidTarget, "target has a zero dimension");
  }
  if (target_height < map.height || target_width < map.width) {
    raise(Errc::InvalidTarget, "target smaller than the source grid");
  }

  ActivationMap out;
  out.class_id = map.class_id;
  out.height = target_height;
  out.width = target_width;
  out.data.resize(target_height * target_width);

  const double scale_y = static_cast<double>(map.height) / static_cast<double>(target_height);
  const double scale_x = static_cast<double>(map.width) / static_cast<double>(target_width);

  for (std::size_t dy = 0; dy < target_height; ++dy) {
    double sy = (static_cast<double>(dy) + 0.5) * scale_y - 0.5;
    sy = std::clamp(sy, 0.0, static_cast<double>(map.height - 1));
    const std::size_t y0 = static_cast<std::size_t>(sy);
    const std::size_t y1 = std::min(y0 + 1, map.height - 1);
    const double fy = sy - static_cast<double>(y0);
    for (std::size_t dx = 0; dx < target_width; ++dx) {
      double sx = (static_cast<double>(dx) + 0.5) * scale_x - 0.5;
      sx = std::clamp(sx, 0.0, static_cast<double>(map.width - 1));
      const std::size_t x0 = static_cast<std::size_t>(sx);
      const std::size_t x1 = std::min(x0 + 1, map.width - 1);
      const double fx = sx - static_cast<double>(x0);

      // Lerp form keeps results inside [min, max] and exact on constants.
      const double v00 = map.at(y0, x0);
      const double v01 = map.at(y0, x1);
      const double v10 = map.at(y1, x0);
      const double v11 = map.at(y1, x1);
      const double top = v00 + fx * (v01 - v00);
      const double bottom = v10 + fx * (v11 - v10);
      out.data[dy * target_width + dx] = static_cast<float>(top + fy * (bottom - top));
    }
  }
  return out;
}

}  // namespace camdiffuse
