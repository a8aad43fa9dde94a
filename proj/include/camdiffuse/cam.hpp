#pragma once

#include <cstddef>
#include <vector>

namespace camdiffuse {

// Convolutional feature maps before global average pooling, [C, h, w].
struct FeatureMap {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> data;

  float at(std::size_t c, std::size_t y, std::size_t x) const {
    return data[(c * height + y) * width + x];
  }
};

// One classifier weight vector per foreground class, [K, C].
struct ClassifierWeights {
  std::size_t num_classes = 0;
  std::size_t channels = 0;
  std::vector<float> data;

  float at(std::size_t k, std::size_t c) const { return data[k * channels + c]; }
};

// Per-class activation grid, values in [0, 1] after max-normalization; the
// maximum is exactly 1 unless the map is identically zero.
struct ActivationMap {
  int class_id = -1;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> data;

  float at(std::size_t y, std::size_t x) const { return data[y * width + x]; }
};

// Raw per-layer, per-head attention, [L, H, n, n] with n = h*w. Every row of
// every slice is a softmax output: nonnegative, summing to 1 within 1e-4.
struct AttentionStack {
  std::size_t layers = 0;
  std::size_t heads = 0;
  std::size_t tokens = 0;
  std::vector<float> data;

  const float* slice(std::size_t layer, std::size_t head) const {
    return data.data() + ((layer * heads + head) * tokens) * tokens;
  }
};

// Head- and layer-averaged attention over feature pixels, rows renormalized
// to sum exactly to 1. Token i sits at grid position (i / width, i % width).
struct AttentionMatrix {
  std::size_t tokens = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> data;  // row-major tokens x tokens

  float at(std::size_t i, std::size_t j) const { return data[i * tokens + j]; }
};

// CAM_k = ReLU(w_k^T f) / max(ReLU(w_k^T f)); an all-nonpositive response
// yields the zero map instead of dividing by zero.
ActivationMap compute_cam(const FeatureMap& features, const ClassifierWeights& weights,
                          int class_id);

// Mean over heads, then over layers, then per-row renormalization. Validates
// the stack invariants while accumulating.
AttentionMatrix aggregate_attention(const AttentionStack& stack, std::size_t height,
                                    std::size_t width);

// Bilinear upsampling with half-pixel centers and edge clamping:
// src = (dst + 0.5) * (src_size / dst_size) - 0.5.
ActivationMap upsample_bilinear(const ActivationMap& map, std::size_t target_height,
                                std::size_t target_width);

}  // namespace camdiffuse
