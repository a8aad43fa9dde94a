#include "camdiffuse/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>

#include <json.hpp>

#include "camdiffuse/error.hpp"

namespace camdiffuse {

namespace {

struct Blob {
  double cy = 0.0;
  double cx = 0.0;
  double radius = 0.0;
  int class_id = -1;
  double sigma_att = 0.0;
  double sigma_feat = 0.0;
  bool has_anchor = false;
  double anchor_y = 0.0;
  double anchor_x = 0.0;
  std::vector<std::uint32_t> pixels;
  std::vector<std::uint32_t> anchor_support;  // background pixels near the anchor
};

constexpr double kBlobSeparation = 1.5;
constexpr double kAnchorClearance = 1.5;
constexpr double kEntryJitter = 0.08;
constexpr int kPlacementAttempts = 400;

double sq(double v) { return v * v; }

double dist2(double y0, double x0, double y1, double x1) {
  return sq(y0 - y1) + sq(x0 - x1);
}

void validate_spec(const SynthSpec& spec) {
  if (spec.height < 4 || spec.width < 4) raise(Errc::InvalidArgument, "grid too small");
  if (spec.num_classes < 1 || spec.num_classes > 64) {
    raise(Errc::InvalidArgument, "num_classes out of range");
  }
  if (spec.blobs_per_image < 1 || spec.blobs_per_image > spec.num_classes) {
    raise(Errc::InvalidArgument, "blobs_per_image must lie in [1, num_classes]");
  }
  if (!(spec.radius_min > 0.5) || spec.radius_max < spec.radius_min) {
    raise(Errc::InvalidArgument, "bad radius range");
  }
  if (spec.spurious_rate < 0.0 || spec.spurious_rate > 1.0 || spec.anchor_back_rate < 0.0 ||
      spec.anchor_back_rate * spec.spurious_rate > 0.9) {
    raise(Errc::InvalidArgument, "bad spurious-attention rates");
  }
  if (!(spec.attention_sigma_factor > 0.0) || !(spec.background_sigma > 0.0) ||
      !(spec.feature_sigma_factor > 0.0) || !(spec.anchor_radius > 0.0) ||
      spec.feature_noise < 0.0) {
    raise(Errc::InvalidArgument, "scale parameters must be positive");
  }
  if (spec.layers < 1 || spec.heads < 1) {
    raise(Errc::InvalidArgument, "layers and heads must be at least 1");
  }
}

std::vector<Blob> place_blobs(const SynthSpec& spec, Xoshiro256pp& rng) {
  const double h = static_cast<double>(spec.height);
  const double w = static_cast<double>(spec.width);

  // Classes without replacement (partial Fisher-Yates).
  std::vector<int> classes(spec.num_classes);
  std::iota(classes.begin(), classes.end(), 0);
  for (std::size_t i = 0; i < spec.blobs_per_image; ++i) {
    const std::size_t j = i + rng.below(spec.num_classes - i);
    std::swap(classes[i], classes[j]);
  }

  std::vector<Blob> blobs;
  for (std::size_t b = 0; b < spec.blobs_per_image; ++b) {
    double radius = rng.uniform(spec.radius_min, spec.radius_max);
    Blob blob;
    blob.class_id = classes[b];
    bool placed = false;
    while (!placed) {
      if (2.0 * radius >= std::min(h, w) - 1.0) {
        // Oversized blob: pin to the center; only sensible alone.
        blob.cy = h / 2.0;
        blob.cx = w / 2.0;
        blob.radius = radius;
        placed = blobs.empty();
        if (!placed) radius *= 0.9;
        continue;
      }
      for (int attempt = 0; attempt < kPlacementAttempts && !placed; ++attempt) {
        const double cy = rng.uniform(radius, h - radius);
        const double cx = rng.uniform(radius, w - radius);
        bool ok = true;
        for (const Blob& other : blobs) {
          const double gap = std::sqrt(dist2(cy, cx, other.cy, other.cx)) -
                             (radius + other.radius);
          if (gap < kBlobSeparation) {
            ok = false;
            break;
          }
        }
        if (ok) {
          blob.cy = cy;
          blob.cx = cx;
          blob.radius = radius;
          placed = true;
        }
      }
      if (!placed) {
        radius *= 0.9;
        if (radius < 1.0) {
          // Give up on separation; overlapping membership resolves to the
          // first blob below.
          blob.cy = rng.uniform(radius, h - radius);
          blob.cx = rng.uniform(radius, w - radius);
          blob.radius = radius;
          placed = true;
        }
      }
    }
    blob.sigma_att = spec.attention_sigma_factor * blob.radius;
    blob.sigma_feat = spec.feature_sigma_factor * blob.radius;
    blobs.push_back(std::move(blob));
  }
  return blobs;
}

// Gaussian kernel over a pixel subset, normalized to `mass`.
void add_kernel(std::vector<double>& row, const std::vector<std::uint32_t>& subset,
                double cy, double cx, double sigma, double mass, std::size_t width) {
  if (subset.empty() || mass <= 0.0) return;
  double total = 0.0;
  for (std::uint32_t q : subset) {
    const double qy = static_cast<double>(q / width);
    const double qx = static_cast<double>(q % width);
    total += std::exp(-dist2(qy, qx, cy, cx) / (2.0 * sigma * sigma));
  }
  for (std::uint32_t q : subset) {
    const double qy = static_cast<double>(q / width);
    const double qx = static_cast<double>(q % width);
    const double v = std::exp(-dist2(qy, qx, cy, cx) / (2.0 * sigma * sigma));
    row[q] += mass * v / total;
  }
}

}  // namespace

Instance gen_instance(const SynthSpec& spec, std::size_t index) {
  validate_spec(spec);

  std::uint64_t seed_state = spec.seed;
  const std::uint64_t base = splitmix64(seed_state);
  Xoshiro256pp rng(base ^ (0x9E3779B97F4A7C15ULL * (static_cast<std::uint64_t>(index) + 1)));

  const std::size_t h = spec.height;
  const std::size_t w = spec.width;
  const std::size_t n = h * w;

  std::vector<Blob> blobs = place_blobs(spec, rng);

  // Membership: first blob wins where disks overlap.
  std::vector<int> region(n, -1);
  std::vector<std::uint32_t> background;
  for (std::size_t p = 0; p < n; ++p) {
    const double py = static_cast<double>(p / w);
    const double px = static_cast<double>(p % w);
    for (std::size_t b = 0; b < blobs.size(); ++b) {
      if (dist2(py, px, blobs[b].cy, blobs[b].cx) <= sq(blobs[b].radius)) {
        region[p] = static_cast<int>(b);
        break;
      }
    }
    if (region[p] < 0) {
      background.push_back(static_cast<std::uint32_t>(p));
    } else {
      blobs[region[p]].pixels.push_back(static_cast<std::uint32_t>(p));
    }
  }

  // Distractor anchors: one background point per blob, clear of every blob.
  for (Blob& blob : blobs) {
    if (background.empty()) break;
    for (int attempt = 0; attempt < kPlacementAttempts && !blob.has_anchor; ++attempt) {
      const double ay = rng.uniform(0.0, static_cast<double>(h - 1));
      const double ax = rng.uniform(0.0, static_cast<double>(w - 1));
      bool ok = true;
      for (const Blob& other : blobs) {
        if (std::sqrt(dist2(ay, ax, other.cy, other.cx)) - other.radius < kAnchorClearance) {
          ok = false;
          break;
        }
      }
      if (!ok) continue;
      blob.anchor_y = ay;
      blob.anchor_x = ax;
      for (std::uint32_t q : background) {
        const double qy = static_cast<double>(q / w);
        const double qx = static_cast<double>(q % w);
        if (dist2(qy, qx, ay, ax) <= sq(spec.anchor_radius)) {
          blob.anchor_support.push_back(q);
        }
      }
      if (blob.anchor_support.empty()) continue;
      blob.has_anchor = true;
    }
  }

  Instance instance;
  instance.name = [index] {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "img_%04zu", index);
    return std::string(buf);
  }();

  // Ground truth at grid resolution.
  SeedMask gt;
  gt.height = h;
  gt.width = w;
  gt.data.resize(n, 0);
  for (std::size_t p = 0; p < n; ++p) {
    if (region[p] >= 0) {
      gt.data[p] = static_cast<std::uint8_t>(blobs[region[p]].class_id + 1);
    }
  }
  instance.gt_mask = gt;

  // Features: one channel per class, a sharp bump at each blob core so the
  // vanilla CAM under-activates, plus a uniform noise floor.
  FeatureMap features;
  features.channels = spec.num_classes;
  features.height = h;
  features.width = w;
  features.data.assign(spec.num_classes * n, 0.0f);
  for (const Blob& blob : blobs) {
    float* channel = features.data.data() + static_cast<std::size_t>(blob.class_id) * n;
    for (std::uint32_t p : blob.pixels) {
      const double py = static_cast<double>(p / w);
      const double px = static_cast<double>(p % w);
      const double bump =
          std::exp(-dist2(py, px, blob.cy, blob.cx) / (2.0 * sq(blob.sigma_feat)));
      channel[p] += static_cast<float>(bump);
    }
  }
  for (std::size_t i = 0; i < features.data.size(); ++i) {
    features.data[i] += static_cast<float>(rng.uniform(0.0, spec.feature_noise));
  }
  instance.features = std::move(features);

  ClassifierWeights weights;
  weights.num_classes = spec.num_classes;
  weights.channels = spec.num_classes;
  weights.data.assign(spec.num_classes * spec.num_classes, 0.0f);
  for (std::size_t k = 0; k < spec.num_classes; ++k) {
    weights.data[k * spec.num_classes + k] = 1.0f;
  }
  instance.weights = std::move(weights);

  std::vector<int> labels;
  for (const Blob& blob : blobs) labels.push_back(blob.class_id);
  std::sort(labels.begin(), labels.end());
  labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
  instance.labels = std::move(labels);

  // Attention stack: Gaussian-local within each region, plus the spurious
  // blob <-> anchor mixture when spurious_rate > 0.
  AttentionStack stack;
  stack.layers = spec.layers;
  stack.heads = spec.heads;
  stack.tokens = n;
  stack.data.resize(spec.layers * spec.heads * n * n);

  std::vector<double> row(n);
  for (std::size_t layer = 0; layer < spec.layers; ++layer) {
    for (std::size_t head = 0; head < spec.heads; ++head) {
      const double sigma_scale = rng.uniform(0.85, 1.15);
      float* slice = stack.data.data() + ((layer * spec.heads + head) * n) * n;
      for (std::size_t p = 0; p < n; ++p) {
        const double py = static_cast<double>(p / w);
        const double px = static_cast<double>(p % w);
        std::fill(row.begin(), row.end(), 0.0);

        if (region[p] >= 0) {
          const Blob& blob = blobs[region[p]];
          const double rho = blob.has_anchor ? spec.spurious_rate : 0.0;
          add_kernel(row, blob.pixels, py, px, blob.sigma_att * sigma_scale, 1.0 - rho, w);
          if (rho > 0.0) {
            add_kernel(row, blob.anchor_support, blob.anchor_y, blob.anchor_x,
                       spec.anchor_radius / 2.0, rho, w);
          }
        } else {
          double back_total = 0.0;
          std::vector<const Blob*> owners;
          if (spec.spurious_rate > 0.0) {
            for (const Blob& blob : blobs) {
              if (blob.has_anchor &&
                  dist2(py, px, blob.anchor_y, blob.anchor_x) <= sq(spec.anchor_radius)) {
                owners.push_back(&blob);
              }
            }
            back_total = std::min(0.8, spec.anchor_back_rate * spec.spurious_rate *
                                           static_cast<double>(owners.size()));
          }
          add_kernel(row, background, py, px, spec.background_sigma * sigma_scale,
                     1.0 - back_total, w);
          for (const Blob* blob : owners) {
            add_kernel(row, blob->pixels, blob->cy, blob->cx,
                       blob->sigma_att * sigma_scale,
                       back_total / static_cast<double>(owners.size()), w);
          }
        }

        double total = 0.0;
        for (std::size_t q = 0; q < n; ++q) {
          if (row[q] > 0.0) {
            row[q] *= 1.0 + kEntryJitter * (2.0 * rng.uniform() - 1.0);
            total += row[q];
          }
        }
        float* out = slice + p * n;
        for (std::size_t q = 0; q < n; ++q) {
          out[q] = static_cast<float>(row[q] / total);
        }
      }
    }
  }
  instance.attention = std::move(stack);

  // Boundary from ground-truth edges, softened with one 3x3 binomial pass.
  std::vector<float> edges(n, 0.0f);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const std::uint8_t g = gt.at(y, x);
      const bool edge = (y + 1 < h && gt.at(y + 1, x) != g) ||
                        (y > 0 && gt.at(y - 1, x) != g) ||
                        (x + 1 < w && gt.at(y, x + 1) != g) ||
                        (x > 0 && gt.at(y, x - 1) != g);
      if (edge) edges[y * w + x] = 1.0f;
    }
  }
  BoundaryMap boundary;
  boundary.height = h;
  boundary.width = w;
  boundary.data.resize(n);
  constexpr int kKernel[3] = {1, 2, 1};
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int dy = -1; dy <= 1; ++dy) {
        const std::size_t yy = static_cast<std::size_t>(
            std::clamp<long long>(static_cast<long long>(y) + dy, 0,
                                  static_cast<long long>(h) - 1));
        for (int dx = -1; dx <= 1; ++dx) {
          const std::size_t xx = static_cast<std::size_t>(
              std::clamp<long long>(static_cast<long long>(x) + dx, 0,
                                    static_cast<long long>(w) - 1));
          acc += kKernel[dy + 1] * kKernel[dx + 1] * edges[yy * w + xx];
        }
      }
      boundary.data[y * w + x] = static_cast<float>(acc / 16.0);
    }
  }
  instance.boundary = std::move(boundary);

  return instance;
}

std::vector<Instance> gen_dataset(const SynthSpec& spec, std::size_t count) {
  std::vector<Instance> dataset;
  dataset.reserve(count);
  for (std::size_t i = 0; i < count; ++i) dataset.push_back(gen_instance(spec, i));
  return dataset;
}

AttentionMatrix random_row_stochastic(std::size_t height, std::size_t width,
                                      Xoshiro256pp& rng) {
  const std::size_t n = height * width;
  AttentionMatrix att;
  att.tokens = n;
  att.height = height;
  att.width = width;
  att.data.resize(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    double total = 0.0;
    std::vector<double> raw(n);
    for (std::size_t j = 0; j < n; ++j) {
      raw[j] = 0.05 + rng.uniform();
      total += raw[j];
    }
    for (std::size_t j = 0; j < n; ++j) {
      att.data[i * n + j] = static_cast<float>(raw[j] / total);
    }
  }
  return att;
}

namespace {

void check_oracle(std::size_t n) {
  if (n > kOracleMaxTokens) {
    raise(Errc::OracleSizeExceeded, "oracle limited to n <= " +
                                        std::to_string(kOracleMaxTokens) + ", got " +
                                        std::to_string(n));
  }
}

}  // namespace

std::vector<double> dense_oracle_similarity(std::span<const float> attention, std::size_t n) {
  check_oracle(n);
  if (attention.size() != n * n) raise(Errc::InvalidShape, "oracle input is not n x n");
  std::vector<double> sim(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < n; ++k) {
        s += std::sqrt(static_cast<double>(attention[i * n + k]) *
                       static_cast<double>(attention[j * n + k]));
      }
      sim[i * n + j] = s;
    }
  }
  return sim;
}

std::vector<double> dense_oracle_refine(std::span<const float> attention,
                                        std::span<const double> similarity, std::size_t n,
                                        std::size_t k) {
  check_oracle(n);
  if (attention.size() != n * n || similarity.size() != n * n) {
    raise(Errc::InvalidShape, "oracle input is not n x n");
  }
  if (k < 1 || k > n) raise(Errc::KOutOfRange, "k out of range for oracle");

  std::vector<double> refined(n * n, 0.0);
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      const double sa = similarity[i * n + a];
      const double sb = similarity[i * n + b];
      return sa > sb || (sa == sb && a < b);
    });
    double total = 0.0;
    for (std::size_t t = 0; t < k; ++t) total += attention[i * n + order[t]];
    if (total < 1e-12) {
      refined[i * n + i] = 1.0;
    } else {
      for (std::size_t t = 0; t < k; ++t) {
        const std::size_t j = order[t];
        refined[i * n + j] = attention[i * n + j] / total;
      }
    }
  }
  return refined;
}

std::vector<double> dense_oracle_diffuse(std::span<const double> refined,
                                         std::span<const double> initial, std::size_t n,
                                         std::size_t steps) {
  check_oracle(n);
  if (refined.size() != n * n || initial.size() != n) {
    raise(Errc::InvalidShape, "oracle input dimensions are wrong");
  }
  std::vector<double> state(initial.begin(), initial.end());
  std::vector<double> next(n);
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t i = 0; i < n; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += refined[j * n + i] * state[j];
      next[i] = acc;
    }
    std::swap(state, next);
  }
  return state;
}

namespace {

using nlohmann::json;

template <typename T>
void read_field(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

SynthSpec synth_spec_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    raise(Errc::InvalidArgument, std::string("unparsable synth spec: ") + e.what());
  }
  static const std::set<std::string> known = {
      "height", "width", "num_classes", "blobs_per_image", "radius_min", "radius_max",
      "attention_sigma_factor", "background_sigma", "feature_sigma_factor",
      "feature_noise", "anchor_radius", "anchor_back_rate", "spurious_rate", "layers",
      "heads", "seed", "count"};
  for (const auto& item : j.items()) {
    if (known.find(item.key()) == known.end()) {
      raise(Errc::InvalidArgument, "unknown synth spec key '" + item.key() + "'");
    }
  }
  SynthSpec spec;
  read_field(j, "height", spec.height);
  read_field(j, "width", spec.width);
  read_field(j, "num_classes", spec.num_classes);
  read_field(j, "blobs_per_image", spec.blobs_per_image);
  read_field(j, "radius_min", spec.radius_min);
  read_field(j, "radius_max", spec.radius_max);
  read_field(j, "attention_sigma_factor", spec.attention_sigma_factor);
  read_field(j, "background_sigma", spec.background_sigma);
  read_field(j, "feature_sigma_factor", spec.feature_sigma_factor);
  read_field(j, "feature_noise", spec.feature_noise);
  read_field(j, "anchor_radius", spec.anchor_radius);
  read_field(j, "anchor_back_rate", spec.anchor_back_rate);
  read_field(j, "spurious_rate", spec.spurious_rate);
  read_field(j, "layers", spec.layers);
  read_field(j, "heads", spec.heads);
  read_field(j, "seed", spec.seed);
  validate_spec(spec);
  return spec;
}

std::string synth_spec_to_json(const SynthSpec& spec) {
  nlohmann::ordered_json j;
  j["height"] = spec.height;
  j["width"] = spec.width;
  j["num_classes"] = spec.num_classes;
  j["blobs_per_image"] = spec.blobs_per_image;
  j["radius_min"] = spec.radius_min;
  j["radius_max"] = spec.radius_max;
  j["attention_sigma_factor"] = spec.attention_sigma_factor;
  j["background_sigma"] = spec.background_sigma;
  j["feature_sigma_factor"] = spec.feature_sigma_factor;
  j["feature_noise"] = spec.feature_noise;
  j["anchor_radius"] = spec.anchor_radius;
  j["anchor_back_rate"] = spec.anchor_back_rate;
  j["spurious_rate"] = spec.spurious_rate;
  j["layers"] = spec.layers;
  j["heads"] = spec.heads;
  j["seed"] = spec.seed;
  return j.dump(2);
}

}  // namespace camdiffuse
