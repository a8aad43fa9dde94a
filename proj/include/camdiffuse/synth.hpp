#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "camdiffuse/cam.hpp"
#include "camdiffuse/manifest.hpp"
#include "camdiffuse/rng.hpp"

namespace camdiffuse {

// Parameters of the synthetic instance family. Identical specs produce
// bitwise-identical instances; per-image streams are derived from the seed
// and the instance index.
//
// Each image holds a few disk "blobs" of distinct classes on background.
// Features under-activate (a sharp Gaussian bump at the blob core), attention
// is Gaussian-local within a region, and each blob additionally leaks a
// spurious_rate fraction of its attention onto a small background "distractor"
// anchor, which links back at anchor_back_rate * spurious_rate. With
// spurious_rate = 0 no attention crosses a region boundary.
struct SynthSpec {
  std::size_t height = 18;
  std::size_t width = 18;
  std::size_t num_classes = 3;
  std::size_t blobs_per_image = 2;
  double radius_min = 3.0;
  double radius_max = 4.8;
  double attention_sigma_factor = 0.8;  // blob attention locality, fraction of radius
  double background_sigma = 2.0;        // background attention locality, pixels
  double feature_sigma_factor = 0.3;    // CAM core size, fraction of radius
  double feature_noise = 0.05;          // uniform noise ceiling on every channel
  double anchor_radius = 2.2;           // distractor support radius, pixels
  double anchor_back_rate = 0.6;        // bg->blob mass as a fraction of spurious_rate
  double spurious_rate = 0.0;           // rho
  std::size_t layers = 2;
  std::size_t heads = 2;
  std::uint64_t seed = 1;
};

SynthSpec synth_spec_from_json(const std::string& text);
std::string synth_spec_to_json(const SynthSpec& spec);

Instance gen_instance(const SynthSpec& spec, std::size_t index);
std::vector<Instance> gen_dataset(const SynthSpec& spec, std::size_t count);

// Random dense row-stochastic attention over an h x w grid; test fixture.
AttentionMatrix random_row_stochastic(std::size_t height, std::size_t width,
                                      Xoshiro256pp& rng);

// Scalar-loop transcriptions of the similarity, refinement and diffusion
// equations, kept deliberately independent of the optimized paths. They are
// O(n^3) and refuse to run beyond kOracleMaxTokens.
inline constexpr std::size_t kOracleMaxTokens = 64;

std::vector<double> dense_oracle_similarity(std::span<const float> attention, std::size_t n);
std::vector<double> dense_oracle_refine(std::span<const float> attention,
                                        std::span<const double> similarity, std::size_t n,
                                        std::size_t k);
std::vector<double> dense_oracle_diffuse(std::span<const double> refined,
                                         std::span<const double> initial, std::size_t n,
                                         std::size_t steps);

}  // namespace camdiffuse
