#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <unistd.h>
#include <vector>

#include "camdiffuse/error.hpp"
#include "camdiffuse/pipeline.hpp"
#include "camdiffuse/rng.hpp"
#include "camdiffuse/synth.hpp"

using namespace camdiffuse;
namespace fs = std::filesystem;

namespace {

SynthSpec family_spec(double rho, std::uint64_t seed) {
  SynthSpec spec;
  spec.spurious_rate = rho;
  spec.seed = seed;
  return spec;
}

}  // namespace

TEST_CASE("identical specs generate identical instances") {
  const SynthSpec spec = family_spec(0.15, 2024);
  const Instance a = gen_instance(spec, 3);
  const Instance b = gen_instance(spec, 3);
  CHECK(a.features.data == b.features.data);
  CHECK(a.weights.data == b.weights.data);
  CHECK(a.attention.data == b.attention.data);
  CHECK(a.labels == b.labels);
  CHECK(a.gt_mask->data == b.gt_mask->data);
  CHECK(a.boundary->data == b.boundary->data);

  const Instance c = gen_instance(spec, 4);
  CHECK(a.attention.data != c.attention.data);
}

TEST_CASE("generated instances satisfy the declared invariants") {
  const SynthSpec spec = family_spec(0.15, 7);
  const Instance instance = gen_instance(spec, 0);
  const std::size_t n = instance.attention.tokens;
  REQUIRE(n == spec.height * spec.width);

  for (std::size_t l = 0; l < instance.attention.layers; ++l) {
    for (std::size_t h = 0; h < instance.attention.heads; ++h) {
      const float* slice = instance.attention.slice(l, h);
      for (std::size_t i = 0; i < n; ++i) {
        double row_sum = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          CHECK(slice[i * n + j] >= 0.0f);
          row_sum += slice[i * n + j];
        }
        CHECK(std::abs(row_sum - 1.0) <= 1e-4);
      }
    }
  }
  for (float v : instance.boundary->data) {
    CHECK(v >= 0.0f);
    CHECK(v <= 1.0f);
  }
  for (std::uint8_t v : instance.gt_mask->data) {
    CHECK(v <= spec.num_classes);
  }
}

TEST_CASE("zero spurious rate keeps attention inside regions") {
  const SynthSpec spec = family_spec(0.0, 11);
  for (std::size_t index = 0; index < 3; ++index) {
    const Instance instance = gen_instance(spec, index);
    const std::size_t n = instance.attention.tokens;
    const auto& gt = instance.gt_mask->data;
    for (std::size_t l = 0; l < instance.attention.layers; ++l) {
      for (std::size_t h = 0; h < instance.attention.heads; ++h) {
        const float* slice = instance.attention.slice(l, h);
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t j = 0; j < n; ++j) {
            if (gt[i] != gt[j]) {
              CHECK(slice[i * n + j] == 0.0f);
            }
          }
        }
      }
    }
  }
}

TEST_CASE("a grid-filling blob: diffusion recovers what the CAM misses") {
  SynthSpec spec;
  spec.height = 18;
  spec.width = 18;
  spec.num_classes = 1;
  spec.blobs_per_image = 1;
  spec.radius_min = 8.4;
  spec.radius_max = 8.4;
  spec.spurious_rate = 0.0;
  spec.seed = 31;

  const std::vector<Instance> dataset = gen_dataset(spec, 5);
  const std::vector<double> thresholds = threshold_grid(0.01, 0.99, 0.01);
  const PipelineConfig config{50, DiffusionConfig{2, true}};

  const std::vector<EvalReport> cam_reports =
      evaluate_dataset(dataset, CamMode::Vanilla, config, thresholds);
  const std::vector<EvalReport> ad_reports =
      evaluate_dataset(dataset, CamMode::AdCam, config, thresholds);
  const double cam_best = best_report(cam_reports).miou;
  const double ad_best = best_report(ad_reports).miou;
  MESSAGE("cam=", cam_best, " adcam=", ad_best);
  CHECK(cam_best < ad_best);
}

TEST_CASE("instances round-trip through the manifest layout") {
  const SynthSpec spec = family_spec(0.15, 99);
  const Instance instance = gen_instance(spec, 2);
  const fs::path dir = fs::temp_directory_path() /
                       ("camdiffuse_synth_" + std::to_string(::getpid())) / instance.name;
  save_instance(dir, instance);
  const Instance back = load_instance(dir);
  CHECK(back.name == instance.name);
  CHECK(back.features.data == instance.features.data);
  CHECK(back.weights.data == instance.weights.data);
  CHECK(back.attention.data == instance.attention.data);
  CHECK(back.labels == instance.labels);
  REQUIRE(back.gt_mask.has_value());
  CHECK(back.gt_mask->data == instance.gt_mask->data);
  REQUIRE(back.boundary.has_value());
  CHECK(back.boundary->data == instance.boundary->data);
  fs::remove_all(dir.parent_path());
}

TEST_CASE("spec json round-trips and rejects unknown keys") {
  SynthSpec spec = family_spec(0.25, 555);
  spec.height = 20;
  spec.blobs_per_image = 3;
  const SynthSpec back = synth_spec_from_json(synth_spec_to_json(spec));
  CHECK(back.height == 20);
  CHECK(back.blobs_per_image == 3);
  CHECK(back.spurious_rate == 0.25);
  CHECK(back.seed == 555);

  CHECK_THROWS_AS(synth_spec_from_json("{\"blob_count\": 3}"), Error);
  CHECK_THROWS_AS(synth_spec_from_json("not json"), Error);
  CHECK_THROWS_AS(synth_spec_from_json("{\"blobs_per_image\": 9}"), Error);
}

TEST_CASE("identity attention: oracle and optimized paths agree trivially") {
  const std::size_t n = 9;
  std::vector<float> eye(n * n, 0.0f);
  for (std::size_t i = 0; i < n; ++i) eye[i * n + i] = 1.0f;
  AttentionMatrix a;
  a.tokens = n;
  a.height = 3;
  a.width = 3;
  a.data = eye;

  const std::vector<double> oracle = dense_oracle_similarity(a.data, n);
  const SimilarityMatrix optimized = similarity(a);
  for (std::size_t i = 0; i < n * n; ++i) {
    const double expected = (i % (n + 1) == 0) ? 1.0 : 0.0;
    CHECK(std::abs(oracle[i] - expected) <= 1e-12);
    CHECK(std::abs(optimized.data[i] - oracle[i]) <= 1e-6);
  }
}

TEST_CASE("uniform attention: oracle similarity is all ones") {
  const std::size_t n = 16;
  const std::vector<float> uniform(n * n, 1.0f / static_cast<float>(n));
  const std::vector<double> oracle = dense_oracle_similarity(uniform, n);
  for (double v : oracle) CHECK(std::abs(v - 1.0) <= 1e-6);
}

TEST_CASE("optimized pipeline matches the oracles on 50 random instances") {
  Xoshiro256pp rng(0xFEED);
  for (int trial = 0; trial < 50; ++trial) {
    const AttentionMatrix a = random_row_stochastic(4, 4, rng);
    const std::size_t n = 16;

    const SimilarityMatrix s = similarity(a);
    const std::vector<double> s_oracle = dense_oracle_similarity(a.data, n);
    double max_err = 0.0;
    for (std::size_t i = 0; i < n * n; ++i) {
      max_err = std::max(max_err, std::abs(s.data[i] - s_oracle[i]));
    }
    CHECK(max_err <= 1e-6);

    const RefinedAttention refined = refine(a, s, 5);
    const std::vector<double> r_oracle = dense_oracle_refine(a.data, s_oracle, n, 5);
    const std::vector<float> r_dense = csr_to_dense(refined);
    for (std::size_t i = 0; i < n * n; ++i) {
      CHECK(std::abs(r_dense[i] - r_oracle[i]) <= 1e-6);
    }
  }
}

TEST_CASE("oracles refuse oversized inputs") {
  const std::size_t n = 65;
  const std::vector<float> big(n * n, 1.0f / static_cast<float>(n));
  try {
    dense_oracle_similarity(big, n);
    FAIL("expected OracleSizeExceeded");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::OracleSizeExceeded);
  }
}
