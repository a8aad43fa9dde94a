#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "camdiffuse/cam.hpp"
#include "camdiffuse/mask_eval.hpp"
#include "camdiffuse/rw_refine.hpp"

namespace camdiffuse {

// One image's worth of exported tensors, as described by an instance.json
// manifest directory.
struct Instance {
  std::string name;  // directory basename, used to pair predictions with inputs
  FeatureMap features;
  ClassifierWeights weights;
  AttentionStack attention;
  std::vector<int> labels;
  std::optional<BoundaryMap> boundary;
  std::optional<SeedMask> gt_mask;
};

// Reads instance.json plus the arrays it references, validating declared
// shapes, dtypes and cross-array consistency (n == h*w, matching channel
// counts, labels < K).
Instance load_instance(const std::filesystem::path& dir);

// Writes the manifest layout consumed by load_instance.
void save_instance(const std::filesystem::path& dir, const Instance& instance);

// Expands each path to manifest directories: a path containing instance.json
// stands for itself; otherwise its immediate subdirectories holding an
// instance.json are taken, sorted by name.
std::vector<std::filesystem::path> discover_manifests(
    const std::vector<std::filesystem::path>& paths);

}  // namespace camdiffuse
