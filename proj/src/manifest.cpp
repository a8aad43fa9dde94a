#include "camdiffuse/manifest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include <json.hpp>

#include "camdiffuse/array_io.hpp"
#include "camdiffuse/error.hpp"

namespace camdiffuse {

namespace {

using nlohmann::json;

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) raise(Errc::BadManifest, "cannot open '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    raise(Errc::BadManifest, "unparsable '" + path.string() + "': " + e.what());
  }
}

struct EntryRef {
  std::filesystem::path path;
  std::vector<std::size_t> shape;
};

EntryRef parse_entry(const json& manifest, const std::string& key,
                     const std::filesystem::path& dir) {
  if (!manifest.contains(key)) raise(Errc::BadManifest, "manifest missing key '" + key + "'");
  const json& entry = manifest.at(key);
  if (!entry.is_object() || !entry.contains("path") || !entry.contains("shape")) {
    raise(Errc::BadManifest, "manifest entry '" + key + "' needs path and shape");
  }
  EntryRef ref;
  ref.path = dir / entry.at("path").get<std::string>();
  for (const json& dim : entry.at("shape")) {
    if (!dim.is_number_unsigned() || dim.get<std::uint64_t>() == 0) {
      raise(Errc::BadManifest, "bad shape in manifest entry '" + key + "'");
    }
    ref.shape.push_back(dim.get<std::size_t>());
  }
  return ref;
}

ArrayFile load_declared(const EntryRef& ref, Dtype dtype, std::size_t rank,
                        const std::string& key) {
  if (ref.shape.size() != rank) {
    raise(Errc::BadManifest, "entry '" + key + "' must be rank " + std::to_string(rank));
  }
  ArrayFile arr = read_array(ref.path);
  if (arr.dtype != dtype) {
    raise(Errc::BadManifest, "entry '" + key + "' has the wrong dtype on disk");
  }
  if (arr.shape != ref.shape) {
    raise(Errc::BadManifest, "entry '" + key + "' shape on disk differs from the manifest");
  }
  return arr;
}

void check_finite(std::span<const float> values, const std::string& what) {
  for (float v : values) {
    if (!std::isfinite(v)) raise(Errc::NonFiniteInput, what + " contains non-finite values");
  }
}

json entry_json(const std::string& filename, std::span<const std::size_t> shape) {
  json entry;
  entry["path"] = filename;
  entry["shape"] = std::vector<std::size_t>(shape.begin(), shape.end());
  return entry;
}

}  // namespace

Instance load_instance(const std::filesystem::path& dir) {
  const json manifest = read_json(dir / "instance.json");

  Instance instance;
  instance.name = dir.filename().string();
  if (instance.name.empty()) {
    instance.name = dir.parent_path().filename().string();
  }

  const EntryRef feat_ref = parse_entry(manifest, "features", dir);
  ArrayFile feat = load_declared(feat_ref, Dtype::Float32, 3, "features");
  instance.features.channels = feat.shape[0];
  instance.features.height = feat.shape[1];
  instance.features.width = feat.shape[2];
  instance.features.data.assign(feat.f32().begin(), feat.f32().end());
  check_finite(instance.features.data, "features");

  const EntryRef weight_ref = parse_entry(manifest, "weights", dir);
  ArrayFile weights = load_declared(weight_ref, Dtype::Float32, 2, "weights");
  instance.weights.num_classes = weights.shape[0];
  instance.weights.channels = weights.shape[1];
  instance.weights.data.assign(weights.f32().begin(), weights.f32().end());
  check_finite(instance.weights.data, "weights");
  if (instance.weights.channels != instance.features.channels) {
    raise(Errc::BadManifest, "weights and features disagree on channel count");
  }

  const EntryRef att_ref = parse_entry(manifest, "attention", dir);
  ArrayFile attention = load_declared(att_ref, Dtype::Float32, 4, "attention");
  if (attention.shape[2] != attention.shape[3]) {
    raise(Errc::BadManifest, "attention slices are not square");
  }
  if (attention.shape[2] != instance.features.height * instance.features.width) {
    raise(Errc::BadManifest, "attention token count does not match the feature grid");
  }
  instance.attention.layers = attention.shape[0];
  instance.attention.heads = attention.shape[1];
  instance.attention.tokens = attention.shape[2];
  instance.attention.data.assign(attention.f32().begin(), attention.f32().end());

  if (!manifest.contains("labels") || !manifest.at("labels").is_array()) {
    raise(Errc::BadManifest, "manifest missing the labels list");
  }
  std::set<int> seen;
  for (const json& label : manifest.at("labels")) {
    if (!label.is_number_integer()) raise(Errc::BadManifest, "labels must be integers");
    const int value = label.get<int>();
    if (value < 0 || static_cast<std::size_t>(value) >= instance.weights.num_classes) {
      raise(Errc::BadManifest, "label " + std::to_string(value) + " out of range");
    }
    if (!seen.insert(value).second) {
      raise(Errc::BadManifest, "label " + std::to_string(value) + " repeated");
    }
    instance.labels.push_back(value);
  }

  if (manifest.contains("boundary")) {
    const EntryRef ref = parse_entry(manifest, "boundary", dir);
    ArrayFile boundary = load_declared(ref, Dtype::Float32, 2, "boundary");
    if (boundary.shape[0] != instance.features.height ||
        boundary.shape[1] != instance.features.width) {
      raise(Errc::BadManifest, "boundary grid differs from the feature grid");
    }
    BoundaryMap map;
    map.height = boundary.shape[0];
    map.width = boundary.shape[1];
    map.data.assign(boundary.f32().begin(), boundary.f32().end());
    instance.boundary = std::move(map);
  }

  if (manifest.contains("gt_mask")) {
    const EntryRef ref = parse_entry(manifest, "gt_mask", dir);
    ArrayFile gt = load_declared(ref, Dtype::Uint8, 2, "gt_mask");
    SeedMask mask;
    mask.height = gt.shape[0];
    mask.width = gt.shape[1];
    mask.data.assign(gt.u8().begin(), gt.u8().end());
    instance.gt_mask = std::move(mask);
  }

  return instance;
}

void save_instance(const std::filesystem::path& dir, const Instance& instance) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) raise(Errc::IoFailure, "cannot create '" + dir.string() + "'");

  const FeatureMap& f = instance.features;
  write_array(dir / "features.npy",
              ArrayFile::from_f32({f.channels, f.height, f.width}, f.data));
  const ClassifierWeights& w = instance.weights;
  write_array(dir / "weights.npy",
              ArrayFile::from_f32({w.num_classes, w.channels}, w.data));
  const AttentionStack& a = instance.attention;
  write_array(dir / "attention.npy",
              ArrayFile::from_f32({a.layers, a.heads, a.tokens, a.tokens}, a.data));

  nlohmann::ordered_json manifest;
  manifest["attention"] = entry_json("attention.npy", {{a.layers, a.heads, a.tokens, a.tokens}});
  manifest["features"] = entry_json("features.npy", {{f.channels, f.height, f.width}});
  manifest["weights"] = entry_json("weights.npy", {{w.num_classes, w.channels}});
  manifest["labels"] = instance.labels;

  if (instance.boundary.has_value()) {
    const BoundaryMap& b = *instance.boundary;
    write_array(dir / "boundary.npy", ArrayFile::from_f32({b.height, b.width}, b.data));
    manifest["boundary"] = entry_json("boundary.npy", {{b.height, b.width}});
  }
  if (instance.gt_mask.has_value()) {
    const SeedMask& gt = *instance.gt_mask;
    write_array(dir / "gt_mask.npy", ArrayFile::from_u8({gt.height, gt.width}, gt.data));
    manifest["gt_mask"] = entry_json("gt_mask.npy", {{gt.height, gt.width}});
  }

  std::ofstream out(dir / "instance.json", std::ios::trunc);
  if (!out) raise(Errc::IoFailure, "cannot write instance.json under '" + dir.string() + "'");
  out << manifest.dump(2) << "\n";
}

std::vector<std::filesystem::path> discover_manifests(
    const std::vector<std::filesystem::path>& paths) {
  std::vector<std::filesystem::path> found;
  for (const std::filesystem::path& path : paths) {
    if (std::filesystem::exists(path / "instance.json")) {
      found.push_back(path);
      continue;
    }
    if (!std::filesystem::is_directory(path)) {
      raise(Errc::BadManifest, "'" + path.string() + "' is not a manifest directory");
    }
    std::vector<std::filesystem::path> children;
    for (const auto& entry : std::filesystem::directory_iterator(path)) {
      if (entry.is_directory() && std::filesystem::exists(entry.path() / "instance.json")) {
        children.push_back(entry.path());
      }
    }
    std::sort(children.begin(), children.end());
    found.insert(found.end(), children.begin(), children.end());
  }
  return found;
}

}  // namespace camdiffuse
