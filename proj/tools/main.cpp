#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "camdiffuse/array_io.hpp"
#include "camdiffuse/coneighbor.hpp"
#include "camdiffuse/error.hpp"
#include "camdiffuse/log.hpp"
#include "camdiffuse/manifest.hpp"
#include "camdiffuse/parallel.hpp"
#include "camdiffuse/pipeline.hpp"
#include "camdiffuse/rw_refine.hpp"
#include "camdiffuse/synth.hpp"
#include "camdiffuse/version.hpp"
#include "svg_plot.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace camdiffuse {
namespace {

double now_ms() {
  return std::chrono::duration<double, std::milli>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

std::vector<fs::path> resolve_inputs(const std::vector<std::string>& raw) {
  std::vector<fs::path> paths(raw.begin(), raw.end());
  const std::vector<fs::path> manifests = discover_manifests(paths);
  if (manifests.empty()) {
    raise(Errc::InvalidArgument, "no manifest directories found among the inputs");
  }
  return manifests;
}

std::vector<Instance> load_instances(const std::vector<fs::path>& dirs, unsigned workers) {
  std::vector<Instance> instances(dirs.size());
  parallel_for(dirs.size(), workers, [&](std::size_t i) {
    instances[i] = load_instance(dirs[i]);
  });
  return instances;
}

std::vector<double> parse_thresholds(const std::string& spec) {
  double lo = 0.0, hi = 0.0, step = 0.0;
  if (std::sscanf(spec.c_str(), "%lf:%lf:%lf", &lo, &hi, &step) != 3) {
    raise(Errc::InvalidArgument, "thresholds must be lo:hi:step, got '" + spec + "'");
  }
  return threshold_grid(lo, hi, step);
}

std::vector<std::size_t> parse_grid(const std::string& spec) {
  std::vector<std::size_t> values;
  std::string token;
  for (char c : spec + ",") {
    if (c == ',') {
      if (!token.empty()) {
        values.push_back(static_cast<std::size_t>(std::stoull(token)));
        token.clear();
      }
    } else if (std::isdigit(static_cast<unsigned char>(c))) {
      token.push_back(c);
    } else if (!std::isspace(static_cast<unsigned char>(c))) {
      raise(Errc::InvalidArgument, "bad grid entry in '" + spec + "'");
    }
  }
  if (values.empty()) raise(Errc::InvalidArgument, "empty grid '" + spec + "'");
  return values;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) raise(Errc::IoFailure, "cannot create '" + dir.string() + "'");
}

void write_json_file(const fs::path& path, const ordered_json& value) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) raise(Errc::IoFailure, "cannot write '" + path.string() + "'");
  out << value.dump(2) << "\n";
}

// Per-image maps directory: <prefix>_<class>.npy plus a maps.json index.
void write_maps_dir(const fs::path& dir, const std::string& image, const std::string& kind,
                    const std::string& prefix, const std::vector<ActivationMap>& maps) {
  ensure_dir(dir);
  ordered_json index;
  index["image"] = image;
  index["kind"] = kind;
  index["grid"] = {maps.front().height, maps.front().width};
  std::vector<int> classes;
  std::vector<std::string> files;
  for (const ActivationMap& map : maps) {
    const std::string filename = prefix + "_" + std::to_string(map.class_id) + ".npy";
    write_array(dir / filename, ArrayFile::from_f32({map.height, map.width}, map.data));
    classes.push_back(map.class_id);
    files.push_back(filename);
  }
  index["classes"] = classes;
  index["files"] = files;
  write_json_file(dir / "maps.json", index);
}

std::vector<ActivationMap> read_maps_dir(const fs::path& dir) {
  std::ifstream in(dir / "maps.json");
  if (!in) raise(Errc::BadManifest, "no maps.json under '" + dir.string() + "'");
  json index;
  try {
    index = json::parse(in);
  } catch (const json::exception& e) {
    raise(Errc::BadManifest, "unparsable maps.json: " + std::string(e.what()));
  }
  const auto classes = index.at("classes").get<std::vector<int>>();
  const auto files = index.at("files").get<std::vector<std::string>>();
  if (classes.size() != files.size() || classes.empty()) {
    raise(Errc::BadManifest, "maps.json classes/files mismatch");
  }
  std::vector<ActivationMap> maps;
  maps.reserve(classes.size());
  for (std::size_t i = 0; i < classes.size(); ++i) {
    const ArrayFile arr = read_array(dir / files[i]);
    if (arr.dtype != Dtype::Float32 || arr.shape.size() != 2) {
      raise(Errc::BadManifest, "map '" + files[i] + "' is not a 2-D float32 array");
    }
    ActivationMap map;
    map.class_id = classes[i];
    map.height = arr.shape[0];
    map.width = arr.shape[1];
    map.data.assign(arr.f32().begin(), arr.f32().end());
    maps.push_back(std::move(map));
  }
  return maps;
}

std::string format_fixed(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

void write_eval_csv(const fs::path& path, const std::vector<EvalReport>& reports,
                    std::size_t num_labels) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) raise(Errc::IoFailure, "cannot write '" + path.string() + "'");
  out << "threshold,miou,fp_rate,fn_rate,iou_bg";
  for (std::size_t c = 1; c < num_labels; ++c) out << ",iou_c" << c;
  out << "\n";
  for (const EvalReport& report : reports) {
    out << format_fixed(report.threshold) << "," << format_fixed(report.miou) << ","
        << format_fixed(report.fp_rate) << "," << format_fixed(report.fn_rate);
    for (std::size_t c = 0; c < num_labels; ++c) {
      const double iou =
          c < report.per_class_iou.size() ? report.per_class_iou[c]
                                          : std::numeric_limits<double>::quiet_NaN();
      out << "," << (std::isnan(iou) ? std::string("nan") : format_fixed(iou));
    }
    out << "\n";
  }
}

ordered_json report_to_json(const EvalReport& report) {
  ordered_json j;
  j["threshold"] = report.threshold;
  j["miou"] = report.miou;
  j["fp_rate"] = report.fp_rate;
  j["fn_rate"] = report.fn_rate;
  json ious = json::array();
  for (double iou : report.per_class_iou) {
    if (std::isnan(iou)) {
      ious.push_back(nullptr);
    } else {
      ious.push_back(iou);
    }
  }
  j["per_class_iou"] = ious;
  return j;
}

struct CommonArgs {
  std::vector<std::string> inputs;
  std::string out;
  unsigned workers = 1;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool with_inputs = true) {
  if (with_inputs) {
    cmd->add_option("inputs", args.inputs,
                    "manifest directories (or parents of manifest directories)");
  }
  cmd->add_option("--out", args.out, "output directory")->required();
  cmd->add_option("--workers", args.workers, "worker thread count")
      ->check(CLI::Range(1u, 256u));
}

// -------------------------------------------------------------------------
// gen-synth

struct GenSynthArgs {
  std::string spec_path;
  std::string out;
  std::size_t count = 0;
  std::uint64_t seed = 0;
  bool seed_set = false;
  unsigned workers = 1;
};

void run_gen_synth(const GenSynthArgs& args) {
  SynthSpec spec;
  std::size_t count = 1;
  if (!args.spec_path.empty()) {
    std::ifstream in(args.spec_path);
    if (!in) raise(Errc::IoFailure, "cannot open '" + args.spec_path + "'");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    spec = synth_spec_from_json(text);
    const json j = json::parse(text);
    if (j.contains("count")) count = j.at("count").get<std::size_t>();
  }
  if (args.count > 0) count = args.count;
  if (args.seed_set) spec.seed = args.seed;

  ensure_dir(args.out);
  parallel_for(count, args.workers, [&](std::size_t i) {
    const Instance instance = gen_instance(spec, i);
    save_instance(fs::path(args.out) / instance.name, instance);
  });

  ordered_json meta;
  meta["spec"] = json::parse(synth_spec_to_json(spec));
  meta["count"] = count;
  meta["version"] = kVersion;
  write_json_file(fs::path(args.out) / "dataset.json", meta);
  std::cout << "generated " << count << " instances under " << args.out << "\n";
}

// -------------------------------------------------------------------------
// adcam / cam

struct AdcamArgs {
  CommonArgs common;
  std::size_t k = 50;
  std::size_t steps = 2;
  bool emit_timings = false;
};

void run_adcam(const AdcamArgs& args, bool with_diffusion) {
  const std::vector<fs::path> dirs = resolve_inputs(args.common.inputs);
  const double t_load0 = now_ms();
  const std::vector<Instance> instances = load_instances(dirs, args.common.workers);
  const double t_load1 = now_ms();

  ensure_dir(args.common.out);
  const PipelineConfig config{args.k, DiffusionConfig{args.steps, true}};
  parallel_for(instances.size(), args.common.workers, [&](std::size_t i) {
    const Instance& instance = instances[i];
    const std::vector<ActivationMap> maps =
        run_instance(instance, config, with_diffusion ? CamMode::AdCam : CamMode::Vanilla);
    write_maps_dir(fs::path(args.common.out) / instance.name, instance.name,
                   with_diffusion ? "adcam" : "cam", "cls", maps);
  });
  const double t_done = now_ms();

  ordered_json meta;
  meta["command"] = with_diffusion ? "adcam" : "cam";
  meta["version"] = kVersion;
  if (with_diffusion) {
    meta["k"] = args.k;
    meta["steps"] = args.steps;
    meta["renormalize"] = true;
  }
  json inputs = json::array();
  for (const Instance& instance : instances) inputs.push_back(instance.name);
  meta["inputs"] = inputs;
  if (args.emit_timings) {
    meta["timings_ms"] = {{"load", t_load1 - t_load0}, {"compute_write", t_done - t_load1}};
  }
  write_json_file(fs::path(args.common.out) / "run_meta.json", meta);
  std::cout << "wrote " << instances.size() << " image(s) under " << args.common.out << "\n";
}

// -------------------------------------------------------------------------
// refine-att

struct RefineAttArgs {
  CommonArgs common;
  std::size_t k = 50;
};

void run_refine_att(const RefineAttArgs& args) {
  const std::vector<fs::path> dirs = resolve_inputs(args.common.inputs);
  const std::vector<Instance> instances = load_instances(dirs, args.common.workers);
  ensure_dir(args.common.out);

  parallel_for(instances.size(), args.common.workers, [&](std::size_t i) {
    const Instance& instance = instances[i];
    const AttentionMatrix aggregated = aggregate_attention(
        instance.attention, instance.features.height, instance.features.width);
    const SimilarityMatrix sim = similarity(aggregated);
    const RefinedAttention refined = refine(aggregated, sim, args.k);

    const fs::path dir = fs::path(args.common.out) / instance.name;
    ensure_dir(dir);
    const auto arrays = refined_to_arrays(refined);
    write_array(dir / "att_rowptr.npy", arrays[0]);
    write_array(dir / "att_cols.npy", arrays[1]);
    write_array(dir / "att_weights.npy", arrays[2]);
    ordered_json meta;
    meta["image"] = instance.name;
    meta["grid"] = {refined.height, refined.width};
    meta["k"] = args.k;
    meta["nnz"] = refined.nnz();
    write_json_file(dir / "att_meta.json", meta);
  });

  ordered_json meta;
  meta["command"] = "refine-att";
  meta["version"] = kVersion;
  meta["k"] = args.k;
  json inputs = json::array();
  for (const Instance& instance : instances) inputs.push_back(instance.name);
  meta["inputs"] = inputs;
  write_json_file(fs::path(args.common.out) / "run_meta.json", meta);
  std::cout << "wrote refined attention for " << instances.size() << " image(s)\n";
}

// -------------------------------------------------------------------------
// eval

struct EvalArgs {
  CommonArgs common;
  std::string pred;
  std::string thresholds = "0.01:0.99:0.01";
};

void run_eval(const EvalArgs& args) {
  const std::vector<fs::path> dirs = resolve_inputs(args.common.inputs);
  const std::vector<Instance> instances = load_instances(dirs, args.common.workers);
  const std::vector<double> thresholds = parse_thresholds(args.thresholds);

  std::size_t num_labels = 1;
  for (const Instance& instance : instances) {
    if (!instance.gt_mask.has_value()) {
      raise(Errc::BadManifest, "instance '" + instance.name + "' has no gt_mask");
    }
    num_labels = std::max(num_labels, instance.weights.num_classes + 1);
  }

  std::vector<std::vector<ConfusionStats>> partial(instances.size());
  parallel_for(instances.size(), args.common.workers, [&](std::size_t i) {
    const Instance& instance = instances[i];
    const fs::path pred_dir = fs::path(args.pred) / instance.name;
    if (!fs::exists(pred_dir / "maps.json")) {
      raise(Errc::BadManifest, "no prediction for image '" + instance.name + "'");
    }
    const EvalImage image = eval_image_for(instance, read_maps_dir(pred_dir));
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

  ensure_dir(args.common.out);
  write_eval_csv(fs::path(args.common.out) / "eval.csv", reports, num_labels);
  const EvalReport& best = best_report(reports);
  write_json_file(fs::path(args.common.out) / "best.json", report_to_json(best));
  std::cout << "best threshold " << format_fixed(best.threshold) << " with mIoU "
            << format_fixed(best.miou) << "\n";
}

// -------------------------------------------------------------------------
// sweep

struct SweepArgs {
  CommonArgs common;
  std::string k_grid = "50";
  std::string t_grid = "2";
  std::string thresholds = "0.01:0.99:0.01";
  bool plot = false;
};

void run_sweep(const SweepArgs& args) {
  const std::vector<fs::path> dirs = resolve_inputs(args.common.inputs);
  const std::vector<Instance> instances = load_instances(dirs, args.common.workers);
  const std::vector<std::size_t> k_values = parse_grid(args.k_grid);
  const std::vector<std::size_t> t_values = parse_grid(args.t_grid);
  const std::vector<double> thresholds = parse_thresholds(args.thresholds);

  const std::vector<SensitivityRow> rows =
      sensitivity_sweep(instances, k_values, t_values, thresholds, args.common.workers);

  ensure_dir(args.common.out);
  {
    std::ofstream out(fs::path(args.common.out) / "sensitivity.csv", std::ios::trunc);
    if (!out) raise(Errc::IoFailure, "cannot write sensitivity.csv");
    out << "k,T,best_threshold,miou,fp_rate,fn_rate\n";
    for (const SensitivityRow& row : rows) {
      out << row.k << "," << row.steps << "," << format_fixed(row.best_threshold) << ","
          << format_fixed(row.miou) << "," << format_fixed(row.fp_rate) << ","
          << format_fixed(row.fn_rate) << "\n";
    }
  }

  if (args.plot) {
    const auto collect = [&rows](bool vary_k, std::size_t fixed) {
      std::vector<double> x;
      std::vector<tools::Series> series{{"mIoU", "#2ca02c", {}},
                                        {"FP rate", "#ff7f0e", {}},
                                        {"FN rate", "#1f77b4", {}}};
      for (const SensitivityRow& row : rows) {
        if ((vary_k && row.steps == fixed) || (!vary_k && row.k == fixed)) {
          x.push_back(static_cast<double>(vary_k ? row.k : row.steps));
          series[0].values.push_back(row.miou);
          series[1].values.push_back(row.fp_rate);
          series[2].values.push_back(row.fn_rate);
        }
      }
      return std::make_pair(x, series);
    };
    const auto [xk, sk] = collect(true, t_values.front());
    if (xk.size() > 1) {
      tools::write_line_chart(fs::path(args.common.out) / "sensitivity_k.svg",
                              "seed quality vs k (T=" + std::to_string(t_values.front()) + ")",
                              "top-k", xk, sk);
    }
    const auto [xt, st] = collect(false, k_values.front());
    if (xt.size() > 1) {
      tools::write_line_chart(fs::path(args.common.out) / "sensitivity_T.svg",
                              "seed quality vs T (k=" + std::to_string(k_values.front()) + ")",
                              "diffusion steps", xt, st);
    }
  }
  std::cout << "wrote " << rows.size() << " sensitivity row(s)\n";
}

// -------------------------------------------------------------------------
// rw-refine

struct RwArgs {
  CommonArgs common;
  std::string maps_dir;
  std::size_t steps = 16;
  double beta = 8.0;
  std::string boundary_override;
};

void run_rw_refine(const RwArgs& args) {
  const std::vector<fs::path> dirs = resolve_inputs(args.common.inputs);
  const std::vector<Instance> instances = load_instances(dirs, args.common.workers);
  if (!args.boundary_override.empty() && instances.size() != 1) {
    raise(Errc::InvalidArgument, "--boundary applies to a single input image only");
  }
  ensure_dir(args.common.out);

  parallel_for(instances.size(), args.common.workers, [&](std::size_t i) {
    const Instance& instance = instances[i];
    BoundaryMap boundary;
    if (!args.boundary_override.empty()) {
      const ArrayFile arr = read_array(args.boundary_override);
      if (arr.dtype != Dtype::Float32 || arr.shape.size() != 2) {
        raise(Errc::BadManifest, "boundary override must be a 2-D float32 array");
      }
      boundary.height = arr.shape[0];
      boundary.width = arr.shape[1];
      boundary.data.assign(arr.f32().begin(), arr.f32().end());
    } else if (instance.boundary.has_value()) {
      boundary = *instance.boundary;
    } else {
      raise(Errc::BadManifest,
            "instance '" + instance.name + "' has no boundary map; pass --boundary");
    }

    const fs::path in_dir = fs::path(args.maps_dir) / instance.name;
    if (!fs::exists(in_dir / "maps.json")) {
      raise(Errc::BadManifest, "no maps for image '" + instance.name + "'");
    }
    const std::vector<ActivationMap> maps = read_maps_dir(in_dir);
    const TransitionMatrix transition = build_transition(boundary, args.beta);
    std::vector<ActivationMap> refined;
    refined.reserve(maps.size());
    for (const ActivationMap& map : maps) {
      refined.push_back(rw_refine(map, boundary, transition, args.steps));
    }
    write_maps_dir(fs::path(args.common.out) / instance.name, instance.name, "rw-refine",
                   "rw_cls", refined);
  });

  ordered_json meta;
  meta["command"] = "rw-refine";
  meta["version"] = kVersion;
  meta["rw_steps"] = args.steps;
  meta["beta"] = args.beta;
  json inputs = json::array();
  for (const Instance& instance : instances) inputs.push_back(instance.name);
  meta["inputs"] = inputs;
  write_json_file(fs::path(args.common.out) / "run_meta.json", meta);
  std::cout << "refined " << instances.size() << " image(s)\n";
}

int run_cli(int argc, char** argv) {
  CLI::App app{"attention-refined class activation map pipeline"};
  app.require_subcommand(1);

  GenSynthArgs gen_args;
  CLI::App* gen = app.add_subcommand("gen-synth", "generate synthetic manifest directories");
  gen->add_option("--spec", gen_args.spec_path, "JSON file with generator parameters");
  gen->add_option("--out", gen_args.out, "output directory")->required();
  gen->add_option("--count", gen_args.count, "number of instances (overrides spec)");
  gen->add_option("--seed", gen_args.seed, "seed override")
      ->each([&](const std::string&) { gen_args.seed_set = true; });
  gen->add_option("--workers", gen_args.workers, "worker thread count")
      ->check(CLI::Range(1u, 256u));
  gen->callback([&]() { run_gen_synth(gen_args); });

  AdcamArgs adcam_args;
  CLI::App* adcam = app.add_subcommand("adcam", "diffuse CAMs over refined attention");
  add_common(adcam, adcam_args.common);
  adcam->add_option("--k", adcam_args.k, "top-k co-neighbor columns (default 50)");
  adcam->add_option("--steps", adcam_args.steps, "diffusion steps T (default 2)");
  adcam->add_flag("--emit-timings", adcam_args.emit_timings,
                  "record wall times in run_meta.json (breaks byte determinism)");
  adcam->callback([&]() { run_adcam(adcam_args, true); });

  AdcamArgs cam_args;
  CLI::App* cam = app.add_subcommand("cam", "vanilla class activation maps");
  add_common(cam, cam_args.common);
  cam->add_flag("--emit-timings", cam_args.emit_timings,
                "record wall times in run_meta.json (breaks byte determinism)");
  cam->callback([&]() { run_adcam(cam_args, false); });

  RefineAttArgs refine_args;
  CLI::App* refine_att =
      app.add_subcommand("refine-att", "write refined attention in CSR form");
  add_common(refine_att, refine_args.common);
  refine_att->add_option("--k", refine_args.k, "top-k co-neighbor columns (default 50)");
  refine_att->callback([&]() { run_refine_att(refine_args); });

  EvalArgs eval_args;
  CLI::App* eval = app.add_subcommand("eval", "threshold sweep against ground truth");
  add_common(eval, eval_args.common);
  eval->add_option("--pred", eval_args.pred, "directory with per-image map outputs")
      ->required();
  eval->add_option("--thresholds", eval_args.thresholds, "lo:hi:step (default 0.01:0.99:0.01)");
  eval->callback([&]() { run_eval(eval_args); });

  SweepArgs sweep_args;
  CLI::App* sweep = app.add_subcommand("sweep", "sensitivity sweep over k and T");
  add_common(sweep, sweep_args.common);
  sweep->add_option("--k-grid", sweep_args.k_grid, "comma list of k values (default 50)");
  sweep->add_option("--T-grid", sweep_args.t_grid, "comma list of T values (default 2)");
  sweep->add_option("--thresholds", sweep_args.thresholds, "lo:hi:step");
  sweep->add_flag("--plot", sweep_args.plot, "emit SVG line charts");
  sweep->callback([&]() { run_sweep(sweep_args); });

  RwArgs rw_args;
  CLI::App* rw = app.add_subcommand("rw-refine", "boundary-guided random-walk refinement");
  add_common(rw, rw_args.common);
  rw->add_option("--maps", rw_args.maps_dir, "directory with per-image map outputs")
      ->required();
  rw->add_option("--rw-steps", rw_args.steps, "random walk iterations (default 16)");
  rw->add_option("--beta", rw_args.beta, "boundary affinity exponent (default 8)");
  rw->add_option("--boundary", rw_args.boundary_override,
                 "boundary .npy override (single image only)");
  rw->callback([&]() { run_rw_refine(rw_args); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  return 0;
}

}  // namespace
}  // namespace camdiffuse

int main(int argc, char** argv) {
  try {
    return camdiffuse::run_cli(argc, argv);
  } catch (const camdiffuse::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.code() == camdiffuse::Errc::Internal ? 1 : 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
}
