#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <unistd.h>
#include <vector>

#include <json.hpp>

#include "camdiffuse/array_io.hpp"
#include "camdiffuse/manifest.hpp"

namespace fs = std::filesystem;

namespace {

const char* cli_path() { return CAMDIFFUSE_CLI_PATH; }

int run(const std::string& args) {
  const std::string cmd = std::string(cli_path()) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  if (WIFEXITED(status)) return WEXITSTATUS(status);
  return -1;
}

fs::path work_dir() {
  static fs::path dir = [] {
    fs::path p = fs::temp_directory_path() / ("camdiffuse_cli_" + std::to_string(::getpid()));
    fs::create_directories(p);
    return p;
  }();
  return dir;
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

std::size_t count_fields(const std::string& line) {
  return static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1;
}

}  // namespace

TEST_CASE("cli pipeline: gen-synth, adcam, eval, sweep, refine-att, rw-refine") {
  const fs::path data = work_dir() / "data";
  const fs::path maps = work_dir() / "maps";
  const fs::path eval_out = work_dir() / "eval";
  const fs::path sweep_out = work_dir() / "sweep";
  const fs::path att_out = work_dir() / "att";
  const fs::path rw_out = work_dir() / "rw";

  const fs::path spec = work_dir() / "spec.json";
  {
    std::ofstream out(spec);
    out << "{\"spurious_rate\": 0.15, \"seed\": 77, \"count\": 3}\n";
  }

  REQUIRE(run("gen-synth --spec " + spec.string() + " --out " + data.string()) == 0);
  CHECK(fs::exists(data / "img_0000" / "instance.json"));
  CHECK(fs::exists(data / "img_0002" / "attention.npy"));
  CHECK(fs::exists(data / "dataset.json"));

  REQUIRE(run("adcam " + data.string() + " --out " + maps.string() + " --workers 2") == 0);
  CHECK(fs::exists(maps / "img_0000" / "maps.json"));
  CHECK(fs::exists(maps / "run_meta.json"));

  REQUIRE(run("eval " + data.string() + " --pred " + maps.string() + " --out " +
              eval_out.string() + " --thresholds 0.05:0.95:0.05") == 0);
  const std::vector<std::string> csv = read_lines(eval_out / "eval.csv");
  REQUIRE(csv.size() == 1 + 19);
  // RFC-4180-style: a fixed field count on every record, numeric cells.
  const std::size_t fields = count_fields(csv.front());
  CHECK(csv.front() == "threshold,miou,fp_rate,fn_rate,iou_bg,iou_c1,iou_c2,iou_c3");
  for (std::size_t i = 1; i < csv.size(); ++i) {
    CHECK(count_fields(csv[i]) == fields);
    std::stringstream row(csv[i]);
    std::string cell;
    while (std::getline(row, cell, ',')) {
      CHECK(!cell.empty());
      if (cell != "nan") {
        CHECK_NOTHROW((void)std::stod(cell));
      }
    }
  }
  {
    std::ifstream best_in(eval_out / "best.json");
    const nlohmann::json best = nlohmann::json::parse(best_in);
    CHECK(best.at("miou").get<double>() > 0.0);
    CHECK(best.at("miou").get<double>() <= 1.0);
  }

  REQUIRE(run("sweep " + data.string() + " --out " + sweep_out.string() +
              " --thresholds 0.05:0.95:0.05 --plot --k-grid 5,50 --T-grid 2") == 0);
  const std::vector<std::string> rows = read_lines(sweep_out / "sensitivity.csv");
  REQUIRE(rows.size() == 3);
  CHECK(rows.front() == "k,T,best_threshold,miou,fp_rate,fn_rate");
  CHECK(rows[1].substr(0, 4) == "5,2,");
  CHECK(rows[2].substr(0, 5) == "50,2,");
  CHECK(fs::exists(sweep_out / "sensitivity_k.svg"));

  REQUIRE(run("refine-att " + data.string() + " --out " + att_out.string() + " --k 40") == 0);
  CHECK(fs::exists(att_out / "img_0001" / "att_rowptr.npy"));
  CHECK(fs::exists(att_out / "img_0001" / "att_cols.npy"));
  CHECK(fs::exists(att_out / "img_0001" / "att_weights.npy"));

  REQUIRE(run("rw-refine " + data.string() + " --maps " + maps.string() + " --out " +
              rw_out.string() + " --rw-steps 4 --beta 4") == 0);
  CHECK(fs::exists(rw_out / "img_0000" / "maps.json"));
}

TEST_CASE("a prediction built from the ground truth evaluates to mIoU 1.0") {
  const fs::path data = work_dir() / "perfect_data";
  const fs::path pred = work_dir() / "perfect_pred";
  const fs::path out = work_dir() / "perfect_eval";
  const fs::path spec = work_dir() / "perfect_spec.json";
  {
    std::ofstream sp(spec);
    sp << "{\"seed\": 5, \"count\": 1}\n";
  }
  REQUIRE(run("gen-synth --spec " + spec.string() + " --out " + data.string()) == 0);

  // One-hot activation maps derived from gt, written in the maps.json layout.
  const camdiffuse::Instance instance = camdiffuse::load_instance(data / "img_0000");
  REQUIRE(instance.gt_mask.has_value());
  const fs::path image_dir = pred / "img_0000";
  fs::create_directories(image_dir);
  nlohmann::ordered_json index;
  index["image"] = "img_0000";
  index["kind"] = "test";
  index["grid"] = {instance.gt_mask->height, instance.gt_mask->width};
  std::vector<int> classes;
  std::vector<std::string> files;
  for (int label : instance.labels) {
    std::vector<float> map(instance.gt_mask->data.size(), 0.0f);
    for (std::size_t p = 0; p < map.size(); ++p) {
      if (instance.gt_mask->data[p] == static_cast<std::uint8_t>(label + 1)) map[p] = 1.0f;
    }
    const std::string filename = "cls_" + std::to_string(label) + ".npy";
    camdiffuse::write_array(
        image_dir / filename,
        camdiffuse::ArrayFile::from_f32({instance.gt_mask->height, instance.gt_mask->width},
                                        map));
    classes.push_back(label);
    files.push_back(filename);
  }
  index["classes"] = classes;
  index["files"] = files;
  {
    std::ofstream mj(image_dir / "maps.json");
    mj << index.dump(2) << "\n";
  }

  REQUIRE(run("eval " + data.string() + " --pred " + pred.string() + " --out " +
              out.string()) == 0);
  std::ifstream best_in(out / "best.json");
  const nlohmann::json best = nlohmann::json::parse(best_in);
  CHECK(best.at("miou").get<double>() == 1.0);
}

TEST_CASE("exit codes: usage and input errors map to 2") {
  CHECK(run("adcam --out " + (work_dir() / "never").string()) == 2);
  CHECK(run("definitely-not-a-subcommand") == 2);
  CHECK(run("adcam --bogus-flag x --out y") == 2);
  const fs::path empty = work_dir() / "empty_dir";
  fs::create_directories(empty);
  CHECK(run("adcam " + empty.string() + " --out " + (work_dir() / "never2").string()) == 2);
  CHECK(run("eval " + empty.string() + " --pred x --out y") == 2);
  CHECK(run("--help") == 0);
  CHECK(run("adcam --help") == 0);
}

TEST_CASE("eval with unpaired predictions exits 2") {
  const fs::path data = work_dir() / "unpaired_data";
  const fs::path spec = work_dir() / "unpaired_spec.json";
  {
    std::ofstream sp(spec);
    sp << "{\"seed\": 6, \"count\": 1}\n";
  }
  REQUIRE(run("gen-synth --spec " + spec.string() + " --out " + data.string()) == 0);
  const fs::path no_preds = work_dir() / "no_preds";
  fs::create_directories(no_preds);
  CHECK(run("eval " + data.string() + " --pred " + no_preds.string() + " --out " +
            (work_dir() / "unpaired_eval").string()) == 2);
}

TEST_CASE("bad threshold specs exit 2") {
  const fs::path data = work_dir() / "threshold_data";
  const fs::path spec = work_dir() / "threshold_spec.json";
  {
    std::ofstream sp(spec);
    sp << "{\"seed\": 8, \"count\": 1}\n";
  }
  REQUIRE(run("gen-synth --spec " + spec.string() + " --out " + data.string()) == 0);
  const fs::path maps = work_dir() / "threshold_maps";
  REQUIRE(run("cam " + data.string() + " --out " + maps.string()) == 0);
  CHECK(run("eval " + data.string() + " --pred " + maps.string() + " --out " +
            (work_dir() / "threshold_eval").string() + " --thresholds nonsense") == 2);
}
