#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "covseg/cli/app.hpp"
#include "covseg/cli/config.hpp"
#include "covseg/ingest/manifest.hpp"
#include "covseg/ingest/nifti.hpp"
#include "covseg/train/source.hpp"
#include "doctest.h"
#include "support/dicom_fixture.hpp"

using namespace covseg;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("covseg_" + tag + "_" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Mini configuration: tiny network, one short session, data under `root`.
std::string write_config(const TempDir& root) {
  const std::string path = root / "config.yaml";
  std::ofstream f(path);
  f << "seed: 3\n"
       "paths:\n"
       "  images: " << root / "raw/images" << "\n"
       "  masks: " << root / "raw/masks" << "\n"
       "  dicom_root: " << root / "raw/dicom" << "\n"
       "  annotations: " << root / "raw/annotations.json" << "\n"
       "  nifti: " << root / "nifti" << "\n"
       "  manifest: " << root / "nifti/manifest.json" << "\n"
       "  split: " << root / "split.json" << "\n"
       "  checkpoints: " << root / "ckpt" << "\n"
       "  reports: " << root / "reports" << "\n"
       "  log: " << root / "train.ndjson" << "\n"
       "dataset:\n"
       "  name: Synthetic\n"
       "  kind: nifti_pairs\n"
       "model:\n"
       "  encoder_channels: [4, 4, 6, 6, 8]\n"
       "  decoder_channels: [6, 6, 4, 4]\n"
       "  head_channels: 3\n"
       "plan:\n"
       "  sessions:\n"
       "    - stage: {depth: 8, height: 32, width: 32, batch_size: 1}\n"
       "      frozen_epochs: 1\n"
       "      frozen_lr: 0.01\n"
       "      main_epochs: 1\n"
       "      base_lr: 0.001\n"
       "      weight_decay: 1.0e-5\n";
  return path;
}

void write_phantom_pairs(const TempDir& root, int n) {
  fs::create_directories(root / "raw/images");
  fs::create_directories(root / "raw/masks");
  for (int i = 0; i < n; ++i) {
    const auto s = train::sphere_phantom({10, 40, 36}, 100 + i, "");
    const std::string id = "case_" + std::to_string(i);
    ingest::write_nifti_ct(s.ct, root / ("raw/images/" + id + ".nii.gz"));
    ingest::write_nifti_mask(s.mask, s.ct.affine, root / ("raw/masks/" + id + "_mask.nii.gz"));
  }
}

}  // namespace

TEST_CASE("config resolution: defaults, file, overrides") {
  const cli::RunConfig d = cli::resolve_config("", {});
  CHECK(d.plan.sessions.size() == 2);
  CHECK(d.nsd_tolerance_mm == 3.0);
  CHECK(d.inference_stage() == datapipe::kStage2);
  const cli::RunConfig o = cli::resolve_config(
      "", {"plan.sessions.0.main_epochs=7", "dataset.name=MosMed", "predict_stage={depth: 8, height: 32, width: 32}",
           "paths.nifti='123'"});
  CHECK(o.plan.sessions[0].main_epochs == 7);
  CHECK(o.dataset.name == "MosMed");
  CHECK(o.inference_stage() == datapipe::StageSpec{8, 32, 32, 1});
  CHECK(o.paths.nifti == "123");
  CHECK_THROWS_AS(cli::resolve_config("", {"model.bogus=1"}), UsageError);
  CHECK_THROWS_AS(cli::resolve_config("", {"plan.sessions.5.main_epochs=1"}), UsageError);
  CHECK_THROWS_AS(cli::resolve_config("", {"tune_percent=100"}), UsageError);
  CHECK_THROWS_AS(cli::resolve_config("/nonexistent.yaml", {}), InputError);
  CHECK(cli::config_from_json(cli::config_to_json(o)).plan.sessions == o.plan.sessions);

  const auto canonical = fs::path(COVSEG_SOURCE_DIR) / "configs/canonical.yaml";
  const cli::RunConfig c = cli::resolve_config(canonical.string(), {});
  CHECK(c.plan.sessions == train::TrainingPlan::canonical().sessions);
  CHECK(c.nsd_tolerance_mm == 3.0);
  CHECK(cli::config_to_json(c) == cli::config_to_json(cli::RunConfig{}));
}

TEST_CASE("exit codes") {
  CHECK(run({"--help"}).code == cli::kSuccess);
  CHECK(run({}).code == cli::kUsage);
  CHECK(run({"train", "--no-such-flag"}).code == cli::kUsage);
  CHECK(run({"--set", "nope=1", "train"}).code == cli::kUsage);
  CHECK(run({"evaluate", "--oracle", "psychic", "--set", "paths.manifest=/nonexistent/m.json"}).code == cli::kUsage);
  const Result missing = run({"--set", "paths.manifest=/nonexistent/m.json", "train"});
  CHECK(missing.code == cli::kData);
  CHECK(missing.err.find("/nonexistent/m.json") != std::string::npos);
  const Result dry = run({"--dry-run", "train"});
  CHECK(dry.code == cli::kSuccess);
  CHECK(dry.out.find("session 1: stage 18x112x112 batch 6; 10 frozen epochs at lr 0.01, 200 epochs at lr 0.001") !=
        std::string::npos);
  CHECK(dry.out.find("session 2: stage 20x256x256 batch 1; 0 frozen epochs") != std::string::npos);
  CHECK(dry.err.find("config {") != std::string::npos);
}

TEST_CASE("convert DICOM studies and report orphans") {
  TempDir root("cli_dicom");
  const std::string cfg = write_config(root);
  json entries = json::array();
  for (int study = 0; study < 2; ++study) {
    const std::string dir = root / ("raw/dicom/s" + std::to_string(study));
    fs::create_directories(dir);
    for (int n = 1; n <= 3; ++n) {
      fixture::SyntheticSlice s;
      s.study = "1.2.3." + std::to_string(study);
      s.series = s.study + ".1";
      s.sop = s.series + "." + std::to_string(n);
      s.instance = n;
      s.pixels.assign(64, static_cast<std::int16_t>(100 * n));
      fixture::write_dicom(dir + "/" + std::to_string(n) + ".dcm", s);
    }
    entries.push_back({{"StudyInstanceUID", "1.2.3." + std::to_string(study)},
                       {"SOPInstanceUID", "1.2.3." + std::to_string(study) + ".1.2"},
                       {"data", {{"vertices", {{1, 1}, {1, 4}, {4, 4}, {4, 1}}}}}});
  }
  std::ofstream(root / "raw/annotations.json") << json{{"datasets", {{{"annotations", entries}}}}}.dump();
  const Result r = run({"--config", cfg, "convert", "--kind", "dicom_json"});
  CHECK(r.code == cli::kSuccess);
  const ingest::Manifest m = ingest::read_manifest(root / "nifti/manifest.json");
  CHECK(m.studies.size() == 2);
  CHECK(m.studies[0].positive_voxels == 16);
  CHECK(r.out.find("1.2.3.1") != std::string::npos);

  entries.push_back({{"StudyInstanceUID", "1.2.3.0"},
                     {"SOPInstanceUID", "9.9.9.404"},
                     {"data", {{"vertices", {{1, 1}, {1, 4}, {4, 4}}}}}});
  std::ofstream(root / "raw/annotations.json") << json{{"datasets", {{{"annotations", entries}}}}}.dump();
  const Result bad = run({"--config", cfg, "convert", "--kind", "dicom_json"});
  CHECK(bad.code == cli::kData);
  CHECK(bad.err.find("9.9.9.404") != std::string::npos);
}

TEST_CASE("pipeline: convert, split, train, evaluate, predict, report") {
  TempDir root("cli_pipeline");
  const std::string cfg = write_config(root);
  write_phantom_pairs(root, 3);

  Result r = run({"--config", cfg, "convert"});
  REQUIRE_MESSAGE(r.code == cli::kSuccess, r.err);
  const ingest::Manifest m = ingest::read_manifest(root / "nifti/manifest.json");
  REQUIRE(m.studies.size() == 3);
  // pass-through: voxels as imported, apart from clipping that is a no-op here
  CHECK(ingest::read_nifti_ct(m.studies[0].ct_path).voxels ==
        ingest::read_nifti_ct(root / "raw/images/case_0.nii.gz").voxels);

  r = run({"--config", cfg, "split"});
  REQUIRE(r.code == cli::kSuccess);
  const std::string split1 = slurp(root / "split.json");
  CHECK(json::parse(split1)["tune"].size() == 1);
  run({"--config", cfg, "split"});
  CHECK(slurp(root / "split.json") == split1);

  r = run({"--config", cfg, "train"});
  REQUIRE_MESSAGE(r.code == cli::kSuccess, r.err);
  CHECK(fs::exists(root / "ckpt/session1_best.ckpt"));
  CHECK(r.out.find("final checkpoint") != std::string::npos);

  r = run({"--config", cfg, "--set", "predict_stage={depth: 8, height: 32, width: 32}", "evaluate", "--subset", "tune"});
  REQUIRE_MESSAGE(r.code == cli::kSuccess, r.err);
  CHECK(r.out.find("Synthetic") != std::string::npos);

  r = run({"--config", cfg, "evaluate", "--oracle", "perfect", "--name", "Perfect"});
  REQUIRE(r.code == cli::kSuccess);
  const json perfect = json::parse(slurp(root / "reports/Perfect_report.json"));
  CHECK(perfect["dice"]["mean"] == 1.0);
  CHECK(perfect["nsd"]["mean"] == 1.0);
  const std::string csv = slurp(root / "reports/Perfect_scores.csv");
  run({"--config", cfg, "evaluate", "--oracle", "perfect", "--name", "Perfect"});
  CHECK(slurp(root / "reports/Perfect_scores.csv") == csv);

  r = run({"--config", cfg, "evaluate", "--oracle", "empty", "--name", "Empty"});
  REQUIRE(r.code == cli::kSuccess);
  CHECK(json::parse(slurp(root / "reports/Empty_report.json"))["dice"]["mean"] == 0.0);

  r = run({"--config", cfg, "report", root / "reports/Perfect_report.json", root / "reports/Empty_report.json", "--out",
           root / "reports/tables.txt"});
  REQUIRE(r.code == cli::kSuccess);
  CHECK(r.out.find("Perfect") != std::string::npos);
  CHECK(r.out.find("NSD tolerance: 3 mm") != std::string::npos);
  CHECK(slurp(root / "reports/tables.txt") == r.out);

  const std::string input = m.studies[1].ct_path;
  r = run({"--config", cfg, "--set", "predict_stage={depth: 8, height: 32, width: 32}", "predict", "--input", input,
           "--output", root / "pred/case.nii.gz", "--overlay", "3", "--gt", m.studies[1].seg_path});
  REQUIRE_MESSAGE(r.code == cli::kSuccess, r.err);
  const ingest::NiftiImage in = ingest::read_nifti(input);
  const ingest::NiftiImage out = ingest::read_nifti(root / "pred/case.nii.gz");
  CHECK(out.voxels.dims() == in.voxels.dims());
  for (int a = 0; a < 4; ++a) {
    for (int b = 0; b < 4; ++b) CHECK(std::abs(out.affine[a][b] - in.affine[a][b]) <= 1e-6);
  }
  int pngs = 0;
  for (const auto& e : fs::directory_iterator(root / "pred")) pngs += e.path().extension() == ".png";
  CHECK(pngs == 3);
  CHECK(run({"--config", cfg, "predict", "--input", input, "--output", root / "p2.nii.gz", "--overlay", "99"}).code ==
        cli::kUsage);
}
