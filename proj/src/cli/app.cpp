#include "covseg/cli/app.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>

#include "covseg/cli/config.hpp"
#include "covseg/datapipe/split.hpp"
#include "covseg/ingest/manifest.hpp"
#include "covseg/ingest/nifti.hpp"
#include "covseg/metrics/overlay.hpp"
#include "covseg/metrics/report.hpp"
#include "covseg/train/engine.hpp"
#include "covseg/unet3d/checkpoint.hpp"
#include "covseg/unet3d/predict.hpp"

namespace covseg::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Globals {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  bool dry_run = false;
};

struct Io {
  std::ostream& out;
  std::ostream& err;
};

std::string fmt(const char* f, auto... args) {
  char buf[1024];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

RunConfig load(const Globals& g, const Io& io) {
  RunConfig c = resolve_config(g.config_path, g.overrides);
  if (g.seed) c.seed = *g.seed;
  io.err << "config " << config_to_json(c).dump() << "\n";
  return c;
}

std::string spacing_text(const Spacing3& s) { return fmt("%.4g x %.4g x %.4g", s.depth, s.height, s.width); }

// ---- convert

int cmd_convert(const Globals& g, const std::string& kind_override, const Io& io) {
  RunConfig c = load(g, io);
  if (!kind_override.empty()) c.dataset.kind = kind_override;
  const ingest::DatasetKind kind = ingest::parse_dataset_kind(c.dataset.kind);
  ingest::ConvertOptions opt;
  opt.dataset_name = c.dataset.name;
  opt.schema = c.annotation_schema;
  opt.merge = ingest::parse_merge(c.dataset.annotator_merge);
  opt.clip = c.dataset.clip;
  opt.clip_lo = c.dataset.clip_low;
  opt.clip_hi = c.dataset.clip_high;
  opt.binarize_masks = c.dataset.binarize_masks;
  opt.log = [&](const std::string& m) { io.err << m << "\n"; };
  std::vector<ingest::StudyFailure> failures;
  opt.failures = &failures;

  if (g.dry_run) {
    if (kind == ingest::DatasetKind::dicom_json) {
      io.out << "convert DICOM series under " << c.paths.dicom_root << " with annotations " << c.paths.annotations;
    } else {
      io.out << "convert NIfTI volumes in " << c.paths.images << " with masks in " << c.paths.masks;
    }
    io.out << "\n  into " << c.paths.nifti << ", manifest " << c.paths.manifest << "\n";
    return kSuccess;
  }
  const ingest::Manifest m = kind == ingest::DatasetKind::dicom_json
                                 ? ingest::convert_dicom_dataset(c.paths.dicom_root, c.paths.annotations, c.paths.nifti, opt)
                                 : ingest::convert_nifti_dataset(c.paths.images, c.paths.masks, c.paths.nifti, opt);
  ingest::write_manifest(m, c.paths.manifest);
  io.out << fmt("%-40s %-16s %-24s %s\n", "study", "shape", "spacing (mm)", "positive voxels");
  for (const auto& e : m.studies) {
    io.out << fmt("%-40s %-16s %-24s %zu\n", e.study_id.c_str(), to_string(e.shape).c_str(),
                  spacing_text(e.spacing).c_str(), e.positive_voxels);
  }
  io.out << m.studies.size() << " studies written to " << c.paths.manifest << "\n";
  if (!failures.empty()) {
    io.err << fmt("%-40s %s\n", "failed study", "error");
    for (const auto& f : failures) io.err << fmt("%-40s %s\n", f.study.c_str(), f.message.c_str());
    io.err << failures.size() << " studies failed\n";
    return kData;
  }
  return kSuccess;
}

// ---- split

int cmd_split(const Globals& g, const Io& io) {
  const RunConfig c = load(g, io);
  const ingest::Manifest m = ingest::read_manifest(c.paths.manifest);
  const datapipe::DatasetSplit s = datapipe::split_dataset(m.study_ids(), c.seed, c.tune_percent);
  io.out << "train " << s.train_ids.size() << ", tune " << s.tune_ids.size() << " (seed " << c.seed << ")\n";
  if (g.dry_run) return kSuccess;
  if (fs::path(c.paths.split).has_parent_path()) fs::create_directories(fs::path(c.paths.split).parent_path());
  std::ofstream f(c.paths.split);
  if (!f) throw InputError("cannot write split " + c.paths.split);
  f << json(s).dump(2) << "\n";
  io.out << "split written to " << c.paths.split << "\n";
  return kSuccess;
}

datapipe::DatasetSplit read_split(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open split " + path + " (run `covseg split` first)");
  try {
    return json::parse(in).get<datapipe::DatasetSplit>();
  } catch (const json::exception& e) {
    throw DataError(path + ": " + e.what());
  }
}

// ---- train

void print_plan(const RunConfig& c, std::ostream& out) {
  for (std::size_t i = 0; i < c.plan.sessions.size(); ++i) {
    const auto& s = c.plan.sessions[i];
    out << fmt("session %zu: stage %dx%dx%d batch %d; %d frozen epochs at lr %g, %d epochs at lr %g; weight decay %g\n",
               i + 1, s.stage.depth, s.stage.height, s.stage.width, s.stage.batch_size, s.frozen_epochs, s.frozen_lr,
               s.main_epochs, s.base_lr, s.weight_decay);
  }
  out << fmt("one-cycle: warm-up %g of each phase, start lr/%g, final lr/%g\n", c.schedule.warmup_fraction,
             c.schedule.start_div, c.schedule.final_div);
  out << "seed " << c.seed << ", pretrained encoder "
      << (c.model.pretrained_weights_path.empty() ? "none" : c.model.pretrained_weights_path) << "\n";
}

int cmd_train(const Globals& g, bool resume, int stop_after, const Io& io) {
  const RunConfig c = load(g, io);
  print_plan(c, io.out);
  if (g.dry_run) return kSuccess;
  const ingest::Manifest m = ingest::read_manifest(c.paths.manifest);
  const datapipe::DatasetSplit split = read_split(c.paths.split);
  const train::ManifestSource train_src(m, split.train_ids), tune_src(m, split.tune_ids);

  unet3d::UNet3dConfig mc = c.model;
  if (mc.init_seed == 0) mc.init_seed = c.seed;
  unet3d::PretrainedReport pre;
  const auto model = unet3d::build_model(mc, &pre);
  if (!mc.pretrained_weights_path.empty()) {
    io.err << "pretrained encoder: " << pre.matched << " arrays loaded, " << pre.ignored.size() << " ignored\n";
  }

  train::TrainOptions opt;
  opt.seed = c.seed;
  opt.augmentation = c.augmentation;
  opt.loss = c.loss;
  opt.adam = c.optimizer;
  opt.schedule = c.schedule;
  opt.checkpoint_dir = c.paths.checkpoints;
  opt.log_path = c.paths.log;
  opt.resume = resume;
  opt.stop_after_epoch = stop_after;
  opt.progress = [&](const std::string& s) { io.err << s << "\n"; };
  if (!opt.log_path.empty()) {
    if (fs::path(opt.log_path).has_parent_path()) fs::create_directories(fs::path(opt.log_path).parent_path());
    std::ofstream(opt.log_path, std::ios::app) << json{{"type", "config"}, {"config", config_to_json(c)}}.dump() << "\n";
  }
  const auto records = train::run_plan(*model, {&train_src, &tune_src}, c.plan, opt);
  for (const auto& r : records) {
    io.out << fmt("session %d: best tuning dice %.4f at epoch %d -> %s\n", r.session_index + 1, r.tuning_dice, r.epoch,
                  r.path.c_str());
  }
  if (!records.empty()) io.out << "final checkpoint " << records.back().path << "\n";
  return kSuccess;
}

// ---- evaluate

std::string default_checkpoint(const RunConfig& c) {
  return train::best_checkpoint_path(c.paths.checkpoints, static_cast<int>(c.plan.sessions.size()) - 1);
}

std::vector<std::string> subset_ids(const RunConfig& c, const ingest::Manifest& m, const std::string& subset) {
  if (subset == "all") return m.study_ids();
  const datapipe::DatasetSplit s = read_split(c.paths.split);
  if (subset == "tune") return s.tune_ids;
  if (subset == "train") return s.train_ids;
  throw UsageError("unknown subset '" + subset + "' (all, tune, train)");
}

int cmd_evaluate(const Globals& g, std::string checkpoint, const std::string& subset, const std::string& oracle,
                 std::string name, const Io& io) {
  const RunConfig c = load(g, io);
  if (!oracle.empty() && oracle != "perfect" && oracle != "empty") {
    throw UsageError("unknown oracle '" + oracle + "' (perfect, empty)");
  }
  if (name.empty()) name = c.dataset.name;
  if (checkpoint.empty() && oracle.empty()) checkpoint = default_checkpoint(c);
  const ingest::Manifest m = ingest::read_manifest(c.paths.manifest);
  const std::vector<std::string> ids = subset_ids(c, m, subset);
  if (ids.empty()) throw UsageError("no studies to evaluate");
  io.out << "evaluate " << ids.size() << " studies of " << name << " with "
         << (oracle.empty() ? checkpoint : "the " + oracle + " oracle") << fmt(", NSD tolerance %g mm\n", c.nsd_tolerance_mm);
  if (g.dry_run) return kSuccess;

  std::unique_ptr<unet3d::UNet3d> model;
  if (oracle.empty()) model = unet3d::load_model(checkpoint);
  const datapipe::StageSpec stage = c.inference_stage();
  std::vector<metrics::PatientScore> rows;
  for (const auto& id : ids) {
    const ingest::ManifestEntry& e = m.find(id);
    const CtVolume ct = ingest::read_nifti_ct(e.ct_path);
    const LabelMask gt = ingest::read_nifti_mask(e.seg_path);
    LabelMask pred;
    if (oracle == "perfect") {
      pred = gt;
    } else if (oracle == "empty") {
      pred.voxels = Volume3<std::uint8_t>(gt.dims(), 0);
      pred.spacing = gt.spacing;
    } else {
      pred = unet3d::predict_mask(*model, ct, stage);
    }
    rows.push_back(metrics::score_patient(id, pred.voxels, gt.voxels, ct.spacing, c.nsd_tolerance_mm));
    io.err << fmt("%s: dice %.4f nsd %.4f\n", id.c_str(), rows.back().dice, rows.back().nsd);
  }
  const metrics::MetricsReport report = metrics::macro_average(rows, name, c.nsd_tolerance_mm);
  fs::create_directories(c.paths.reports);
  const std::string csv = (fs::path(c.paths.reports) / (name + "_scores.csv")).string();
  const std::string js = (fs::path(c.paths.reports) / (name + "_report.json")).string();
  metrics::write_scores_csv(report.rows, csv);
  metrics::write_report_json(report, js);
  io.out << metrics::format_dice_table({report}) << "\n" << metrics::format_nsd_table({report});
  io.out << "scores " << csv << "\nsummary " << js << "\n";
  return kSuccess;
}

// ---- predict

int cmd_predict(const Globals& g, const std::string& checkpoint_in, const std::string& input, const std::string& output,
                int overlays, const std::string& gt_path, const Io& io) {
  const RunConfig c = load(g, io);
  const std::string checkpoint = checkpoint_in.empty() ? default_checkpoint(c) : checkpoint_in;
  if (overlays < 0) throw UsageError("--overlay must be non-negative");
  io.out << "predict " << input << " -> " << output << " with " << checkpoint << "\n";
  if (g.dry_run) return kSuccess;
  const CtVolume ct = ingest::read_nifti_ct(input);
  for (float v : ct.voxels.values()) {
    if (!(v >= c.dataset.clip_low && v <= c.dataset.clip_high)) {
      throw DataError(input + ": intensities outside the clip window; convert the volume first");
    }
  }
  const auto model = unet3d::load_model(checkpoint);
  const LabelMask pred = unet3d::predict_mask(*model, ct, c.inference_stage());
  if (fs::path(output).has_parent_path()) fs::create_directories(fs::path(output).parent_path());
  ingest::write_nifti_mask(pred, ct.affine, output);
  io.out << "mask " << to_string(pred.dims()) << ", " << pred.count_positive() << " positive voxels\n";

  if (overlays > 0) {
    const int depth = ct.dims().depth;
    if (overlays > depth) throw UsageError(fmt("--overlay %d exceeds the %d slices", overlays, depth));
    Volume3<std::uint8_t> gt(ct.dims(), 0);
    if (!gt_path.empty()) {
      const LabelMask g_mask = ingest::read_nifti_mask(gt_path);
      if (!(g_mask.dims() == ct.dims())) throw DataError("ground-truth mask does not match the volume");
      gt = g_mask.voxels;
    }
    std::string stem = fs::path(output).filename().string();
    for (const char* ext : {".nii.gz", ".nii"}) {
      const std::string e = ext;
      if (stem.size() > e.size() && stem.compare(stem.size() - e.size(), e.size(), e) == 0) {
        stem.resize(stem.size() - e.size());
        break;
      }
    }
    for (int k = 0; k < overlays; ++k) {
      const int slice = static_cast<int>((static_cast<long>(2 * k + 1) * depth) / (2L * overlays));
      const std::string png = (fs::path(output).parent_path() / fmt("%s_overlay_%03d.png", stem.c_str(), slice)).string();
      metrics::render_overlay(ct, gt, pred.voxels, slice, png);
      io.out << "overlay " << png << "\n";
    }
  }
  return kSuccess;
}

// ---- report

int cmd_report(const Globals& g, const std::vector<std::string>& inputs, const std::string& out_path, const Io& io) {
  if (inputs.empty()) throw UsageError("report needs at least one report JSON");
  std::vector<metrics::MetricsReport> reports;
  for (const auto& p : inputs) reports.push_back(metrics::read_report_json(p));
  const std::string text = metrics::format_dice_table(reports) + "\n" + metrics::format_nsd_table(reports);
  io.out << text;
  if (!out_path.empty() && !g.dry_run) {
    std::ofstream f(out_path);
    if (!f) throw InputError("cannot write " + out_path);
    f << text;
  }
  return kSuccess;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  const Io io{out, err};
  CLI::App app{"COVID-19 infiltrate segmentation in chest CT"};
  app.name("covseg");
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  std::uint64_t seed = 0;
  app.add_option("--config", g.config_path, "YAML run configuration");
  auto* seed_opt = app.add_option("--seed", seed, "master seed (overrides the config)");
  app.add_flag("--dry-run", g.dry_run, "print what would be done and exit");
  app.add_option("--set", g.overrides, "override a config value, e.g. --set plan.sessions.0.main_epochs=5");

  std::string kind;
  auto* convert = app.add_subcommand("convert", "convert raw data to NIfTI pairs and a manifest");
  convert->add_option("--kind", kind, "dicom_json | nifti_pairs (default: dataset.kind)");

  app.add_subcommand("split", "write the seeded train/tune split");

  bool resume = false;
  int stop_after = -1;
  auto* train = app.add_subcommand("train", "run the training plan");
  train->add_flag("--resume", resume, "continue an interrupted session");
  train->add_option("--stop-after-epoch", stop_after, "stop each session after this epoch");

  std::string checkpoint, subset = "all", oracle, name;
  auto* evaluate = app.add_subcommand("evaluate", "score a checkpoint on a converted dataset");
  evaluate->add_option("--checkpoint", checkpoint, "model checkpoint (default: last session's best)");
  evaluate->add_option("--subset", subset, "all | tune | train")->capture_default_str();
  evaluate->add_option("--oracle", oracle, "perfect | empty: score a fixed prediction instead of a model");
  evaluate->add_option("--name", name, "dataset name in the report (default: dataset.name)");

  std::string input, output, gt;
  int overlays = 0;
  auto* predict = app.add_subcommand("predict", "segment one NIfTI volume");
  predict->add_option("--checkpoint", checkpoint, "model checkpoint (default: last session's best)");
  predict->add_option("--input", input, "CT volume (.nii or .nii.gz)")->required();
  predict->add_option("--output", output, "mask output path")->required();
  predict->add_option("--overlay", overlays, "write this many evenly spaced overlay PNGs");
  predict->add_option("--gt", gt, "ground-truth mask drawn in red on the overlays");

  std::vector<std::string> reports;
  std::string report_out;
  auto* report = app.add_subcommand("report", "print Dice and NSD tables for evaluated datasets");
  report->add_option("reports", reports, "report JSON files from `evaluate`")->required();
  report->add_option("--out", report_out, "also write the tables to this file");

  std::vector<std::string> argv(args.rbegin(), args.rend());
  try {
    app.parse(argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kSuccess;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kSuccess;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n" << "run with --help for usage\n";
    return kUsage;
  }
  if (seed_opt->count() > 0) g.seed = seed;

  try {
    if (convert->parsed()) return cmd_convert(g, kind, io);
    if (app.got_subcommand("split")) return cmd_split(g, io);
    if (train->parsed()) return cmd_train(g, resume, stop_after, io);
    if (evaluate->parsed()) return cmd_evaluate(g, checkpoint, subset, oracle, name, io);
    if (predict->parsed()) return cmd_predict(g, checkpoint, input, output, overlays, gt, io);
    if (report->parsed()) return cmd_report(g, reports, report_out, io);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const InputError& e) {
    err << "input error: " << e.what() << "\n";
    return kData;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kData;
  } catch (const ShapeError& e) {
    err << "data error: " << e.what() << "\n";
    return kData;
  } catch (const TrainingError& e) {
    err << "training error: " << e.what() << "\n";
    return kRuntime;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kRuntime;
  }
  return kUsage;
}

}  // namespace covseg::cli
