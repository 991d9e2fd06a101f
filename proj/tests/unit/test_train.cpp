#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "covseg/core/error.hpp"
#include "covseg/train/engine.hpp"
#include "covseg/unet3d/checkpoint.hpp"
#include "covseg/unet3d/predict.hpp"
#include "doctest.h"

using namespace covseg;
using namespace covseg::train;
namespace fs = std::filesystem;

namespace {

unet3d::UNet3dConfig tiny_config() {
  unet3d::UNet3dConfig c;
  c.encoder_channels = {4, 4, 6, 6, 8};
  c.decoder_channels = {6, 6, 4, 4};
  c.head_channels = 3;
  c.init_seed = 5;
  return c;
}

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

MemorySource phantoms(int count, std::uint64_t seed) {
  std::vector<Study> s;
  for (int i = 0; i < count; ++i) s.push_back(sphere_phantom({10, 40, 40}, seed + i, "p" + std::to_string(i)));
  return MemorySource(std::move(s));
}

SessionSpec small_session(int frozen, int main) {
  SessionSpec s;
  s.stage = {8, 32, 32, 2};
  s.frozen_epochs = frozen;
  s.main_epochs = main;
  s.frozen_lr = 1e-2;
  s.base_lr = 1e-3;
  return s;
}

TrainOptions quiet_options(const TempDir& dir) {
  TrainOptions o;
  o.seed = 7;
  o.checkpoint_dir = dir / "ckpt";
  o.log_path = dir / "log.ndjson";
  return o;
}

std::vector<nlohmann::json> read_log(const std::string& path) {
  std::vector<nlohmann::json> out;
  std::ifstream in(path);
  std::string line;
  while (std::getline(in, line)) out.push_back(nlohmann::json::parse(line));
  return out;
}

std::vector<nn::Tensor> snapshot(const std::vector<nn::Parameter*>& ps) {
  std::vector<nn::Tensor> out;
  for (auto* p : ps) out.push_back(p->value);
  return out;
}

}  // namespace

TEST_CASE("one-cycle schedule shape") {
  const double base = 1e-3;
  CHECK(one_cycle_lr(0, 1000, base) == doctest::Approx(base / 25).epsilon(1e-12));
  CHECK(warmup_steps(1000) == 250);
  CHECK(one_cycle_lr(250, 1000, base) == doctest::Approx(base).epsilon(1e-12));
  CHECK(one_cycle_lr(999, 1000, base) == doctest::Approx(base / 1e4).epsilon(1e-9));
  double prev = 0.0;
  for (long s = 0; s < 1000; ++s) {
    const double lr = one_cycle_lr(s, 1000, base);
    if (s <= 250) {
      CHECK(lr >= prev);
    } else {
      CHECK(lr <= prev);
    }
    prev = lr;
  }
  CHECK(one_cycle_lr(3, 10, base) == doctest::Approx(base));  // floor(2.5 + 0.5)
  CHECK_THROWS_AS(one_cycle_lr(1000, 1000, base), UsageError);
  CHECK_THROWS_AS(one_cycle_lr(-1, 1000, base), UsageError);
  CHECK_THROWS_AS(one_cycle_lr(0, 1000, base, OneCycle{1.5, 25, 1e4}), UsageError);
  CHECK_THROWS_AS(one_cycle_lr(0, 1000, base, OneCycle{0.25, 0.0, 1e4}), UsageError);
  CHECK_THROWS_AS(one_cycle_lr(0, 1000, -1.0), UsageError);
}

TEST_CASE("canonical plan and spec validation") {
  const TrainingPlan p = TrainingPlan::canonical();
  REQUIRE(p.sessions.size() == 2);
  CHECK(p.sessions[0].stage == datapipe::kStage1);
  CHECK(p.sessions[0].frozen_epochs == 10);
  CHECK(p.sessions[0].frozen_lr == 0.01);
  CHECK(p.sessions[0].main_epochs == 200);
  CHECK(p.sessions[0].base_lr == 1e-3);
  CHECK(p.sessions[0].weight_decay == 1e-5);
  CHECK(p.sessions[1].stage == datapipe::kStage2);
  CHECK(p.sessions[1].frozen_epochs == 0);
  CHECK(p.sessions[1].base_lr == 1e-4);
  const TrainingPlan back = nlohmann::json(p).get<TrainingPlan>();
  CHECK(back.sessions == p.sessions);
  CHECK_THROWS_AS(small_session(0, 0).validate(), UsageError);
  SessionSpec bad = small_session(1, 1);
  bad.weight_decay = -1;
  CHECK_THROWS_AS(bad.validate(), UsageError);
}

TEST_CASE("a frozen-only session changes the decoder alone") {
  TempDir dir("frozen");
  unet3d::UNet3d model(tiny_config());
  const auto train = phantoms(2, 1), tune = phantoms(1, 50);
  const auto enc = snapshot(model.encoder_parameters());
  const auto dec = snapshot(model.decoder_parameters());
  TrainOptions o = quiet_options(dir);
  o.augmentation = datapipe::AugmentationConfig::disabled();
  run_session(model, {&train, &tune}, small_session(1, 0), o);
  const auto enc_after = snapshot(model.encoder_parameters());
  for (std::size_t i = 0; i < enc.size(); ++i) CHECK(enc[i] == enc_after[i]);
  const auto dec_after = snapshot(model.decoder_parameters());
  bool changed = false;
  for (std::size_t i = 0; i < dec.size(); ++i) changed = changed || !(dec[i] == dec_after[i]);
  CHECK(changed);
  CHECK_FALSE(model.encoder_frozen());
}

TEST_CASE("best checkpoint follows the tuning Dice and is reloaded") {
  TempDir dir("select");
  const auto train = phantoms(2, 3);
  auto run = [&](std::vector<double> dice, std::vector<std::uint64_t>& hashes) {
    unet3d::UNet3d model(tiny_config());
    TrainOptions o = quiet_options(dir);
    o.checkpoint_dir = dir / ("ckpt" + std::to_string(dice.size()) + std::to_string(int(dice[0] * 10)));
    o.tune_evaluator = [dice](unet3d::UNet3d&, int epoch) { return TuneResult{dice.at(epoch - 1), {}}; };
    o.on_epoch_end = [&](const EpochRecord&, unet3d::UNet3d& m) { hashes.push_back(unet3d::parameter_hash(m)); };
    const CheckpointRecord r = run_session(model, {&train, nullptr}, small_session(0, static_cast<int>(dice.size())), o);
    return std::make_pair(r, unet3d::parameter_hash(model));
  };
  std::vector<std::uint64_t> h;
  auto [rec, final_hash] = run({0.3, 0.5, 0.4}, h);
  CHECK(rec.epoch == 2);
  CHECK(rec.tuning_dice == 0.5);
  REQUIRE(h.size() == 3);
  CHECK(h[1] != h[2]);
  CHECK(final_hash == h[1]);
  unet3d::CheckpointMeta meta;
  auto reloaded = unet3d::load_model(rec.path, &meta);
  CHECK(meta.epoch == 2);
  CHECK(unet3d::parameter_hash(*reloaded) == h[1]);

  h.clear();
  CHECK(run({0.6, 0.4}, h).first.epoch == 1);
  h.clear();
  CHECK(run({0.2, 0.7, 0.7}, h).first.epoch == 2);

  std::vector<double> improved;
  for (const auto& line : read_log(dir / "log.ndjson")) {
    if (line["type"] == "epoch" && line["improved"].get<bool>()) improved.push_back(line["tune_dice"]);
  }
  CHECK(improved == std::vector<double>{0.3, 0.5, 0.6, 0.2, 0.7});
}

TEST_CASE("logged learning rates follow the schedule") {
  TempDir dir("lrtrace");
  unet3d::UNet3d model(tiny_config());
  const auto train = phantoms(3, 11), tune = phantoms(1, 60);
  TrainOptions o = quiet_options(dir);
  const SessionSpec spec = small_session(1, 2);
  run_session(model, {&train, &tune}, spec, o);
  int steps = 0, epochs = 0;
  for (const auto& line : read_log(o.log_path)) {
    if (line["type"] == "step") {
      const bool frozen = line["phase"] == "frozen";
      const double expect = one_cycle_lr(line["step"].get<long>(), line["phase_steps"].get<long>(),
                                         frozen ? spec.frozen_lr : spec.base_lr);
      CHECK(line["lr"].get<double>() == expect);
      CHECK(line["phase_steps"].get<long>() == (frozen ? 2 : 4));
      ++steps;
    } else if (line["type"] == "epoch") {
      CHECK(line["tune_dice"].get<double>() >= 0.0);
      CHECK(line["tune_loss"].is_number());
      ++epochs;
    }
  }
  CHECK(steps == 6);
  CHECK(epochs == 3);
}

TEST_CASE("an interrupted session resumes to the same result") {
  const auto train = phantoms(2, 21), tune = phantoms(1, 70);
  const SessionSpec spec = small_session(1, 2);

  TempDir a("full");
  unet3d::UNet3d full(tiny_config());
  const CheckpointRecord ra = run_session(full, {&train, &tune}, spec, quiet_options(a));

  TempDir b("resume");
  TrainOptions o = quiet_options(b);
  o.stop_after_epoch = 1;
  {
    unet3d::UNet3d first(tiny_config());
    run_session(first, {&train, &tune}, spec, o);
  }
  o.stop_after_epoch = -1;
  o.resume = true;
  unet3d::UNet3d second(tiny_config());
  const CheckpointRecord rb = run_session(second, {&train, &tune}, spec, o);
  CHECK(rb.epoch == ra.epoch);
  CHECK(rb.tuning_dice == ra.tuning_dice);
  CHECK(unet3d::parameter_hash(second) == unet3d::parameter_hash(full));
}

TEST_CASE("a non-finite loss aborts with a diagnostic") {
  TempDir dir("nan");
  unet3d::UNet3d model(tiny_config());
  for (nn::Parameter* p : model.decoder_parameters()) {
    if (p->name == "head.classifier.bias") p->value[0] = std::nanf("");
  }
  const auto train = phantoms(2, 31), tune = phantoms(1, 80);
  try {
    run_session(model, {&train, &tune}, small_session(0, 1), quiet_options(dir));
    FAIL("expected TrainingError");
  } catch (const TrainingError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("epoch 1") != std::string::npos);
    CHECK(msg.find("lr") != std::string::npos);
    CHECK(msg.find("batch 0") != std::string::npos);
  }
  const auto log = read_log(dir / "log.ndjson");
  REQUIRE_FALSE(log.empty());
  CHECK(log.back()["type"] == "abort");
}

TEST_CASE("a plan hands the best weights to the next session") {
  TempDir dir("plan");
  const auto train = phantoms(2, 41), tune = phantoms(1, 90);
  TrainingPlan plan;
  plan.sessions = {small_session(1, 1), small_session(0, 1)};
  plan.sessions[1].stage = {10, 40, 40, 1};
  plan.sessions[1].base_lr = 1e-5;
  TrainOptions o = quiet_options(dir);
  unet3d::UNet3d model(tiny_config());
  const auto records = run_plan(model, {&train, &tune}, plan, o);
  REQUIRE(records.size() == 2);
  CHECK(fs::exists(best_checkpoint_path(o.checkpoint_dir, 0)));
  CHECK(fs::exists(best_checkpoint_path(o.checkpoint_dir, 1)));
  CHECK(records[1].tuning_dice >= 0.0);

  // the second session starts from exactly the first session's best weights
  unet3d::UNet3d a(tiny_config()), b(tiny_config());
  unet3d::load_checkpoint(records[0].path, a);
  TrainOptions one = quiet_options(dir);
  one.checkpoint_dir = dir / "single";
  run_session(b, {&train, &tune}, plan.sessions[0], one);
  CHECK(unet3d::parameter_hash(a) == unet3d::parameter_hash(b));
}

TEST_CASE("prediction restores the native grid") {
  unet3d::UNet3d model(tiny_config());
  const Study s = sphere_phantom({12, 45, 37}, 3, "x");
  const LabelMask m = unet3d::predict_mask(model, s.ct, {8, 32, 32, 1});
  CHECK(m.dims() == s.ct.dims());
  for (auto v : m.voxels.values()) REQUIRE(v <= 1);

  for (nn::Parameter* p : model.decoder_parameters()) {
    if (p->name == "head.classifier.weight") p->value.fill(0.0f);
    if (p->name == "head.classifier.bias") {
      p->value[0] = 10.0f;
      p->value[1] = -10.0f;
    }
  }
  CHECK(unet3d::predict_mask(model, s.ct, {8, 32, 32, 1}).count_positive() == 0);

  nn::Tensor scores({1, 2, 1, 1, 3});
  scores[0] = 1, scores[1] = 0, scores[2] = 2;
  scores[3] = 0, scores[4] = 1, scores[5] = 2;
  CHECK(unet3d::argmax_labels(scores).values() == std::vector<std::uint8_t>{0, 1, 0});
}
