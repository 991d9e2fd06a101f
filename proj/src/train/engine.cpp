#include "covseg/train/engine.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "covseg/datapipe/batch.hpp"
#include "covseg/metrics/metrics.hpp"
#include "covseg/unet3d/checkpoint.hpp"
#include "covseg/unet3d/predict.hpp"

namespace covseg::train {

namespace fs = std::filesystem;
using nlohmann::json;

void SessionSpec::validate() const {
  stage.validate();
  if (frozen_epochs < 0 || main_epochs < 0) throw UsageError("epoch counts must be non-negative");
  if (frozen_epochs + main_epochs == 0) throw UsageError("a session needs at least one epoch");
  if (frozen_epochs > 0 && !(frozen_lr > 0.0 && std::isfinite(frozen_lr))) throw UsageError("frozen_lr must be positive");
  if (main_epochs > 0 && !(base_lr > 0.0 && std::isfinite(base_lr))) throw UsageError("base_lr must be positive");
  if (!(weight_decay >= 0.0 && std::isfinite(weight_decay))) throw UsageError("weight_decay must be non-negative");
}

TrainingPlan TrainingPlan::canonical() {
  TrainingPlan p;
  p.sessions.push_back(SessionSpec{datapipe::kStage1, 10, 0.01, 200, 1e-3, 1e-5});
  p.sessions.push_back(SessionSpec{datapipe::kStage2, 0, 0.01, 200, 1e-4, 1e-5});
  return p;
}

void TrainingPlan::validate() const {
  if (sessions.empty()) throw UsageError("training plan has no sessions");
  for (const auto& s : sessions) s.validate();
}

void to_json(nlohmann::json& j, const SessionSpec& s) {
  j = {{"stage", s.stage},         {"frozen_epochs", s.frozen_epochs}, {"frozen_lr", s.frozen_lr},
       {"main_epochs", s.main_epochs}, {"base_lr", s.base_lr},         {"weight_decay", s.weight_decay}};
}

void from_json(const nlohmann::json& j, SessionSpec& s) {
  const SessionSpec d;
  s.stage = j.value("stage", d.stage);
  s.frozen_epochs = j.value("frozen_epochs", d.frozen_epochs);
  s.frozen_lr = j.value("frozen_lr", d.frozen_lr);
  s.main_epochs = j.value("main_epochs", d.main_epochs);
  s.base_lr = j.value("base_lr", d.base_lr);
  s.weight_decay = j.value("weight_decay", d.weight_decay);
}

void to_json(nlohmann::json& j, const TrainingPlan& p) { j = {{"sessions", p.sessions}}; }

void from_json(const nlohmann::json& j, TrainingPlan& p) { p.sessions = j.at("sessions").get<std::vector<SessionSpec>>(); }

std::string best_checkpoint_path(const std::string& dir, int session_index) {
  return (fs::path(dir) / ("session" + std::to_string(session_index + 1) + "_best.ckpt")).string();
}

std::string last_checkpoint_path(const std::string& dir, int session_index) {
  return (fs::path(dir) / ("session" + std::to_string(session_index + 1) + "_last.ckpt")).string();
}

DiceEvaluation evaluate_samples(unet3d::UNet3d& model, const std::vector<datapipe::ModelSample>& samples,
                                const losses::LossWeights& weights) {
  DiceEvaluation out;
  if (samples.empty()) return out;
  for (const auto& s : samples) {
    nn::Tensor x = s.image;
    const Dims3 d = s.mask.dims();
    x.reshape({1, 3, d.depth, d.height, d.width});
    const nn::Tensor scores = model.forward(x, false);
    out.mean_loss += losses::combined_loss(scores, s.mask.values(), weights).total;
    Volume3<std::uint8_t> pred = unet3d::argmax_labels(scores);
    for (auto& v : pred.values()) v = v > 0;
    const double dice = metrics::volumetric_dice(pred, s.mask);
    out.dice.push_back(dice);
    out.mean_dice += dice;
  }
  out.mean_dice /= static_cast<double>(samples.size());
  out.mean_loss /= static_cast<double>(samples.size());
  return out;
}

namespace {

class Log {
 public:
  explicit Log(const std::string& path) : path_(path) {
    if (!path_.empty() && fs::path(path_).has_parent_path()) fs::create_directories(fs::path(path_).parent_path());
  }
  void write(const json& record) const {
    if (path_.empty()) return;
    std::ofstream out(path_, std::ios::app);
    if (!out) throw InputError("cannot append to training log " + path_);
    out << record.dump() << "\n";
  }

 private:
  std::string path_;
};

std::string format(const char* fmt, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, fmt, args...);
  return buf;
}

}  // namespace

CheckpointRecord run_session(unet3d::UNet3d& model, const TrainData& data, const SessionSpec& spec,
                             const TrainOptions& options, int session_index) {
  spec.validate();
  options.augmentation.validate();
  options.schedule.validate();
  if (!data.train || data.train->size() == 0) throw UsageError("training set is empty");
  if (!options.tune_evaluator && (!data.tune || data.tune->size() == 0)) throw UsageError("tuning set is empty");
  fs::create_directories(options.checkpoint_dir);
  const Log log(options.log_path);
  auto say = [&](const std::string& m) {
    if (options.progress) options.progress(m);
  };

  const std::string best_path = best_checkpoint_path(options.checkpoint_dir, session_index);
  const std::string last_path = last_checkpoint_path(options.checkpoint_dir, session_index);
  nn::AdamW optimizer(model.parameters(), options.adam);
  CheckpointRecord best{session_index, 0, -1.0, ""};
  int start = 1;
  const int total = spec.total_epochs();
  if (options.resume && fs::exists(last_path)) {
    const unet3d::CheckpointMeta meta = unet3d::load_checkpoint(last_path, model, &optimizer);
    start = meta.epoch + 1;
    best.epoch = meta.extra.value("best_epoch", 0);
    best.tuning_dice = meta.extra.value("best_tune_dice", -1.0);
    if (best.epoch > 0) best.path = best_path;
    say(format("session %d: resuming after epoch %d (best %.4f at epoch %d)", session_index + 1, meta.epoch,
               best.tuning_dice, best.epoch));
  }

  say(format("session %d: preparing %zu training studies at %dx%dx%d", session_index + 1, data.train->size(),
             spec.stage.depth, spec.stage.height, spec.stage.width));
  const auto train = prepare_all(*data.train, spec.stage);
  std::vector<datapipe::ModelSample> tune;
  if (!options.tune_evaluator) tune = prepare_all(*data.tune, spec.stage);

  const std::size_t n = train.size();
  const long per_epoch = static_cast<long>((n + spec.stage.batch_size - 1) / spec.stage.batch_size);
  const std::uint64_t stream = options.seed ^ (0x9E3779B97F4A7C15ull * static_cast<std::uint64_t>(session_index + 1));

  for (int epoch = start; epoch <= total; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const bool frozen = epoch <= spec.frozen_epochs;
    model.set_encoder_frozen(frozen);
    const double base = frozen ? spec.frozen_lr : spec.base_lr;
    const long phase_steps = per_epoch * (frozen ? spec.frozen_epochs : spec.main_epochs);
    const long phase_epoch = frozen ? epoch - 1 : epoch - 1 - spec.frozen_epochs;

    EpochRecord rec;
    rec.session_index = session_index;
    rec.epoch = epoch;
    rec.frozen = frozen;
    const auto groups = datapipe::epoch_batches(n, spec.stage.batch_size, stream, epoch, true);
    for (std::size_t b = 0; b < groups.size(); ++b) {
      const long step = phase_epoch * per_epoch + static_cast<long>(b);
      const double lr = one_cycle_lr(step, phase_steps, base, options.schedule);
      if (b == 0) rec.lr_first = lr;
      rec.lr_last = lr;

      std::vector<datapipe::ModelSample> items;
      for (std::size_t i : groups[b]) {
        std::mt19937_64 rng(datapipe::sample_seed(stream, epoch, i));
        items.push_back(datapipe::augment(train[i], options.augmentation, rng));
      }
      const datapipe::Batch batch = datapipe::make_batch(items);

      auto abort = [&](const std::string& why) {
        std::string ids;
        for (const auto& id : batch.study_ids) ids += (ids.empty() ? "" : ",") + id;
        log.write({{"type", "abort"}, {"session", session_index + 1}, {"epoch", epoch}, {"batch", b},
                   {"lr", lr}, {"studies", batch.study_ids}, {"reason", why}});
        model.release_caches();
        throw TrainingError(format("session %d epoch %d batch %zu (lr %.6g, studies %s): %s", session_index + 1,
                                   epoch, b, lr, ids.c_str(), why.c_str()));
      };

      nn::Tensor scores = model.forward(batch.images, true);
      nn::Tensor grad;
      losses::LossBreakdown loss;
      try {
        loss = losses::combined_loss(scores, batch.labels, options.loss, &grad);
      } catch (const TrainingError& e) {
        abort(e.what());
      }
      if (!std::isfinite(loss.total)) abort("non-finite loss");
      model.zero_grad();
      model.backward(grad);
      for (nn::Parameter* p : model.parameters()) {
        if (!p->trainable) continue;
        for (float g : p->grad.values()) {
          if (!std::isfinite(g)) abort("non-finite gradient in " + p->name);
        }
      }
      optimizer.step(static_cast<float>(lr), static_cast<float>(spec.weight_decay));
      model.release_caches();
      rec.train_loss += loss.total;
      if (options.log_steps) {
        log.write({{"type", "step"}, {"session", session_index + 1}, {"epoch", epoch}, {"batch", b},
                   {"phase", frozen ? "frozen" : "main"}, {"step", step}, {"phase_steps", phase_steps},
                   {"lr", lr}, {"loss", loss.total}});
      }
    }
    rec.train_loss /= static_cast<double>(groups.size());

    if (options.tune_evaluator) {
      const TuneResult r = options.tune_evaluator(model, epoch);
      rec.tune_dice = r.dice;
      rec.tune_loss = r.loss;
    } else {
      const DiceEvaluation ev = evaluate_samples(model, tune, options.loss);
      rec.tune_dice = ev.mean_dice;
      rec.tune_loss = ev.mean_loss;
    }
    if (!std::isfinite(rec.tune_dice)) throw TrainingError(format("non-finite tuning Dice at epoch %d", epoch));

    rec.improved = rec.tune_dice > best.tuning_dice;
    if (rec.improved) {
      best = {session_index, epoch, rec.tune_dice, best_path};
      unet3d::CheckpointMeta meta;
      meta.epoch = epoch;
      meta.best_tune_dice = rec.tune_dice;
      meta.extra = {{"session", session_index + 1}};
      unet3d::save_checkpoint(best_path, model, meta);
    }
    unet3d::CheckpointMeta last;
    last.epoch = epoch;
    last.best_tune_dice = best.tuning_dice;
    last.extra = {{"session", session_index + 1}, {"best_epoch", best.epoch}, {"best_tune_dice", best.tuning_dice}};
    unet3d::save_checkpoint(last_path, model, last, &optimizer);

    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    json line = {{"type", "epoch"},          {"session", session_index + 1}, {"epoch", epoch},
                 {"phase", frozen ? "frozen" : "main"}, {"train_loss", rec.train_loss},
                 {"tune_loss", nullptr},     {"tune_dice", rec.tune_dice},   {"lr_first", rec.lr_first},
                 {"lr_last", rec.lr_last},   {"improved", rec.improved},     {"seconds", rec.seconds}};
    if (rec.tune_loss) line["tune_loss"] = *rec.tune_loss;
    log.write(line);
    say(format("session %d epoch %d/%d%s: train loss %.4f, tune dice %.4f, lr %.3g%s (%.1fs)", session_index + 1,
               epoch, total, frozen ? " [frozen]" : "", rec.train_loss, rec.tune_dice, rec.lr_last,
               rec.improved ? ", saved" : "", rec.seconds));
    if (options.on_epoch_end) options.on_epoch_end(rec, model);
    if (epoch == options.stop_after_epoch && epoch < total) {
      say(format("session %d: stopping after epoch %d", session_index + 1, epoch));
      return best;
    }
  }

  if (best.path.empty()) throw TrainingError("session finished without a checkpoint");
  unet3d::load_checkpoint(best.path, model);
  model.set_encoder_frozen(false);
  log.write({{"type", "session"}, {"session", session_index + 1}, {"best_epoch", best.epoch},
             {"best_tune_dice", best.tuning_dice}, {"checkpoint", best.path}});
  say(format("session %d: reloaded epoch %d (tune dice %.4f)", session_index + 1, best.epoch, best.tuning_dice));
  return best;
}

std::vector<CheckpointRecord> run_plan(unet3d::UNet3d& model, const TrainData& data, const TrainingPlan& plan,
                                       const TrainOptions& options) {
  plan.validate();
  std::vector<CheckpointRecord> records;
  for (std::size_t i = 0; i < plan.sessions.size(); ++i) {
    if (i > 0) unet3d::load_checkpoint(records.back().path, model);
    records.push_back(run_session(model, data, plan.sessions[i], options, static_cast<int>(i)));
    const int total = plan.sessions[i].total_epochs();
    if (options.stop_after_epoch >= 0 && records.back().epoch >= 0 && options.stop_after_epoch < total) break;
  }
  return records;
}

}  // namespace covseg::train
