#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "covseg/datapipe/augment.hpp"
#include "covseg/datapipe/sample.hpp"
#include "covseg/losses/losses.hpp"
#include "covseg/nn/adamw.hpp"
#include "covseg/train/schedule.hpp"
#include "covseg/train/source.hpp"
#include "covseg/unet3d/model.hpp"
#include "json.hpp"

namespace covseg::train {

struct SessionSpec {
  datapipe::StageSpec stage = datapipe::kStage1;
  int frozen_epochs = 10;
  double frozen_lr = 0.01;
  int main_epochs = 200;
  double base_lr = 1e-3;
  double weight_decay = 1e-5;

  int total_epochs() const noexcept { return frozen_epochs + main_epochs; }
  void validate() const;
  friend bool operator==(const SessionSpec&, const SessionSpec&) = default;
};

struct TrainingPlan {
  std::vector<SessionSpec> sessions;

  // 10 frozen + 200 epochs at (18, 112, 112), then 200 at (20, 256, 256).
  static TrainingPlan canonical();
  void validate() const;
};

void to_json(nlohmann::json& j, const SessionSpec& s);
void from_json(const nlohmann::json& j, SessionSpec& s);
void to_json(nlohmann::json& j, const TrainingPlan& p);
void from_json(const nlohmann::json& j, TrainingPlan& p);

struct CheckpointRecord {
  int session_index = 0;
  int epoch = 0;  // 1-based within the session
  double tuning_dice = -1.0;
  std::string path;
};

struct EpochRecord {
  int session_index = 0;
  int epoch = 0;
  bool frozen = false;
  double train_loss = 0.0;
  std::optional<double> tune_loss;
  double tune_dice = 0.0;
  double lr_first = 0.0;
  double lr_last = 0.0;
  bool improved = false;
  double seconds = 0.0;
};

struct TrainData {
  const SampleSource* train = nullptr;
  const SampleSource* tune = nullptr;
};

struct TuneResult {
  double dice = 0.0;
  std::optional<double> loss;
};

struct TrainOptions {
  std::uint64_t seed = 0;
  datapipe::AugmentationConfig augmentation;
  losses::LossWeights loss;
  nn::AdamWConfig adam;
  OneCycle schedule;
  std::string checkpoint_dir = "checkpoints";
  std::string log_path;  // newline-delimited JSON, appended; empty disables
  bool log_steps = true;
  // Continue an interrupted session from its "last" checkpoint.
  bool resume = false;
  // Stop the session after this epoch, leaving the "last" checkpoint for a
  // later resume. Negative runs to completion.
  int stop_after_epoch = -1;
  // Replaces the tuning evaluation (scripted runs).
  std::function<TuneResult(unet3d::UNet3d&, int epoch)> tune_evaluator;
  std::function<void(const EpochRecord&, unet3d::UNet3d&)> on_epoch_end;
  std::function<void(const std::string&)> progress;
};

std::string best_checkpoint_path(const std::string& dir, int session_index);
std::string last_checkpoint_path(const std::string& dir, int session_index);

struct DiceEvaluation {
  std::vector<double> dice;  // per sample
  double mean_dice = 0.0;
  double mean_loss = 0.0;
};

// Evaluation-mode forward on each sample; volumetric Dice of the argmax
// against the sample mask and the combined loss, macro-averaged.
DiceEvaluation evaluate_samples(unet3d::UNet3d& model, const std::vector<datapipe::ModelSample>& samples,
                                const losses::LossWeights& weights = {});

// Frozen epochs at frozen_lr, then main epochs at base_lr, each phase on its
// own one-cycle schedule. After every epoch the tuning Dice is measured and
// the model checkpointed when it strictly improves; the best checkpoint is
// reloaded before returning. Throws TrainingError on a non-finite loss.
CheckpointRecord run_session(unet3d::UNet3d& model, const TrainData& data, const SessionSpec& spec,
                             const TrainOptions& options, int session_index = 0);

// Sessions in order, each starting from the previous session's best
// checkpoint. Returns every session's best record.
std::vector<CheckpointRecord> run_plan(unet3d::UNet3d& model, const TrainData& data, const TrainingPlan& plan,
                                       const TrainOptions& options);

}  // namespace covseg::train
