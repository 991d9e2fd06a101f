#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "covseg/datapipe/augment.hpp"
#include "covseg/datapipe/sample.hpp"
#include "covseg/ingest/annotations.hpp"
#include "covseg/losses/losses.hpp"
#include "covseg/nn/adamw.hpp"
#include "covseg/train/engine.hpp"
#include "covseg/unet3d/config.hpp"
#include "json.hpp"

namespace covseg::cli {

struct PathsConfig {
  std::string dicom_root = "data/raw/dicom";
  std::string annotations = "data/raw/annotations.json";
  std::string images = "data/raw/images";
  std::string masks = "data/raw/masks";
  std::string nifti = "data/nifti";
  std::string manifest = "data/nifti/manifest.json";
  std::string split = "data/split.json";
  std::string checkpoints = "runs/checkpoints";
  std::string reports = "runs/reports";
  std::string log = "runs/train.ndjson";
};

struct DatasetConfig {
  std::string name = "RICORD";
  std::string kind = "dicom_json";
  bool clip = true;
  double clip_low = -2000.0;
  double clip_high = 500.0;
  bool binarize_masks = false;
  std::string annotator_merge = "union";
};

struct RunConfig {
  std::uint64_t seed = 42;
  PathsConfig paths;
  DatasetConfig dataset;
  ingest::AnnotationSchema annotation_schema;
  unet3d::UNet3dConfig model;
  int tune_percent = 15;
  train::TrainingPlan plan = train::TrainingPlan::canonical();
  train::OneCycle schedule;
  nn::AdamWConfig optimizer;
  datapipe::AugmentationConfig augmentation;
  losses::LossWeights loss;
  double nsd_tolerance_mm = 3.0;
  // Inference extent; the last session's stage when unset.
  std::optional<datapipe::StageSpec> predict_stage;

  datapipe::StageSpec inference_stage() const;
  void validate() const;
};

nlohmann::json config_to_json(const RunConfig& c);
// Keys absent from `j` keep their defaults; unknown keys throw UsageError.
RunConfig config_from_json(const nlohmann::json& j);

// YAML document to JSON: plain scalars become numbers, booleans or null when
// they read as such, quoted scalars stay strings.
nlohmann::json yaml_to_json(const std::string& text);
nlohmann::json load_yaml_file(const std::string& path);

// "a.b.c=value" with a YAML-parsed value; list elements by index.
void apply_override(nlohmann::json& tree, const std::string& assignment);

// Defaults, then the file (when given), then the overrides in order.
RunConfig resolve_config(const std::string& path, const std::vector<std::string>& overrides);

}  // namespace covseg::cli
