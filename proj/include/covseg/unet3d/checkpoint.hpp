#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "covseg/nn/adamw.hpp"
#include "covseg/unet3d/model.hpp"
#include "json.hpp"

namespace covseg::unet3d {

// Named float32 arrays behind a JSON header:
//   "COVSEGv1" | uint64 LE header length | header JSON | little-endian data
// The header lists every tensor (name, shape, byte offset) and carries a
// free-form "meta" object.
struct Archive {
  nlohmann::json meta = nlohmann::json::object();
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor* find(const std::string& name) const;
};

// Written to a sibling temporary and renamed into place.
void write_archive(const std::string& path, const Archive& archive);
Archive read_archive(const std::string& path);

struct CheckpointMeta {
  int epoch = -1;
  double best_tune_dice = -1.0;
  nlohmann::json extra = nlohmann::json::object();
};

// Config, parameters, normalization buffers and, when given, optimizer
// moments.
void save_checkpoint(const std::string& path, UNet3d& model, const CheckpointMeta& meta,
                     const nn::AdamW* optimizer = nullptr);

// Restores into a model built from the same config. Optimizer moments are
// restored when `optimizer` is given and the archive has them.
CheckpointMeta load_checkpoint(const std::string& path, UNet3d& model,
                               nn::AdamW* optimizer = nullptr);

UNet3dConfig read_checkpoint_config(const std::string& path);
std::unique_ptr<UNet3d> load_model(const std::string& path, CheckpointMeta* meta = nullptr);

struct PretrainedReport {
  std::size_t matched = 0;
  std::size_t unmatched = 0;                 // encoder arrays absent from the file
  std::vector<std::string> missing;          // their names
  std::vector<std::string> ignored;          // file entries with no encoder counterpart
};

// Loads video-classification weights into the encoder. Names may carry the
// "encoder." prefix or not; classifier ("fc.") entries are ignored. A shape
// mismatch throws DataError naming the parameter.
PretrainedReport load_pretrained_encoder(UNet3d& model, const std::string& path);

// Builds the model and loads pretrained encoder weights when the config
// names a file.
std::unique_ptr<UNet3d> build_model(const UNet3dConfig& cfg, PretrainedReport* report = nullptr);

// FNV-1a over names, shapes and values of all parameters and buffers.
std::uint64_t parameter_hash(UNet3d& model);

}  // namespace covseg::unet3d
