#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "covseg/core/volume.hpp"
#include "covseg/nn/tensor.hpp"
#include "json.hpp"

namespace covseg::datapipe {

using nn::Tensor;

// Network input extent for one training stage.
struct StageSpec {
  int depth = 18;
  int height = 112;
  int width = 112;
  int batch_size = 6;

  Dims3 dims() const noexcept { return {depth, height, width}; }
  void validate() const;
  friend bool operator==(const StageSpec&, const StageSpec&) = default;
};

inline constexpr StageSpec kStage1{18, 112, 112, 6};
inline constexpr StageSpec kStage2{20, 256, 256, 1};

void to_json(nlohmann::json& j, const StageSpec& s);
void from_json(const nlohmann::json& j, StageSpec& s);

inline constexpr double kClipLow = -2000.0;
inline constexpr double kClipHigh = 500.0;

// v -> (v + 2000) / 2500. Throws DataError for values outside the clip
// window, which indicates a volume that skipped clipping.
Volume3<float> normalize_intensity(const Volume3<float>& hu);

// (D, H, W) -> (3, D, H, W) with identical channels.
Tensor replicate_channels(const Volume3<float>& image);

struct ModelSample {
  Tensor image;                 // (3, D, H, W)
  Volume3<std::uint8_t> mask;   // (D, H, W), {0, 1}
  std::string study_id;
  Dims3 native_shape;
  Spacing3 native_spacing;
};

// Resample to the stage extent, normalize, replicate.
ModelSample prepare_sample(const CtVolume& volume, const LabelMask& mask, const StageSpec& spec);

}  // namespace covseg::datapipe
