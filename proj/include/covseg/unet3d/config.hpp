#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "json.hpp"

namespace covseg::unet3d {

struct UNet3dConfig {
  int num_classes = 2;
  // stem, then the four residual stages of the 18-layer video network
  std::array<int, 5> encoder_channels{64, 64, 128, 256, 512};
  // output channels of the four upscaling blocks, deepest first
  std::array<int, 4> decoder_channels{256, 128, 64, 32};
  // width of the full-resolution residual head
  int head_channels = 16;
  bool instance_norm_on_skip = true;
  // Kinetics-400 weights for the encoder; empty selects random init.
  std::string pretrained_weights_path;
  std::uint64_t init_seed = 0;

  void validate() const;
  friend bool operator==(const UNet3dConfig&, const UNet3dConfig&) = default;
};

void to_json(nlohmann::json& j, const UNet3dConfig& c);
void from_json(const nlohmann::json& j, UNet3dConfig& c);

}  // namespace covseg::unet3d
