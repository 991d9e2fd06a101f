#include "covseg/unet3d/config.hpp"

#include "covseg/core/error.hpp"

namespace covseg::unet3d {

void UNet3dConfig::validate() const {
  if (num_classes < 2) throw UsageError("num_classes must be >= 2");
  for (int c : encoder_channels) {
    if (c < 1) throw UsageError("encoder channel counts must be positive");
  }
  for (int c : decoder_channels) {
    if (c < 1) throw UsageError("decoder channel counts must be positive");
  }
  if (head_channels < 1) throw UsageError("head_channels must be positive");
}

void to_json(nlohmann::json& j, const UNet3dConfig& c) {
  j = nlohmann::json{{"num_classes", c.num_classes},
                     {"encoder_channels", c.encoder_channels},
                     {"decoder_channels", c.decoder_channels},
                     {"head_channels", c.head_channels},
                     {"instance_norm_on_skip", c.instance_norm_on_skip},
                     {"pretrained_weights_path", c.pretrained_weights_path},
                     {"init_seed", c.init_seed}};
}

void from_json(const nlohmann::json& j, UNet3dConfig& c) {
  UNet3dConfig d;
  c.num_classes = j.value("num_classes", d.num_classes);
  c.encoder_channels = j.value("encoder_channels", d.encoder_channels);
  c.decoder_channels = j.value("decoder_channels", d.decoder_channels);
  c.head_channels = j.value("head_channels", d.head_channels);
  c.instance_norm_on_skip = j.value("instance_norm_on_skip", d.instance_norm_on_skip);
  c.pretrained_weights_path = j.value("pretrained_weights_path", d.pretrained_weights_path);
  c.init_seed = j.value("init_seed", d.init_seed);
}

}  // namespace covseg::unet3d
