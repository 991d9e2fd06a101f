#pragma once

#include <array>
#include <cstdint>
#include <random>

#include "covseg/datapipe/sample.hpp"
#include "json.hpp"

namespace covseg::datapipe {

struct AugmentationConfig {
  bool enabled = true;
  double probability = 0.5;  // per transform

  bool mirror = true;
  bool mirror_depth = false;
  bool mirror_height = false;
  bool mirror_width = true;

  bool rotate = true;
  double max_rotation_degrees = 15.0;

  bool perspective = true;
  double perspective_magnitude = 0.1;  // corner displacement, fraction of extent

  bool contrast_brightness = true;
  double contrast_range = 0.2;    // factor in [1 - r, 1 + r]
  double brightness_range = 0.2;  // factor in [1 - r, 1 + r]

  bool noise = true;
  double noise_sigma = 0.02;  // normalized intensity units

  void validate() const;
  static AugmentationConfig disabled();
};

void to_json(nlohmann::json& j, const AugmentationConfig& c);
void from_json(const nlohmann::json& j, AugmentationConfig& c);

// Row-major 3x3 map from output pixel (x = w, y = h, 1) to source pixel.
using Homography = std::array<double, 9>;

Homography identity_homography();
// Rotation by `degrees` about the slice centre.
Homography rotation_homography(double degrees, int height, int width);
// Map sending the four slice corners to corners displaced by `offsets`
// ((dx, dy) per corner: top-left, top-right, bottom-right, bottom-left).
Homography corner_homography(const std::array<std::array<double, 2>, 4>& offsets, int height,
                             int width);
Homography compose(const Homography& a, const Homography& b);  // a after b

// Applies the same in-plane map to every slice: bilinear with clamped
// borders for the image, nearest voxel centre (outside -> 0) for the mask.
void warp_inplane(ModelSample& sample, const Homography& h);

// Flips along the chosen axes, image and mask alike.
void mirror(ModelSample& sample, bool depth, bool height, bool width);

// Mirror, rotation and perspective (one combined warp), contrast and
// brightness, then Gaussian noise. Photometric steps touch the image only
// and keep its channels identical. Deterministic for a given rng state.
ModelSample augment(const ModelSample& sample, const AugmentationConfig& cfg, std::mt19937_64& rng);

// Independent stream seed for (base seed, epoch, sample index).
std::uint64_t sample_seed(std::uint64_t base, std::uint64_t epoch, std::uint64_t index);

}  // namespace covseg::datapipe
