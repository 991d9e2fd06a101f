#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "covseg/metrics/metrics.hpp"

namespace covseg::metrics {

struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // row-major RGB

  const std::uint8_t* at(int row, int col) const { return pixels.data() + 3 * (row * width + col); }
  std::uint8_t* at(int row, int col) { return pixels.data() + 3 * (row * width + col); }
};

// Lung window in Hounsfield units.
struct Window {
  double center = -600.0;
  double width = 1500.0;
};

// Foreground pixels of an axial slice with a 4-connected background or
// out-of-bounds neighbour; row-major (row = height index, col = width index).
std::vector<std::uint8_t> slice_contour(const Mask& mask, int slice);

// Windowed grayscale slice with the ground-truth contour in red, the
// prediction contour in green, yellow where the two coincide.
RgbImage overlay_image(const CtVolume& ct, const Mask& gt, const Mask& pred, int slice,
                       const Window& window = {});

void write_png(const RgbImage& image, const std::string& path);
RgbImage read_png(const std::string& path);

void render_overlay(const CtVolume& ct, const Mask& gt, const Mask& pred, int slice,
                    const std::string& path, const Window& window = {});

}  // namespace covseg::metrics
