#include "covseg/core/volume.hpp"

#include <algorithm>

namespace covseg {

std::string to_string(const Dims3& dims) {
  return "(" + std::to_string(dims.depth) + ", " + std::to_string(dims.height) + ", " +
         std::to_string(dims.width) + ")";
}

Affine diagonal_affine(const Spacing3& spacing) {
  Affine a{};
  a[0][0] = spacing.width;
  a[1][1] = spacing.height;
  a[2][2] = spacing.depth;
  a[3][3] = 1.0;
  return a;
}

std::size_t LabelMask::count_positive() const noexcept {
  return static_cast<std::size_t>(
      std::count_if(voxels.values().begin(), voxels.values().end(),
                    [](std::uint8_t v) { return v != 0; }));
}

void require_binary(const Volume3<std::uint8_t>& mask, const char* what) {
  for (std::uint8_t v : mask.values()) {
    if (v > 1) {
      throw ShapeError(std::string(what) + ": mask value " + std::to_string(v) +
                       " outside {0,1}");
    }
  }
}

}  // namespace covseg
