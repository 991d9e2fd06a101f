#pragma once

#include <cstdint>
#include <utility>

#include "covseg/core/volume.hpp"

namespace covseg::datapipe {

// Output voxel i samples source coordinate (i + 0.5) * in / out - 0.5 along
// each axis (voxel centres aligned, edges clamped).
double source_coordinate(int i, int in, int out);

// Trilinear, evaluated in double.
Volume3<float> resample_trilinear(const Volume3<float>& src, const Dims3& out);
// Nearest voxel centre: floor((i + 0.5) * in / out).
Volume3<std::uint8_t> resample_nearest(const Volume3<std::uint8_t>& src, const Dims3& out);

// Throws ShapeError when the pair is misaligned or any axis has fewer than
// two voxels.
std::pair<Volume3<float>, Volume3<std::uint8_t>> resample_pair(const CtVolume& volume,
                                                                const LabelMask& mask,
                                                                const Dims3& out);

}  // namespace covseg::datapipe
