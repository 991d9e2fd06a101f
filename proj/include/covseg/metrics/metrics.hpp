#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "covseg/core/volume.hpp"

namespace covseg::metrics {

using Mask = Volume3<std::uint8_t>;

inline constexpr double kDefaultNsdToleranceMm = 3.0;

// 2|P and G| / (|P| + |G|); 1 when both are empty, 0 when exactly one is.
double volumetric_dice(const Mask& pred, const Mask& gt);
double volumetric_dice(const LabelMask& pred, const LabelMask& gt);

// Foreground voxels with at least one 6-connected neighbour that is
// background or outside the volume.
struct SurfaceSet {
  Dims3 dims;
  Spacing3 spacing;
  std::vector<std::array<int, 3>> voxels;  // (d, h, w), raster order

  std::size_t size() const noexcept { return voxels.size(); }
  bool empty() const noexcept { return voxels.empty(); }
  std::array<double, 3> position_mm(std::size_t i) const;
};

SurfaceSet extract_surface(const Mask& mask, const Spacing3& spacing = {});

// Exact squared Euclidean distance (mm^2) from every voxel centre to the
// nearest marked voxel, separable lower-envelope transform. Unmarked
// volumes yield +inf everywhere.
Volume3<double> squared_distance_transform(const Mask& sites, const Spacing3& spacing);

// Fraction of both surfaces lying within tolerance_mm of the other one.
// 1 when both surfaces are empty, 0 when exactly one is.
double normalized_surface_dice(const Mask& pred, const Mask& gt, const Spacing3& spacing,
                               double tolerance_mm = kDefaultNsdToleranceMm);

}  // namespace covseg::metrics
