#pragma once

#include <string>

#include "covseg/core/volume.hpp"

namespace covseg::ingest {

// NIfTI-1 single-file images, gzip-compressed when the name ends in ".gz".
// Voxel order is (depth, height, width) with width fastest, i.e. NIfTI
// (i, j, k) = (width, height, depth).

// float32 data, sform and qform from the volume affine.
void write_nifti_ct(const CtVolume& volume, const std::string& path);
// uint8 data with values in {0, 1}.
void write_nifti_mask(const LabelMask& mask, const Affine& affine, const std::string& path);

struct NiftiImage {
  Volume3<double> voxels;  // scaled by scl_slope/scl_inter when set
  Spacing3 spacing;
  Affine affine{};
  int datatype = 0;
};

NiftiImage read_nifti(const std::string& path);
CtVolume read_nifti_ct(const std::string& path);
// Throws DataError for values outside {0, 1} unless `binarize`, which maps
// every nonzero value to 1.
LabelMask read_nifti_mask(const std::string& path, bool binarize = false);

}  // namespace covseg::ingest
