#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "covseg/core/volume.hpp"

namespace covseg::ingest {

struct DicomSliceMeta {
  std::string path;
  std::string study_instance_uid;
  std::string series_instance_uid;
  std::string sop_instance_uid;
  std::optional<int> instance_number;
  double rescale_slope = 1.0;
  double rescale_intercept = 0.0;
  std::array<double, 2> pixel_spacing{};  // between rows, between columns (mm)
  std::optional<double> slice_thickness;
  std::optional<double> spacing_between_slices;
  int rows = 0;
  int cols = 0;
  int bits_allocated = 0;
  int bits_stored = 0;
  int pixel_representation = 0;  // 0 unsigned, 1 two's complement
  std::optional<std::array<double, 3>> image_position;     // LPS mm
  std::optional<std::array<double, 6>> image_orientation;  // row, column cosines
};

struct DicomSlice {
  DicomSliceMeta meta;
  std::vector<std::int32_t> stored;  // rows x cols, unrescaled
};

// True when the file carries the Part-10 preamble and "DICM" marker.
bool is_dicom_file(const std::string& path);

// Little-endian implicit or explicit VR; other transfer syntaxes, missing
// rescale tags, zero slope or malformed pixel data throw DataError.
DicomSlice read_dicom_file(const std::string& path);

// Every Part-10 file directly inside `directory`, in anatomical order: by
// image position along the slice normal when all slices have one, else by
// instance number. Throws InputError for a missing directory or no DICOM
// files, DataError for mixed series (listing the UIDs), duplicate SOP
// instance UIDs or inconsistent slice geometry.
std::vector<DicomSlice> read_dicom_series(const std::string& directory);

// min(max(slope * stored + intercept, lo), hi), evaluated in double.
std::vector<float> rescale_and_clip(std::span<const std::int32_t> stored, const DicomSliceMeta& meta,
                                    double clip_lo = -2000.0, double clip_hi = 500.0);

// Stacks sorted slices into a clipped HU volume with spacing, slice order
// and a RAS affine.
CtVolume assemble_volume(const std::vector<DicomSlice>& slices, double clip_lo = -2000.0,
                         double clip_hi = 500.0);

}  // namespace covseg::ingest
