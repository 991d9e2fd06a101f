#pragma once

#include <functional>
#include <string>
#include <vector>

#include "covseg/core/volume.hpp"
#include "covseg/ingest/annotations.hpp"

namespace covseg::ingest {

struct ManifestEntry {
  std::string study_id;
  std::string ct_path;   // absolute after read_manifest
  std::string seg_path;
  Dims3 shape;
  Spacing3 spacing;
  std::size_t positive_voxels = 0;
};

struct Manifest {
  std::string dataset;
  std::vector<ManifestEntry> studies;

  const ManifestEntry& find(const std::string& study_id) const;
  std::vector<std::string> study_ids() const;
};

// Paths are stored relative to the manifest's directory when they lie
// beneath it.
void write_manifest(const Manifest& manifest, const std::string& path);
Manifest read_manifest(const std::string& path);

struct NiftiPair {
  std::string ct_path;
  std::string seg_path;
};

// `<id>_ct.nii.gz` and `<id>_seg.nii.gz` in `out_dir`, both with the volume
// affine. Throws ShapeError when mask and volume differ in shape.
NiftiPair write_nifti_pair(const CtVolume& volume, const LabelMask& mask, const std::string& out_dir,
                           const std::string& id = {});

// min(max(v, lo), hi) over the whole volume; idempotent.
void clip_volume(CtVolume& volume, double lo = -2000.0, double hi = 500.0);

enum class DatasetKind { dicom_json, nifti_pairs };
DatasetKind parse_dataset_kind(const std::string& name);

struct StudyFailure {
  std::string study;  // study id, or the series directory when unreadable
  std::string message;
};

struct ConvertOptions {
  std::string dataset_name;
  AnnotationSchema schema;
  AnnotatorMerge merge = AnnotatorMerge::union_all;
  bool clip = true;
  double clip_lo = -2000.0;
  double clip_hi = 500.0;
  // NIfTI pair import: map nonzero mask labels to 1 instead of rejecting them.
  bool binarize_masks = false;
  std::function<void(const std::string&)> log;
  // When set, a failing study is recorded here and conversion continues;
  // otherwise the first failure propagates.
  std::vector<StudyFailure>* failures = nullptr;
};

// DICOM series under `dicom_root` (any depth) plus one annotation export.
// Each annotated study is converted from the series carrying the most of
// its annotated SOP instances.
Manifest convert_dicom_dataset(const std::string& dicom_root, const std::string& annotation_path,
                               const std::string& out_dir, const ConvertOptions& options);

// NIfTI volumes in `image_dir` paired with masks in `mask_dir` by file stem
// (a trailing "_mask" or "_seg" on the mask is ignored). Volumes without a
// mask are skipped; masks without a volume throw DataError.
Manifest convert_nifti_dataset(const std::string& image_dir, const std::string& mask_dir,
                               const std::string& out_dir, const ConvertOptions& options);

}  // namespace covseg::ingest
