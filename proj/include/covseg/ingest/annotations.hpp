#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "covseg/core/volume.hpp"
#include "json.hpp"

namespace covseg::ingest {

using Vertex = std::array<double, 2>;  // (x = column, y = row) in pixels
using Polygon = std::vector<Vertex>;

struct AnnotationEntry {
  std::string study_instance_uid;
  std::string sop_instance_uid;
  std::string annotator;
  std::vector<Polygon> polygons;
};

struct AnnotationDocument {
  std::vector<AnnotationEntry> entries;
  std::size_t skipped_without_geometry = 0;
};

// Where the fields live in an annotation export. Paths are dotted; a "[]"
// suffix iterates an array ("datasets[].annotations" visits every
// dataset's annotation list). The default matches the RICORD (MD.ai)
// export.
struct AnnotationSchema {
  std::string entries_path = "datasets[].annotations";
  std::string study_key = "StudyInstanceUID";
  std::string sop_key = "SOPInstanceUID";
  std::string vertices_key = "data.vertices";
  std::string annotator_key = "createdById";
  // When set, only entries whose label field equals one of the values count.
  std::string label_key = "labelId";
  std::vector<std::string> label_filter;
};

void to_json(nlohmann::json& j, const AnnotationSchema& s);
void from_json(const nlohmann::json& j, AnnotationSchema& s);

// Entries without vertices (global labels) are counted and skipped; a
// polygon with fewer than three vertices or a missing UID throws DataError.
AnnotationDocument parse_annotations(const nlohmann::json& doc, const AnnotationSchema& schema = {});
AnnotationDocument read_annotations(const std::string& path, const AnnotationSchema& schema = {});

enum class AnnotatorMerge { union_all, intersection, per_annotator };

AnnotatorMerge parse_merge(const std::string& name);

// Pixel (row, col) is inside when its centre (x = col, y = row) lies inside
// the polygon by the even-odd rule or on its boundary.
void fill_polygon(const Polygon& polygon, int rows, int cols, std::uint8_t* slice);

// Fills every entry of the volume's study onto its slice. Entries whose SOP
// instance UID is absent from the volume raise DataError listing them.
LabelMask rasterize_annotations(const AnnotationDocument& doc, const CtVolume& volume,
                                AnnotatorMerge merge = AnnotatorMerge::union_all);

// One mask per annotator of the volume's study.
std::map<std::string, LabelMask> rasterize_per_annotator(const AnnotationDocument& doc,
                                                         const CtVolume& volume);

}  // namespace covseg::ingest
