#include "covseg/ingest/annotations.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>

namespace covseg::ingest {

namespace {

using nlohmann::json;

const json* lookup(const json& node, const std::string& dotted) {
  const json* cur = &node;
  std::stringstream ss(dotted);
  std::string key;
  while (std::getline(ss, key, '.')) {
    if (!cur->is_object()) return nullptr;
    const auto it = cur->find(key);
    if (it == cur->end()) return nullptr;
    cur = &*it;
  }
  return cur;
}

void collect(const json& node, const std::vector<std::string>& parts, std::size_t i,
             std::vector<const json*>& out) {
  if (i == parts.size()) {
    if (node.is_array()) {
      for (const auto& e : node) out.push_back(&e);
    } else {
      throw DataError("annotation entries path does not lead to an array");
    }
    return;
  }
  std::string key = parts[i];
  const bool iterate = key.size() > 2 && key.compare(key.size() - 2, 2, "[]") == 0;
  if (iterate) key.resize(key.size() - 2);
  if (!node.is_object() || !node.contains(key)) {
    throw DataError("annotation document has no field '" + key + "'");
  }
  const json& next = node.at(key);
  if (iterate) {
    if (!next.is_array()) throw DataError("annotation field '" + key + "' is not an array");
    for (const auto& e : next) collect(e, parts, i + 1, out);
  } else {
    collect(next, parts, i + 1, out);
  }
}

std::string scalar_text(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return std::to_string(v.get<long long>());
  if (v.is_null()) return "";
  return v.dump();
}

Vertex vertex_of(const json& v) {
  if (v.is_array() && v.size() >= 2 && v[0].is_number() && v[1].is_number()) {
    return {v[0].get<double>(), v[1].get<double>()};
  }
  if (v.is_object() && v.contains("x") && v.contains("y")) return {v["x"].get<double>(), v["y"].get<double>()};
  throw DataError("annotation vertex must be [x, y] or {\"x\":, \"y\":}, got " + v.dump());
}

bool on_segment(double px, double py, const Vertex& a, const Vertex& b) {
  const double cross = (b[0] - a[0]) * (py - a[1]) - (b[1] - a[1]) * (px - a[0]);
  if (cross != 0.0) return false;
  return px >= std::min(a[0], b[0]) && px <= std::max(a[0], b[0]) && py >= std::min(a[1], b[1]) &&
         py <= std::max(a[1], b[1]);
}

}  // namespace

void to_json(nlohmann::json& j, const AnnotationSchema& s) {
  j = {{"entries_path", s.entries_path}, {"study_key", s.study_key},       {"sop_key", s.sop_key},
       {"vertices_key", s.vertices_key}, {"annotator_key", s.annotator_key}, {"label_key", s.label_key},
       {"label_filter", s.label_filter}};
}

void from_json(const nlohmann::json& j, AnnotationSchema& s) {
  const AnnotationSchema d;
  s.entries_path = j.value("entries_path", d.entries_path);
  s.study_key = j.value("study_key", d.study_key);
  s.sop_key = j.value("sop_key", d.sop_key);
  s.vertices_key = j.value("vertices_key", d.vertices_key);
  s.annotator_key = j.value("annotator_key", d.annotator_key);
  s.label_key = j.value("label_key", d.label_key);
  s.label_filter = j.value("label_filter", d.label_filter);
}

AnnotationDocument parse_annotations(const nlohmann::json& doc, const AnnotationSchema& schema) {
  std::vector<const json*> items;
  if (doc.is_array()) {
    for (const auto& e : doc) items.push_back(&e);
  } else {
    std::vector<std::string> parts;
    std::stringstream ss(schema.entries_path);
    std::string p;
    while (std::getline(ss, p, '.')) parts.push_back(p);
    collect(doc, parts, 0, items);
  }

  AnnotationDocument out;
  for (const json* item : items) {
    if (!schema.label_filter.empty()) {
      const json* label = lookup(*item, schema.label_key);
      const std::string l = label ? scalar_text(*label) : "";
      if (std::find(schema.label_filter.begin(), schema.label_filter.end(), l) == schema.label_filter.end()) {
        continue;
      }
    }
    const json* verts = lookup(*item, schema.vertices_key);
    if (!verts || verts->is_null()) {
      ++out.skipped_without_geometry;
      continue;
    }
    AnnotationEntry e;
    const json* study = lookup(*item, schema.study_key);
    const json* sop = lookup(*item, schema.sop_key);
    if (!study || !sop || scalar_text(*study).empty() || scalar_text(*sop).empty()) {
      throw DataError("annotation with vertices but without " + schema.study_key + "/" + schema.sop_key);
    }
    e.study_instance_uid = scalar_text(*study);
    e.sop_instance_uid = scalar_text(*sop);
    if (const json* who = lookup(*item, schema.annotator_key)) e.annotator = scalar_text(*who);
    if (!verts->is_array()) throw DataError("annotation vertices must be an array");
    // Either one vertex list or a list of vertex lists.
    const bool nested = !verts->empty() && (*verts)[0].is_array() && !(*verts)[0].empty() &&
                        ((*verts)[0][0].is_array() || (*verts)[0][0].is_object());
    auto add = [&](const json& list) {
      Polygon poly;
      for (const auto& v : list) poly.push_back(vertex_of(v));
      if (poly.size() < 3) {
        throw DataError("polygon on SOP " + e.sop_instance_uid + " has " + std::to_string(poly.size()) +
                        " vertices, need at least 3");
      }
      e.polygons.push_back(std::move(poly));
    };
    if (nested) {
      for (const auto& list : *verts) add(list);
    } else {
      add(*verts);
    }
    out.entries.push_back(std::move(e));
  }
  return out;
}

AnnotationDocument read_annotations(const std::string& path, const AnnotationSchema& schema) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open annotation file " + path);
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw DataError(path + ": " + e.what());
  }
  return parse_annotations(doc, schema);
}

AnnotatorMerge parse_merge(const std::string& name) {
  if (name == "union") return AnnotatorMerge::union_all;
  if (name == "intersection") return AnnotatorMerge::intersection;
  if (name == "per_annotator") return AnnotatorMerge::per_annotator;
  throw UsageError("unknown annotator merge '" + name + "' (union, intersection, per_annotator)");
}

void fill_polygon(const Polygon& polygon, int rows, int cols, std::uint8_t* slice) {
  const std::size_t n = polygon.size();
  if (n < 3) throw DataError("polygon needs at least 3 vertices");
  double ymin = polygon[0][1], ymax = ymin;
  for (const auto& v : polygon) {
    if (!std::isfinite(v[0]) || !std::isfinite(v[1])) throw DataError("non-finite polygon vertex");
    ymin = std::min(ymin, v[1]);
    ymax = std::max(ymax, v[1]);
  }
  const int r0 = std::max(0, static_cast<int>(std::ceil(ymin)));
  const int r1 = std::min(rows - 1, static_cast<int>(std::floor(ymax)));
  std::vector<double> xs;
  for (int r = r0; r <= r1; ++r) {
    const double y = r;
    xs.clear();
    for (std::size_t i = 0; i < n; ++i) {
      const Vertex& a = polygon[i];
      const Vertex& b = polygon[(i + 1) % n];
      if ((a[1] <= y) != (b[1] <= y)) xs.push_back(a[0] + (y - a[1]) * (b[0] - a[0]) / (b[1] - a[1]));
    }
    std::sort(xs.begin(), xs.end());
    std::uint8_t* row = slice + static_cast<std::size_t>(r) * cols;
    for (std::size_t k = 0; k + 1 < xs.size(); k += 2) {
      const int c0 = std::max(0, static_cast<int>(std::ceil(xs[k])));
      const int c1 = std::min(cols - 1, static_cast<int>(std::floor(xs[k + 1])));
      for (int c = c0; c <= c1; ++c) row[c] = 1;
    }
  }
  // Boundary pixels: centres lying exactly on an edge.
  for (std::size_t i = 0; i < n; ++i) {
    const Vertex& a = polygon[i];
    const Vertex& b = polygon[(i + 1) % n];
    const int ra = std::max(0, static_cast<int>(std::ceil(std::min(a[1], b[1]))));
    const int rb = std::min(rows - 1, static_cast<int>(std::floor(std::max(a[1], b[1]))));
    const int ca = std::max(0, static_cast<int>(std::ceil(std::min(a[0], b[0]))));
    const int cb = std::min(cols - 1, static_cast<int>(std::floor(std::max(a[0], b[0]))));
    if (a[1] == b[1]) {
      if (ra == rb && ra == a[1]) {
        for (int c = ca; c <= cb; ++c) slice[static_cast<std::size_t>(ra) * cols + c] = 1;
      }
      continue;
    }
    for (int r = ra; r <= rb; ++r) {
      const double x = a[0] + (r - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
      const double c = std::round(x);
      if (c >= ca && c <= cb && on_segment(c, r, a, b)) slice[static_cast<std::size_t>(r) * cols + static_cast<int>(c)] = 1;
    }
  }
}

std::map<std::string, LabelMask> rasterize_per_annotator(const AnnotationDocument& doc, const CtVolume& volume) {
  const Dims3 n = volume.dims();
  if (volume.slice_order.size() != static_cast<std::size_t>(n.depth)) {
    throw DataError("volume of study " + volume.study_instance_uid + " has no slice order to match annotations");
  }
  std::unordered_map<std::string, int> slice_of;
  for (int k = 0; k < n.depth; ++k) slice_of[volume.slice_order[k]] = k;

  std::set<std::string> orphans;
  std::map<std::string, LabelMask> out;
  const std::size_t plane = static_cast<std::size_t>(n.height) * n.width;
  for (const auto& e : doc.entries) {
    if (e.study_instance_uid != volume.study_instance_uid) continue;
    const auto it = slice_of.find(e.sop_instance_uid);
    if (it == slice_of.end()) {
      orphans.insert(e.sop_instance_uid);
      continue;
    }
    auto [m, fresh] = out.try_emplace(e.annotator);
    if (fresh) {
      m->second.voxels = Volume3<std::uint8_t>(n, 0);
      m->second.spacing = volume.spacing;
    }
    for (const auto& poly : e.polygons) {
      fill_polygon(poly, n.height, n.width, m->second.voxels.data() + it->second * plane);
    }
  }
  if (!orphans.empty()) {
    std::string list;
    for (const auto& o : orphans) list += (list.empty() ? "" : ", ") + o;
    throw DataError("annotations for study " + volume.study_instance_uid + " reference " +
                    std::to_string(orphans.size()) + " SOP instance UID(s) absent from the series: " + list);
  }
  return out;
}

LabelMask rasterize_annotations(const AnnotationDocument& doc, const CtVolume& volume, AnnotatorMerge merge) {
  if (merge == AnnotatorMerge::per_annotator) {
    throw UsageError("per-annotator output yields several masks; use rasterize_per_annotator");
  }
  const auto per = rasterize_per_annotator(doc, volume);
  LabelMask m;
  m.voxels = Volume3<std::uint8_t>(volume.dims(), 0);
  m.spacing = volume.spacing;
  bool first = true;
  for (const auto& [who, mask] : per) {
    for (std::size_t i = 0; i < m.voxels.size(); ++i) {
      if (merge == AnnotatorMerge::union_all || first) {
        m.voxels[i] = m.voxels[i] | mask.voxels[i];
      } else {
        m.voxels[i] = m.voxels[i] & mask.voxels[i];
      }
    }
    first = false;
  }
  return m;
}

}  // namespace covseg::ingest
