#include "covseg/ingest/manifest.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "covseg/ingest/dicom.hpp"
#include "covseg/ingest/nifti.hpp"

namespace covseg::ingest {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

bool has_prefix(const fs::path& p, const fs::path& base) {
  auto b = base.begin();
  for (auto it = p.begin(); b != base.end(); ++it, ++b) {
    if (it == p.end() || *it != *b) return false;
  }
  return true;
}

std::string stored_path(const std::string& file, const fs::path& base) {
  const fs::path abs = fs::absolute(file).lexically_normal();
  if (has_prefix(abs, base)) return abs.lexically_relative(base).generic_string();
  return abs.generic_string();
}

std::string nifti_stem(const fs::path& p) {
  std::string name = p.filename().string();
  for (const char* ext : {".nii.gz", ".nii"}) {
    const std::string e = ext;
    if (name.size() > e.size() && name.compare(name.size() - e.size(), e.size(), e) == 0) {
      return name.substr(0, name.size() - e.size());
    }
  }
  return {};
}

std::vector<fs::path> nifti_files(const std::string& dir) {
  if (!fs::is_directory(dir)) throw InputError("not a directory: " + dir);
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && !nifti_stem(e.path()).empty()) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

void say(const ConvertOptions& o, const std::string& msg) {
  if (o.log) o.log(msg);
}

std::string safe_id(std::string id) {
  for (char& c : id) {
    if (c == '/' || c == '\\' || c == ' ') c = '_';
  }
  return id;
}

// Runs `f`, recording a failure instead of throwing when the options ask for it.
template <class F>
void guarded(const ConvertOptions& o, const std::string& study, F&& f) {
  if (!o.failures) {
    f();
    return;
  }
  try {
    f();
  } catch (const Error& e) {
    o.failures->push_back({study, e.what()});
    say(o, "failed " + study + ": " + e.what());
  }
}

ManifestEntry entry_for(const std::string& id, const NiftiPair& files, const CtVolume& ct, const LabelMask& mask) {
  ManifestEntry e;
  e.study_id = id;
  e.ct_path = files.ct_path;
  e.seg_path = files.seg_path;
  e.shape = ct.dims();
  e.spacing = ct.spacing;
  e.positive_voxels = mask.count_positive();
  return e;
}

}  // namespace

const ManifestEntry& Manifest::find(const std::string& study_id) const {
  for (const auto& e : studies) {
    if (e.study_id == study_id) return e;
  }
  throw DataError("study '" + study_id + "' is not in the manifest");
}

std::vector<std::string> Manifest::study_ids() const {
  std::vector<std::string> ids;
  for (const auto& e : studies) ids.push_back(e.study_id);
  return ids;
}

void write_manifest(const Manifest& manifest, const std::string& path) {
  const fs::path base = fs::absolute(path).parent_path().lexically_normal();
  json studies = json::array();
  for (const auto& e : manifest.studies) {
    studies.push_back({{"study_id", e.study_id},
                       {"ct", stored_path(e.ct_path, base)},
                       {"seg", stored_path(e.seg_path, base)},
                       {"shape", {e.shape.depth, e.shape.height, e.shape.width}},
                       {"spacing", {e.spacing.depth, e.spacing.height, e.spacing.width}},
                       {"positive_voxels", e.positive_voxels}});
  }
  const json doc = {{"version", 1}, {"dataset", manifest.dataset}, {"studies", studies}};
  if (!base.empty()) fs::create_directories(base);
  std::ofstream out(path);
  if (!out) throw InputError("cannot write manifest " + path);
  out << doc.dump(2) << "\n";
  if (!out) throw InputError("failed writing manifest " + path);
}

Manifest read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open manifest " + path);
  const fs::path base = fs::absolute(path).parent_path();
  Manifest m;
  try {
    json doc;
    in >> doc;
    if (doc.value("version", 0) != 1) throw DataError(path + ": unsupported manifest version");
    m.dataset = doc.value("dataset", std::string());
    std::set<std::string> seen;
    for (const auto& s : doc.at("studies")) {
      ManifestEntry e;
      e.study_id = s.at("study_id").get<std::string>();
      if (!seen.insert(e.study_id).second) throw DataError(path + ": duplicate study " + e.study_id);
      const fs::path ct = s.at("ct").get<std::string>();
      const fs::path seg = s.at("seg").get<std::string>();
      e.ct_path = (ct.is_absolute() ? ct : base / ct).lexically_normal().string();
      e.seg_path = (seg.is_absolute() ? seg : base / seg).lexically_normal().string();
      const auto shape = s.at("shape").get<std::vector<int>>();
      const auto spacing = s.at("spacing").get<std::vector<double>>();
      if (shape.size() != 3 || spacing.size() != 3) throw DataError(path + ": shape and spacing need 3 values");
      e.shape = {shape[0], shape[1], shape[2]};
      e.spacing = {spacing[0], spacing[1], spacing[2]};
      e.positive_voxels = s.value("positive_voxels", std::size_t{0});
      m.studies.push_back(std::move(e));
    }
  } catch (const json::exception& e) {
    throw DataError(path + ": " + e.what());
  }
  return m;
}

NiftiPair write_nifti_pair(const CtVolume& volume, const LabelMask& mask, const std::string& out_dir,
                           const std::string& id) {
  if (!(volume.dims() == mask.dims())) {
    throw ShapeError("mask " + to_string(mask.dims()) + " does not match volume " + to_string(volume.dims()));
  }
  require_binary(mask.voxels, "label mask");
  const std::string name = safe_id(id.empty() ? volume.study_instance_uid : id);
  if (name.empty()) throw UsageError("study id needed to name the NIfTI pair");
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw InputError("cannot create " + out_dir + ": " + ec.message());
  NiftiPair p{(fs::path(out_dir) / (name + "_ct.nii.gz")).string(),
              (fs::path(out_dir) / (name + "_seg.nii.gz")).string()};
  write_nifti_ct(volume, p.ct_path);
  write_nifti_mask(mask, volume.affine, p.seg_path);
  return p;
}

void clip_volume(CtVolume& volume, double lo, double hi) {
  if (!(lo < hi)) throw UsageError("clip range must satisfy lo < hi");
  const float flo = static_cast<float>(lo), fhi = static_cast<float>(hi);
  for (float& v : volume.voxels.values()) {
    if (std::isnan(v)) throw DataError("NaN voxel in CT volume");
    v = std::min(std::max(v, flo), fhi);
  }
}

DatasetKind parse_dataset_kind(const std::string& name) {
  if (name == "dicom_json" || name == "ricord") return DatasetKind::dicom_json;
  if (name == "nifti_pairs" || name == "mosmed" || name == "coronacases") return DatasetKind::nifti_pairs;
  throw UsageError("unknown dataset kind '" + name + "' (dicom_json, nifti_pairs)");
}

Manifest convert_dicom_dataset(const std::string& dicom_root, const std::string& annotation_path,
                               const std::string& out_dir, const ConvertOptions& options) {
  if (!fs::is_directory(dicom_root)) throw InputError("DICOM root is not a directory: " + dicom_root);
  const AnnotationDocument doc = read_annotations(annotation_path, options.schema);
  say(options, "annotations: " + std::to_string(doc.entries.size()) + " polygon entries, " +
                   std::to_string(doc.skipped_without_geometry) + " without geometry skipped");

  std::map<std::string, std::set<std::string>> annotated;  // study -> SOPs
  for (const auto& e : doc.entries) annotated[e.study_instance_uid].insert(e.sop_instance_uid);

  std::vector<fs::path> dirs;
  for (const auto& e : fs::recursive_directory_iterator(dicom_root)) {
    if (!e.is_directory()) continue;
    for (const auto& f : fs::directory_iterator(e.path())) {
      if (f.is_regular_file() && is_dicom_file(f.path().string())) {
        dirs.push_back(e.path());
        break;
      }
    }
  }
  for (const auto& f : fs::directory_iterator(dicom_root)) {
    if (f.is_regular_file() && is_dicom_file(f.path().string())) {
      dirs.push_back(dicom_root);
      break;
    }
  }
  std::sort(dirs.begin(), dirs.end());

  struct Candidate {
    fs::path dir;
    std::size_t hits = 0;
    std::size_t slices = 0;
  };
  std::map<std::string, Candidate> best;
  for (const auto& dir : dirs) {
    guarded(options, dir.string(), [&] {
      const auto slices = read_dicom_series(dir.string());
      const std::string study = slices.front().meta.study_instance_uid;
      const auto it = annotated.find(study);
      if (it == annotated.end()) return;
      std::size_t hits = 0;
      for (const auto& s : slices) hits += it->second.count(s.meta.sop_instance_uid);
      Candidate& c = best[study];
      if (hits > c.hits || (hits == c.hits && hits > 0 && slices.size() > c.slices)) c = {dir, hits, slices.size()};
    });
  }

  Manifest m;
  m.dataset = options.dataset_name;
  for (const auto& [study, sops] : annotated) {
    guarded(options, study, [&] {
      const auto it = best.find(study);
      if (it == best.end() || it->second.hits == 0) {
        throw DataError("no DICOM series under " + dicom_root + " holds the annotated slices of study " + study);
      }
      CtVolume ct = assemble_volume(read_dicom_series(it->second.dir.string()),
                                    options.clip ? options.clip_lo : -std::numeric_limits<double>::infinity(),
                                    options.clip ? options.clip_hi : std::numeric_limits<double>::infinity());
      if (options.merge == AnnotatorMerge::per_annotator) {
        for (const auto& [who, mask] : rasterize_per_annotator(doc, ct)) {
          const std::string id = study + "_" + (who.empty() ? "unknown" : who);
          m.studies.push_back(entry_for(id, write_nifti_pair(ct, mask, out_dir, id), ct, mask));
        }
      } else {
        const LabelMask mask = rasterize_annotations(doc, ct, options.merge);
        m.studies.push_back(entry_for(study, write_nifti_pair(ct, mask, out_dir, study), ct, mask));
      }
      say(options, "converted " + study + " " + to_string(ct.dims()) + " from " + it->second.dir.string());
    });
  }
  return m;
}

Manifest convert_nifti_dataset(const std::string& image_dir, const std::string& mask_dir,
                               const std::string& out_dir, const ConvertOptions& options) {
  std::map<std::string, fs::path> images;
  for (const auto& p : nifti_files(image_dir)) images[nifti_stem(p)] = p;
  std::map<std::string, fs::path> masks;
  for (const auto& p : nifti_files(mask_dir)) {
    std::string stem = nifti_stem(p);
    for (const std::string suffix : {"_mask", "_seg"}) {
      if (stem.size() > suffix.size() && stem.compare(stem.size() - suffix.size(), suffix.size(), suffix) == 0) {
        stem.resize(stem.size() - suffix.size());
        break;
      }
    }
    if (!masks.emplace(stem, p).second) throw DataError("two masks for " + stem + " in " + mask_dir);
  }
  std::vector<std::string> orphans;
  for (const auto& [stem, p] : masks) {
    if (!images.count(stem)) orphans.push_back(p.filename().string());
  }
  if (!orphans.empty()) {
    std::string list;
    for (const auto& o : orphans) list += (list.empty() ? "" : ", ") + o;
    throw DataError("masks without a volume in " + image_dir + ": " + list);
  }

  Manifest m;
  m.dataset = options.dataset_name;
  for (const auto& [stem, mask_path] : masks) {
    guarded(options, stem, [&] {
      CtVolume ct = read_nifti_ct(images.at(stem).string());
      ct.study_instance_uid = stem;
      if (options.clip) clip_volume(ct, options.clip_lo, options.clip_hi);
      LabelMask mask = read_nifti_mask(mask_path.string(), options.binarize_masks);
      if (!(mask.dims() == ct.dims())) {
        throw DataError(stem + ": mask " + to_string(mask.dims()) + " does not match volume " + to_string(ct.dims()));
      }
      mask.spacing = ct.spacing;
      m.studies.push_back(entry_for(stem, write_nifti_pair(ct, mask, out_dir, stem), ct, mask));
      say(options, "converted " + stem + " " + to_string(ct.dims()));
    });
  }
  if (images.size() > masks.size()) {
    say(options, std::to_string(images.size() - masks.size()) + " volumes without a mask skipped");
  }
  return m;
}

}  // namespace covseg::ingest
