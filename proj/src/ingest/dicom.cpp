#include "covseg/ingest/dicom.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace covseg::ingest {

namespace fs = std::filesystem;

namespace {

constexpr std::uint32_t tag(std::uint16_t g, std::uint16_t e) { return (std::uint32_t(g) << 16) | e; }

constexpr std::uint32_t kTransferSyntax = tag(0x0002, 0x0010);
constexpr std::uint32_t kSopInstance = tag(0x0008, 0x0018);
constexpr std::uint32_t kSliceThickness = tag(0x0018, 0x0050);
constexpr std::uint32_t kSpacingBetween = tag(0x0018, 0x0088);
constexpr std::uint32_t kStudyInstance = tag(0x0020, 0x000D);
constexpr std::uint32_t kSeriesInstance = tag(0x0020, 0x000E);
constexpr std::uint32_t kInstanceNumber = tag(0x0020, 0x0013);
constexpr std::uint32_t kImagePosition = tag(0x0020, 0x0032);
constexpr std::uint32_t kImageOrientation = tag(0x0020, 0x0037);
constexpr std::uint32_t kSamplesPerPixel = tag(0x0028, 0x0002);
constexpr std::uint32_t kRows = tag(0x0028, 0x0010);
constexpr std::uint32_t kColumns = tag(0x0028, 0x0011);
constexpr std::uint32_t kPixelSpacing = tag(0x0028, 0x0030);
constexpr std::uint32_t kBitsAllocated = tag(0x0028, 0x0100);
constexpr std::uint32_t kBitsStored = tag(0x0028, 0x0101);
constexpr std::uint32_t kPixelRepresentation = tag(0x0028, 0x0103);
constexpr std::uint32_t kRescaleIntercept = tag(0x0028, 0x1052);
constexpr std::uint32_t kRescaleSlope = tag(0x0028, 0x1053);
constexpr std::uint32_t kPixelData = tag(0x7FE0, 0x0010);
constexpr std::uint32_t kItem = tag(0xFFFE, 0xE000);
constexpr std::uint32_t kItemEnd = tag(0xFFFE, 0xE00D);
constexpr std::uint32_t kSequenceEnd = tag(0xFFFE, 0xE0DD);
constexpr std::uint32_t kUndefined = 0xFFFFFFFFu;

const char* kImplicitLE = "1.2.840.10008.1.2";
const char* kExplicitLE = "1.2.840.10008.1.2.1";

bool long_form(const char vr[2]) {
  static const char* kLong[] = {"OB", "OD", "OF", "OL", "OV", "OW", "SQ", "SV", "UC", "UN", "UR", "UT", "UV"};
  for (const char* v : kLong) {
    if (vr[0] == v[0] && vr[1] == v[1]) return true;
  }
  return false;
}

struct Element {
  std::uint32_t tag = 0;
  char vr[2] = {0, 0};
  std::uint32_t length = 0;
  std::size_t offset = 0;  // value start
};

class Reader {
 public:
  Reader(const std::string& path, std::vector<char> bytes) : path_(path), buf_(std::move(bytes)) {}

  std::size_t pos = 0;
  bool explicit_vr = true;

  bool at_end() const { return pos >= buf_.size(); }

  Element next() {
    Element e;
    need(8);
    e.tag = (std::uint32_t(u16(pos)) << 16) | u16(pos + 2);
    const bool delimiter = (e.tag >> 16) == 0xFFFE;
    if (explicit_vr && !delimiter) {
      e.vr[0] = buf_[pos + 4];
      e.vr[1] = buf_[pos + 5];
      if (long_form(e.vr)) {
        need(12);
        e.length = u32(pos + 8);
        pos += 12;
      } else {
        e.length = u16(pos + 6);
        pos += 8;
      }
    } else {
      e.length = u32(pos + 4);
      pos += 8;
    }
    e.offset = pos;
    return e;
  }

  // Skips the value of an element, descending into undefined-length
  // sequences and items.
  void skip(const Element& e) {
    if (e.length != kUndefined) {
      need(e.length);
      pos += e.length;
      return;
    }
    const bool is_item = e.tag == kItem;
    const std::uint32_t end = is_item ? kItemEnd : kSequenceEnd;
    while (true) {
      if (at_end()) fail("unterminated sequence");
      const Element inner = next();
      if (inner.tag == end) {
        return;
      }
      if (is_item) {
        skip(inner);
      } else if (inner.tag == kItem) {
        skip(inner);
      } else {
        fail("unexpected element inside sequence");
      }
    }
  }

  std::string text(const Element& e) const {
    need_at(e.offset, e.length);
    std::string s(buf_.data() + e.offset, e.length);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\0')) s.pop_back();
    std::size_t b = 0;
    while (b < s.size() && s[b] == ' ') ++b;
    return s.substr(b);
  }

  std::uint16_t us(const Element& e) const {
    if (e.length < 2) fail("short US value");
    return u16(e.offset);
  }

  const char* data(std::size_t offset) const { return buf_.data() + offset; }
  [[noreturn]] void fail(const std::string& what) const { throw DataError(path_ + ": " + what); }
  void need(std::size_t n) const { need_at(pos, n); }

 private:
  void need_at(std::size_t at, std::size_t n) const {
    if (at + n > buf_.size()) fail("truncated DICOM data");
  }
  std::uint16_t u16(std::size_t at) const {
    std::uint16_t v;
    std::memcpy(&v, buf_.data() + at, 2);
    return v;
  }
  std::uint32_t u32(std::size_t at) const {
    std::uint32_t v;
    std::memcpy(&v, buf_.data() + at, 4);
    return v;
  }

  std::string path_;
  std::vector<char> buf_;
};

std::vector<double> decimals(const std::string& s, const Reader& r, const char* what) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, '\\')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(part, &used));
    } catch (const std::logic_error&) {
      r.fail(std::string("malformed ") + what + " value '" + s + "'");
    }
  }
  return out;
}

std::vector<char> slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path);
  return std::vector<char>(std::istreambuf_iterator<char>(in), {});
}

std::array<double, 3> slice_normal(const std::array<double, 6>& o) {
  return {o[1] * o[5] - o[2] * o[4], o[2] * o[3] - o[0] * o[5], o[0] * o[4] - o[1] * o[3]};
}

double dot(const std::array<double, 3>& a, const std::array<double, 3>& b) {
  return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}

}  // namespace

bool is_dicom_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  char head[132];
  if (!in.read(head, sizeof head)) return false;
  return std::memcmp(head + 128, "DICM", 4) == 0;
}

DicomSlice read_dicom_file(const std::string& path) {
  Reader r(path, slurp(path));
  r.need(132);
  if (std::memcmp(r.data(128), "DICM", 4) != 0) r.fail("missing DICM marker, not a Part-10 file");
  r.pos = 132;

  std::string syntax;
  while (!r.at_end()) {
    const std::size_t start = r.pos;
    const Element e = r.next();
    if ((e.tag >> 16) != 0x0002) {
      r.pos = start;
      break;
    }
    if (e.tag == kTransferSyntax) syntax = r.text(e);
    r.skip(e);
  }
  if (syntax == kImplicitLE) {
    r.explicit_vr = false;
  } else if (syntax != kExplicitLE) {
    r.fail("unsupported transfer syntax '" + syntax + "' (only little-endian uncompressed is read)");
  }

  DicomSlice s;
  DicomSliceMeta& m = s.meta;
  m.path = path;
  std::optional<double> slope, intercept;
  std::optional<Element> pixels;
  int samples = 1;
  while (!r.at_end()) {
    const Element e = r.next();
    switch (e.tag) {
      case kSopInstance: m.sop_instance_uid = r.text(e); break;
      case kStudyInstance: m.study_instance_uid = r.text(e); break;
      case kSeriesInstance: m.series_instance_uid = r.text(e); break;
      case kInstanceNumber: {
        const std::string t = r.text(e);
        if (!t.empty()) m.instance_number = static_cast<int>(decimals(t, r, "InstanceNumber").at(0));
        break;
      }
      case kSliceThickness: {
        const auto v = decimals(r.text(e), r, "SliceThickness");
        if (!v.empty()) m.slice_thickness = v[0];
        break;
      }
      case kSpacingBetween: {
        const auto v = decimals(r.text(e), r, "SpacingBetweenSlices");
        if (!v.empty()) m.spacing_between_slices = v[0];
        break;
      }
      case kImagePosition: {
        const auto v = decimals(r.text(e), r, "ImagePositionPatient");
        if (v.size() != 3) r.fail("ImagePositionPatient needs 3 values");
        m.image_position = std::array<double, 3>{v[0], v[1], v[2]};
        break;
      }
      case kImageOrientation: {
        const auto v = decimals(r.text(e), r, "ImageOrientationPatient");
        if (v.size() != 6) r.fail("ImageOrientationPatient needs 6 values");
        m.image_orientation = std::array<double, 6>{v[0], v[1], v[2], v[3], v[4], v[5]};
        break;
      }
      case kPixelSpacing: {
        const auto v = decimals(r.text(e), r, "PixelSpacing");
        if (v.size() != 2) r.fail("PixelSpacing needs 2 values");
        m.pixel_spacing = {v[0], v[1]};
        break;
      }
      case kSamplesPerPixel: samples = r.us(e); break;
      case kRows: m.rows = r.us(e); break;
      case kColumns: m.cols = r.us(e); break;
      case kBitsAllocated: m.bits_allocated = r.us(e); break;
      case kBitsStored: m.bits_stored = r.us(e); break;
      case kPixelRepresentation: m.pixel_representation = r.us(e); break;
      case kRescaleSlope: {
        const auto v = decimals(r.text(e), r, "RescaleSlope");
        if (!v.empty()) slope = v[0];
        break;
      }
      case kRescaleIntercept: {
        const auto v = decimals(r.text(e), r, "RescaleIntercept");
        if (!v.empty()) intercept = v[0];
        break;
      }
      case kPixelData:
        if (e.length == kUndefined) r.fail("encapsulated (compressed) pixel data is not supported");
        pixels = e;
        break;
      default: break;
    }
    r.skip(e);
  }

  if (m.sop_instance_uid.empty()) r.fail("missing SOPInstanceUID");
  if (!slope || !intercept) {
    r.fail(std::string("missing ") + (!slope ? "RescaleSlope" : "RescaleIntercept") +
           " (0028,105" + (!slope ? "3" : "2") + "); refusing to assume a default");
  }
  if (*slope == 0.0 || !std::isfinite(*slope) || !std::isfinite(*intercept)) {
    r.fail("invalid rescale slope/intercept");
  }
  m.rescale_slope = *slope;
  m.rescale_intercept = *intercept;
  if (m.rows <= 0 || m.cols <= 0) r.fail("missing or zero Rows/Columns");
  if (!(m.pixel_spacing[0] > 0.0 && m.pixel_spacing[1] > 0.0)) r.fail("missing or non-positive PixelSpacing");
  if (samples != 1) r.fail("only single-sample (grayscale) images are supported");
  if (m.bits_allocated != 8 && m.bits_allocated != 16) {
    r.fail("unsupported BitsAllocated " + std::to_string(m.bits_allocated));
  }
  if (m.bits_stored == 0) m.bits_stored = m.bits_allocated;
  if (m.bits_stored > m.bits_allocated) r.fail("BitsStored exceeds BitsAllocated");
  if (!pixels) r.fail("missing PixelData");

  const std::size_t n = static_cast<std::size_t>(m.rows) * m.cols;
  const std::size_t bytes = n * (m.bits_allocated / 8);
  if (pixels->length < bytes) r.fail("PixelData shorter than Rows x Columns");
  s.stored.resize(n);
  const unsigned char* p = reinterpret_cast<const unsigned char*>(r.data(pixels->offset));
  const std::uint32_t mask = m.bits_stored >= 32 ? 0xFFFFFFFFu : ((1u << m.bits_stored) - 1u);
  const std::uint32_t sign = 1u << (m.bits_stored - 1);
  for (std::size_t i = 0; i < n; ++i) {
    std::uint32_t raw = m.bits_allocated == 16 ? std::uint32_t(p[2 * i]) | (std::uint32_t(p[2 * i + 1]) << 8)
                                               : std::uint32_t(p[i]);
    raw &= mask;
    std::int32_t v = static_cast<std::int32_t>(raw);
    if (m.pixel_representation == 1 && (raw & sign)) v -= static_cast<std::int32_t>(mask) + 1;
    s.stored[i] = v;
  }
  return s;
}

std::vector<DicomSlice> read_dicom_series(const std::string& directory) {
  if (!fs::is_directory(directory)) throw InputError("DICOM directory not found: " + directory);
  std::vector<std::string> files;
  for (const auto& entry : fs::directory_iterator(directory)) {
    if (entry.is_regular_file() && is_dicom_file(entry.path().string())) files.push_back(entry.path().string());
  }
  if (files.empty()) throw InputError("no DICOM files in " + directory);
  std::sort(files.begin(), files.end());

  std::vector<DicomSlice> slices;
  for (const auto& f : files) slices.push_back(read_dicom_file(f));

  std::set<std::string> series;
  for (const auto& s : slices) series.insert(s.meta.series_instance_uid);
  if (series.size() > 1) {
    std::string list;
    for (const auto& u : series) list += (list.empty() ? "" : ", ") + (u.empty() ? std::string("<none>") : u);
    throw DataError(directory + ": files from " + std::to_string(series.size()) +
                    " series in one directory: " + list);
  }
  std::set<std::string> sops;
  for (const auto& s : slices) {
    if (!sops.insert(s.meta.sop_instance_uid).second) {
      throw DataError(directory + ": duplicate SOPInstanceUID " + s.meta.sop_instance_uid);
    }
  }
  const DicomSliceMeta& first = slices.front().meta;
  for (const auto& s : slices) {
    if (s.meta.rows != first.rows || s.meta.cols != first.cols) {
      throw DataError(directory + ": slice " + s.meta.sop_instance_uid + " is " + std::to_string(s.meta.rows) +
                      "x" + std::to_string(s.meta.cols) + ", series is " + std::to_string(first.rows) + "x" +
                      std::to_string(first.cols));
    }
  }

  const bool positioned = std::all_of(slices.begin(), slices.end(), [](const DicomSlice& s) {
    return s.meta.image_position && s.meta.image_orientation;
  });
  if (positioned) {
    const auto normal = slice_normal(*first.image_orientation);
    std::stable_sort(slices.begin(), slices.end(), [&](const DicomSlice& a, const DicomSlice& b) {
      const double pa = dot(*a.meta.image_position, normal), pb = dot(*b.meta.image_position, normal);
      if (pa != pb) return pa < pb;
      return a.meta.instance_number.value_or(0) < b.meta.instance_number.value_or(0);
    });
  } else {
    if (!std::all_of(slices.begin(), slices.end(), [](const DicomSlice& s) { return s.meta.instance_number.has_value(); })) {
      throw DataError(directory + ": slices have neither ImagePositionPatient nor InstanceNumber to order them");
    }
    std::stable_sort(slices.begin(), slices.end(), [](const DicomSlice& a, const DicomSlice& b) {
      return *a.meta.instance_number < *b.meta.instance_number;
    });
  }
  return slices;
}

std::vector<float> rescale_and_clip(std::span<const std::int32_t> stored, const DicomSliceMeta& meta,
                                    double clip_lo, double clip_hi) {
  if (!(clip_lo < clip_hi)) throw UsageError("clip window must satisfy lo < hi");
  std::vector<float> out(stored.size());
  for (std::size_t i = 0; i < stored.size(); ++i) {
    const double hu = meta.rescale_slope * stored[i] + meta.rescale_intercept;
    out[i] = static_cast<float>(std::min(std::max(hu, clip_lo), clip_hi));
  }
  return out;
}

CtVolume assemble_volume(const std::vector<DicomSlice>& slices, double clip_lo, double clip_hi) {
  if (slices.empty()) throw DataError("empty DICOM series");
  const DicomSliceMeta& first = slices.front().meta;
  const Dims3 dims{static_cast<int>(slices.size()), first.rows, first.cols};
  CtVolume ct;
  ct.voxels = Volume3<float>(dims);
  ct.study_instance_uid = first.study_instance_uid;
  const std::size_t plane = static_cast<std::size_t>(first.rows) * first.cols;
  for (std::size_t k = 0; k < slices.size(); ++k) {
    const auto hu = rescale_and_clip(slices[k].stored, slices[k].meta, clip_lo, clip_hi);
    std::copy(hu.begin(), hu.end(), ct.voxels.data() + k * plane);
    ct.slice_order.push_back(slices[k].meta.sop_instance_uid);
  }

  std::array<double, 3> step_dir{0.0, 0.0, 1.0};
  double dz = 0.0;
  const bool positioned = std::all_of(slices.begin(), slices.end(), [](const DicomSlice& s) {
    return s.meta.image_position && s.meta.image_orientation;
  });
  if (positioned && slices.size() > 1) {
    const auto normal = slice_normal(*first.image_orientation);
    std::vector<double> gaps;
    for (std::size_t k = 1; k < slices.size(); ++k) {
      gaps.push_back(dot(*slices[k].meta.image_position, normal) - dot(*slices[k - 1].meta.image_position, normal));
    }
    std::nth_element(gaps.begin(), gaps.begin() + gaps.size() / 2, gaps.end());
    dz = gaps[gaps.size() / 2];
    const auto& p0 = *first.image_position;
    const auto& pn = *slices.back().meta.image_position;
    const double len = std::sqrt(dot({pn[0] - p0[0], pn[1] - p0[1], pn[2] - p0[2]},
                                     {pn[0] - p0[0], pn[1] - p0[1], pn[2] - p0[2]}));
    if (len > 0.0) step_dir = {(pn[0] - p0[0]) / len, (pn[1] - p0[1]) / len, (pn[2] - p0[2]) / len};
  } else if (positioned) {
    step_dir = slice_normal(*first.image_orientation);
  }
  if (!(dz > 0.0)) dz = first.spacing_between_slices.value_or(first.slice_thickness.value_or(0.0));
  if (!(dz > 0.0)) throw DataError("cannot determine slice spacing for study " + first.study_instance_uid);
  ct.spacing = {dz, first.pixel_spacing[0], first.pixel_spacing[1]};

  const std::array<double, 6> o = first.image_orientation.value_or(std::array<double, 6>{1, 0, 0, 0, 1, 0});
  const std::array<double, 3> origin = first.image_position.value_or(std::array<double, 3>{0, 0, 0});
  // LPS(i, j, k) = origin + i*dc*row_dir + j*dr*col_dir + k*dz*step_dir; RAS negates x and y.
  Affine a{};
  for (int r = 0; r < 3; ++r) {
    const double flip = r < 2 ? -1.0 : 1.0;
    a[r][0] = flip * o[r] * ct.spacing.width;
    a[r][1] = flip * o[3 + r] * ct.spacing.height;
    a[r][2] = flip * step_dir[r] * dz;
    a[r][3] = flip * origin[r];
  }
  a[3] = {0.0, 0.0, 0.0, 1.0};
  ct.affine = a;
  return ct;
}

}  // namespace covseg::ingest
