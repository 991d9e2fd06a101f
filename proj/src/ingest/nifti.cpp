#include "covseg/ingest/nifti.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <vector>

namespace covseg::ingest {

namespace {

#pragma pack(push, 1)
struct Header {
  std::int32_t sizeof_hdr;
  char data_type[10];
  char db_name[18];
  std::int32_t extents;
  std::int16_t session_error;
  char regular;
  char dim_info;
  std::int16_t dim[8];
  float intent_p1, intent_p2, intent_p3;
  std::int16_t intent_code;
  std::int16_t datatype;
  std::int16_t bitpix;
  std::int16_t slice_start;
  float pixdim[8];
  float vox_offset;
  float scl_slope;
  float scl_inter;
  std::int16_t slice_end;
  char slice_code;
  char xyzt_units;
  float cal_max, cal_min;
  float slice_duration;
  float toffset;
  std::int32_t glmax, glmin;
  char descrip[80];
  char aux_file[24];
  std::int16_t qform_code;
  std::int16_t sform_code;
  float quatern_b, quatern_c, quatern_d;
  float qoffset_x, qoffset_y, qoffset_z;
  float srow_x[4];
  float srow_y[4];
  float srow_z[4];
  char intent_name[16];
  char magic[4];
};
#pragma pack(pop)
static_assert(sizeof(Header) == 348);

constexpr std::int16_t kUint8 = 2;
constexpr std::int16_t kInt16 = 4;
constexpr std::int16_t kInt32 = 8;
constexpr std::int16_t kFloat32 = 16;
constexpr std::int16_t kFloat64 = 64;
constexpr std::int16_t kInt8 = 256;
constexpr std::int16_t kUint16 = 512;

struct GzFile {
  gzFile f = nullptr;
  GzFile(const std::string& path, const char* mode) : f(gzopen(path.c_str(), mode)) {}
  ~GzFile() {
    if (f) gzclose(f);
  }
};

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

// Rotation part of the affine as a unit quaternion (b, c, d) plus qfac, in
// the manner of the reference NIfTI library.
void set_qform(Header& h, const Affine& a) {
  double r[3][3];
  double norms[3];
  for (int j = 0; j < 3; ++j) {
    norms[j] = std::sqrt(a[0][j] * a[0][j] + a[1][j] * a[1][j] + a[2][j] * a[2][j]);
    for (int i = 0; i < 3; ++i) r[i][j] = norms[j] > 0 ? a[i][j] / norms[j] : (i == j);
  }
  const double det = r[0][0] * (r[1][1] * r[2][2] - r[1][2] * r[2][1]) -
                     r[0][1] * (r[1][0] * r[2][2] - r[1][2] * r[2][0]) +
                     r[0][2] * (r[1][0] * r[2][1] - r[1][1] * r[2][0]);
  double qfac = 1.0;
  if (det < 0) {
    qfac = -1.0;
    for (int i = 0; i < 3; ++i) r[i][2] = -r[i][2];
  }
  double qa, qb, qc, qd;
  const double trace = r[0][0] + r[1][1] + r[2][2] + 1.0;
  if (trace > 0.5) {
    qa = 0.5 * std::sqrt(trace);
    qb = 0.25 * (r[2][1] - r[1][2]) / qa;
    qc = 0.25 * (r[0][2] - r[2][0]) / qa;
    qd = 0.25 * (r[1][0] - r[0][1]) / qa;
  } else {
    const double xd = 1.0 + r[0][0] - (r[1][1] + r[2][2]);
    const double yd = 1.0 + r[1][1] - (r[0][0] + r[2][2]);
    const double zd = 1.0 + r[2][2] - (r[0][0] + r[1][1]);
    if (xd > 1.0) {
      qb = 0.5 * std::sqrt(xd);
      qc = 0.25 * (r[0][1] + r[1][0]) / qb;
      qd = 0.25 * (r[0][2] + r[2][0]) / qb;
      qa = 0.25 * (r[2][1] - r[1][2]) / qb;
    } else if (yd > 1.0) {
      qc = 0.5 * std::sqrt(yd);
      qb = 0.25 * (r[0][1] + r[1][0]) / qc;
      qd = 0.25 * (r[1][2] + r[2][1]) / qc;
      qa = 0.25 * (r[0][2] - r[2][0]) / qc;
    } else {
      qd = 0.5 * std::sqrt(zd);
      qb = 0.25 * (r[0][2] + r[2][0]) / qd;
      qc = 0.25 * (r[1][2] + r[2][1]) / qd;
      qa = 0.25 * (r[1][0] - r[0][1]) / qd;
    }
    if (qa < 0.0) {
      qb = -qb;
      qc = -qc;
      qd = -qd;
    }
  }
  h.quatern_b = static_cast<float>(qb);
  h.quatern_c = static_cast<float>(qc);
  h.quatern_d = static_cast<float>(qd);
  h.qoffset_x = static_cast<float>(a[0][3]);
  h.qoffset_y = static_cast<float>(a[1][3]);
  h.qoffset_z = static_cast<float>(a[2][3]);
  h.pixdim[0] = static_cast<float>(qfac);
  h.qform_code = 1;
}

Affine qform_affine(const Header& h) {
  const double b = h.quatern_b, c = h.quatern_c, d = h.quatern_d;
  const double a = std::sqrt(std::max(0.0, 1.0 - (b * b + c * c + d * d)));
  const double qfac = h.pixdim[0] < 0 ? -1.0 : 1.0;
  const double r[3][3] = {{a * a + b * b - c * c - d * d, 2 * (b * c - a * d), 2 * (b * d + a * c)},
                          {2 * (b * c + a * d), a * a + c * c - b * b - d * d, 2 * (c * d - a * b)},
                          {2 * (b * d - a * c), 2 * (c * d + a * b), a * a + d * d - c * c - b * b}};
  const double s[3] = {h.pixdim[1], h.pixdim[2], qfac * h.pixdim[3]};
  Affine m{};
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) m[i][j] = r[i][j] * s[j];
  }
  m[0][3] = h.qoffset_x;
  m[1][3] = h.qoffset_y;
  m[2][3] = h.qoffset_z;
  m[3] = {0, 0, 0, 1};
  return m;
}

Header make_header(const Dims3& dims, const Spacing3& spacing, const Affine& affine, std::int16_t datatype,
                   std::int16_t bitpix) {
  Header h{};
  h.sizeof_hdr = 348;
  h.regular = 'r';
  h.dim[0] = 3;
  h.dim[1] = static_cast<std::int16_t>(dims.width);
  h.dim[2] = static_cast<std::int16_t>(dims.height);
  h.dim[3] = static_cast<std::int16_t>(dims.depth);
  for (int i = 4; i < 8; ++i) h.dim[i] = 1;
  h.datatype = datatype;
  h.bitpix = bitpix;
  h.pixdim[0] = 1.0f;
  h.pixdim[1] = static_cast<float>(spacing.width);
  h.pixdim[2] = static_cast<float>(spacing.height);
  h.pixdim[3] = static_cast<float>(spacing.depth);
  for (int i = 4; i < 8; ++i) h.pixdim[i] = 1.0f;
  h.vox_offset = 352.0f;
  h.scl_slope = 1.0f;
  h.xyzt_units = 2;  // mm
  h.sform_code = 1;
  for (int j = 0; j < 4; ++j) {
    h.srow_x[j] = static_cast<float>(affine[0][j]);
    h.srow_y[j] = static_cast<float>(affine[1][j]);
    h.srow_z[j] = static_cast<float>(affine[2][j]);
  }
  set_qform(h, affine);
  std::memcpy(h.magic, "n+1\0", 4);
  return h;
}

void write_image(const std::string& path, const Header& h, const void* data, std::size_t bytes) {
  const std::filesystem::path p(path);
  if (p.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(p.parent_path(), ec);
  }
  const std::string tmp = path + ".tmp";
  {
    GzFile f(tmp, ends_with(path, ".gz") ? "wb6" : "wbT");
    if (!f.f) throw InputError("cannot write " + path);
    const char ext[4] = {0, 0, 0, 0};
    bool ok = gzwrite(f.f, &h, sizeof h) == static_cast<int>(sizeof h) && gzwrite(f.f, ext, 4) == 4;
    const char* c = static_cast<const char*>(data);
    for (std::size_t off = 0; ok && off < bytes; off += 1u << 26) {
      const auto n = static_cast<unsigned>(std::min<std::size_t>(bytes - off, 1u << 26));
      ok = gzwrite(f.f, c + off, n) == static_cast<int>(n);
    }
    if (!ok) throw InputError("failed writing " + path);
    const int rc = gzclose(f.f);
    f.f = nullptr;
    if (rc != Z_OK) throw InputError("failed writing " + path);
  }
  std::filesystem::rename(tmp, path);
}

Spacing3 spacing_of(const Header& h) {
  return {std::abs(h.pixdim[3]), std::abs(h.pixdim[2]), std::abs(h.pixdim[1])};
}

}  // namespace

void write_nifti_ct(const CtVolume& volume, const std::string& path) {
  const Header h = make_header(volume.dims(), volume.spacing, volume.affine, kFloat32, 32);
  write_image(path, h, volume.voxels.data(), volume.voxels.size() * sizeof(float));
}

void write_nifti_mask(const LabelMask& mask, const Affine& affine, const std::string& path) {
  require_binary(mask.voxels, "write_nifti_mask");
  const Header h = make_header(mask.dims(), mask.spacing, affine, kUint8, 8);
  write_image(path, h, mask.voxels.data(), mask.voxels.size());
}

NiftiImage read_nifti(const std::string& path) {
  if (!std::filesystem::exists(path)) throw InputError("NIfTI file not found: " + path);
  GzFile f(path, "rb");
  if (!f.f) throw InputError("cannot open " + path);
  Header h{};
  if (gzread(f.f, &h, sizeof h) != static_cast<int>(sizeof h)) throw DataError(path + ": truncated NIfTI header");
  if (h.sizeof_hdr != 348) throw DataError(path + ": not a little-endian NIfTI-1 file");
  if (std::memcmp(h.magic, "n+1", 3) != 0) throw DataError(path + ": only single-file NIfTI-1 (n+1) is supported");
  if (h.dim[0] < 3 || h.dim[0] > 7) throw DataError(path + ": unsupported dimensionality " + std::to_string(h.dim[0]));
  for (int i = 4; i <= h.dim[0]; ++i) {
    if (h.dim[i] > 1) throw DataError(path + ": 4D and higher images are not supported");
  }
  const Dims3 dims{h.dim[3], h.dim[2], h.dim[1]};
  if (dims.depth < 1 || dims.height < 1 || dims.width < 1) throw DataError(path + ": empty image extent");

  int bytes_per = 0;
  switch (h.datatype) {
    case kUint8: case kInt8: bytes_per = 1; break;
    case kInt16: case kUint16: bytes_per = 2; break;
    case kInt32: case kFloat32: bytes_per = 4; break;
    case kFloat64: bytes_per = 8; break;
    default: throw DataError(path + ": unsupported NIfTI datatype " + std::to_string(h.datatype));
  }
  const auto offset = static_cast<long>(h.vox_offset);
  if (offset < 348 || gzseek(f.f, offset, SEEK_SET) != offset) throw DataError(path + ": bad vox_offset");
  std::vector<unsigned char> raw(dims.size() * bytes_per);
  std::size_t got = 0;
  while (got < raw.size()) {
    const auto want = static_cast<unsigned>(std::min<std::size_t>(raw.size() - got, 1u << 26));
    const int n = gzread(f.f, raw.data() + got, want);
    if (n <= 0) throw DataError(path + ": truncated voxel data");
    got += static_cast<std::size_t>(n);
  }

  NiftiImage img;
  img.datatype = h.datatype;
  img.voxels = Volume3<double>(dims);
  const double slope = (h.scl_slope != 0.0f && std::isfinite(h.scl_slope)) ? h.scl_slope : 1.0;
  const double inter = (h.scl_slope != 0.0f && std::isfinite(h.scl_inter)) ? h.scl_inter : 0.0;
  auto load = [&](auto tag) {
    using T = decltype(tag);
    for (std::size_t i = 0; i < dims.size(); ++i) {
      T v;
      std::memcpy(&v, raw.data() + i * sizeof(T), sizeof(T));
      img.voxels[i] = static_cast<double>(v) * slope + inter;
    }
  };
  switch (h.datatype) {
    case kUint8: load(std::uint8_t{}); break;
    case kInt8: load(std::int8_t{}); break;
    case kInt16: load(std::int16_t{}); break;
    case kUint16: load(std::uint16_t{}); break;
    case kInt32: load(std::int32_t{}); break;
    case kFloat32: load(float{}); break;
    case kFloat64: load(double{}); break;
  }
  img.spacing = spacing_of(h);
  if (h.sform_code > 0) {
    for (int j = 0; j < 4; ++j) {
      img.affine[0][j] = h.srow_x[j];
      img.affine[1][j] = h.srow_y[j];
      img.affine[2][j] = h.srow_z[j];
    }
    img.affine[3] = {0, 0, 0, 1};
  } else if (h.qform_code > 0) {
    img.affine = qform_affine(h);
  } else {
    img.affine = diagonal_affine(img.spacing);
  }
  return img;
}

CtVolume read_nifti_ct(const std::string& path) {
  const NiftiImage img = read_nifti(path);
  CtVolume ct;
  ct.voxels = Volume3<float>(img.voxels.dims());
  for (std::size_t i = 0; i < img.voxels.size(); ++i) ct.voxels[i] = static_cast<float>(img.voxels[i]);
  ct.spacing = img.spacing;
  ct.affine = img.affine;
  return ct;
}

LabelMask read_nifti_mask(const std::string& path, bool binarize) {
  const NiftiImage img = read_nifti(path);
  LabelMask m;
  m.voxels = Volume3<std::uint8_t>(img.voxels.dims());
  m.spacing = img.spacing;
  for (std::size_t i = 0; i < img.voxels.size(); ++i) {
    const double v = img.voxels[i];
    if (v == 0.0 || v == 1.0) {
      m.voxels[i] = static_cast<std::uint8_t>(v);
    } else if (binarize && std::isfinite(v)) {
      m.voxels[i] = 1;
    } else {
      throw DataError(path + ": mask value " + std::to_string(v) + " outside {0, 1}");
    }
  }
  return m;
}

}  // namespace covseg::ingest
