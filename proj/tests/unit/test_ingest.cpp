#include <filesystem>
#include <random>

#include "covseg/core/error.hpp"
#include "covseg/ingest/annotations.hpp"
#include "covseg/ingest/dicom.hpp"
#include "covseg/ingest/manifest.hpp"
#include "covseg/ingest/nifti.hpp"
#include "doctest.h"
#include "oracles/polygon_oracle.hpp"
#include "support/dicom_fixture.hpp"

using namespace covseg;
using namespace covseg::ingest;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("covseg_" + tag + "_" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

fixture::SyntheticSlice slice_with(int instance, double z, std::int16_t base) {
  fixture::SyntheticSlice s;
  s.sop = "1.2.3.4." + std::to_string(instance);
  s.instance = instance;
  s.position = std::array<double, 3>{-100.0, -120.0, z};
  s.pixels.resize(64);
  for (int i = 0; i < 64; ++i) s.pixels[i] = static_cast<std::int16_t>(base + i);
  return s;
}

json ricord_doc(const std::vector<json>& annotations) {
  return {{"datasets", json::array({{{"annotations", annotations}}})}};
}

json polygon_entry(const std::string& study, const std::string& sop, const std::vector<std::array<double, 2>>& v,
                   const std::string& who = "A") {
  json verts = json::array();
  for (const auto& p : v) verts.push_back({p[0], p[1]});
  return {{"StudyInstanceUID", study}, {"SOPInstanceUID", sop}, {"createdById", who}, {"data", {{"vertices", verts}}}};
}

}  // namespace

TEST_CASE("series are sorted by position, falling back to instance number") {
  TempDir dir("sort");
  // written in instance order 3, 1, 2; position agrees with instance
  for (int n : {3, 1, 2}) fixture::write_dicom(dir / ("f" + std::to_string(n) + ".dcm"), slice_with(n, 5.0 * n, 0), n != 2);
  auto series = read_dicom_series(dir.path.string());
  REQUIRE(series.size() == 3);
  CHECK(*series[0].meta.instance_number == 1);
  CHECK(*series[1].meta.instance_number == 2);
  CHECK(*series[2].meta.instance_number == 3);
  CHECK(series[0].meta.rescale_slope == 1.0);
  CHECK(series[0].meta.rescale_intercept == -1024.0);

  TempDir flat("noposition");
  for (int n : {3, 1, 2}) {
    auto s = slice_with(n, 0.0, 0);
    s.position.reset();
    fixture::write_dicom(flat / ("f" + std::to_string(n) + ".dcm"), s);
  }
  series = read_dicom_series(flat.path.string());
  CHECK(*series[0].meta.instance_number == 1);
  CHECK(*series[2].meta.instance_number == 3);

  // position wins over a contradicting instance number
  TempDir pos("position");
  fixture::write_dicom(pos / "a.dcm", slice_with(1, 10.0, 0));
  fixture::write_dicom(pos / "b.dcm", slice_with(2, 0.0, 0));
  series = read_dicom_series(pos.path.string());
  CHECK(*series[0].meta.instance_number == 2);
}

TEST_CASE("reader errors are explicit") {
  CHECK_THROWS_AS(read_dicom_series("/nonexistent/covseg"), InputError);
  TempDir empty("empty");
  CHECK_THROWS_AS(read_dicom_series(empty.path.string()), InputError);

  TempDir mixed("mixed");
  auto a = slice_with(1, 0.0, 0);
  auto b = slice_with(2, 5.0, 0);
  b.series = "9.9.9";
  fixture::write_dicom(mixed / "a.dcm", a);
  fixture::write_dicom(mixed / "b.dcm", b);
  try {
    read_dicom_series(mixed.path.string());
    FAIL("expected DataError");
  } catch (const DataError& e) {
    const std::string msg = e.what();
    CHECK(msg.find(a.series) != std::string::npos);
    CHECK(msg.find("9.9.9") != std::string::npos);
  }

  TempDir noslope("noslope");
  auto c = slice_with(1, 0.0, 0);
  c.slope.reset();
  fixture::write_dicom(noslope / "c.dcm", c);
  try {
    read_dicom_file(noslope / "c.dcm");
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("RescaleSlope") != std::string::npos);
  }
  auto d = slice_with(1, 0.0, 0);
  d.intercept.reset();
  fixture::write_dicom(noslope / "d.dcm", d);
  CHECK_THROWS_AS(read_dicom_file(noslope / "d.dcm"), DataError);

  TempDir dup("dup");
  fixture::write_dicom(dup / "a.dcm", slice_with(1, 0.0, 0));
  fixture::write_dicom(dup / "b.dcm", slice_with(1, 5.0, 0));
  CHECK_THROWS_AS(read_dicom_series(dup.path.string()), DataError);
}

TEST_CASE("rescale and clip") {
  DicomSliceMeta m;
  m.rescale_slope = 1.0;
  m.rescale_intercept = -1024.0;
  std::vector<std::int32_t> px{100};
  CHECK(rescale_and_clip(px, m)[0] == -924.0f);
  m.rescale_intercept = -3024.0;
  px = {0};
  CHECK(rescale_and_clip(px, m)[0] == -2000.0f);
  m.rescale_intercept = 0.0;
  px = {2000};
  CHECK(rescale_and_clip(px, m)[0] == 500.0f);
  m.rescale_slope = 2.5;
  m.rescale_intercept = -1000.0;
  px = {-32768, 0, 300, 32767};
  const auto out = rescale_and_clip(px, m);
  CHECK(out == std::vector<float>{-2000.0f, -1000.0f, -250.0f, 500.0f});
}

TEST_CASE("assembled volume carries clipped HU, spacing and slice order") {
  TempDir dir("assemble");
  for (int n = 1; n <= 4; ++n) {
    auto s = slice_with(n, 2.5 * n, static_cast<std::int16_t>(-1500 + 800 * n));
    s.slope = 1.5;
    s.intercept = -900.0;
    fixture::write_dicom(dir / ("s" + std::to_string(n) + ".dcm"), s, n % 2 == 0);
  }
  const CtVolume ct = assemble_volume(read_dicom_series(dir.path.string()));
  CHECK(ct.dims() == Dims3{4, 8, 8});
  CHECK(ct.spacing.depth == doctest::Approx(2.5));
  CHECK(ct.spacing.height == doctest::Approx(0.7));
  CHECK(ct.slice_order.front() == "1.2.3.4.1");
  for (int k = 0; k < 4; ++k) {
    for (int i = 0; i < 64; ++i) {
      const double hu = 1.5 * (-1500 + 800 * (k + 1) + i) - 900.0;
      CHECK(ct.voxels[k * 64 + i] == static_cast<float>(std::min(std::max(hu, -2000.0), 500.0)));
    }
  }
}

TEST_CASE("NIfTI pairs round-trip") {
  TempDir dir("nifti");
  CtVolume ct;
  ct.voxels = Volume3<float>({4, 8, 8});
  std::mt19937 rng(4);
  std::uniform_real_distribution<float> hu(-2000.0f, 500.0f);
  for (float& v : ct.voxels.values()) v = hu(rng);
  ct.spacing = {5.0, 0.7, 0.7};
  ct.affine = diagonal_affine(ct.spacing);
  ct.study_instance_uid = "1.2.840.99";
  LabelMask mask;
  mask.voxels = Volume3<std::uint8_t>({4, 8, 8});
  for (std::size_t i = 0; i < mask.voxels.size(); ++i) mask.voxels[i] = (i * 7) % 3 == 0;
  mask.spacing = ct.spacing;

  const NiftiPair p = write_nifti_pair(ct, mask, dir / "out");
  CHECK(fs::path(p.ct_path).filename() == "1.2.840.99_ct.nii.gz");
  CHECK(fs::path(p.seg_path).filename() == "1.2.840.99_seg.nii.gz");
  const CtVolume back = read_nifti_ct(p.ct_path);
  CHECK(back.voxels == ct.voxels);
  CHECK(back.spacing.depth == doctest::Approx(5.0).epsilon(1e-7));
  CHECK(back.spacing.width == doctest::Approx(0.7).epsilon(1e-7));
  CHECK(std::abs(std::abs(back.affine[2][2]) - 5.0) < 1e-6);
  CHECK(std::abs(std::abs(back.affine[0][0]) - 0.7) < 1e-6);
  CHECK(std::abs(std::abs(back.affine[1][1]) - 0.7) < 1e-6);
  const NiftiImage raw = read_nifti(p.seg_path);
  CHECK(raw.datatype == 2);
  const LabelMask mback = read_nifti_mask(p.seg_path);
  CHECK(mback.voxels == mask.voxels);
  CHECK(read_nifti(p.ct_path).affine == raw.affine);

  // uncompressed variant
  write_nifti_ct(ct, dir / "plain.nii");
  CHECK(read_nifti_ct(dir / "plain.nii").voxels == ct.voxels);

  LabelMask wrong = mask;
  wrong.voxels = Volume3<std::uint8_t>({4, 8, 7});
  CHECK_THROWS_AS(write_nifti_pair(ct, wrong, dir / "out"), ShapeError);
  CHECK_THROWS_AS(read_nifti(dir / "missing.nii.gz"), InputError);
}

TEST_CASE("polygon fill matches the point-in-polygon oracle") {
  std::vector<std::uint8_t> slice(16 * 16, 0);
  const Polygon square{{2, 2}, {2, 6}, {6, 6}, {6, 2}};
  fill_polygon(square, 16, 16, slice.data());
  int count = 0;
  for (auto v : slice) count += v;
  CHECK(count == 25);
  CHECK(slice == oracle::raster({square}, 16, 16));

  std::mt19937 rng(17);
  std::uniform_int_distribution<int> coord(-8, 4 * 40);
  std::uniform_int_distribution<int> nverts(3, 9);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<Polygon> polys(1 + trial % 3);
    for (auto& p : polys) {
      const int n = nverts(rng);
      for (int i = 0; i < n; ++i) {
        const double x = coord(rng) / 4.0, y = coord(rng) / 4.0;
        p.push_back({trial % 5 == 0 ? std::round(x) : x, trial % 5 == 0 ? std::round(y) : y});
      }
    }
    std::vector<std::uint8_t> got(33 * 37, 0);
    for (const auto& p : polys) fill_polygon(p, 33, 37, got.data());
    const auto want = oracle::raster(polys, 33, 37);
    REQUIRE_MESSAGE(got == want, "trial " << trial);
  }
}

TEST_CASE("annotations rasterize onto their slices") {
  CtVolume ct;
  ct.voxels = Volume3<float>({3, 16, 16});
  ct.study_instance_uid = "S";
  ct.slice_order = {"a", "b", "c"};
  ct.spacing = {2.0, 1.0, 1.0};

  CHECK(rasterize_annotations(parse_annotations(ricord_doc({})), ct).count_positive() == 0);

  const std::vector<std::array<double, 2>> sq1{{2, 2}, {2, 6}, {6, 6}, {6, 2}};
  const std::vector<std::array<double, 2>> sq2{{4, 4}, {4, 9}, {9, 9}, {9, 4}};
  json global = {{"StudyInstanceUID", "S"}, {"SOPInstanceUID", "b"}, {"data", nullptr}};
  const auto doc = parse_annotations(
      ricord_doc({polygon_entry("S", "b", sq1), polygon_entry("S", "b", sq2, "B"), global,
                  polygon_entry("OTHER", "zz", sq1)}));
  CHECK(doc.skipped_without_geometry == 1);
  CHECK(doc.entries.size() == 3);
  const LabelMask u = rasterize_annotations(doc, ct);
  CHECK(u.dims() == ct.dims());
  const auto want = oracle::raster({{{2, 2}, {2, 6}, {6, 6}, {6, 2}}, {{4, 4}, {4, 9}, {9, 9}, {9, 4}}}, 16, 16);
  std::size_t want_count = 0;
  for (int i = 0; i < 256; ++i) {
    CHECK(u.voxels[256 + i] == want[i]);
    want_count += want[i];
    CHECK(u.voxels[i] == 0);
    CHECK(u.voxels[512 + i] == 0);
  }
  CHECK(u.count_positive() == want_count);
  CHECK(want_count <= 25u + 36u);
  CHECK(rasterize_annotations(doc, ct).voxels == u.voxels);

  const LabelMask inter = rasterize_annotations(doc, ct, AnnotatorMerge::intersection);
  CHECK(inter.count_positive() == 9);
  const auto per = rasterize_per_annotator(doc, ct);
  CHECK(per.size() == 2);
  CHECK(per.at("A").count_positive() == 25);

  const auto orphan = parse_annotations(ricord_doc({polygon_entry("S", "missing-1", sq1),
                                                    polygon_entry("S", "missing-2", sq1)}));
  try {
    rasterize_annotations(orphan, ct);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("missing-1") != std::string::npos);
    CHECK(std::string(e.what()).find("missing-2") != std::string::npos);
  }

  json two = ricord_doc({polygon_entry("S", "a", {{1, 1}, {2, 2}})});
  CHECK_THROWS_AS(parse_annotations(two), DataError);

  AnnotationSchema schema;
  schema.study_key = "study";
  schema.sop_key = "sop";
  schema.vertices_key = "points";
  json custom = json::array({{{"study", "S"}, {"sop", "c"}, {"points", {{{"x", 1}, {"y", 1}}, {{"x", 3}, {"y", 1}}, {{"x", 1}, {"y", 3}}}}}});
  const LabelMask tri = rasterize_annotations(parse_annotations(custom, schema), ct);
  CHECK(tri.count_positive() == 6);
}

TEST_CASE("dicom dataset conversion writes the pair and manifest") {
  TempDir root("convert");
  const std::string series_dir = root / "dicom/patient1/study/series1";
  const std::string other_dir = root / "dicom/patient1/study/series2";
  fs::create_directories(series_dir);
  fs::create_directories(other_dir);
  for (int n = 1; n <= 3; ++n) {
    auto s = slice_with(n, 5.0 * n, static_cast<std::int16_t>(100 * n));
    s.rows = s.cols = 16;
    s.pixels.assign(256, static_cast<std::int16_t>(1000 * n - 2000));
    fixture::write_dicom(series_dir + "/" + std::to_string(n) + ".dcm", s);
    auto o = s;
    o.series = "7.7.7";
    o.sop = "7.7.7." + std::to_string(n);
    fixture::write_dicom(other_dir + "/" + std::to_string(n) + ".dcm", o);
  }
  const fixture::SyntheticSlice proto;
  json doc = ricord_doc({polygon_entry(proto.study, "1.2.3.4.2", {{2, 2}, {2, 6}, {6, 6}, {6, 2}})});
  {
    std::ofstream out(root / "ann.json");
    out << doc.dump();
  }
  ConvertOptions opt;
  opt.dataset_name = "synthetic";
  const Manifest m = convert_dicom_dataset(root / "dicom", root / "ann.json", root / "out", opt);
  REQUIRE(m.studies.size() == 1);
  CHECK(m.studies[0].study_id == proto.study);
  CHECK(m.studies[0].positive_voxels == 25);
  CHECK(m.studies[0].shape == Dims3{3, 16, 16});
  write_manifest(m, root / "out/manifest.json");
  const Manifest back = read_manifest(root / "out/manifest.json");
  CHECK(back.studies[0].shape == m.studies[0].shape);
  CHECK(fs::equivalent(back.studies[0].ct_path, m.studies[0].ct_path));
  const CtVolume ct = read_nifti_ct(back.studies[0].ct_path);
  for (int k = 0; k < 3; ++k) {
    const double hu = std::min(std::max(1000.0 * (k + 1) - 2000.0 - 1024.0, -2000.0), 500.0);
    CHECK(ct.voxels.at(k, 5, 5) == static_cast<float>(hu));
  }
  CHECK(read_nifti_mask(back.studies[0].seg_path).count_positive() == 25);
}

TEST_CASE("NIfTI dataset import pairs by stem and re-clipping is idempotent") {
  TempDir root("import");
  fs::create_directories(root / "img");
  fs::create_directories(root / "msk");
  CtVolume ct;
  ct.voxels = Volume3<float>({2, 4, 4});
  for (std::size_t i = 0; i < ct.voxels.size(); ++i) ct.voxels[i] = -3000.0f + 250.0f * i;
  ct.spacing = {1.0, 0.8, 0.8};
  ct.affine = diagonal_affine(ct.spacing);
  write_nifti_ct(ct, root / "img/study_0001.nii.gz");
  write_nifti_ct(ct, root / "img/study_0002.nii.gz");
  write_nifti_mask(LabelMask{Volume3<std::uint8_t>({2, 4, 4}, 1), ct.spacing}, ct.affine,
                   root / "msk/study_0001_mask.nii.gz");
  ConvertOptions opt;
  const Manifest m = convert_nifti_dataset(root / "img", root / "msk", root / "out", opt);
  REQUIRE(m.studies.size() == 1);
  CHECK(m.studies[0].study_id == "study_0001");
  CHECK(m.studies[0].positive_voxels == 32);
  CtVolume once = read_nifti_ct(m.studies[0].ct_path);
  for (float v : once.voxels.values()) CHECK((v >= -2000.0f && v <= 500.0f));
  CtVolume twice = once;
  clip_volume(twice);
  CHECK(twice.voxels == once.voxels);

  fs::create_directories(root / "msk2");
  fs::copy_file(root / "msk/study_0001_mask.nii.gz", root / "msk2/study_0009_seg.nii.gz");
  CHECK_THROWS_AS(convert_nifti_dataset(root / "img", root / "msk2", root / "out2", opt), DataError);
}
