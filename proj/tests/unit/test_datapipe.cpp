#include <cmath>
#include <random>
#include <set>

#include "covseg/core/error.hpp"
#include "covseg/datapipe/augment.hpp"
#include "covseg/datapipe/batch.hpp"
#include "covseg/datapipe/resample.hpp"
#include "covseg/datapipe/sample.hpp"
#include "covseg/datapipe/split.hpp"
#include "doctest.h"

using namespace covseg;
using namespace covseg::datapipe;

namespace {

Volume3<float> random_volume(Dims3 n, std::uint64_t seed, float lo = -2000.0f, float hi = 500.0f) {
  Volume3<float> v(n);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(lo, hi);
  for (float& x : v.values()) x = u(rng);
  return v;
}

// Direct evaluation: weighted sum over the 8 neighbours of the clamped
// source point, weights from the fractional offsets.
double trilinear_oracle(const Volume3<float>& v, double z, double y, double x) {
  const Dims3 n = v.dims();
  z = std::clamp(z, 0.0, n.depth - 1.0);
  y = std::clamp(y, 0.0, n.height - 1.0);
  x = std::clamp(x, 0.0, n.width - 1.0);
  const int z0 = int(std::floor(z)), y0 = int(std::floor(y)), x0 = int(std::floor(x));
  double s = 0.0;
  for (int dz = 0; dz < 2; ++dz)
    for (int dy = 0; dy < 2; ++dy)
      for (int dx = 0; dx < 2; ++dx) {
        const int zz = std::min(z0 + dz, n.depth - 1), yy = std::min(y0 + dy, n.height - 1),
                  xx = std::min(x0 + dx, n.width - 1);
        const double wz = dz ? z - z0 : 1.0 - (z - z0);
        const double wy = dy ? y - y0 : 1.0 - (y - y0);
        const double wx = dx ? x - x0 : 1.0 - (x - x0);
        s += wz * wy * wx * v.at(zz, yy, xx);
      }
  return s;
}

ModelSample sample_with_mask(Dims3 n, std::uint64_t seed) {
  CtVolume ct;
  ct.voxels = random_volume(n, seed);
  ct.study_instance_uid = "s" + std::to_string(seed);
  LabelMask m;
  m.voxels = Volume3<std::uint8_t>(n, 0);
  std::mt19937_64 rng(seed + 1);
  for (auto& v : m.voxels.values()) v = rng() % 4 == 0;
  return prepare_sample(ct, m, StageSpec{n.depth, n.height, n.width, 1});
}

Volume3<std::uint8_t> sphere(Dims3 n, double cd, double ch, double cw, double r) {
  Volume3<std::uint8_t> m(n, 0);
  for (int d = 0; d < n.depth; ++d)
    for (int h = 0; h < n.height; ++h)
      for (int w = 0; w < n.width; ++w) {
        const double x = d - cd, y = h - ch, z = w - cw;
        m.at(d, h, w) = x * x + y * y + z * z <= r * r;
      }
  return m;
}

double dice(const Volume3<std::uint8_t>& a, const Volume3<std::uint8_t>& b) {
  double both = 0, sa = 0, sb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    both += a[i] && b[i];
    sa += a[i];
    sb += b[i];
  }
  return 2.0 * both / (sa + sb);
}

}  // namespace

TEST_CASE("resampling") {
  SUBCASE("constant mask stays constant") {
    const Volume3<std::uint8_t> ones({5, 7, 9}, 1);
    for (Dims3 out : {Dims3{8, 32, 32}, Dims3{2, 3, 4}, Dims3{18, 112, 112}}) {
      const auto r = resample_nearest(ones, out);
      CHECK(r.dims() == out);
      CHECK(std::all_of(r.values().begin(), r.values().end(), [](auto v) { return v == 1; }));
    }
  }
  SUBCASE("identity extent leaves the image unchanged") {
    const auto v = random_volume({6, 9, 11}, 1);
    const auto r = resample_trilinear(v, v.dims());
    for (std::size_t i = 0; i < v.size(); ++i) CHECK(std::abs(r[i] - v[i]) <= 1e-6);
  }
  SUBCASE("36x224x224 to 18x112x112 matches the trilinear oracle") {
    const auto v = random_volume({36, 224, 224}, 2);
    const Dims3 out{18, 112, 112};
    const auto r = resample_trilinear(v, out);
    int bad = 0;
    for (int d = 0; d < out.depth; ++d)
      for (int h = 0; h < out.height; ++h)
        for (int w = 0; w < out.width; ++w) {
          const double z = (d + 0.5) * 36 / 18 - 0.5, y = (h + 0.5) * 224 / 112 - 0.5,
                       x = (w + 0.5) * 224 / 112 - 0.5;
          const double o = trilinear_oracle(v, z, y, x);
          bad += std::abs(r.at(d, h, w) - o) > 1e-4 * std::max(1.0, std::abs(o));
        }
    CHECK(bad == 0);
  }
  SUBCASE("upsampling matches the oracle, including clamped edges") {
    const auto v = random_volume({3, 5, 4}, 3);
    const Dims3 out{7, 9, 13};
    const auto r = resample_trilinear(v, out);
    for (int d = 0; d < out.depth; ++d)
      for (int h = 0; h < out.height; ++h)
        for (int w = 0; w < out.width; ++w) {
          const double o = trilinear_oracle(v, (d + 0.5) * 3 / 7 - 0.5, (h + 0.5) * 5 / 9 - 0.5,
                                            (w + 0.5) * 4 / 13 - 0.5);
          CHECK(r.at(d, h, w) == doctest::Approx(o).epsilon(1e-6));
        }
  }
  SUBCASE("degenerate or misaligned input") {
    CtVolume ct;
    ct.voxels = Volume3<float>({1, 8, 8}, 0.0f);
    LabelMask m;
    m.voxels = Volume3<std::uint8_t>({1, 8, 8}, 0);
    CHECK_THROWS_AS(resample_pair(ct, m, {8, 32, 32}), ShapeError);
    ct.voxels = Volume3<float>({4, 8, 8}, 0.0f);
    CHECK_THROWS_AS(resample_pair(ct, m, {8, 32, 32}), ShapeError);
  }
  SUBCASE("round trip of smooth blobs keeps Dice >= 0.8") {
    const Dims3 native{40, 96, 80};
    for (double r : {8.0, 12.0, 16.0}) {
      const auto m = sphere(native, 20.3, 47.1, 39.6, r);
      const auto back = resample_nearest(resample_nearest(m, {18, 112, 112}), native);
      CHECK(dice(m, back) >= 0.8);
      const auto back2 = resample_nearest(resample_nearest(m, {8, 32, 32}), native);
      CHECK(dice(m, back2) >= 0.8);
    }
  }
}

TEST_CASE("intensity normalization and channel replication") {
  Volume3<float> v({1, 1, 3});
  v[0] = -2000.0f;
  v[1] = 500.0f;
  v[2] = -750.0f;
  const auto n = normalize_intensity(v);
  CHECK(n[0] == 0.0f);
  CHECK(n[1] == 1.0f);
  CHECK(n[2] == 0.5f);
  v[2] = 500.5f;
  CHECK_THROWS_AS(normalize_intensity(v), DataError);
  v[2] = NAN;
  CHECK_THROWS_AS(normalize_intensity(v), DataError);

  const auto img = random_volume({18, 112, 112}, 4, 0.0f, 1.0f);
  const auto t = replicate_channels(img);
  CHECK(t.shape() == std::vector<int>{3, 18, 112, 112});
  for (int c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < img.size(); i += 97) CHECK(t[c * img.size() + i] == img[i]);
  const auto z = replicate_channels(Volume3<float>({2, 3, 4}, 0.0f));
  CHECK(std::all_of(z.values().begin(), z.values().end(), [](float f) { return f == 0.0f; }));
}

TEST_CASE("prepared samples") {
  const ModelSample s = sample_with_mask({10, 40, 36}, 7);
  CHECK(s.image.shape() == std::vector<int>{3, 10, 40, 36});
  CHECK(s.native_shape == Dims3{10, 40, 36});
  const std::size_t plane = s.mask.size();
  for (std::size_t i = 0; i < plane; ++i) {
    CHECK(s.image[i] == s.image[plane + i]);
    CHECK(s.image[i] >= 0.0f);
    CHECK(s.image[i] <= 1.0f);
  }
  CHECK_THROWS_AS((StageSpec{4, 112, 112, 1}.validate()), UsageError);
  CHECK_THROWS_AS((StageSpec{18, 112, 112, 0}.validate()), UsageError);
  CHECK_NOTHROW(kStage1.validate());
  CHECK_NOTHROW(kStage2.validate());
}

TEST_CASE("augmentation") {
  const ModelSample s = sample_with_mask({8, 32, 40}, 9);

  SUBCASE("disabled is the identity") {
    std::mt19937_64 rng(1);
    const ModelSample a = augment(s, AugmentationConfig::disabled(), rng);
    CHECK(a.image == s.image);
    CHECK(a.mask == s.mask);
    AugmentationConfig off;
    off.probability = 0.0;
    const ModelSample b = augment(s, off, rng);
    CHECK(b.image == s.image);
  }
  SUBCASE("width mirror") {
    ModelSample m = s;
    mirror(m, false, false, true);
    const Dims3 n = s.mask.dims();
    for (int d = 0; d < n.depth; ++d)
      for (int h = 0; h < n.height; ++h)
        for (int w = 0; w < n.width; ++w) {
          CHECK(m.mask.at(d, h, w) == s.mask.at(d, h, n.width - 1 - w));
          CHECK(m.image[2 * n.size() + n.index(d, h, w)] ==
                s.image[2 * n.size() + n.index(d, h, n.width - 1 - w)]);
        }
  }
  SUBCASE("90 degree rotation moves a single voxel where the coordinate map says") {
    const Dims3 n{8, 33, 33};
    ModelSample one;
    one.image = nn::Tensor({3, n.depth, n.height, n.width});
    one.mask = Volume3<std::uint8_t>(n, 0);
    const int d = 3, h = 5, w = 20;
    one.mask.at(d, h, w) = 1;
    warp_inplane(one, rotation_homography(90.0, n.height, n.width));
    // Output (x, y) samples source R(-90)(p - c) + c, so the voxel lands at
    // the preimage of (w, h): x' = c + (y - c), y' = c - (x - c).
    const double c = 16.0;
    const int ex = int(c - (h - c)), ey = int(c + (w - c));
    std::size_t count = 0;
    for (auto v : one.mask.values()) count += v;
    CHECK(count == 1);
    CHECK(one.mask.at(d, ey, ex) == 1);
  }
  SUBCASE("random augmentation is deterministic and keeps masks binary") {
    AugmentationConfig cfg;
    cfg.probability = 1.0;
    for (std::uint64_t seed = 0; seed < 6; ++seed) {
      std::mt19937_64 r1(seed), r2(seed);
      const ModelSample a = augment(s, cfg, r1);
      const ModelSample b = augment(s, cfg, r2);
      CHECK(a.image == b.image);
      CHECK(a.mask == b.mask);
      for (auto v : a.mask.values()) CHECK(v <= 1);
      const std::size_t plane = a.mask.size();
      for (std::size_t i = 0; i < plane; i += 13) CHECK(a.image[i] == a.image[2 * plane + i]);
    }
  }
  SUBCASE("spatial transforms commute with channel replication") {
    AugmentationConfig spatial;
    spatial.probability = 1.0;
    spatial.contrast_brightness = false;
    spatial.noise = false;
    std::mt19937_64 rng(4);
    const ModelSample a = augment(s, spatial, rng);
    const Dims3 n = s.mask.dims();
    Volume3<float> single(n);
    std::copy(s.image.data(), s.image.data() + n.size(), single.data());
    ModelSample one_channel;
    one_channel.image = nn::Tensor({1, n.depth, n.height, n.width});
    std::copy(single.data(), single.data() + n.size(), one_channel.image.data());
    one_channel.mask = s.mask;
    std::mt19937_64 rng2(4);
    const ModelSample b = augment(one_channel, spatial, rng2);
    Volume3<float> warped(n);
    std::copy(b.image.data(), b.image.data() + n.size(), warped.data());
    CHECK(replicate_channels(warped) == a.image);
    CHECK(b.mask == a.mask);
  }
  SUBCASE("photometric steps leave the mask alone") {
    AugmentationConfig photo = AugmentationConfig::disabled();
    photo.enabled = true;
    photo.probability = 1.0;
    photo.contrast_brightness = true;
    photo.noise = true;
    std::mt19937_64 rng(2);
    const ModelSample a = augment(s, photo, rng);
    CHECK(a.mask == s.mask);
    CHECK_FALSE(a.image == s.image);
  }
  SUBCASE("invalid ranges") {
    AugmentationConfig bad;
    bad.probability = 1.5;
    CHECK_THROWS_AS(bad.validate(), UsageError);
    bad = {};
    bad.noise_sigma = INFINITY;
    CHECK_THROWS_AS(bad.validate(), UsageError);
  }
  CHECK(sample_seed(1, 2, 3) != sample_seed(1, 2, 4));
  CHECK(sample_seed(1, 2, 3) == sample_seed(1, 2, 3));
}

TEST_CASE("homography helpers") {
  const Homography r = rotation_homography(30.0, 21, 41);
  const Homography back = rotation_homography(-30.0, 21, 41);
  const Homography id = compose(r, back);
  for (int i = 0; i < 9; ++i) CHECK(id[i] == doctest::Approx(identity_homography()[i]).epsilon(1e-12));
  std::array<std::array<double, 2>, 4> off{{{1.0, -2.0}, {0.5, 0.5}, {-1.0, 1.5}, {2.0, 0.0}}};
  const Homography p = corner_homography(off, 21, 41);
  const double x = 40, y = 20;
  const double z = p[6] * x + p[7] * y + p[8];
  CHECK((p[0] * x + p[1] * y + p[2]) / z == doctest::Approx(39.0));
  CHECK((p[3] * x + p[4] * y + p[5]) / z == doctest::Approx(21.5));
}

TEST_CASE("dataset split") {
  auto ids = [](int n) {
    std::vector<std::string> v;
    for (int i = 0; i < n; ++i) v.push_back("study" + std::to_string(i));
    return v;
  };
  const DatasetSplit a = split_dataset(ids(117), 42);
  CHECK(a.train_ids.size() == 100);
  CHECK(a.tune_ids.size() == 17);
  const DatasetSplit b = split_dataset(ids(117), 42);
  CHECK(a.train_ids == b.train_ids);
  CHECK(a.tune_ids == b.tune_ids);
  const DatasetSplit c = split_dataset(ids(117), 43);
  CHECK(c.tune_ids != a.tune_ids);
  std::set<std::string> all(a.train_ids.begin(), a.train_ids.end());
  for (const auto& t : a.tune_ids) CHECK(all.insert(t).second);
  CHECK(all.size() == 117);

  const DatasetSplit d = split_dataset(ids(20), 1);
  CHECK(d.train_ids.size() == 17);
  CHECK(d.tune_ids.size() == 3);
  CHECK(split_dataset(ids(2), 1).tune_ids.size() == 1);
  CHECK_THROWS_AS(split_dataset(ids(1), 1), UsageError);
  CHECK_THROWS_AS(split_dataset({"a", "a", "b"}, 1), UsageError);

  nlohmann::json j = a;
  CHECK(j.get<DatasetSplit>().tune_ids == a.tune_ids);
}

TEST_CASE("batch assembly") {
  std::vector<ModelSample> s;
  for (int i = 0; i < 3; ++i) s.push_back(sample_with_mask({8, 32, 32}, 20 + i));
  const Batch b = make_batch(s);
  CHECK(b.images.shape() == std::vector<int>{3, 3, 8, 32, 32});
  CHECK(b.labels.size() == 3u * 8 * 32 * 32);
  CHECK(b.images[2 * 3 * 8 * 32 * 32 + 5] == s[2].image[5]);
  CHECK(b.labels[8 * 32 * 32 + 7] == s[1].mask[7]);
  s.push_back(sample_with_mask({8, 32, 36}, 30));
  CHECK_THROWS_AS(make_batch(s), ShapeError);

  const auto groups = epoch_batches(10, 4, 1, 0, true);
  REQUIRE(groups.size() == 3);
  CHECK(groups[2].size() == 2);
  std::set<std::size_t> seen;
  for (const auto& g : groups) seen.insert(g.begin(), g.end());
  CHECK(seen.size() == 10);
  CHECK(epoch_batches(10, 4, 1, 0, true) == groups);
  CHECK(epoch_batches(10, 4, 1, 1, true) != groups);
  CHECK(epoch_batches(3, 2, 1, 0, false) == std::vector<std::vector<std::size_t>>{{0, 1}, {2}});
}
