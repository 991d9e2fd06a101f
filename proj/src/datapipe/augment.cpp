#include "covseg/datapipe/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

namespace covseg::datapipe {

namespace {

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * std::generate_canonical<double, 53>(rng);
}

bool coin(std::mt19937_64& rng, double p) { return std::generate_canonical<double, 53>(rng) < p; }

// Standard normal via Box-Muller so streams do not depend on the library's
// distribution implementation.
double normal(std::mt19937_64& rng) {
  double u1 = 0.0;
  while (u1 <= 0.0) u1 = std::generate_canonical<double, 53>(rng);
  const double u2 = std::generate_canonical<double, 53>(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::array<double, 2> apply(const Homography& h, double x, double y) {
  const double z = h[6] * x + h[7] * y + h[8];
  return {(h[0] * x + h[1] * y + h[2]) / z, (h[3] * x + h[4] * y + h[5]) / z};
}

// Solves the 8x8 system for the homography sending src[i] to dst[i].
Homography from_points(const std::array<std::array<double, 2>, 4>& src,
                       const std::array<std::array<double, 2>, 4>& dst) {
  double a[8][9] = {};
  for (int i = 0; i < 4; ++i) {
    const double x = src[i][0], y = src[i][1], u = dst[i][0], v = dst[i][1];
    double* r0 = a[2 * i];
    double* r1 = a[2 * i + 1];
    r0[0] = x; r0[1] = y; r0[2] = 1; r0[6] = -u * x; r0[7] = -u * y; r0[8] = u;
    r1[3] = x; r1[4] = y; r1[5] = 1; r1[6] = -v * x; r1[7] = -v * y; r1[8] = v;
  }
  for (int c = 0; c < 8; ++c) {
    int pivot = c;
    for (int r = c + 1; r < 8; ++r) {
      if (std::abs(a[r][c]) > std::abs(a[pivot][c])) pivot = r;
    }
    if (std::abs(a[pivot][c]) < 1e-12) throw ShapeError("degenerate perspective corners");
    std::swap(a[c], a[pivot]);
    for (int r = 0; r < 8; ++r) {
      if (r == c) continue;
      const double f = a[r][c] / a[c][c];
      for (int k = c; k < 9; ++k) a[r][k] -= f * a[c][k];
    }
  }
  Homography h{};
  for (int i = 0; i < 8; ++i) h[i] = a[i][8] / a[i][i];
  h[8] = 1.0;
  return h;
}

void photometric(Tensor& image, double contrast, double brightness) {
  double mean = 0.0;
  for (float v : image.values()) mean += v;
  mean /= static_cast<double>(image.numel());
  for (float& v : image.values()) {
    const double c = (mean + contrast * (v - mean)) * brightness;
    v = static_cast<float>(std::clamp(c, 0.0, 1.0));
  }
}

void add_noise(Tensor& image, double sigma, std::mt19937_64& rng) {
  const std::size_t plane = image.numel() / 3;
  float* p = image.data();
  for (std::size_t i = 0; i < plane; ++i) {
    const auto n = static_cast<float>(sigma * normal(rng));
    p[i] += n;
    p[i + plane] += n;
    p[i + 2 * plane] += n;
  }
}

}  // namespace

void AugmentationConfig::validate() const {
  auto finite_nonneg = [](double v, const char* what) {
    if (!std::isfinite(v) || v < 0.0) {
      throw UsageError(std::string("augmentation ") + what + " must be finite and >= 0");
    }
  };
  if (!(probability >= 0.0 && probability <= 1.0)) {
    throw UsageError("augmentation probability must lie in [0, 1]");
  }
  finite_nonneg(max_rotation_degrees, "rotation range");
  finite_nonneg(perspective_magnitude, "perspective magnitude");
  finite_nonneg(contrast_range, "contrast range");
  finite_nonneg(brightness_range, "brightness range");
  finite_nonneg(noise_sigma, "noise sigma");
  if (contrast_range >= 1.0 || brightness_range >= 1.0) {
    throw UsageError("contrast and brightness ranges must be < 1");
  }
  if (perspective_magnitude >= 0.5) throw UsageError("perspective magnitude must be < 0.5");
}

AugmentationConfig AugmentationConfig::disabled() {
  AugmentationConfig c;
  c.enabled = false;
  c.mirror = c.rotate = c.perspective = c.contrast_brightness = c.noise = false;
  return c;
}

void to_json(nlohmann::json& j, const AugmentationConfig& c) {
  j = {{"enabled", c.enabled},
       {"probability", c.probability},
       {"mirror", c.mirror},
       {"mirror_depth", c.mirror_depth},
       {"mirror_height", c.mirror_height},
       {"mirror_width", c.mirror_width},
       {"rotate", c.rotate},
       {"max_rotation_degrees", c.max_rotation_degrees},
       {"perspective", c.perspective},
       {"perspective_magnitude", c.perspective_magnitude},
       {"contrast_brightness", c.contrast_brightness},
       {"contrast_range", c.contrast_range},
       {"brightness_range", c.brightness_range},
       {"noise", c.noise},
       {"noise_sigma", c.noise_sigma}};
}

void from_json(const nlohmann::json& j, AugmentationConfig& c) {
  const AugmentationConfig d;
  c.enabled = j.value("enabled", d.enabled);
  c.probability = j.value("probability", d.probability);
  c.mirror = j.value("mirror", d.mirror);
  c.mirror_depth = j.value("mirror_depth", d.mirror_depth);
  c.mirror_height = j.value("mirror_height", d.mirror_height);
  c.mirror_width = j.value("mirror_width", d.mirror_width);
  c.rotate = j.value("rotate", d.rotate);
  c.max_rotation_degrees = j.value("max_rotation_degrees", d.max_rotation_degrees);
  c.perspective = j.value("perspective", d.perspective);
  c.perspective_magnitude = j.value("perspective_magnitude", d.perspective_magnitude);
  c.contrast_brightness = j.value("contrast_brightness", d.contrast_brightness);
  c.contrast_range = j.value("contrast_range", d.contrast_range);
  c.brightness_range = j.value("brightness_range", d.brightness_range);
  c.noise = j.value("noise", d.noise);
  c.noise_sigma = j.value("noise_sigma", d.noise_sigma);
}

Homography identity_homography() { return {1, 0, 0, 0, 1, 0, 0, 0, 1}; }

Homography rotation_homography(double degrees, int height, int width) {
  const double t = degrees * std::numbers::pi / 180.0;
  const double c = std::cos(t), s = std::sin(t);
  const double cx = (width - 1) / 2.0, cy = (height - 1) / 2.0;
  // source = R(-t) (out - centre) + centre
  return {c, s, cx - c * cx - s * cy, -s, c, cy + s * cx - c * cy, 0, 0, 1};
}

Homography corner_homography(const std::array<std::array<double, 2>, 4>& offsets, int height,
                             int width) {
  const double x1 = width - 1, y1 = height - 1;
  const std::array<std::array<double, 2>, 4> corners = {{{0, 0}, {x1, 0}, {x1, y1}, {0, y1}}};
  std::array<std::array<double, 2>, 4> moved = corners;
  for (int i = 0; i < 4; ++i) {
    moved[i][0] += offsets[i][0];
    moved[i][1] += offsets[i][1];
  }
  return from_points(corners, moved);
}

Homography compose(const Homography& a, const Homography& b) {
  Homography r{};
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      double s = 0.0;
      for (int k = 0; k < 3; ++k) s += a[i * 3 + k] * b[k * 3 + j];
      r[i * 3 + j] = s;
    }
  }
  return r;
}

void warp_inplane(ModelSample& sample, const Homography& h) {
  const Dims3 n = sample.mask.dims();
  const int channels = sample.image.dim(0);
  const std::size_t plane = static_cast<std::size_t>(n.height) * n.width;
  struct Tap {
    int x0, y0, x1, y1;
    float fx, fy;
    int nearest;  // -1 when outside
  };
  std::vector<Tap> taps(plane);
  for (int y = 0; y < n.height; ++y) {
    for (int x = 0; x < n.width; ++x) {
      const auto [sx, sy] = apply(h, x, y);
      Tap t{};
      const double cx = std::clamp(sx, 0.0, double(n.width - 1));
      const double cy = std::clamp(sy, 0.0, double(n.height - 1));
      t.x0 = static_cast<int>(std::floor(cx));
      t.y0 = static_cast<int>(std::floor(cy));
      t.x1 = std::min(t.x0 + 1, n.width - 1);
      t.y1 = std::min(t.y0 + 1, n.height - 1);
      t.fx = static_cast<float>(cx - t.x0);
      t.fy = static_cast<float>(cy - t.y0);
      const long rx = std::lround(sx), ry = std::lround(sy);
      t.nearest = (std::isfinite(sx) && std::isfinite(sy) && rx >= 0 && rx < n.width && ry >= 0 &&
                   ry < n.height)
                      ? static_cast<int>(ry * n.width + rx)
                      : -1;
      taps[y * n.width + x] = t;
    }
  }
  Tensor image(sample.image.shape());
  Volume3<std::uint8_t> mask(n, 0);
  std::vector<float> src(plane);
  for (int c = 0; c < channels; ++c) {
    for (int d = 0; d < n.depth; ++d) {
      const float* in = sample.image.data() + (static_cast<std::size_t>(c) * n.depth + d) * plane;
      float* out = image.data() + (static_cast<std::size_t>(c) * n.depth + d) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        const Tap& t = taps[i];
        const float a = in[t.y0 * n.width + t.x0], b = in[t.y0 * n.width + t.x1];
        const float e = in[t.y1 * n.width + t.x0], f = in[t.y1 * n.width + t.x1];
        const float top = a + (b - a) * t.fx, bottom = e + (f - e) * t.fx;
        out[i] = top + (bottom - top) * t.fy;
      }
    }
  }
  for (int d = 0; d < n.depth; ++d) {
    const std::uint8_t* in = &sample.mask.at(d, 0, 0);
    std::uint8_t* out = &mask.at(d, 0, 0);
    for (std::size_t i = 0; i < plane; ++i) out[i] = taps[i].nearest >= 0 ? in[taps[i].nearest] : 0;
  }
  sample.image = std::move(image);
  sample.mask = std::move(mask);
}

void mirror(ModelSample& sample, bool depth, bool height, bool width) {
  if (!depth && !height && !width) return;
  const Dims3 n = sample.mask.dims();
  const int channels = sample.image.dim(0);
  Tensor image(sample.image.shape());
  Volume3<std::uint8_t> mask(n);
  for (int d = 0; d < n.depth; ++d) {
    const int sd = depth ? n.depth - 1 - d : d;
    for (int h = 0; h < n.height; ++h) {
      const int sh = height ? n.height - 1 - h : h;
      for (int w = 0; w < n.width; ++w) {
        const int sw = width ? n.width - 1 - w : w;
        mask.at(d, h, w) = sample.mask.at(sd, sh, sw);
        for (int c = 0; c < channels; ++c) {
          image[c * n.size() + n.index(d, h, w)] = sample.image[c * n.size() + n.index(sd, sh, sw)];
        }
      }
    }
  }
  sample.image = std::move(image);
  sample.mask = std::move(mask);
}

ModelSample augment(const ModelSample& sample, const AugmentationConfig& cfg, std::mt19937_64& rng) {
  cfg.validate();
  ModelSample out = sample;
  if (!cfg.enabled) return out;
  const Dims3 n = sample.mask.dims();
  const double p = cfg.probability;

  if (cfg.mirror && coin(rng, p)) mirror(out, cfg.mirror_depth, cfg.mirror_height, cfg.mirror_width);

  Homography h = identity_homography();
  bool warped = false;
  if (cfg.rotate && coin(rng, p)) {
    const double deg = uniform(rng, -cfg.max_rotation_degrees, cfg.max_rotation_degrees);
    h = rotation_homography(deg, n.height, n.width);
    warped = true;
  }
  if (cfg.perspective && coin(rng, p)) {
    std::array<std::array<double, 2>, 4> off{};
    for (auto& o : off) {
      o[0] = uniform(rng, -cfg.perspective_magnitude, cfg.perspective_magnitude) * (n.width - 1);
      o[1] = uniform(rng, -cfg.perspective_magnitude, cfg.perspective_magnitude) * (n.height - 1);
    }
    h = compose(h, corner_homography(off, n.height, n.width));
    warped = true;
  }
  if (warped) warp_inplane(out, h);

  if (cfg.contrast_brightness && coin(rng, p)) {
    const double c = uniform(rng, 1.0 - cfg.contrast_range, 1.0 + cfg.contrast_range);
    const double b = uniform(rng, 1.0 - cfg.brightness_range, 1.0 + cfg.brightness_range);
    photometric(out.image, c, b);
  }
  if (cfg.noise && cfg.noise_sigma > 0.0 && coin(rng, p)) add_noise(out.image, cfg.noise_sigma, rng);
  return out;
}

std::uint64_t sample_seed(std::uint64_t base, std::uint64_t epoch, std::uint64_t index) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(base) ^ epoch) ^ index);
}

}  // namespace covseg::datapipe
