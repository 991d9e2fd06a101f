#include "covseg/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace covseg::metrics {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void require_same_shape(const Mask& a, const Mask& b, const char* what) {
  if (a.dims() != b.dims()) {
    throw ShapeError(std::string(what) + ": prediction " + to_string(a.dims()) +
                     " and ground truth " + to_string(b.dims()) + " differ in shape");
  }
}

// Lower envelope of parabolas (x - step*p)^2 + f[p] over the finite f[p].
struct Envelope {
  std::vector<int> v;
  std::vector<double> z;
  std::vector<double> f;

  void run(double* line, int n, std::ptrdiff_t stride, double step) {
    f.resize(n);
    v.resize(n);
    z.resize(n + 1);
    for (int i = 0; i < n; ++i) f[i] = line[i * stride];
    int k = -1;
    for (int q = 0; q < n; ++q) {
      if (f[q] == kInf) continue;
      const double xq = step * q;
      while (k >= 0) {
        const double xp = step * v[k];
        const double s = ((f[q] + xq * xq) - (f[v[k]] + xp * xp)) / (2.0 * (xq - xp));
        if (s <= z[k]) {
          --k;
        } else {
          ++k;
          v[k] = q;
          z[k] = s;
          z[k + 1] = kInf;
          break;
        }
      }
      if (k < 0) {
        k = 0;
        v[0] = q;
        z[0] = -kInf;
        z[1] = kInf;
      }
    }
    if (k < 0) return;
    int j = 0;
    for (int q = 0; q < n; ++q) {
      const double x = step * q;
      while (z[j + 1] < x) ++j;
      const double dx = x - step * v[j];
      line[q * stride] = dx * dx + f[v[j]];
    }
  }
};

struct Box {
  int lo[3] = {0, 0, 0};
  int hi[3] = {-1, -1, -1};

  void include(int d, int h, int w) {
    const int p[3] = {d, h, w};
    for (int a = 0; a < 3; ++a) {
      if (hi[a] < lo[a]) {
        lo[a] = hi[a] = p[a];
      } else {
        lo[a] = std::min(lo[a], p[a]);
        hi[a] = std::max(hi[a], p[a]);
      }
    }
  }
};

// Squared distances from each point of `from` to the nearest voxel of `to`,
// counted against tol2.
std::size_t count_within(const SurfaceSet& from, const SurfaceSet& to, const Box& box,
                         const Spacing3& spacing, double tol2) {
  const Dims3 sub{box.hi[0] - box.lo[0] + 1, box.hi[1] - box.lo[1] + 1, box.hi[2] - box.lo[2] + 1};
  Mask sites(sub, 0);
  for (const auto& p : to.voxels) sites.at(p[0] - box.lo[0], p[1] - box.lo[1], p[2] - box.lo[2]) = 1;
  const Volume3<double> d2 = squared_distance_transform(sites, spacing);
  const double limit = tol2 * (1.0 + 1e-12);
  std::size_t n = 0;
  for (const auto& p : from.voxels) {
    if (d2.at(p[0] - box.lo[0], p[1] - box.lo[1], p[2] - box.lo[2]) <= limit) ++n;
  }
  return n;
}

}  // namespace

double volumetric_dice(const Mask& pred, const Mask& gt) {
  require_same_shape(pred, gt, "volumetric_dice");
  std::size_t p = 0, g = 0, both = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool a = pred[i] != 0, b = gt[i] != 0;
    p += a;
    g += b;
    both += a && b;
  }
  if (p == 0 && g == 0) return 1.0;
  if (p == 0 || g == 0) return 0.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(p + g);
}

double volumetric_dice(const LabelMask& pred, const LabelMask& gt) {
  return volumetric_dice(pred.voxels, gt.voxels);
}

std::array<double, 3> SurfaceSet::position_mm(std::size_t i) const {
  const auto& v = voxels[i];
  return {v[0] * spacing.depth, v[1] * spacing.height, v[2] * spacing.width};
}

SurfaceSet extract_surface(const Mask& mask, const Spacing3& spacing) {
  SurfaceSet s;
  s.dims = mask.dims();
  s.spacing = spacing;
  const Dims3 n = mask.dims();
  auto bg = [&](int d, int h, int w) { return !n.contains(d, h, w) || mask.at(d, h, w) == 0; };
  for (int d = 0; d < n.depth; ++d) {
    for (int h = 0; h < n.height; ++h) {
      for (int w = 0; w < n.width; ++w) {
        if (mask.at(d, h, w) == 0) continue;
        if (bg(d - 1, h, w) || bg(d + 1, h, w) || bg(d, h - 1, w) || bg(d, h + 1, w) ||
            bg(d, h, w - 1) || bg(d, h, w + 1)) {
          s.voxels.push_back({d, h, w});
        }
      }
    }
  }
  return s;
}

Volume3<double> squared_distance_transform(const Mask& sites, const Spacing3& spacing) {
  const Dims3 n = sites.dims();
  Volume3<double> out(n, kInf);
  for (std::size_t i = 0; i < sites.size(); ++i) {
    if (sites[i]) out[i] = 0.0;
  }
  Envelope env;
  double* base = out.data();
  const std::ptrdiff_t sw = 1, sh = n.width, sd = static_cast<std::ptrdiff_t>(n.width) * n.height;
  for (int d = 0; d < n.depth; ++d) {
    for (int h = 0; h < n.height; ++h) env.run(base + d * sd + h * sh, n.width, sw, spacing.width);
  }
  for (int d = 0; d < n.depth; ++d) {
    for (int w = 0; w < n.width; ++w) env.run(base + d * sd + w, n.height, sh, spacing.height);
  }
  for (int h = 0; h < n.height; ++h) {
    for (int w = 0; w < n.width; ++w) env.run(base + h * sh + w, n.depth, sd, spacing.depth);
  }
  return out;
}

double normalized_surface_dice(const Mask& pred, const Mask& gt, const Spacing3& spacing,
                               double tolerance_mm) {
  require_same_shape(pred, gt, "normalized_surface_dice");
  if (!(tolerance_mm > 0.0) || !std::isfinite(tolerance_mm)) {
    throw UsageError("surface Dice tolerance must be a positive number of millimetres");
  }
  if (!(spacing.depth > 0.0 && spacing.height > 0.0 && spacing.width > 0.0)) {
    throw ShapeError("voxel spacing must be positive");
  }
  const SurfaceSet sp = extract_surface(pred, spacing);
  const SurfaceSet sg = extract_surface(gt, spacing);
  if (sp.empty() && sg.empty()) return 1.0;
  if (sp.empty() || sg.empty()) return 0.0;

  Box box;
  for (const auto& p : sp.voxels) box.include(p[0], p[1], p[2]);
  for (const auto& p : sg.voxels) box.include(p[0], p[1], p[2]);
  const double tol2 = tolerance_mm * tolerance_mm;
  const std::size_t hits = count_within(sp, sg, box, spacing, tol2) +
                           count_within(sg, sp, box, spacing, tol2);
  return static_cast<double>(hits) / static_cast<double>(sp.size() + sg.size());
}

}  // namespace covseg::metrics
