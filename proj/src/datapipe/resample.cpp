#include "covseg/datapipe/resample.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace covseg::datapipe {

namespace {

struct Taps {
  std::vector<int> lo, hi;
  std::vector<double> frac;
};

Taps linear_taps(int in, int out) {
  Taps t;
  t.lo.resize(out);
  t.hi.resize(out);
  t.frac.resize(out);
  for (int i = 0; i < out; ++i) {
    const double x = std::clamp(source_coordinate(i, in, out), 0.0, double(in - 1));
    const int lo = std::min(static_cast<int>(std::floor(x)), in - 1);
    t.lo[i] = lo;
    t.hi[i] = std::min(lo + 1, in - 1);
    t.frac[i] = x - lo;
  }
  return t;
}

std::vector<int> nearest_taps(int in, int out) {
  std::vector<int> idx(out);
  for (int i = 0; i < out; ++i) {
    const auto j = static_cast<int>(std::floor((i + 0.5) * in / out));
    idx[i] = std::clamp(j, 0, in - 1);
  }
  return idx;
}

void require_positive(const Dims3& d, const char* what) {
  if (d.depth < 1 || d.height < 1 || d.width < 1) {
    throw ShapeError(std::string(what) + ": empty extent " + to_string(d));
  }
}

}  // namespace

double source_coordinate(int i, int in, int out) {
  return (i + 0.5) * static_cast<double>(in) / out - 0.5;
}

Volume3<float> resample_trilinear(const Volume3<float>& src, const Dims3& out) {
  require_positive(src.dims(), "resample");
  require_positive(out, "resample");
  const Dims3 in = src.dims();
  if (in == out) return src;
  const Taps td = linear_taps(in.depth, out.depth);
  const Taps th = linear_taps(in.height, out.height);
  const Taps tw = linear_taps(in.width, out.width);
  Volume3<float> dst(out);
  for (int d = 0; d < out.depth; ++d) {
    const double fd = td.frac[d];
    for (int h = 0; h < out.height; ++h) {
      const double fh = th.frac[h];
      const float* r00 = &src.at(td.lo[d], th.lo[h], 0);
      const float* r01 = &src.at(td.lo[d], th.hi[h], 0);
      const float* r10 = &src.at(td.hi[d], th.lo[h], 0);
      const float* r11 = &src.at(td.hi[d], th.hi[h], 0);
      float* o = &dst.at(d, h, 0);
      for (int w = 0; w < out.width; ++w) {
        const int a = tw.lo[w], b = tw.hi[w];
        const double fw = tw.frac[w];
        auto lerp = [fw, a, b](const float* r) { return r[a] + (double(r[b]) - r[a]) * fw; };
        const double c0 = lerp(r00) + (lerp(r01) - lerp(r00)) * fh;
        const double c1 = lerp(r10) + (lerp(r11) - lerp(r10)) * fh;
        o[w] = static_cast<float>(c0 + (c1 - c0) * fd);
      }
    }
  }
  return dst;
}

Volume3<std::uint8_t> resample_nearest(const Volume3<std::uint8_t>& src, const Dims3& out) {
  require_positive(src.dims(), "resample");
  require_positive(out, "resample");
  const Dims3 in = src.dims();
  if (in == out) return src;
  const auto id = nearest_taps(in.depth, out.depth);
  const auto ih = nearest_taps(in.height, out.height);
  const auto iw = nearest_taps(in.width, out.width);
  Volume3<std::uint8_t> dst(out);
  for (int d = 0; d < out.depth; ++d) {
    for (int h = 0; h < out.height; ++h) {
      const std::uint8_t* row = &src.at(id[d], ih[h], 0);
      std::uint8_t* o = &dst.at(d, h, 0);
      for (int w = 0; w < out.width; ++w) o[w] = row[iw[w]];
    }
  }
  return dst;
}

std::pair<Volume3<float>, Volume3<std::uint8_t>> resample_pair(const CtVolume& volume,
                                                                const LabelMask& mask,
                                                                const Dims3& out) {
  const Dims3 in = volume.dims();
  if (mask.dims() != in) {
    throw ShapeError("resample_pair: mask " + to_string(mask.dims()) + " does not match volume " +
                     to_string(in));
  }
  if (in.depth < 2 || in.height < 2 || in.width < 2) {
    throw ShapeError("resample_pair: degenerate volume " + to_string(in) +
                     ", every axis needs at least two voxels");
  }
  return {resample_trilinear(volume.voxels, out), resample_nearest(mask.voxels, out)};
}

}  // namespace covseg::datapipe
