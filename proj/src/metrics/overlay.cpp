#include "covseg/metrics/overlay.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

namespace covseg::metrics {

namespace {

struct File {
  std::FILE* f;
  ~File() {
    if (f) std::fclose(f);
  }
};

void check_slice(const Dims3& dims, int slice) {
  if (slice < 0 || slice >= dims.depth) {
    throw UsageError("slice " + std::to_string(slice) + " outside [0, " +
                     std::to_string(dims.depth) + ")");
  }
}

}  // namespace

std::vector<std::uint8_t> slice_contour(const Mask& mask, int slice) {
  const Dims3 n = mask.dims();
  check_slice(n, slice);
  std::vector<std::uint8_t> out(static_cast<std::size_t>(n.height) * n.width, 0);
  auto bg = [&](int h, int w) {
    return h < 0 || h >= n.height || w < 0 || w >= n.width || mask.at(slice, h, w) == 0;
  };
  for (int h = 0; h < n.height; ++h) {
    for (int w = 0; w < n.width; ++w) {
      if (mask.at(slice, h, w) == 0) continue;
      out[h * n.width + w] = bg(h - 1, w) || bg(h + 1, w) || bg(h, w - 1) || bg(h, w + 1);
    }
  }
  return out;
}

RgbImage overlay_image(const CtVolume& ct, const Mask& gt, const Mask& pred, int slice,
                       const Window& window) {
  const Dims3 n = ct.dims();
  if (gt.dims() != n || pred.dims() != n) {
    throw ShapeError("overlay: masks must match the CT volume " + to_string(n));
  }
  if (!(window.width > 0.0)) throw UsageError("overlay: window width must be positive");
  check_slice(n, slice);
  const auto red = slice_contour(gt, slice);
  const auto green = slice_contour(pred, slice);
  RgbImage img{n.width, n.height, std::vector<std::uint8_t>(3 * n.size() / n.depth)};
  const double lo = window.center - window.width / 2.0;
  for (int h = 0; h < n.height; ++h) {
    for (int w = 0; w < n.width; ++w) {
      const double t = (ct.voxels.at(slice, h, w) - lo) / window.width;
      const auto g = static_cast<std::uint8_t>(std::lround(std::clamp(t, 0.0, 1.0) * 255.0));
      std::uint8_t* px = img.at(h, w);
      const std::size_t i = static_cast<std::size_t>(h) * n.width + w;
      if (red[i] || green[i]) {
        px[0] = red[i] ? 255 : 0;
        px[1] = green[i] ? 255 : 0;
        px[2] = 0;
      } else {
        px[0] = px[1] = px[2] = g;
      }
    }
  }
  return img;
}

void write_png(const RgbImage& image, const std::string& path) {
  File file{std::fopen(path.c_str(), "wb")};
  if (!file.f) throw InputError("cannot write " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw Error("libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw InputError("failed writing " + path);
  }
  png_init_io(png, file.f);
  png_set_IHDR(png, info, image.width, image.height, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int r = 0; r < image.height; ++r) {
    png_write_row(png, const_cast<png_bytep>(image.at(r, 0)));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

RgbImage read_png(const std::string& path) {
  File file{std::fopen(path.c_str(), "rb")};
  if (!file.f) throw InputError("cannot open " + path);
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw Error("libpng initialisation failed");
  }
  RgbImage img;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError(path + ": not a readable PNG");
  }
  png_init_io(png, file.f);
  png_read_info(png, info);
  png_set_expand(png);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_gray_to_rgb(png);
  png_read_update_info(png, info);
  img.width = static_cast<int>(png_get_image_width(png, info));
  img.height = static_cast<int>(png_get_image_height(png, info));
  img.pixels.resize(static_cast<std::size_t>(img.width) * img.height * 3);
  for (int r = 0; r < img.height; ++r) png_read_row(png, img.at(r, 0), nullptr);
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

void render_overlay(const CtVolume& ct, const Mask& gt, const Mask& pred, int slice,
                    const std::string& path, const Window& window) {
  write_png(overlay_image(ct, gt, pred, slice, window), path);
}

}  // namespace covseg::metrics
