#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "covseg/core/error.hpp"

namespace covseg {

// Extent of a 3D array, axis order (depth, height, width); width is fastest.
struct Dims3 {
  int depth = 0;
  int height = 0;
  int width = 0;

  std::size_t size() const noexcept {
    return static_cast<std::size_t>(depth) * height * width;
  }
  std::size_t index(int d, int h, int w) const noexcept {
    return (static_cast<std::size_t>(d) * height + h) * width + w;
  }
  bool contains(int d, int h, int w) const noexcept {
    return d >= 0 && d < depth && h >= 0 && h < height && w >= 0 && w < width;
  }
  friend bool operator==(const Dims3&, const Dims3&) = default;
};

std::string to_string(const Dims3& dims);

// Millimetres per voxel along (depth, height, width).
struct Spacing3 {
  double depth = 1.0;
  double height = 1.0;
  double width = 1.0;
  friend bool operator==(const Spacing3&, const Spacing3&) = default;
};

template <class T>
class Volume3 {
 public:
  Volume3() = default;
  explicit Volume3(Dims3 dims, T fill = T{}) : dims_(dims), data_(dims.size(), fill) {}
  Volume3(Dims3 dims, std::vector<T> data) : dims_(dims), data_(std::move(data)) {
    if (data_.size() != dims_.size()) {
      throw ShapeError("volume data length " + std::to_string(data_.size()) +
                       " does not match " + to_string(dims_));
    }
  }

  const Dims3& dims() const noexcept { return dims_; }
  std::size_t size() const noexcept { return data_.size(); }

  T& at(int d, int h, int w) noexcept { return data_[dims_.index(d, h, w)]; }
  const T& at(int d, int h, int w) const noexcept { return data_[dims_.index(d, h, w)]; }
  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }
  std::vector<T>& values() noexcept { return data_; }
  const std::vector<T>& values() const noexcept { return data_; }

  friend bool operator==(const Volume3&, const Volume3&) = default;

 private:
  Dims3 dims_{};
  std::vector<T> data_;
};

// Voxel index (i = width, j = height, k = depth, 1) to RAS+ millimetres.
using Affine = std::array<std::array<double, 4>, 4>;

Affine diagonal_affine(const Spacing3& spacing);

// Chest CT in Hounsfield units.
struct CtVolume {
  Volume3<float> voxels;
  Spacing3 spacing;
  std::string study_instance_uid;
  // SOP instance UIDs in anatomical order; empty for volumes loaded from NIfTI.
  std::vector<std::string> slice_order;
  Affine affine = diagonal_affine(Spacing3{});

  const Dims3& dims() const noexcept { return voxels.dims(); }
};

// Binary infiltrate mask aligned voxel-for-voxel with a CtVolume.
struct LabelMask {
  Volume3<std::uint8_t> voxels;
  Spacing3 spacing;

  const Dims3& dims() const noexcept { return voxels.dims(); }
  std::size_t count_positive() const noexcept;
};

// Throws ShapeError unless every value is 0 or 1.
void require_binary(const Volume3<std::uint8_t>& mask, const char* what);

}  // namespace covseg
