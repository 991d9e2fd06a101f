#include "covseg/datapipe/sample.hpp"

#include <algorithm>
#include <cstring>

#include "covseg/datapipe/resample.hpp"

namespace covseg::datapipe {

void StageSpec::validate() const {
  if (depth < 8 || height < 32 || width < 32) {
    throw UsageError("stage extent (" + std::to_string(depth) + ", " + std::to_string(height) +
                     ", " + std::to_string(width) + ") below the minimum (8, 32, 32)");
  }
  if (batch_size < 1) throw UsageError("stage batch size must be >= 1");
}

void to_json(nlohmann::json& j, const StageSpec& s) {
  j = {{"depth", s.depth}, {"height", s.height}, {"width", s.width}, {"batch_size", s.batch_size}};
}

void from_json(const nlohmann::json& j, StageSpec& s) {
  s.depth = j.at("depth").get<int>();
  s.height = j.at("height").get<int>();
  s.width = j.at("width").get<int>();
  s.batch_size = j.value("batch_size", 1);
}

Volume3<float> normalize_intensity(const Volume3<float>& hu) {
  Volume3<float> out(hu.dims());
  for (std::size_t i = 0; i < hu.size(); ++i) {
    const double v = hu[i];
    if (!(v >= kClipLow && v <= kClipHigh)) {
      throw DataError("intensity " + std::to_string(v) + " outside [-2000, 500] HU; clip the volume first");
    }
    out[i] = static_cast<float>((v - kClipLow) / (kClipHigh - kClipLow));
  }
  return out;
}

Tensor replicate_channels(const Volume3<float>& image) {
  const Dims3 n = image.dims();
  Tensor t({3, n.depth, n.height, n.width});
  for (int c = 0; c < 3; ++c) {
    std::memcpy(t.data() + c * n.size(), image.data(), n.size() * sizeof(float));
  }
  return t;
}

ModelSample prepare_sample(const CtVolume& volume, const LabelMask& mask, const StageSpec& spec) {
  spec.validate();
  require_binary(mask.voxels, "prepare_sample");
  auto [image, labels] = resample_pair(volume, mask, spec.dims());
  ModelSample s;
  s.image = replicate_channels(normalize_intensity(image));
  s.mask = std::move(labels);
  s.study_id = volume.study_instance_uid;
  s.native_shape = volume.dims();
  s.native_spacing = volume.spacing;
  return s;
}

}  // namespace covseg::datapipe
