#include "covseg/unet3d/predict.hpp"

#include "covseg/datapipe/resample.hpp"

namespace covseg::unet3d {

Volume3<std::uint8_t> argmax_labels(const nn::Tensor& scores) {
  if (scores.rank() != 5 || scores.shape()[0] != 1) {
    throw ShapeError("argmax expects (1, C, D, H, W) scores, got " + nn::shape_string(scores.shape()));
  }
  const int c = scores.shape()[1];
  if (c > 255) throw ShapeError("too many classes for a byte label map");
  const Dims3 dims{scores.shape()[2], scores.shape()[3], scores.shape()[4]};
  const std::size_t n = dims.size();
  Volume3<std::uint8_t> out(dims, 0);
  const float* s = scores.data();
  for (std::size_t i = 0; i < n; ++i) {
    float best = s[i];
    for (int k = 1; k < c; ++k) {
      const float v = s[k * n + i];
      if (v > best) {
        best = v;
        out[i] = static_cast<std::uint8_t>(k);
      }
    }
  }
  return out;
}

LabelMask predict_mask(UNet3d& model, const CtVolume& volume, const datapipe::StageSpec& stage) {
  stage.validate();
  const Dims3 native = volume.dims();
  if (native.depth < 2 || native.height < 2 || native.width < 2) {
    throw ShapeError("cannot resample a volume of extent " + to_string(native));
  }
  const Volume3<float> image = datapipe::resample_trilinear(datapipe::normalize_intensity(volume.voxels), stage.dims());
  nn::Tensor x = datapipe::replicate_channels(image);
  x.reshape({1, 3, stage.depth, stage.height, stage.width});
  const nn::Tensor scores = model.forward(x, false);
  Volume3<std::uint8_t> labels = argmax_labels(scores);
  if (model.config().num_classes > 2) {
    for (auto& v : labels.values()) v = v > 0;
  }
  LabelMask m;
  m.voxels = datapipe::resample_nearest(labels, native);
  m.spacing = volume.spacing;
  return m;
}

}  // namespace covseg::unet3d
