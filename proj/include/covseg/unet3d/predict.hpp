#pragma once

#include "covseg/core/volume.hpp"
#include "covseg/datapipe/sample.hpp"
#include "covseg/nn/tensor.hpp"
#include "covseg/unet3d/model.hpp"

namespace covseg::unet3d {

// Per-voxel argmax over the class axis of (1, C, D, H, W) scores; ties go to
// the lower class.
Volume3<std::uint8_t> argmax_labels(const nn::Tensor& scores);

// Normalize, replicate, resize to the stage extent, forward in evaluation
// mode, argmax, then nearest-neighbour resize of the labels back to the
// native shape.
LabelMask predict_mask(UNet3d& model, const CtVolume& volume, const datapipe::StageSpec& stage);

}  // namespace covseg::unet3d
