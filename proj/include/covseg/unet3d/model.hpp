#pragma once

#include <array>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "covseg/core/volume.hpp"
#include "covseg/nn/conv.hpp"
#include "covseg/nn/norm.hpp"
#include "covseg/unet3d/config.hpp"

namespace covseg::unet3d {

using nn::Buffer;
using nn::Parameter;
using nn::Tensor;

// Smallest admissible input extent per axis.
inline constexpr Dims3 kMinInput{8, 32, 32};

// Spatial extents of the encoder outputs: stem, stage1..stage4.
using PyramidShapes = std::array<Dims3, 5>;

struct FeaturePyramid {
  Tensor stem, stage1, stage2, stage3, stage4;
  PyramidShapes shapes() const;
};

// Residual unit of the video network: two 3x3x3 convolutions with batch
// normalization and an identity or strided 1x1x1 projection shortcut.
class BasicBlock {
 public:
  BasicBlock(const std::string& prefix, int in_channels, int out_channels, int stride);

  Tensor forward(const Tensor& x, bool batch_stats, bool keep);
  Tensor backward(const Tensor& dy, bool need_dx);
  void release();

  void init(std::mt19937_64& rng);
  void collect(std::vector<Parameter*>& params, std::vector<Buffer*>& buffers);

 private:
  nn::Conv3d conv1_;
  nn::BatchNorm3d bn1_;
  nn::Conv3d conv2_;
  nn::BatchNorm3d bn2_;
  bool has_projection_ = false;
  nn::Conv3d proj_;
  nn::BatchNorm3d proj_bn_;
  Tensor hidden_, out_;
};

// The 18-layer 3D residual network without its pooling and fully
// connected layers.
class Encoder {
 public:
  explicit Encoder(const UNet3dConfig& cfg);

  FeaturePyramid forward(const Tensor& x, bool batch_stats, bool keep);
  // Gradients with respect to each pyramid level; stage gradients from the
  // deeper path are added on the way down. No input gradient is produced.
  void backward(const FeaturePyramid& grads);
  void release();

  void init(std::mt19937_64& rng);
  void collect(std::vector<Parameter*>& params, std::vector<Buffer*>& buffers);

 private:
  nn::Conv3d stem_conv_;
  nn::BatchNorm3d stem_bn_;
  std::vector<std::vector<BasicBlock>> stages_;
  Tensor stem_out_;
};

// Shape plan of one upsampling step.
struct UpsampleStep {
  Dims3 input;
  Dims3 target;
  nn::Triple stride;
  nn::Triple output_padding;
};

// Four skip-connected upscaling blocks (targets stage3, stage2, stage1 and
// stem, deepest first) followed by the (1,2,2) restoration to input size.
struct DecoderPlan {
  std::array<UpsampleStep, 4> blocks;
  UpsampleStep restore;
};

// Exact-match plan for a pyramid and input extent; throws ShapeError when a
// skip shape cannot be reached by stride arithmetic.
DecoderPlan plan_decoder(const PyramidShapes& pyramid, const Dims3& input);

// Transposed convolution, skip normalization, concatenation, then two
// convolution + ReLU layers.
class UpBlock {
 public:
  UpBlock(const std::string& prefix, int in_channels, int skip_channels, int out_channels,
          nn::Triple stride, bool norm_skip);

  Tensor forward(const Tensor& x, const Tensor& skip, bool keep);
  // Returns the gradient for the block input; writes the skip gradient.
  Tensor backward(const Tensor& dy, Tensor& dskip, bool need_skip_grad);
  void release();

  void init(std::mt19937_64& rng);
  void collect(std::vector<Parameter*>& params);
  nn::ConvTranspose3d& up() noexcept { return up_; }

 private:
  nn::ConvTranspose3d up_;
  bool norm_skip_;
  nn::InstanceNorm3d skip_norm_;
  nn::Conv3d conv1_, conv2_;
  int up_channels_;
  Tensor up_out_, h1_, h2_;
};

class UNet3d {
 public:
  explicit UNet3d(UNet3dConfig cfg);

  const UNet3dConfig& config() const noexcept { return cfg_; }

  // (B, 3, D, H, W) -> (B, num_classes, D, H, W) raw class scores. With
  // `training` set, batch statistics are used outside a frozen encoder and
  // activations are kept for backward().
  Tensor forward(const Tensor& x, bool training);
  // Accumulates parameter gradients from d(scores). Requires a preceding
  // training forward.
  void backward(const Tensor& dscores);
  void release_caches();

  // Encoder alone in evaluation mode; used for shape and probe checks.
  FeaturePyramid encode(const Tensor& x);
  const std::optional<DecoderPlan>& last_plan() const noexcept { return last_plan_; }

  // Frozen: encoder parameters are excluded from optimization and its
  // normalization statistics are held fixed.
  void set_encoder_frozen(bool frozen);
  bool encoder_frozen() const noexcept { return encoder_frozen_; }

  std::vector<Parameter*> parameters();
  std::vector<Parameter*> encoder_parameters();
  std::vector<Parameter*> decoder_parameters();
  std::vector<Buffer*> buffers();
  std::vector<Buffer*> encoder_buffers();
  void zero_grad();

 private:
  void validate_input(const Tensor& x) const;

  UNet3dConfig cfg_;
  Encoder encoder_;
  nn::Conv3d middle1_, middle2_;
  std::vector<UpBlock> blocks_;
  nn::ConvTranspose3d restore_;
  nn::Conv3d head1_, head2_, classifier_;
  bool encoder_frozen_ = false;

  std::optional<DecoderPlan> last_plan_;
  bool cached_ = false;
  bool cached_encoder_ = false;
  Dims3 cached_input_;
  PyramidShapes cached_pyramid_;
  Tensor m1_, m2_, restore_out_, head_h1_, head_out_;
};

}  // namespace covseg::unet3d
