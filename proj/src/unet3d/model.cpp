#include "covseg/unet3d/model.hpp"

#include <cmath>

#include "covseg/core/error.hpp"

namespace covseg::unet3d {

using nn::Triple;

namespace {

constexpr Triple kCube3{3, 3, 3};
constexpr Triple kOnes{1, 1, 1};
constexpr Triple kZeros{0, 0, 0};

Dims3 spatial(const Tensor& t) { return {t.dim(2), t.dim(3), t.dim(4)}; }

void append(std::vector<Parameter*>& dst, const std::vector<Parameter*>& src) {
  dst.insert(dst.end(), src.begin(), src.end());
}

UpsampleStep make_step(const Dims3& in, const Dims3& target, Triple stride, Triple kernel,
                       Triple pad, const char* what) {
  const Dims3 base = nn::conv_transpose_output_dims(in, kernel, stride, pad, kZeros);
  const Triple op{target.depth - base.depth, target.height - base.height,
                  target.width - base.width};
  if (op.d < 0 || op.d >= stride.d || op.h < 0 || op.h >= stride.h || op.w < 0 ||
      op.w >= stride.w) {
    throw ShapeError(std::string(what) + ": cannot reach skip shape " + to_string(target) +
                     " from " + to_string(in));
  }
  return {in, target, stride, op};
}

}  // namespace

PyramidShapes FeaturePyramid::shapes() const {
  return {spatial(stem), spatial(stage1), spatial(stage2), spatial(stage3), spatial(stage4)};
}

// ------------------------------------------------------------ BasicBlock

BasicBlock::BasicBlock(const std::string& prefix, int in_channels, int out_channels, int stride)
    : conv1_(prefix + ".conv1.0", in_channels, out_channels, kCube3, {stride, stride, stride},
             kOnes, false),
      bn1_(prefix + ".conv1.1", out_channels),
      conv2_(prefix + ".conv2.0", out_channels, out_channels, kCube3, kOnes, kOnes, false),
      bn2_(prefix + ".conv2.1", out_channels),
      has_projection_(stride != 1 || in_channels != out_channels) {
  if (has_projection_) {
    proj_ = nn::Conv3d(prefix + ".downsample.0", in_channels, out_channels, kOnes,
                       {stride, stride, stride}, kZeros, false);
    proj_bn_ = nn::BatchNorm3d(prefix + ".downsample.1", out_channels);
  }
}

Tensor BasicBlock::forward(const Tensor& x, bool batch_stats, bool keep) {
  Tensor h = bn1_.forward(conv1_.forward(x, keep), batch_stats, keep);
  nn::relu_inplace(h);
  Tensor y = bn2_.forward(conv2_.forward(h, keep), batch_stats, keep);
  if (has_projection_) {
    nn::add_inplace(y, proj_bn_.forward(proj_.forward(x, keep), batch_stats, keep));
  } else {
    nn::add_inplace(y, x);
  }
  nn::relu_inplace(y);
  if (keep) {
    hidden_ = h;
    out_ = y;
  }
  return y;
}

Tensor BasicBlock::backward(const Tensor& dy, bool need_dx) {
  Tensor g = dy;
  nn::relu_backward_inplace(g, out_);
  Tensor dh = conv2_.backward(bn2_.backward(g, true), true);
  nn::relu_backward_inplace(dh, hidden_);
  Tensor dx = conv1_.backward(bn1_.backward(dh, true), need_dx);
  if (has_projection_) {
    Tensor dp = proj_.backward(proj_bn_.backward(g, true), need_dx);
    if (need_dx) nn::add_inplace(dx, dp);
  } else if (need_dx) {
    nn::add_inplace(dx, g);
  }
  return dx;
}

void BasicBlock::release() {
  conv1_.release();
  bn1_.release();
  conv2_.release();
  bn2_.release();
  if (has_projection_) {
    proj_.release();
    proj_bn_.release();
  }
  hidden_ = Tensor();
  out_ = Tensor();
}

void BasicBlock::init(std::mt19937_64& rng) {
  conv1_.init_kaiming(rng);
  conv2_.init_kaiming(rng);
  bn1_.reset();
  bn2_.reset();
  if (has_projection_) {
    proj_.init_kaiming(rng);
    proj_bn_.reset();
  }
}

void BasicBlock::collect(std::vector<Parameter*>& params, std::vector<Buffer*>& buffers) {
  auto add = [&](nn::BatchNorm3d& bn) {
    append(params, bn.parameters());
    for (Buffer* b : bn.buffers()) buffers.push_back(b);
  };
  append(params, conv1_.parameters());
  add(bn1_);
  append(params, conv2_.parameters());
  add(bn2_);
  if (has_projection_) {
    append(params, proj_.parameters());
    add(proj_bn_);
  }
}

// --------------------------------------------------------------- Encoder

Encoder::Encoder(const UNet3dConfig& cfg)
    : stem_conv_("encoder.stem.0", 3, cfg.encoder_channels[0], {3, 7, 7}, {1, 2, 2}, {1, 3, 3},
                 false),
      stem_bn_("encoder.stem.1", cfg.encoder_channels[0]) {
  for (int s = 0; s < 4; ++s) {
    const int in = cfg.encoder_channels[s];
    const int out = cfg.encoder_channels[s + 1];
    const int stride = s == 0 ? 1 : 2;
    const std::string prefix = "encoder.layer" + std::to_string(s + 1);
    std::vector<BasicBlock> blocks;
    blocks.emplace_back(prefix + ".0", in, out, stride);
    blocks.emplace_back(prefix + ".1", out, out, 1);
    stages_.push_back(std::move(blocks));
  }
}

FeaturePyramid Encoder::forward(const Tensor& x, bool batch_stats, bool keep) {
  FeaturePyramid p;
  p.stem = stem_bn_.forward(stem_conv_.forward(x, keep), batch_stats, keep);
  nn::relu_inplace(p.stem);
  if (keep) stem_out_ = p.stem;
  Tensor* outputs[4] = {&p.stage1, &p.stage2, &p.stage3, &p.stage4};
  const Tensor* in = &p.stem;
  for (int s = 0; s < 4; ++s) {
    Tensor h = stages_[s][0].forward(*in, batch_stats, keep);
    *outputs[s] = stages_[s][1].forward(h, batch_stats, keep);
    in = outputs[s];
  }
  return p;
}

void Encoder::backward(const FeaturePyramid& grads) {
  const Tensor* skip_grads[4] = {&grads.stage1, &grads.stage2, &grads.stage3, &grads.stage4};
  Tensor g;
  for (int s = 3; s >= 0; --s) {
    if (s == 3) {
      g = *skip_grads[3];
    } else if (!skip_grads[s]->empty()) {
      nn::add_inplace(g, *skip_grads[s]);
    }
    g = stages_[s][1].backward(g, true);
    g = stages_[s][0].backward(g, true);
  }
  if (!grads.stem.empty()) nn::add_inplace(g, grads.stem);
  nn::relu_backward_inplace(g, stem_out_);
  stem_conv_.backward(stem_bn_.backward(g, true), false);
}

void Encoder::release() {
  stem_conv_.release();
  stem_bn_.release();
  stem_out_ = Tensor();
  for (auto& stage : stages_) {
    for (auto& block : stage) block.release();
  }
}

void Encoder::init(std::mt19937_64& rng) {
  stem_conv_.init_kaiming(rng);
  stem_bn_.reset();
  for (auto& stage : stages_) {
    for (auto& block : stage) block.init(rng);
  }
}

void Encoder::collect(std::vector<Parameter*>& params, std::vector<Buffer*>& buffers) {
  append(params, stem_conv_.parameters());
  append(params, stem_bn_.parameters());
  for (Buffer* b : stem_bn_.buffers()) buffers.push_back(b);
  for (auto& stage : stages_) {
    for (auto& block : stage) block.collect(params, buffers);
  }
}

// ---------------------------------------------------------- decoder plan

DecoderPlan plan_decoder(const PyramidShapes& pyramid, const Dims3& input) {
  for (std::size_t i = 1; i < pyramid.size(); ++i) {
    const Dims3& a = pyramid[i - 1];
    const Dims3& b = pyramid[i];
    if (b.depth > a.depth || b.height > a.height || b.width > a.width) {
      throw ShapeError("feature pyramid grows between levels " + std::to_string(i - 1) + " and " +
                       std::to_string(i));
    }
  }
  DecoderPlan plan;
  // deepest first: stage4 -> stage3 -> stage2 -> stage1 -> stem
  const Dims3 targets[4] = {pyramid[3], pyramid[2], pyramid[1], pyramid[0]};
  const Triple strides[4] = {{2, 2, 2}, {2, 2, 2}, {2, 2, 2}, {1, 1, 1}};
  Dims3 in = pyramid[4];
  for (int i = 0; i < 4; ++i) {
    plan.blocks[i] = make_step(in, targets[i], strides[i], kCube3, kOnes, "decoder block");
    in = targets[i];
  }
  plan.restore = make_step(in, input, {1, 2, 2}, {1, 3, 3}, {0, 1, 1}, "restoration upsample");
  return plan;
}

// --------------------------------------------------------------- UpBlock

UpBlock::UpBlock(const std::string& prefix, int in_channels, int skip_channels, int out_channels,
                 Triple stride, bool norm_skip)
    : up_(prefix + ".up", in_channels, out_channels, kCube3, stride, kOnes, true),
      norm_skip_(norm_skip),
      conv1_(prefix + ".conv1", out_channels + skip_channels, out_channels, kCube3, kOnes, kOnes,
             true),
      conv2_(prefix + ".conv2", out_channels, out_channels, kCube3, kOnes, kOnes, true),
      up_channels_(out_channels) {}

Tensor UpBlock::forward(const Tensor& x, const Tensor& skip, bool keep) {
  Tensor u = up_.forward(x, spatial(skip), keep);
  nn::relu_inplace(u);
  Tensor cat = norm_skip_ ? nn::concat_channels(u, skip_norm_.forward(skip, keep))
                          : nn::concat_channels(u, skip);
  Tensor h1 = conv1_.forward(cat, keep);
  nn::relu_inplace(h1);
  Tensor h2 = conv2_.forward(h1, keep);
  nn::relu_inplace(h2);
  if (keep) {
    up_out_ = std::move(u);
    h1_ = h1;
    h2_ = h2;
  }
  return h2;
}

Tensor UpBlock::backward(const Tensor& dy, Tensor& dskip, bool need_skip_grad) {
  Tensor g = dy;
  nn::relu_backward_inplace(g, h2_);
  Tensor d1 = conv2_.backward(g, true);
  nn::relu_backward_inplace(d1, h1_);
  Tensor dcat = conv1_.backward(d1, true);
  Tensor du, ds;
  nn::split_channels(dcat, up_channels_, du, ds);
  nn::relu_backward_inplace(du, up_out_);
  Tensor dx = up_.backward(du, true);
  if (need_skip_grad) {
    dskip = norm_skip_ ? skip_norm_.backward(ds) : std::move(ds);
  } else {
    dskip = Tensor();
  }
  return dx;
}

void UpBlock::release() {
  up_.release();
  skip_norm_.release();
  conv1_.release();
  conv2_.release();
  up_out_ = h1_ = h2_ = Tensor();
}

void UpBlock::init(std::mt19937_64& rng) {
  up_.init_kaiming(rng);
  conv1_.init_kaiming(rng);
  conv2_.init_kaiming(rng);
}

void UpBlock::collect(std::vector<Parameter*>& params) {
  append(params, up_.parameters());
  append(params, conv1_.parameters());
  append(params, conv2_.parameters());
}

// ---------------------------------------------------------------- UNet3d

UNet3d::UNet3d(UNet3dConfig cfg) : cfg_((cfg.validate(), std::move(cfg))), encoder_(cfg_) {
  const auto& enc = cfg_.encoder_channels;
  const auto& dec = cfg_.decoder_channels;
  middle1_ = nn::Conv3d("decoder.middle.0", enc[4], enc[4], kCube3, kOnes, kOnes, true);
  middle2_ = nn::Conv3d("decoder.middle.1", enc[4], enc[4], kCube3, kOnes, kOnes, true);
  const int skips[4] = {enc[3], enc[2], enc[1], enc[0]};
  int in = enc[4];
  for (int i = 0; i < 4; ++i) {
    const Triple stride = i < 3 ? Triple{2, 2, 2} : Triple{1, 1, 1};
    blocks_.emplace_back("decoder.up" + std::to_string(i), in, skips[i], dec[i], stride,
                         cfg_.instance_norm_on_skip);
    in = dec[i];
  }
  restore_ = nn::ConvTranspose3d("decoder.restore", dec[3], cfg_.head_channels, {1, 3, 3},
                                 {1, 2, 2}, {0, 1, 1}, true);
  head1_ = nn::Conv3d("head.res.0", cfg_.head_channels, cfg_.head_channels, kCube3, kOnes, kOnes,
                      true);
  head2_ = nn::Conv3d("head.res.1", cfg_.head_channels, cfg_.head_channels, kCube3, kOnes, kOnes,
                      true);
  classifier_ = nn::Conv3d("head.classifier", cfg_.head_channels, cfg_.num_classes, kOnes, kOnes,
                           kZeros, true);

  std::mt19937_64 rng(cfg_.init_seed);
  encoder_.init(rng);
  middle1_.init_kaiming(rng);
  middle2_.init_kaiming(rng);
  for (auto& b : blocks_) b.init(rng);
  restore_.init_kaiming(rng);
  head1_.init_kaiming(rng);
  head2_.init_kaiming(rng);
  classifier_.init_kaiming(rng);
}

void UNet3d::validate_input(const Tensor& x) const {
  if (x.rank() != 5) throw ShapeError("model input must be (B, 3, D, H, W), got " + nn::shape_string(x.shape()));
  if (x.dim(1) != 3) {
    throw ShapeError("model input must have 3 channels, got " + std::to_string(x.dim(1)));
  }
  const char* names[3] = {"depth", "height", "width"};
  const int got[3] = {x.dim(2), x.dim(3), x.dim(4)};
  const int need[3] = {kMinInput.depth, kMinInput.height, kMinInput.width};
  for (int a = 0; a < 3; ++a) {
    if (got[a] < need[a]) {
      throw ShapeError(std::string("model input ") + names[a] + " " + std::to_string(got[a]) +
                       " is below the minimum " + std::to_string(need[a]));
    }
  }
  for (float v : x.values()) {
    if (!std::isfinite(v)) throw ShapeError("model input contains non-finite values");
  }
}

FeaturePyramid UNet3d::encode(const Tensor& x) {
  validate_input(x);
  return encoder_.forward(x, false, false);
}

Tensor UNet3d::forward(const Tensor& x, bool training) {
  validate_input(x);
  release_caches();
  const bool train_encoder = training && !encoder_frozen_;
  const Dims3 input = spatial(x);
  FeaturePyramid pyr = encoder_.forward(x, train_encoder, train_encoder);
  const DecoderPlan plan = plan_decoder(pyr.shapes(), input);
  last_plan_ = plan;

  Tensor h = middle1_.forward(pyr.stage4, training);
  nn::relu_inplace(h);
  if (training) m1_ = h;
  h = middle2_.forward(h, training);
  nn::relu_inplace(h);
  if (training) m2_ = h;

  const Tensor* skips[4] = {&pyr.stage3, &pyr.stage2, &pyr.stage1, &pyr.stem};
  for (int i = 0; i < 4; ++i) h = blocks_[i].forward(h, *skips[i], training);

  Tensor r = restore_.forward(h, input, training);
  nn::relu_inplace(r);
  Tensor a = head1_.forward(r, training);
  nn::relu_inplace(a);
  Tensor b = head2_.forward(a, training);
  nn::add_inplace(b, r);
  nn::relu_inplace(b);
  Tensor scores = classifier_.forward(b, training);
  if (training) {
    restore_out_ = std::move(r);
    head_h1_ = std::move(a);
    head_out_ = std::move(b);
    cached_ = true;
    cached_encoder_ = train_encoder;
  }
  return scores;
}

void UNet3d::backward(const Tensor& dscores) {
  if (!cached_) throw ShapeError("backward() requires a preceding training forward()");
  Tensor g = classifier_.backward(dscores, true);
  nn::relu_backward_inplace(g, head_out_);
  Tensor da = head2_.backward(g, true);
  nn::relu_backward_inplace(da, head_h1_);
  Tensor dr = head1_.backward(da, true);
  nn::add_inplace(dr, g);
  nn::relu_backward_inplace(dr, restore_out_);
  Tensor dh = restore_.backward(dr, true);

  const bool to_encoder = cached_encoder_;
  Tensor dskip[4];
  for (int i = 3; i >= 0; --i) dh = blocks_[i].backward(dh, dskip[i], to_encoder);

  nn::relu_backward_inplace(dh, m2_);
  dh = middle2_.backward(dh, true);
  nn::relu_backward_inplace(dh, m1_);
  dh = middle1_.backward(dh, to_encoder);

  if (to_encoder) {
    FeaturePyramid grads;
    grads.stage4 = std::move(dh);
    grads.stage3 = std::move(dskip[0]);
    grads.stage2 = std::move(dskip[1]);
    grads.stage1 = std::move(dskip[2]);
    grads.stem = std::move(dskip[3]);
    encoder_.backward(grads);
  }
  release_caches();
}

void UNet3d::release_caches() {
  encoder_.release();
  middle1_.release();
  middle2_.release();
  for (auto& b : blocks_) b.release();
  restore_.release();
  head1_.release();
  head2_.release();
  classifier_.release();
  m1_ = m2_ = restore_out_ = head_h1_ = head_out_ = Tensor();
  cached_ = false;
  cached_encoder_ = false;
}

void UNet3d::set_encoder_frozen(bool frozen) {
  encoder_frozen_ = frozen;
  for (Parameter* p : encoder_parameters()) p->trainable = !frozen;
}

std::vector<Parameter*> UNet3d::encoder_parameters() {
  std::vector<Parameter*> params;
  std::vector<Buffer*> buffers;
  encoder_.collect(params, buffers);
  return params;
}

std::vector<Buffer*> UNet3d::encoder_buffers() {
  std::vector<Parameter*> params;
  std::vector<Buffer*> buffers;
  encoder_.collect(params, buffers);
  return buffers;
}

std::vector<Parameter*> UNet3d::decoder_parameters() {
  std::vector<Parameter*> params;
  append(params, middle1_.parameters());
  append(params, middle2_.parameters());
  for (auto& b : blocks_) b.collect(params);
  append(params, restore_.parameters());
  append(params, head1_.parameters());
  append(params, head2_.parameters());
  append(params, classifier_.parameters());
  return params;
}

std::vector<Parameter*> UNet3d::parameters() {
  std::vector<Parameter*> params = encoder_parameters();
  append(params, decoder_parameters());
  return params;
}

std::vector<Buffer*> UNet3d::buffers() { return encoder_buffers(); }

void UNet3d::zero_grad() {
  for (Parameter* p : parameters()) p->zero_grad();
}

}  // namespace covseg::unet3d
