#include "mctnet/network.hpp"

#include <algorithm>
#include <cmath>

namespace mctnet {

int64_t NetworkConfig::total_stride() const {
  int64_t s = 2;  // stem
  for (int64_t v : stage_strides) s *= v;
  return s;
}

void NetworkConfig::validate() const {
  if (in_channels < 1) throw ConfigError("network: in_channels must be >= 1");
  if (num_classes != 2)
    throw ConfigError("network: only binary change maps are supported");
  for (int64_t c : stage_channels)
    if (c < 1) throw ConfigError("network: stage channels must be >= 1");
  for (int64_t s : stage_strides)
    if (s < 1) throw ConfigError("network: stage strides must be >= 1");
  for (size_t i = 0; i < heads.size(); ++i) {
    if (heads[i] < 1)
      throw ConfigError("network: head counts must be >= 1");
    if (stage_channels[i + 1] % heads[i] != 0)
      throw ConfigError("network: stage " + std::to_string(i + 2) + " width " +
                        std::to_string(stage_channels[i + 1]) +
                        " not divisible by " + std::to_string(heads[i]) +
                        " heads");
  }
  for (int64_t d : depth)
    if (d < 1) throw ConfigError("network: transformer depth must be >= 1");
  if (mlp_ratio < 1) throw ConfigError("network: mlp_ratio must be >= 1");
  if (fuse_reduction < 1)
    throw ConfigError("network: fuse_reduction must be >= 1");
  if (!auto_class_weights)
    for (double w : class_weights)
      if (!(w > 0)) throw ConfigError("network: class weights must be > 0");
}

MctNet::MctNet(const NetworkConfig& cfg, uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(seed);

  // Stage 1: convolutional stem, 7x7 at stride 2 (times the configured
  // stage-1 stride).
  const int64_t stem_stride = 2 * cfg_.stage_strides[0];
  stem_conv_ = Conv2d(params_, "encoder.stem.conv", rng, cfg_.in_channels,
                      cfg_.stage_channels[0], 7, stem_stride, 3, false);
  stem_bn_ = BatchNorm2d(params_, "encoder.stem.bn", cfg_.stage_channels[0]);

  for (int i = 0; i < 3; ++i) {
    stages_[size_t(i)] = ConvTransBlock(
        params_, "encoder.stage" + std::to_string(i + 2), rng,
        cfg_.stage_channels[size_t(i)], cfg_.stage_channels[size_t(i) + 1],
        cfg_.stage_strides[size_t(i) + 1], cfg_.heads[size_t(i)],
        cfg_.depth[size_t(i)], cfg_.mlp_ratio, cfg_.fuse_reduction,
        cfg_.global_branch);
  }

  // Decoder: fuse D4..D1 coarse-to-fine with two conv-BN-relu per level.
  const int64_t merge_mult = cfg_.merge == MergeMode::kConcat ? 2 : 1;
  int64_t carry = cfg_.stage_channels[3] * merge_mult;
  for (int i = 2; i >= 0; --i) {
    DecoderLevel level;
    const int64_t skip = cfg_.stage_channels[size_t(i)] * merge_mult;
    const int64_t out = cfg_.stage_channels[size_t(i)];
    const std::string name = "decoder.level" + std::to_string(i + 1);
    level.conv1 = Conv2d(params_, name + ".conv1", rng, carry + skip, out, 3, 1,
                         1, false);
    level.bn1 = BatchNorm2d(params_, name + ".bn1", out);
    level.conv2 = Conv2d(params_, name + ".conv2", rng, out, out, 3, 1, 1, false);
    level.bn2 = BatchNorm2d(params_, name + ".bn2", out);
    dec_levels_.push_back(level);
    carry = out;
  }

  // Trailing upsample-conv steps restore the stem's reduction.
  int64_t remaining = stem_stride;
  int up_index = 0;
  while (remaining > 1) {
    if (remaining % 2 != 0)
      throw ConfigError("network: stage-1 reduction must be a power of two, got " +
                        std::to_string(stem_stride));
    UpLevel up;
    const std::string name = "decoder.up" + std::to_string(up_index++);
    up.conv = Conv2d(params_, name + ".conv", rng, carry, carry, 3, 1, 1, false);
    up.bn = BatchNorm2d(params_, name + ".bn", carry);
    up_levels_.push_back(up);
    remaining /= 2;
  }

  const int64_t hidden = std::max<int64_t>(16, carry / 2);
  head1_ = Conv2d(params_, "head.conv1", rng, carry, hidden, 1, 1, 0, true);
  head2_ = Conv2d(params_, "head.conv2", rng, hidden, cfg_.num_classes, 1, 1, 0,
                  true);
}

EncoderPyramid MctNet::encode(const Tensor& image, bool training) {
  if (image.ndim() != 4 || image.dim(1) != cfg_.in_channels)
    throw DimensionError("encode: expected [N," +
                         std::to_string(cfg_.in_channels) + ",H,W], got " +
                         shape_str(image.shape()));
  const int64_t total = cfg_.total_stride();
  if (image.dim(2) % total != 0 || image.dim(3) % total != 0)
    throw ConfigError("encode: spatial extents " + std::to_string(image.dim(2)) +
                      "x" + std::to_string(image.dim(3)) +
                      " not divisible by the cumulative stride " +
                      std::to_string(total));

  EncoderPyramid p;
  p.f[0] = relu(stem_bn_.forward(stem_conv_.forward(image), training));
  for (int i = 0; i < 3; ++i)
    p.f[size_t(i) + 1] = stages_[size_t(i)].forward(p.f[size_t(i)], training);
  return p;
}

DifferencePyramid MctNet::bitemporal_merge(const EncoderPyramid& p1,
                                           const EncoderPyramid& p2,
                                           MergeMode mode) {
  DifferencePyramid d;
  for (size_t i = 0; i < 4; ++i) {
    detail::check_same_shape("bitemporal_merge", p1.f[i], p2.f[i]);
    if (mode == MergeMode::kAbsDiff) {
      d[i] = abs(sub(p1.f[i], p2.f[i]));
    } else {
      d[i] = concat({p1.f[i], p2.f[i]}, 1);
    }
  }
  return d;
}

Tensor MctNet::decode(const DifferencePyramid& d, bool training) {
  Tensor x = d[3];
  for (size_t level = 0; level < dec_levels_.size(); ++level) {
    auto& dec = dec_levels_[level];
    x = bilinear_upsample2x(x);
    const Tensor& skip = d[2 - level];
    if (x.dim(2) != skip.dim(2) || x.dim(3) != skip.dim(3))
      throw DimensionError("decode: upsampled " + shape_str(x.shape()) +
                           " does not align with skip " +
                           shape_str(skip.shape()));
    x = concat({x, skip}, 1);
    x = relu(dec.bn1.forward(dec.conv1.forward(x), training));
    x = relu(dec.bn2.forward(dec.conv2.forward(x), training));
  }
  for (auto& up : up_levels_) {
    x = bilinear_upsample2x(x);
    x = relu(up.bn.forward(up.conv.forward(x), training));
  }
  return x;
}

Tensor MctNet::classify(const Tensor& features) const {
  return head2_.forward(relu(head1_.forward(features)));
}

Tensor MctNet::forward(const Tensor& t1, const Tensor& t2, bool training) {
  detail::check_same_shape("forward", t1, t2);
  EncoderPyramid p1 = encode(t1, training);
  EncoderPyramid p2 = encode(t2, training);
  DifferencePyramid d = bitemporal_merge(p1, p2, cfg_.merge);
  Tensor features = decode(d, training);
  return classify(features);
}

std::vector<double> MctNet::loss_weights(const Tensor& mask) const {
  if (!cfg_.auto_class_weights)
    return {cfg_.class_weights[0], cfg_.class_weights[1]};
  auto w = batch_class_weights(mask);
  return {w[0], w[1]};
}

}  // namespace mctnet
