#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "mctnet/blocks.hpp"
#include "mctnet/nn.hpp"

namespace mctnet {

enum class MergeMode { kAbsDiff, kConcat };

/// Architecture hyperparameters. Four encoder stages: a convolutional stem
/// stage and three ConvTrans stages. stage_strides are the strides applied
/// by each stage on top of the stem's fixed x2 reduction.
struct NetworkConfig {
  int64_t in_channels = 3;
  std::array<int64_t, 4> stage_channels{32, 64, 128, 256};
  std::array<int64_t, 4> stage_strides{1, 2, 2, 2};
  std::array<int64_t, 3> heads{2, 4, 8};  // stages 2..4
  std::array<int64_t, 3> depth{1, 1, 1};  // transformer layers, stages 2..4
  int64_t mlp_ratio = 4;
  int64_t fuse_reduction = 4;
  int64_t num_classes = 2;
  bool global_branch = true;
  MergeMode merge = MergeMode::kAbsDiff;
  bool auto_class_weights = true;           // per-batch inverse frequency
  std::array<double, 2> class_weights{1.0, 1.0};  // used when auto is off

  /// Product of all spatial reductions; input extents must divide by it.
  int64_t total_stride() const;
  void validate() const;
};

struct EncoderPyramid {
  std::array<Tensor, 4> f;
};

using DifferencePyramid = std::array<Tensor, 4>;

/// Siamese encoder (shared weights across the two temporal streams),
/// absolute-difference merge, U-Net style decoder over the difference
/// pyramid, and a two-layer 1x1-conv classifier.
class MctNet {
 public:
  MctNet(const NetworkConfig& cfg, uint64_t seed);

  /// Runs one temporal image through the shared encoder.
  EncoderPyramid encode(const Tensor& image, bool training);

  static DifferencePyramid bitemporal_merge(const EncoderPyramid& p1,
                                            const EncoderPyramid& p2,
                                            MergeMode mode);

  /// Fuses the difference pyramid coarse-to-fine and restores the input
  /// resolution with trailing upsample-conv steps.
  Tensor decode(const DifferencePyramid& d, bool training);

  /// conv1x1 -> relu -> conv1x1, yielding [N,num_classes,H,W] logits.
  Tensor classify(const Tensor& features) const;

  /// encode -> merge -> decode -> classify.
  Tensor forward(const Tensor& t1, const Tensor& t2, bool training);

  /// Class weights for a batch: fixed from the config, or inverse class
  /// frequency clamped to [0.1, 10] when auto weights are on.
  std::vector<double> loss_weights(const Tensor& mask) const;

  ParameterStore& params() { return params_; }
  const ParameterStore& params() const { return params_; }
  const NetworkConfig& config() const { return cfg_; }

 private:
  struct DecoderLevel {
    Conv2d conv1, conv2;
    BatchNorm2d bn1, bn2;
  };
  struct UpLevel {
    Conv2d conv;
    BatchNorm2d bn;
  };

  NetworkConfig cfg_;
  ParameterStore params_;

  Conv2d stem_conv_;
  BatchNorm2d stem_bn_;
  std::array<ConvTransBlock, 3> stages_;  // stages 2..4

  std::vector<DecoderLevel> dec_levels_;  // fuse D3, D2, D1
  std::vector<UpLevel> up_levels_;        // restore input resolution
  Conv2d head1_, head2_;
};

}  // namespace mctnet
