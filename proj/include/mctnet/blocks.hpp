#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mctnet/nn.hpp"

namespace mctnet {

/// Residual unit H(x) = relu(BN(W2 * relu(BN(W1 * x))) + Wi * x), where W1
/// carries the block's stride and Wi is a 1x1 projection when the stride or
/// the channel count changes, otherwise the identity.
struct BasicBlock {
  Conv2d conv1, conv2;
  BatchNorm2d bn1, bn2;
  std::optional<Conv2d> shortcut;
  int64_t stride = 1;

  BasicBlock() = default;
  BasicBlock(ParameterStore& ps, const std::string& name, Rng& rng, int64_t cin,
             int64_t cout, int64_t stride);
  Tensor forward(const Tensor& x, bool training);
};

/// Strided 3x3 convolution followed by flattening into [N, H'*W', C] tokens.
struct TokenEmbed {
  Conv2d conv;

  TokenEmbed() = default;
  TokenEmbed(ParameterStore& ps, const std::string& name, Rng& rng, int64_t cin,
             int64_t cout, int64_t stride);
  /// Returns the token sequence; spatial extents of the token map come out
  /// through h_out/w_out.
  Tensor forward(const Tensor& x, int64_t* h_out, int64_t* w_out) const;
};

/// Multi-head scaled dot-product self-attention over [N,L,C] tokens:
/// per head softmax(Q K^T / sqrt(d_head)) V, heads concatenated and
/// projected by Wo. No masking.
struct MultiHeadSelfAttention {
  Linear wq, wk, wv, wo;
  int64_t n_heads = 1;

  MultiHeadSelfAttention() = default;
  MultiHeadSelfAttention(ParameterStore& ps, const std::string& name, Rng& rng,
                         int64_t channels, int64_t n_heads);
  Tensor forward(const Tensor& tokens) const;
};

/// Token MLP with a depthwise-convolution spatial mixer:
/// out = GELU(Flatten(Reshape2D(x W3) * Wd)) W4.
struct TransformerMlp {
  Linear expand;        // C -> ratio*C
  DepthwiseConv2d dw;   // 3x3, stride 1, pad 1 on the expanded map
  Linear compress;      // ratio*C -> C

  TransformerMlp() = default;
  TransformerMlp(ParameterStore& ps, const std::string& name, Rng& rng,
                 int64_t channels, int64_t ratio);
  Tensor forward(const Tensor& tokens, int64_t h, int64_t w) const;
};

/// Pre-norm encoder layer: T = T + MSA(LN(T)); T = T + MLP(LN(T)).
struct TransformerEncoderLayer {
  LayerNorm ln1, ln2;
  MultiHeadSelfAttention attn;
  TransformerMlp mlp;

  TransformerEncoderLayer() = default;
  TransformerEncoderLayer(ParameterStore& ps, const std::string& name, Rng& rng,
                          int64_t channels, int64_t n_heads, int64_t mlp_ratio);
  Tensor forward(const Tensor& tokens, int64_t h, int64_t w) const;
};

/// Stack of encoder layers; the final tokens are reshaped back into a
/// [N,C,H,W] feature map.
struct TransformerEncoder {
  std::vector<TransformerEncoderLayer> layers;

  TransformerEncoder() = default;
  TransformerEncoder(ParameterStore& ps, const std::string& name, Rng& rng,
                     int64_t channels, int64_t n_heads, int64_t mlp_ratio,
                     int64_t depth);
  Tensor forward(const Tensor& tokens, int64_t h, int64_t w) const;
};

/// Selective-kernel style gate: s = GAP(a + b); z = relu(BN(compact(s)));
/// per-channel softmax over the two head outputs yields convex weights that
/// blend the branches.
struct AdaptiveFusion {
  Linear compact;
  BatchNorm2d compact_bn;
  Linear head_local, head_global;

  AdaptiveFusion() = default;
  AdaptiveFusion(ParameterStore& ps, const std::string& name, Rng& rng,
                 int64_t channels, int64_t reduction, int64_t min_hidden = 8);
  Tensor forward(const Tensor& f_local, const Tensor& f_global, bool training);
};

/// Dual-branch stage unit: two BasicBlocks (local), token embedding plus
/// transformer encoder (global), and adaptive fusion of the two. Both
/// branches consume the same input; their output shapes must agree, which is
/// checked at construction via conv arithmetic.
struct ConvTransBlock {
  BasicBlock local1, local2;
  TokenEmbed embed;
  TransformerEncoder encoder;
  AdaptiveFusion fuse;
  bool global_enabled = true;
  int64_t stride = 1;

  ConvTransBlock() = default;
  ConvTransBlock(ParameterStore& ps, const std::string& name, Rng& rng,
                 int64_t cin, int64_t cout, int64_t stride, int64_t n_heads,
                 int64_t depth, int64_t mlp_ratio, int64_t fuse_reduction,
                 bool global_enabled);
  Tensor forward(const Tensor& x, bool training);
};

}  // namespace mctnet
