#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "mctnet/tensor.hpp"

namespace mctnet {

// All ops are differentiable through the active tape unless noted. Inputs
// must be finite; forward results are validated for finiteness on the
// compute-heavy ops.

/// Cross-correlation: x [N,Cin,H,W] * w [Cout,Cin,kh,kw] (+ optional b [Cout]).
/// H' = (H + 2*pad - kh) / stride + 1 (floor).
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int64_t stride,
              int64_t pad);

/// One filter per channel: x [N,C,H,W] * w [C,1,kh,kw]; no cross-channel mixing.
Tensor depthwise_conv2d(const Tensor& x, const Tensor& w, int64_t stride,
                        int64_t pad);

/// Affine map over the last axis: x [...,Cin] * w [Cin,Cout] (+ optional b [Cout]).
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

/// Batch normalization over (N,H,W) per channel. Training mode normalizes by
/// batch statistics and updates the running buffers in place
/// (running = (1-momentum)*running + momentum*batch, unbiased variance);
/// eval mode normalizes by the running statistics.
Tensor batchnorm2d(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                   Tensor& running_mean, Tensor& running_var, bool training,
                   double momentum = 0.1, double eps = 1e-5);

/// Normalizes over the last axis, then applies the per-channel affine.
Tensor layernorm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                 double eps = 1e-5);

Tensor relu(const Tensor& x);
/// Exact Gaussian-CDF form: 0.5 * x * (1 + erf(x / sqrt(2))).
Tensor gelu(const Tensor& x);
/// Max-shifted softmax along `axis` (negative axis counts from the end).
Tensor softmax(const Tensor& x, int axis);

/// [N,C,H,W] -> [N,C]: mean over the spatial extent.
Tensor global_avg_pool(const Tensor& x);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scalar_mul(const Tensor& a, double c);
/// |x| with subgradient 0 at 0.
Tensor abs(const Tensor& x);

Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor slice(const Tensor& x, int axis, int64_t start, int64_t len);
/// Copying reshape; numel must match.
Tensor reshape(const Tensor& x, Shape shape);

/// [N,C,H,W] -> [N,H*W,C], tokens in row-major spatial order.
Tensor flatten_tokens(const Tensor& x);
/// [N,L,C] -> [N,C,H,W], requires L == H*W.
Tensor unflatten_tokens(const Tensor& t, int64_t h, int64_t w);

/// Bilinear x2 upsampling (half-pixel centers, clamped borders).
Tensor bilinear_upsample2x(const Tensor& x);

/// Batched matmul: a [B,L,K] * b [B,K,M] -> [B,L,M].
Tensor bmm(const Tensor& a, const Tensor& b);
/// Batched matmul with transposed rhs: a [B,L,K] * b [B,M,K]^T -> [B,L,M].
Tensor bmm_nt(const Tensor& a, const Tensor& b);

/// y[n,c,h,w] = x[n,c,h,w] * s[n,c].
Tensor scale_channels(const Tensor& x, const Tensor& s);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

/// Pixel-wise weighted cross entropy. logits [N,K,H,W], mask [N,H,W] with
/// integer class ids in [0,K); weights w[K] > 0. Returns the weighted mean
/// sum(w[y] * -log softmax(logits)[y]) / sum(w[y]) over all pixels.
Tensor weighted_ce_loss(const Tensor& logits, const Tensor& mask,
                        const std::vector<double>& weights);

/// Per-pixel argmax over the class axis (ties -> lower index). Not recorded.
Tensor argmax_channel(const Tensor& logits);

/// Inverse-class-frequency weights for a binary mask, clamped to
/// [clamp_lo, clamp_hi]; an absent class gets clamp_hi.
std::array<double, 2> batch_class_weights(const Tensor& mask,
                                          double clamp_lo = 0.1,
                                          double clamp_hi = 10.0);

/// Global toggle for post-op finiteness validation (default on).
void set_finite_checks(bool enabled);
bool finite_checks_enabled();

}  // namespace mctnet
