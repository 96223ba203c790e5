#include "mctnet/blocks.hpp"

#include <cmath>

namespace mctnet {

BasicBlock::BasicBlock(ParameterStore& ps, const std::string& name, Rng& rng,
                       int64_t cin, int64_t cout, int64_t stride)
    : stride(stride) {
  if (stride < 1) throw ConfigError(name + ": stride must be >= 1");
  conv1 = Conv2d(ps, name + ".conv1", rng, cin, cout, 3, stride, 1, false);
  bn1 = BatchNorm2d(ps, name + ".bn1", cout);
  conv2 = Conv2d(ps, name + ".conv2", rng, cout, cout, 3, 1, 1, false);
  bn2 = BatchNorm2d(ps, name + ".bn2", cout);
  if (stride != 1 || cin != cout) {
    shortcut = Conv2d(ps, name + ".shortcut", rng, cin, cout, 1, stride, 0, false);
  }
}

Tensor BasicBlock::forward(const Tensor& x, bool training) {
  Tensor main = relu(bn1.forward(conv1.forward(x), training));
  main = bn2.forward(conv2.forward(main), training);
  Tensor skip = shortcut ? shortcut->forward(x) : x;
  return relu(add(main, skip));
}

TokenEmbed::TokenEmbed(ParameterStore& ps, const std::string& name, Rng& rng,
                       int64_t cin, int64_t cout, int64_t stride) {
  conv = Conv2d(ps, name + ".conv", rng, cin, cout, 3, stride, 1, false);
}

Tensor TokenEmbed::forward(const Tensor& x, int64_t* h_out, int64_t* w_out) const {
  Tensor map = conv.forward(x);
  if (h_out) *h_out = map.dim(2);
  if (w_out) *w_out = map.dim(3);
  return flatten_tokens(map);
}

MultiHeadSelfAttention::MultiHeadSelfAttention(ParameterStore& ps,
                                               const std::string& name,
                                               Rng& rng, int64_t channels,
                                               int64_t n_heads)
    : n_heads(n_heads) {
  if (n_heads < 1 || channels % n_heads != 0)
    throw ConfigError(name + ": " + std::to_string(channels) +
                      " channels not divisible by " + std::to_string(n_heads) +
                      " heads");
  wq = Linear(ps, name + ".wq", rng, channels, channels, false);
  wk = Linear(ps, name + ".wk", rng, channels, channels, false);
  wv = Linear(ps, name + ".wv", rng, channels, channels, false);
  wo = Linear(ps, name + ".wo", rng, channels, channels, false);
}

Tensor MultiHeadSelfAttention::forward(const Tensor& tokens) const {
  if (tokens.ndim() != 3)
    throw DimensionError("msa: expected [N,L,C] tokens, got " +
                         shape_str(tokens.shape()));
  const int64_t c = tokens.dim(2);
  if (c != wq.w.dim(0))
    throw DimensionError("msa: token width " + std::to_string(c) +
                         " does not match projections");
  const int64_t d_head = c / n_heads;
  const double scale = 1.0 / std::sqrt(double(d_head));

  Tensor q = wq.forward(tokens);
  Tensor k = wk.forward(tokens);
  Tensor v = wv.forward(tokens);

  std::vector<Tensor> heads;
  heads.reserve(size_t(n_heads));
  for (int64_t j = 0; j < n_heads; ++j) {
    Tensor qj = slice(q, 2, j * d_head, d_head);
    Tensor kj = slice(k, 2, j * d_head, d_head);
    Tensor vj = slice(v, 2, j * d_head, d_head);
    Tensor scores = scalar_mul(bmm_nt(qj, kj), scale);  // [N,L,L]
    Tensor attn = softmax(scores, 2);
    heads.push_back(bmm(attn, vj));  // [N,L,d]
  }
  Tensor merged = n_heads == 1 ? heads.front() : concat(heads, 2);
  return wo.forward(merged);
}

TransformerMlp::TransformerMlp(ParameterStore& ps, const std::string& name,
                               Rng& rng, int64_t channels, int64_t ratio) {
  if (ratio < 1) throw ConfigError(name + ": mlp ratio must be >= 1");
  expand = Linear(ps, name + ".expand", rng, channels, ratio * channels, false);
  dw = DepthwiseConv2d(ps, name + ".dw", rng, ratio * channels, 3, 1, 1);
  compress = Linear(ps, name + ".compress", rng, ratio * channels, channels, false);
}

Tensor TransformerMlp::forward(const Tensor& tokens, int64_t h, int64_t w) const {
  Tensor wide = expand.forward(tokens);                   // [N,L,rC]
  Tensor map = unflatten_tokens(wide, h, w);              // [N,rC,H,W]
  Tensor mixed = flatten_tokens(dw.forward(map));         // g(x)
  return compress.forward(gelu(mixed));
}

TransformerEncoderLayer::TransformerEncoderLayer(ParameterStore& ps,
                                                 const std::string& name,
                                                 Rng& rng, int64_t channels,
                                                 int64_t n_heads,
                                                 int64_t mlp_ratio) {
  ln1 = LayerNorm(ps, name + ".ln1", channels);
  attn = MultiHeadSelfAttention(ps, name + ".attn", rng, channels, n_heads);
  ln2 = LayerNorm(ps, name + ".ln2", channels);
  mlp = TransformerMlp(ps, name + ".mlp", rng, channels, mlp_ratio);
}

Tensor TransformerEncoderLayer::forward(const Tensor& tokens, int64_t h,
                                        int64_t w) const {
  Tensor t = add(tokens, attn.forward(ln1.forward(tokens)));
  return add(t, mlp.forward(ln2.forward(t), h, w));
}

TransformerEncoder::TransformerEncoder(ParameterStore& ps,
                                       const std::string& name, Rng& rng,
                                       int64_t channels, int64_t n_heads,
                                       int64_t mlp_ratio, int64_t depth) {
  if (depth < 1) throw ConfigError(name + ": depth must be >= 1");
  layers.reserve(size_t(depth));
  for (int64_t d = 0; d < depth; ++d) {
    layers.emplace_back(ps, name + ".layer" + std::to_string(d), rng, channels,
                        n_heads, mlp_ratio);
  }
}

Tensor TransformerEncoder::forward(const Tensor& tokens, int64_t h,
                                   int64_t w) const {
  if (tokens.dim(1) != h * w)
    throw DimensionError("transformer_encoder: " + std::to_string(tokens.dim(1)) +
                         " tokens for a " + std::to_string(h) + "x" +
                         std::to_string(w) + " map");
  Tensor t = tokens;
  for (const auto& layer : layers) t = layer.forward(t, h, w);
  return unflatten_tokens(t, h, w);
}

AdaptiveFusion::AdaptiveFusion(ParameterStore& ps, const std::string& name,
                               Rng& rng, int64_t channels, int64_t reduction,
                               int64_t min_hidden) {
  const int64_t hidden = std::max(min_hidden, channels / reduction);
  compact = Linear(ps, name + ".compact", rng, channels, hidden, false);
  compact_bn = BatchNorm2d(ps, name + ".compact_bn", hidden);
  head_local = Linear(ps, name + ".head_local", rng, hidden, channels, false);
  head_global = Linear(ps, name + ".head_global", rng, hidden, channels, false);
}

Tensor AdaptiveFusion::forward(const Tensor& f_local, const Tensor& f_global,
                               bool training) {
  detail::check_same_shape("adaptive_fuse", f_local, f_global);
  const int64_t n = f_local.dim(0), c = f_local.dim(1);

  Tensor s = global_avg_pool(add(f_local, f_global));  // [N,C]
  Tensor z = compact.forward(s);                       // [N,hidden]
  const int64_t hidden = z.dim(1);
  // BN over the feature axis; reuse the 2-d kernel via a [N,hidden,1,1] view.
  z = reshape(z, {n, hidden, 1, 1});
  z = relu(compact_bn.forward(z, training));
  z = reshape(z, {n, hidden});

  Tensor logits_local = head_local.forward(z);    // [N,C]
  Tensor logits_global = head_global.forward(z);  // [N,C]
  Tensor stacked = concat({reshape(logits_local, {n, 1, c}),
                           reshape(logits_global, {n, 1, c})},
                          1);                     // [N,2,C]
  Tensor weights = softmax(stacked, 1);
  Tensor a_local = reshape(slice(weights, 1, 0, 1), {n, c});
  Tensor a_global = reshape(slice(weights, 1, 1, 1), {n, c});
  return add(scale_channels(f_local, a_local),
             scale_channels(f_global, a_global));
}

ConvTransBlock::ConvTransBlock(ParameterStore& ps, const std::string& name,
                               Rng& rng, int64_t cin, int64_t cout,
                               int64_t stride, int64_t n_heads, int64_t depth,
                               int64_t mlp_ratio, int64_t fuse_reduction,
                               bool global_enabled)
    : global_enabled(global_enabled), stride(stride) {
  local1 = BasicBlock(ps, name + ".local1", rng, cin, cout, stride);
  local2 = BasicBlock(ps, name + ".local2", rng, cout, cout, 1);
  if (global_enabled) {
    embed = TokenEmbed(ps, name + ".embed", rng, cin, cout, stride);
    encoder = TransformerEncoder(ps, name + ".encoder", rng, cout, n_heads,
                                 mlp_ratio, depth);
    fuse = AdaptiveFusion(ps, name + ".fuse", rng, cout, fuse_reduction);
  }
  // Both branches downsample with 3x3/pad-1 convs at the stage stride, so
  // their output extents agree for every input size; forward() re-checks the
  // realized shapes.
}

Tensor ConvTransBlock::forward(const Tensor& x, bool training) {
  Tensor f_local = local2.forward(local1.forward(x, training), training);
  if (!global_enabled) return f_local;

  int64_t h = 0, w = 0;
  Tensor tokens = embed.forward(x, &h, &w);
  Tensor f_global = encoder.forward(tokens, h, w);
  if (f_global.shape() != f_local.shape())
    throw ConfigError("convtrans_block: local " + shape_str(f_local.shape()) +
                      " vs global " + shape_str(f_global.shape()));
  return fuse.forward(f_local, f_global, training);
}

}  // namespace mctnet
