#include "mctnet/verify.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "mctnet/network.hpp"
#include "mctnet/ops.hpp"

namespace mctnet::verify {

// ---- naive references ----

namespace reference {

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int64_t stride,
              int64_t pad) {
  const int64_t n = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const int64_t cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  const int64_t ho = (h + 2 * pad - kh) / stride + 1;
  const int64_t wo = (wd + 2 * pad - kw) / stride + 1;
  Tensor y({n, cout, ho, wo});
  for (int64_t in = 0; in < n; ++in)
    for (int64_t oc = 0; oc < cout; ++oc)
      for (int64_t oy = 0; oy < ho; ++oy)
        for (int64_t ox = 0; ox < wo; ++ox) {
          double acc = b.defined() ? b.at({oc}) : 0.0;
          for (int64_t ic = 0; ic < cin; ++ic)
            for (int64_t ky = 0; ky < kh; ++ky)
              for (int64_t kx = 0; kx < kw; ++kx) {
                const int64_t iy = oy * stride - pad + ky;
                const int64_t ix = ox * stride - pad + kx;
                if (iy < 0 || iy >= h || ix < 0 || ix >= wd) continue;
                acc += x.at({in, ic, iy, ix}) * w.at({oc, ic, ky, kx});
              }
          y.at({in, oc, oy, ox}) = acc;
        }
  return y;
}

Tensor depthwise_conv2d(const Tensor& x, const Tensor& w, int64_t stride,
                        int64_t pad) {
  const int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const int64_t kh = w.dim(2), kw = w.dim(3);
  const int64_t ho = (h + 2 * pad - kh) / stride + 1;
  const int64_t wo = (wd + 2 * pad - kw) / stride + 1;
  Tensor y({n, c, ho, wo});
  for (int64_t in = 0; in < n; ++in)
    for (int64_t ic = 0; ic < c; ++ic)
      for (int64_t oy = 0; oy < ho; ++oy)
        for (int64_t ox = 0; ox < wo; ++ox) {
          double acc = 0.0;
          for (int64_t ky = 0; ky < kh; ++ky)
            for (int64_t kx = 0; kx < kw; ++kx) {
              const int64_t iy = oy * stride - pad + ky;
              const int64_t ix = ox * stride - pad + kx;
              if (iy < 0 || iy >= h || ix < 0 || ix >= wd) continue;
              acc += x.at({in, ic, iy, ix}) * w.at({ic, int64_t(0), ky, kx});
            }
          y.at({in, ic, oy, ox}) = acc;
        }
  return y;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  const int64_t cin = w.dim(0), cout = w.dim(1);
  const int64_t rows = x.numel() / cin;
  Shape out_shape = x.shape();
  out_shape.back() = cout;
  Tensor y(out_shape);
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t j = 0; j < cout; ++j) {
      double acc = b.defined() ? b.at({j}) : 0.0;
      for (int64_t i = 0; i < cin; ++i)
        acc += x.data()[size_t(r * cin + i)] * w.at({i, j});
      y.data()[size_t(r * cout + j)] = acc;
    }
  return y;
}

Tensor msa(const Tensor& tokens, const Tensor& wq, const Tensor& wk,
           const Tensor& wv, const Tensor& wo, int64_t n_heads) {
  const int64_t n = tokens.dim(0), l = tokens.dim(1), c = tokens.dim(2);
  const int64_t d = c / n_heads;
  const double scale = 1.0 / std::sqrt(double(d));
  Tensor q = reference::linear(tokens, wq, Tensor{});
  Tensor k = reference::linear(tokens, wk, Tensor{});
  Tensor v = reference::linear(tokens, wv, Tensor{});
  Tensor merged({n, l, c});
  for (int64_t in = 0; in < n; ++in)
    for (int64_t head = 0; head < n_heads; ++head) {
      // Explicit LxL attention matrix for this head.
      std::vector<double> attn(size_t(l * l));
      for (int64_t i = 0; i < l; ++i) {
        double mx = -1e300;
        for (int64_t j = 0; j < l; ++j) {
          double s = 0.0;
          for (int64_t e = 0; e < d; ++e)
            s += q.at({in, i, head * d + e}) * k.at({in, j, head * d + e});
          attn[size_t(i * l + j)] = s * scale;
          mx = std::max(mx, attn[size_t(i * l + j)]);
        }
        double z = 0.0;
        for (int64_t j = 0; j < l; ++j) {
          attn[size_t(i * l + j)] = std::exp(attn[size_t(i * l + j)] - mx);
          z += attn[size_t(i * l + j)];
        }
        for (int64_t j = 0; j < l; ++j) attn[size_t(i * l + j)] /= z;
      }
      for (int64_t i = 0; i < l; ++i)
        for (int64_t e = 0; e < d; ++e) {
          double acc = 0.0;
          for (int64_t j = 0; j < l; ++j)
            acc += attn[size_t(i * l + j)] * v.at({in, j, head * d + e});
          merged.at({in, i, head * d + e}) = acc;
        }
    }
  return reference::linear(merged, wo, Tensor{});
}

}  // namespace reference

// ---- finite differences ----

double fd_check(const std::function<double()>& loss_fn, Tensor param,
                int n_coords, Rng& rng, double step) {
  if (!param.requires_grad())
    throw UsageError("fd_check: parameter does not carry a gradient");
  auto data = param.data();
  auto grad = param.grad();
  std::uniform_int_distribution<int64_t> pick(0, param.numel() - 1);

  auto centered = [&](size_t idx, double h) {
    const double saved = data[idx];
    data[idx] = saved + h;
    const double plus = loss_fn();
    data[idx] = saved - h;
    const double minus = loss_fn();
    data[idx] = saved;
    return (plus - minus) / (2.0 * h);
  };

  double worst = 0.0;
  for (int s = 0; s < n_coords; ++s) {
    const auto idx = size_t(pick(rng));
    // Shrink the step until two consecutive estimates agree: a window that
    // straddles a relu kink gives an inconsistent slope, and shrinking moves
    // the kink outside. A wrong analytic gradient stays wrong at every step
    // size, so refinement cannot mask a real bug.
    double h = step;
    double fd = centered(idx, h);
    for (int refine = 0; refine < 6; ++refine) {
      const double fd_fine = centered(idx, h / 4.0);
      const bool consistent =
          std::fabs(fd - fd_fine) <=
          2.5e-5 * std::max({1.0, std::fabs(fd), std::fabs(fd_fine)});
      fd = fd_fine;
      if (consistent) break;
      h /= 4.0;
    }
    const double ad = grad[idx];
    const double err =
        std::fabs(fd - ad) / std::max({1.0, std::fabs(fd), std::fabs(ad)});
    worst = std::max(worst, err);
  }
  return worst;
}

// ---- helpers ----

namespace {

Tensor random_tensor(Shape shape, Rng& rng, bool requires_grad = false,
                     double keep_away_from_zero = 0.0) {
  Tensor t(std::move(shape), 0.0, requires_grad);
  std::normal_distribution<double> dist(0.0, 1.0);
  for (double& v : t.data()) {
    v = dist(rng);
    if (keep_away_from_zero > 0 && std::fabs(v) < keep_away_from_zero)
      v = v < 0 ? v - keep_away_from_zero : v + keep_away_from_zero;
  }
  return t;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double worst = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i)
    worst = std::max(worst,
                     std::fabs(a.data()[size_t(i)] - b.data()[size_t(i)]));
  return worst;
}

CheckResult make_result(std::string name, double worst, double tol) {
  CheckResult r;
  r.name = std::move(name);
  r.worst = worst;
  r.tolerance = tol;
  r.ok = worst <= tol;
  return r;
}

}  // namespace

std::vector<CheckResult> conv_oracle_checks(uint64_t seed, int cases) {
  Rng rng(seed);
  double worst_conv = 0.0, worst_dw = 0.0, worst_lin = 0.0;
  for (int i = 0; i < cases; ++i) {
    const int64_t n = 1 + int64_t(rng() % 2);
    const int64_t cin = 1 + int64_t(rng() % 4);
    const int64_t cout = 1 + int64_t(rng() % 4);
    const int64_t k = 1 + int64_t(rng() % 3);
    const int64_t stride = 1 + int64_t(rng() % 2);
    const int64_t pad = int64_t(rng() % 2);
    const int64_t h = k + int64_t(rng() % 7);
    const int64_t w = k + int64_t(rng() % 7);

    Tensor x = random_tensor({n, cin, h, w}, rng);
    Tensor wt = random_tensor({cout, cin, k, k}, rng);
    Tensor b = random_tensor({cout}, rng);
    worst_conv = std::max(
        worst_conv, max_abs_diff(conv2d(x, wt, b, stride, pad),
                                 reference::conv2d(x, wt, b, stride, pad)));

    Tensor dwt = random_tensor({cin, 1, k, k}, rng);
    worst_dw = std::max(
        worst_dw, max_abs_diff(depthwise_conv2d(x, dwt, stride, pad),
                               reference::depthwise_conv2d(x, dwt, stride, pad)));

    Tensor lx = random_tensor({n, 1 + int64_t(rng() % 5), cin}, rng);
    Tensor lw = random_tensor({cin, cout}, rng);
    Tensor lb = random_tensor({cout}, rng);
    worst_lin = std::max(worst_lin, max_abs_diff(linear(lx, lw, lb),
                                                 reference::linear(lx, lw, lb)));
  }
  return {make_result("oracle/conv2d", worst_conv, 1e-12),
          make_result("oracle/depthwise_conv2d", worst_dw, 1e-12),
          make_result("oracle/linear", worst_lin, 1e-12)};
}

std::vector<CheckResult> msa_oracle_checks(uint64_t seed, int cases) {
  Rng rng(seed);
  double worst = 0.0;
  for (int i = 0; i < cases; ++i) {
    const int64_t heads = int64_t(1) << (rng() % 3);  // 1, 2 or 4
    const int64_t d = 1 + int64_t(rng() % 3);
    const int64_t c = heads * d;
    const int64_t n = 1 + int64_t(rng() % 2);
    const int64_t l = 1 + int64_t(rng() % 6);

    ParameterStore ps;
    Rng init_rng(rng());
    MultiHeadSelfAttention attn(ps, "attn", init_rng, c, heads);
    Tensor tokens = random_tensor({n, l, c}, rng);
    Tensor expect =
        reference::msa(tokens, attn.wq.w, attn.wk.w, attn.wv.w, attn.wo.w, heads);
    worst = std::max(worst, max_abs_diff(attn.forward(tokens), expect));
  }
  return {make_result("oracle/msa", worst, 1e-12)};
}

namespace {

// Gradient check for one op: loss = sum(op(...) * r) with a fixed random
// projection r, checked against every differentiable input.
struct OpGradCase {
  std::string name;
  std::function<Tensor()> forward;  // rebuilds the op output from the inputs
  std::vector<Tensor> inputs;
};

double run_op_grad_case(OpGradCase& c, Rng& rng) {
  Tensor probe;  // fixed projection, makes the upstream gradient generic
  {
    Tensor out = c.forward();
    Rng prng(17);
    probe = random_tensor(out.shape(), prng);
  }
  auto loss_fn = [&]() { return sum(mul(c.forward(), probe)).item(); };

  Tape tape;
  {
    TapeScope scope(tape);
    Tensor loss = sum(mul(c.forward(), probe));
    for (auto& t : c.inputs) t.zero_grad();
    tape.backward(loss);
  }
  double worst = 0.0;
  for (auto& t : c.inputs) {
    const int n_coords = int(std::min<int64_t>(t.numel(), 10));
    worst = std::max(worst, fd_check(loss_fn, t, n_coords, rng));
  }
  return worst;
}

}  // namespace

std::vector<CheckResult> op_gradient_checks(uint64_t seed) {
  Rng rng(seed);
  std::vector<CheckResult> results;
  const double tol = 1e-5;

  auto add_case = [&](const std::string& name, std::vector<Tensor> inputs,
                      std::function<Tensor()> fwd) {
    for (auto& t : inputs) t.set_requires_grad(true);
    OpGradCase c{name, std::move(fwd), std::move(inputs)};
    results.push_back(make_result("fd/" + name, run_op_grad_case(c, rng), tol));
  };

  {
    Tensor x = random_tensor({2, 3, 6, 6}, rng);
    Tensor w = random_tensor({4, 3, 3, 3}, rng);
    Tensor b = random_tensor({4}, rng);
    add_case("conv2d", {x, w, b}, [=]() { return conv2d(x, w, b, 2, 1); });
  }
  {
    Tensor x = random_tensor({2, 3, 5, 5}, rng);
    Tensor w = random_tensor({3, 1, 3, 3}, rng);
    add_case("depthwise_conv2d", {x, w},
             [=]() { return depthwise_conv2d(x, w, 1, 1); });
  }
  {
    Tensor x = random_tensor({3, 4, 5}, rng);
    Tensor w = random_tensor({5, 6}, rng);
    Tensor b = random_tensor({6}, rng);
    add_case("linear", {x, w, b}, [=]() { return linear(x, w, b); });
  }
  {
    Tensor x = random_tensor({3, 4, 4, 4}, rng);
    Tensor gamma = random_tensor({4}, rng, false, 0.2);
    Tensor beta = random_tensor({4}, rng);
    Tensor rm({4}, 0.0), rv({4}, 1.0);
    add_case("batchnorm2d", {x, gamma, beta}, [=]() mutable {
      return batchnorm2d(x, gamma, beta, rm, rv, /*training=*/true);
    });
  }
  {
    Tensor x = random_tensor({2, 5, 6}, rng);
    Tensor gamma = random_tensor({6}, rng, false, 0.2);
    Tensor beta = random_tensor({6}, rng);
    add_case("layernorm", {x, gamma, beta},
             [=]() { return layernorm(x, gamma, beta); });
  }
  {
    Tensor x = random_tensor({2, 3, 4, 4}, rng, false, 0.05);
    add_case("relu", {x}, [=]() { return relu(x); });
    Tensor g = random_tensor({2, 3, 4, 4}, rng);
    add_case("gelu", {g}, [=]() { return gelu(g); });
    Tensor a = random_tensor({2, 6, 5}, rng);
    add_case("softmax", {a}, [=]() { return softmax(a, 1); });
    Tensor p = random_tensor({2, 3, 4, 4}, rng);
    add_case("global_avg_pool", {p}, [=]() { return global_avg_pool(p); });
    Tensor u = random_tensor({1, 2, 3, 4}, rng);
    add_case("bilinear_upsample2x", {u}, [=]() { return bilinear_upsample2x(u); });
  }
  {
    Tensor a = random_tensor({2, 3, 4}, rng);
    Tensor b = random_tensor({2, 4, 5}, rng);
    add_case("bmm", {a, b}, [=]() { return bmm(a, b); });
    Tensor c = random_tensor({2, 3, 4}, rng);
    Tensor d = random_tensor({2, 5, 4}, rng);
    add_case("bmm_nt", {c, d}, [=]() { return bmm_nt(c, d); });
  }
  {
    Tensor a = random_tensor({2, 3, 4}, rng);
    Tensor b = random_tensor({2, 3, 4}, rng);
    add_case("add_mul_sub", {a, b},
             [=]() { return mul(add(a, b), sub(a, b)); });
    Tensor e = random_tensor({3, 4}, rng, false, 0.05);
    Tensor f = random_tensor({3, 4}, rng, false, 0.05);
    add_case("abs_sub", {e, f}, [=]() { return abs(sub(e, f)); });
  }
  {
    Tensor x = random_tensor({2, 3, 4, 4}, rng);
    Tensor s = random_tensor({2, 3}, rng);
    add_case("scale_channels", {x, s}, [=]() { return scale_channels(x, s); });
    Tensor t = random_tensor({2, 3, 4, 4}, rng);
    add_case("flatten_unflatten", {t}, [=]() {
      return unflatten_tokens(flatten_tokens(t), 4, 4);
    });
    Tensor r = random_tensor({2, 3, 4}, rng);
    add_case("concat_slice", {r}, [=]() {
      Tensor both = concat({r, scalar_mul(r, 2.0)}, 2);
      return slice(both, 2, 2, 4);
    });
  }
  {
    Tensor logits = random_tensor({2, 2, 4, 4}, rng);
    Tensor mask({2, 4, 4});
    Rng mrng(99);
    for (double& v : mask.data()) v = double(mrng() % 2);
    std::vector<double> weights{1.0, 2.5};
    add_case("weighted_ce_loss", {logits},
             [=]() { return weighted_ce_loss(logits, mask, weights); });
  }
  return results;
}

std::vector<CheckResult> network_gradient_checks(uint64_t seed,
                                                 int coords_per_family,
                                                 int64_t image_size) {
  NetworkConfig cfg;
  cfg.stage_channels = {4, 8, 12, 16};
  cfg.heads = {2, 2, 2};
  cfg.depth = {1, 1, 1};
  cfg.mlp_ratio = 2;
  cfg.fuse_reduction = 4;
  cfg.auto_class_weights = false;
  cfg.class_weights = {1.0, 2.0};
  MctNet model(cfg, seed);

  Rng rng(seed + 1);
  // Nudge every parameter off its init so the check point is generic:
  // zero-initialized biases otherwise sit exactly on relu kinks (pixels whose
  // entire receptive field is relu-clipped have pre-activation == bias), where
  // the loss is one-sidedly non-differentiable and central differences
  // disagree with the subgradient by construction.
  {
    std::uniform_real_distribution<double> nudge(-0.02, 0.02);
    for (auto& e : model.params().entries())
      if (e.trainable)
        for (double& v : e.value.data()) v += nudge(rng);
  }
  Tensor t1 = random_tensor({2, 3, image_size, image_size}, rng);
  Tensor t2 = random_tensor({2, 3, image_size, image_size}, rng);
  Tensor mask({2, image_size, image_size});
  for (double& v : mask.data()) v = double(rng() % 2);
  const std::vector<double> weights{1.0, 2.0};

  auto loss_fn = [&]() {
    Tensor logits = model.forward(t1, t2, /*training=*/true);
    return weighted_ce_loss(logits, mask, weights).item();
  };

  Tape tape;
  {
    TapeScope scope(tape);
    Tensor logits = model.forward(t1, t2, /*training=*/true);
    Tensor loss = weighted_ce_loss(logits, mask, weights);
    model.params().zero_grads();
    tape.backward(loss);
  }

  // Layer families: every trainable parameter buckets into one of these by
  // name; finite differences sample coordinates inside each bucket.
  const std::vector<std::pair<std::string, std::string>> families = {
      {"stem", ".stem."},          {"local", ".local"},
      {"token_embed", ".embed."},  {"attention", ".attn."},
      {"layernorm", ".ln"},        {"mlp", ".mlp."},
      {"fusion", ".fuse."},        {"decoder", "decoder."},
      {"classifier", "head."}};

  std::vector<CheckResult> results;
  for (const auto& [family, needle] : families) {
    std::vector<ParameterStore::Entry*> bucket;
    for (auto& e : model.params().entries()) {
      if (e.trainable && e.name.find(needle) != std::string::npos)
        bucket.push_back(&e);
    }
    if (bucket.empty()) {
      CheckResult r;
      r.name = "fd/network/" + family;
      r.ok = false;
      r.detail = "no parameters matched";
      results.push_back(r);
      continue;
    }
    double worst = 0.0;
    for (int s = 0; s < coords_per_family; ++s) {
      auto* entry = bucket[rng() % bucket.size()];
      worst = std::max(worst, fd_check(loss_fn, entry->value, 1, rng));
    }
    results.push_back(make_result("fd/network/" + family, worst, 1e-4));
  }
  return results;
}

// ---- suite ----

std::vector<CheckResult> run_all(uint64_t seed) {
  std::vector<CheckResult> all;
  for (auto&& r : conv_oracle_checks(seed, 50)) all.push_back(r);
  for (auto&& r : msa_oracle_checks(seed + 1, 50)) all.push_back(r);
  for (auto&& r : op_gradient_checks(seed + 2)) all.push_back(r);
  // 32px keeps the deepest stage at 2x2: batch-norm statistics over a single
  // spatial cell are too ill-conditioned for trustworthy finite differences.
  for (auto&& r : network_gradient_checks(seed + 3, 8, 32)) all.push_back(r);
  return all;
}

bool all_ok(const std::vector<CheckResult>& results) {
  return std::all_of(results.begin(), results.end(),
                     [](const CheckResult& r) { return r.ok; });
}

void print_results(const std::vector<CheckResult>& results, std::ostream& os) {
  for (const auto& r : results) {
    os << (r.ok ? "PASS" : "FAIL") << "  " << r.name;
    if (r.tolerance > 0) os << "  worst " << r.worst << " (tol " << r.tolerance << ")";
    if (!r.detail.empty()) os << "  " << r.detail;
    os << '\n';
  }
}

}  // namespace mctnet::verify
