#include "mctnet/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include "gemm.hpp"
#include "mctnet/testhooks.hpp"

namespace mctnet {

namespace {

bool g_finite_checks = true;

constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;

using ImplPtr = std::shared_ptr<TensorImpl>;

void check_input(const char* op, const Tensor& t) {
  if (!t.defined()) throw UsageError(std::string(op) + ": undefined tensor");
  if (g_finite_checks) detail::check_finite(op, t);
}

void check_output(const char* op, const Tensor& t) {
  if (g_finite_checks) detail::check_finite(op, t);
}

int64_t conv_out_extent(const char* op, int64_t in, int64_t k, int64_t stride,
                        int64_t pad) {
  if (in + 2 * pad < k) {
    throw DimensionError(std::string(op) + ": kernel " + std::to_string(k) +
                         " exceeds padded extent " + std::to_string(in + 2 * pad));
  }
  return (in + 2 * pad - k) / stride + 1;
}

// im2col with zero padding: col is [N*Ho*Wo, Cin*kh*kw] row-major.
void im2col(const double* x, int64_t n, int64_t cin, int64_t h, int64_t w,
            int64_t kh, int64_t kw, int64_t stride, int64_t pad, int64_t ho,
            int64_t wo, double* col) {
  const int64_t cols = cin * kh * kw;
  for (int64_t in = 0; in < n; ++in) {
    for (int64_t oy = 0; oy < ho; ++oy) {
      for (int64_t ox = 0; ox < wo; ++ox) {
        double* row = col + ((in * ho + oy) * wo + ox) * cols;
        for (int64_t c = 0; c < cin; ++c) {
          const double* plane = x + (in * cin + c) * h * w;
          for (int64_t ky = 0; ky < kh; ++ky) {
            const int64_t iy = oy * stride - pad + ky;
            double* dst = row + (c * kh + ky) * kw;
            if (iy < 0 || iy >= h) {
              std::fill(dst, dst + kw, 0.0);
              continue;
            }
            for (int64_t kx = 0; kx < kw; ++kx) {
              const int64_t ix = ox * stride - pad + kx;
              dst[kx] = (ix >= 0 && ix < w) ? plane[iy * w + ix] : 0.0;
            }
          }
        }
      }
    }
  }
}

// Scatter-add of a column buffer back onto the (padded) input gradient.
void col2im_add(const double* col, int64_t n, int64_t cin, int64_t h, int64_t w,
                int64_t kh, int64_t kw, int64_t stride, int64_t pad, int64_t ho,
                int64_t wo, double* dx) {
  const int64_t cols = cin * kh * kw;
  for (int64_t in = 0; in < n; ++in) {
    for (int64_t oy = 0; oy < ho; ++oy) {
      for (int64_t ox = 0; ox < wo; ++ox) {
        const double* row = col + ((in * ho + oy) * wo + ox) * cols;
        for (int64_t c = 0; c < cin; ++c) {
          double* plane = dx + (in * cin + c) * h * w;
          for (int64_t ky = 0; ky < kh; ++ky) {
            const int64_t iy = oy * stride - pad + ky;
            if (iy < 0 || iy >= h) continue;
            const double* src = row + (c * kh + ky) * kw;
            for (int64_t kx = 0; kx < kw; ++kx) {
              const int64_t ix = ox * stride - pad + kx;
              if (ix >= 0 && ix < w) plane[iy * w + ix] += src[kx];
            }
          }
        }
      }
    }
  }
}

}  // namespace

void set_finite_checks(bool enabled) { g_finite_checks = enabled; }
bool finite_checks_enabled() { return g_finite_checks; }

// ---- convolution ----

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int64_t stride,
              int64_t pad) {
  check_input("conv2d", x);
  check_input("conv2d", w);
  if (x.ndim() != 4 || w.ndim() != 4)
    throw DimensionError("conv2d: expected 4-d input and kernel, got " +
                         shape_str(x.shape()) + " and " + shape_str(w.shape()));
  if (stride < 1 || pad < 0)
    throw ConfigError("conv2d: stride must be >= 1 and padding >= 0");
  const int64_t n = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const int64_t cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  if (w.dim(1) != cin)
    throw DimensionError("conv2d: kernel expects " + std::to_string(w.dim(1)) +
                         " input channels, input has " + std::to_string(cin));
  if (b.defined() && (b.ndim() != 1 || b.dim(0) != cout))
    throw DimensionError("conv2d: bias shape " + shape_str(b.shape()) +
                         " does not match " + std::to_string(cout) + " filters");
  const int64_t ho = conv_out_extent("conv2d", h, kh, stride, pad);
  const int64_t wo = conv_out_extent("conv2d", wd, kw, stride, pad);

  const int64_t rows = n * ho * wo;
  const int64_t cols = cin * kh * kw;
  std::vector<double> col(static_cast<size_t>(rows * cols));
  im2col(x.data().data(), n, cin, h, wd, kh, kw, stride, pad, ho, wo, col.data());

  // out_mat[rows, cout] = col * W^T, then scatter into NCHW.
  std::vector<double> out_mat(static_cast<size_t>(rows * cout));
  detail::gemm_nt(col.data(), w.data().data(), out_mat.data(), rows, cols, cout,
                  false);

  Tensor y({n, cout, ho, wo});
  {
    auto yd = y.data();
    const double* bias = b.defined() ? b.data().data() : nullptr;
    for (int64_t in = 0; in < n; ++in)
      for (int64_t oc = 0; oc < cout; ++oc) {
        const double add = bias ? bias[oc] : 0.0;
        double* dst = yd.data() + (in * cout + oc) * ho * wo;
        const double* src = out_mat.data() + in * ho * wo * cout + oc;
        for (int64_t p = 0; p < ho * wo; ++p) dst[p] = src[p * cout] + add;
      }
  }
  check_output("conv2d", y);

  detail::autodiff_record(y, {&x, &w, &b}, [xi = x.impl(), wi = w.impl(),
                                            bi = b.defined() ? b.impl() : ImplPtr{},
                                            yi = y.impl(), n, cin, h, wd, cout,
                                            kh, kw, stride, pad, ho, wo]() {
    const int64_t rows = n * ho * wo;
    const int64_t cols = cin * kh * kw;
    // Gather upstream gradient into [rows, cout].
    std::vector<double> dout(static_cast<size_t>(rows * cout));
    for (int64_t in = 0; in < n; ++in)
      for (int64_t oc = 0; oc < cout; ++oc) {
        const double* src = yi->grad.data() + (in * cout + oc) * ho * wo;
        double* dst = dout.data() + in * ho * wo * cout + oc;
        for (int64_t p = 0; p < ho * wo; ++p) dst[p * cout] = src[p];
      }

    if (bi && bi->requires_grad) {
      for (int64_t r = 0; r < rows; ++r)
        for (int64_t oc = 0; oc < cout; ++oc)
          bi->grad[oc] += dout[r * cout + oc];
    }
    if (wi->requires_grad) {
      std::vector<double> col(static_cast<size_t>(rows * cols));
      im2col(xi->data.data(), n, cin, h, wd, kh, kw, stride, pad, ho, wo,
             col.data());
      const double sign = testhooks::conv_backward_sign_flip() ? -1.0 : 1.0;
      if (sign < 0) {
        std::vector<double> dw(static_cast<size_t>(cout * cols));
        detail::gemm_tn(dout.data(), col.data(), dw.data(), cout, rows, cols,
                        false);
        for (int64_t i = 0; i < cout * cols; ++i) wi->grad[i] -= dw[i];
      } else {
        detail::gemm_tn(dout.data(), col.data(), wi->grad.data(), cout, rows,
                        cols, true);
      }
    }
    if (xi->requires_grad) {
      std::vector<double> dcol(static_cast<size_t>(rows * cols));
      detail::gemm_nn(dout.data(), wi->data.data(), dcol.data(), rows, cout,
                      cols, false);
      col2im_add(dcol.data(), n, cin, h, wd, kh, kw, stride, pad, ho, wo,
                 xi->grad.data());
    }
  });
  return y;
}

Tensor depthwise_conv2d(const Tensor& x, const Tensor& w, int64_t stride,
                        int64_t pad) {
  check_input("depthwise_conv2d", x);
  check_input("depthwise_conv2d", w);
  if (x.ndim() != 4 || w.ndim() != 4)
    throw DimensionError("depthwise_conv2d: expected 4-d input and kernel");
  if (w.dim(0) != x.dim(1) || w.dim(1) != 1)
    throw DimensionError("depthwise_conv2d: kernel must be [C,1,kh,kw] with C=" +
                         std::to_string(x.dim(1)) + ", got " +
                         shape_str(w.shape()));
  if (stride < 1 || pad < 0)
    throw ConfigError("depthwise_conv2d: stride must be >= 1 and padding >= 0");
  const int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const int64_t kh = w.dim(2), kw = w.dim(3);
  const int64_t ho = conv_out_extent("depthwise_conv2d", h, kh, stride, pad);
  const int64_t wo = conv_out_extent("depthwise_conv2d", wd, kw, stride, pad);

  Tensor y({n, c, ho, wo});
  {
    const double* xd = x.data().data();
    const double* wdat = w.data().data();
    double* yd = y.data().data();
    for (int64_t in = 0; in < n; ++in)
      for (int64_t ic = 0; ic < c; ++ic) {
        const double* plane = xd + (in * c + ic) * h * wd;
        const double* ker = wdat + ic * kh * kw;
        double* out = yd + (in * c + ic) * ho * wo;
        for (int64_t oy = 0; oy < ho; ++oy)
          for (int64_t ox = 0; ox < wo; ++ox) {
            double acc = 0.0;
            for (int64_t ky = 0; ky < kh; ++ky) {
              const int64_t iy = oy * stride - pad + ky;
              if (iy < 0 || iy >= h) continue;
              for (int64_t kx = 0; kx < kw; ++kx) {
                const int64_t ix = ox * stride - pad + kx;
                if (ix >= 0 && ix < wd)
                  acc += plane[iy * wd + ix] * ker[ky * kw + kx];
              }
            }
            out[oy * wo + ox] = acc;
          }
      }
  }
  check_output("depthwise_conv2d", y);

  detail::autodiff_record(y, {&x, &w}, [xi = x.impl(), wi = w.impl(),
                                        yi = y.impl(), n, c, h, wd, kh, kw,
                                        stride, pad, ho, wo]() {
    for (int64_t in = 0; in < n; ++in)
      for (int64_t ic = 0; ic < c; ++ic) {
        const double* plane = xi->data.data() + (in * c + ic) * h * wd;
        const double* ker = wi->data.data() + ic * kh * kw;
        const double* dy = yi->grad.data() + (in * c + ic) * ho * wo;
        double* dplane =
            xi->requires_grad ? xi->grad.data() + (in * c + ic) * h * wd : nullptr;
        double* dker = wi->requires_grad ? wi->grad.data() + ic * kh * kw : nullptr;
        for (int64_t oy = 0; oy < ho; ++oy)
          for (int64_t ox = 0; ox < wo; ++ox) {
            const double g = dy[oy * wo + ox];
            for (int64_t ky = 0; ky < kh; ++ky) {
              const int64_t iy = oy * stride - pad + ky;
              if (iy < 0 || iy >= h) continue;
              for (int64_t kx = 0; kx < kw; ++kx) {
                const int64_t ix = ox * stride - pad + kx;
                if (ix < 0 || ix >= wd) continue;
                if (dker) dker[ky * kw + kx] += g * plane[iy * wd + ix];
                if (dplane) dplane[iy * wd + ix] += g * ker[ky * kw + kx];
              }
            }
          }
      }
  });
  return y;
}

// ---- linear / batched matmul ----

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  check_input("linear", x);
  check_input("linear", w);
  if (w.ndim() != 2)
    throw DimensionError("linear: weight must be [Cin,Cout], got " +
                         shape_str(w.shape()));
  const int64_t cin = w.dim(0), cout = w.dim(1);
  if (x.ndim() < 1 || x.shape().back() != cin)
    throw DimensionError("linear: trailing extent of " + shape_str(x.shape()) +
                         " must be " + std::to_string(cin));
  if (b.defined() && (b.ndim() != 1 || b.dim(0) != cout))
    throw DimensionError("linear: bias shape mismatch");

  Shape out_shape = x.shape();
  out_shape.back() = cout;
  Tensor y(out_shape);
  const int64_t m = x.numel() / cin;
  detail::gemm_nn(x.data().data(), w.data().data(), y.data().data(), m, cin,
                  cout, false);
  if (b.defined()) {
    double* yd = y.data().data();
    const double* bd = b.data().data();
    for (int64_t r = 0; r < m; ++r)
      for (int64_t j = 0; j < cout; ++j) yd[r * cout + j] += bd[j];
  }
  check_output("linear", y);

  detail::autodiff_record(
      y, {&x, &w, &b},
      [xi = x.impl(), wi = w.impl(), bi = b.defined() ? b.impl() : ImplPtr{},
       yi = y.impl(), m, cin, cout]() {
        if (xi->requires_grad)
          detail::gemm_nt(yi->grad.data(), wi->data.data(), xi->grad.data(), m,
                          cout, cin, true);
        if (wi->requires_grad)
          detail::gemm_tn(xi->data.data(), yi->grad.data(), wi->grad.data(),
                          cin, m, cout, true);
        if (bi && bi->requires_grad) {
          for (int64_t r = 0; r < m; ++r)
            for (int64_t j = 0; j < cout; ++j)
              bi->grad[j] += yi->grad[r * cout + j];
        }
      });
  return y;
}

namespace {
Tensor bmm_impl(const Tensor& a, const Tensor& b, bool rhs_transposed) {
  const char* op = rhs_transposed ? "bmm_nt" : "bmm";
  check_input(op, a);
  check_input(op, b);
  if (a.ndim() != 3 || b.ndim() != 3 || a.dim(0) != b.dim(0))
    throw DimensionError(std::string(op) + ": want [B,*,*] operands, got " +
                         shape_str(a.shape()) + " and " + shape_str(b.shape()));
  const int64_t batch = a.dim(0), l = a.dim(1), k = a.dim(2);
  const int64_t mdim = rhs_transposed ? b.dim(1) : b.dim(2);
  const int64_t bk = rhs_transposed ? b.dim(2) : b.dim(1);
  if (bk != k)
    throw DimensionError(std::string(op) + ": inner extents disagree: " +
                         shape_str(a.shape()) + " vs " + shape_str(b.shape()));

  Tensor y({batch, l, mdim});
  for (int64_t i = 0; i < batch; ++i) {
    const double* ap = a.data().data() + i * l * k;
    const double* bp = b.data().data() + i * k * mdim;
    double* yp = y.data().data() + i * l * mdim;
    if (rhs_transposed)
      detail::gemm_nt(ap, bp, yp, l, k, mdim, false);
    else
      detail::gemm_nn(ap, bp, yp, l, k, mdim, false);
  }
  check_output(op, y);

  detail::autodiff_record(
      y, {&a, &b},
      [ai = a.impl(), bi = b.impl(), yi = y.impl(), batch, l, k, mdim,
       rhs_transposed]() {
        for (int64_t i = 0; i < batch; ++i) {
          const double* dy = yi->grad.data() + i * l * mdim;
          const double* ap = ai->data.data() + i * l * k;
          const double* bp = bi->data.data() + i * k * mdim;
          if (ai->requires_grad) {
            double* da = ai->grad.data() + i * l * k;
            if (rhs_transposed)
              detail::gemm_nn(dy, bp, da, l, mdim, k, true);  // dC * B
            else
              detail::gemm_nt(dy, bp, da, l, mdim, k, true);  // dC * B^T
          }
          if (bi->requires_grad) {
            double* db = bi->grad.data() + i * k * mdim;
            if (rhs_transposed)
              detail::gemm_tn(dy, ap, db, mdim, l, k, true);  // dC^T * A
            else
              detail::gemm_tn(ap, dy, db, k, l, mdim, true);  // A^T * dC
          }
        }
      });
  return y;
}
}  // namespace

Tensor bmm(const Tensor& a, const Tensor& b) { return bmm_impl(a, b, false); }
Tensor bmm_nt(const Tensor& a, const Tensor& b) { return bmm_impl(a, b, true); }

// ---- normalization ----

Tensor batchnorm2d(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                   Tensor& running_mean, Tensor& running_var, bool training,
                   double momentum, double eps) {
  check_input("batchnorm2d", x);
  if (x.ndim() != 4)
    throw DimensionError("batchnorm2d: expected [N,C,H,W], got " +
                         shape_str(x.shape()));
  const int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int64_t hw = h * w;
  const int64_t m = n * hw;
  if (gamma.numel() != c || beta.numel() != c || running_mean.numel() != c ||
      running_var.numel() != c)
    throw DimensionError("batchnorm2d: per-channel params must have extent " +
                         std::to_string(c));
  if (eps <= 0) throw ConfigError("batchnorm2d: eps must be positive");

  std::vector<double> mean(c, 0.0), inv_std(c, 0.0);
  if (training) {
    std::vector<double> var(c, 0.0);
    for (int64_t in = 0; in < n; ++in)
      for (int64_t ic = 0; ic < c; ++ic) {
        const double* plane = x.data().data() + (in * c + ic) * hw;
        double s = 0.0;
        for (int64_t p = 0; p < hw; ++p) s += plane[p];
        mean[ic] += s;
      }
    for (int64_t ic = 0; ic < c; ++ic) mean[ic] /= double(m);
    for (int64_t in = 0; in < n; ++in)
      for (int64_t ic = 0; ic < c; ++ic) {
        const double* plane = x.data().data() + (in * c + ic) * hw;
        double s = 0.0;
        for (int64_t p = 0; p < hw; ++p) {
          const double d = plane[p] - mean[ic];
          s += d * d;
        }
        var[ic] += s;
      }
    for (int64_t ic = 0; ic < c; ++ic) {
      var[ic] /= double(m);
      inv_std[ic] = 1.0 / std::sqrt(var[ic] + eps);
    }
    // Unbiased variance feeds the running buffer.
    const double correction = m > 1 ? double(m) / double(m - 1) : 1.0;
    auto rm = running_mean.data();
    auto rv = running_var.data();
    for (int64_t ic = 0; ic < c; ++ic) {
      rm[ic] = (1.0 - momentum) * rm[ic] + momentum * mean[ic];
      rv[ic] = (1.0 - momentum) * rv[ic] + momentum * var[ic] * correction;
    }
  } else {
    auto rm = running_mean.data();
    auto rv = running_var.data();
    for (int64_t ic = 0; ic < c; ++ic) {
      mean[ic] = rm[ic];
      inv_std[ic] = 1.0 / std::sqrt(rv[ic] + eps);
    }
  }

  Tensor y(x.shape());
  {
    const double* gd = gamma.data().data();
    const double* bd = beta.data().data();
    for (int64_t in = 0; in < n; ++in)
      for (int64_t ic = 0; ic < c; ++ic) {
        const double* src = x.data().data() + (in * c + ic) * hw;
        double* dst = y.data().data() + (in * c + ic) * hw;
        const double mu = mean[ic], is = inv_std[ic], g = gd[ic], b = bd[ic];
        for (int64_t p = 0; p < hw; ++p) dst[p] = g * (src[p] - mu) * is + b;
      }
  }
  check_output("batchnorm2d", y);

  detail::autodiff_record(
      y, {&x, &gamma, &beta},
      [xi = x.impl(), gi = gamma.impl(), bi = beta.impl(), yi = y.impl(),
       mean = std::move(mean), inv_std = std::move(inv_std), n, c, hw, m,
       training]() {
        for (int64_t ic = 0; ic < c; ++ic) {
          const double mu = mean[ic], is = inv_std[ic];
          double s1 = 0.0, s2 = 0.0;  // sum dy, sum dy*xhat
          for (int64_t in = 0; in < n; ++in) {
            const double* dy = yi->grad.data() + (in * c + ic) * hw;
            const double* xv = xi->data.data() + (in * c + ic) * hw;
            for (int64_t p = 0; p < hw; ++p) {
              s1 += dy[p];
              s2 += dy[p] * (xv[p] - mu) * is;
            }
          }
          if (bi->requires_grad) bi->grad[ic] += s1;
          if (gi->requires_grad) gi->grad[ic] += s2;
          if (xi->requires_grad) {
            const double g = gi->data[ic];
            if (training) {
              const double c1 = s1 / double(m), c2 = s2 / double(m);
              for (int64_t in = 0; in < n; ++in) {
                const double* dy = yi->grad.data() + (in * c + ic) * hw;
                const double* xv = xi->data.data() + (in * c + ic) * hw;
                double* dx = xi->grad.data() + (in * c + ic) * hw;
                for (int64_t p = 0; p < hw; ++p) {
                  const double xhat = (xv[p] - mu) * is;
                  dx[p] += g * is * (dy[p] - c1 - xhat * c2);
                }
              }
            } else {
              for (int64_t in = 0; in < n; ++in) {
                const double* dy = yi->grad.data() + (in * c + ic) * hw;
                double* dx = xi->grad.data() + (in * c + ic) * hw;
                for (int64_t p = 0; p < hw; ++p) dx[p] += g * is * dy[p];
              }
            }
          }
        }
      });
  return y;
}

Tensor layernorm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                 double eps) {
  check_input("layernorm", x);
  if (x.ndim() < 1) throw DimensionError("layernorm: rank-0 input");
  const int64_t c = x.shape().back();
  if (gamma.numel() != c || beta.numel() != c)
    throw DimensionError("layernorm: affine params must have extent " +
                         std::to_string(c));
  if (eps <= 0) throw ConfigError("layernorm: eps must be positive");
  const int64_t rows = x.numel() / c;

  std::vector<double> mean(rows), inv_std(rows);
  Tensor y(x.shape());
  {
    const double* xd = x.data().data();
    const double* gd = gamma.data().data();
    const double* bd = beta.data().data();
    double* yd = y.data().data();
    for (int64_t r = 0; r < rows; ++r) {
      const double* row = xd + r * c;
      double mu = 0.0;
      for (int64_t j = 0; j < c; ++j) mu += row[j];
      mu /= double(c);
      double var = 0.0;
      for (int64_t j = 0; j < c; ++j) {
        const double d = row[j] - mu;
        var += d * d;
      }
      var /= double(c);
      const double is = 1.0 / std::sqrt(var + eps);
      mean[r] = mu;
      inv_std[r] = is;
      double* out = yd + r * c;
      for (int64_t j = 0; j < c; ++j) out[j] = gd[j] * (row[j] - mu) * is + bd[j];
    }
  }
  check_output("layernorm", y);

  detail::autodiff_record(
      y, {&x, &gamma, &beta},
      [xi = x.impl(), gi = gamma.impl(), bi = beta.impl(), yi = y.impl(),
       mean = std::move(mean), inv_std = std::move(inv_std), rows, c]() {
        for (int64_t r = 0; r < rows; ++r) {
          const double* dy = yi->grad.data() + r * c;
          const double* xv = xi->data.data() + r * c;
          const double mu = mean[r], is = inv_std[r];
          double s1 = 0.0, s2 = 0.0;  // sums of g*dy and g*dy*xhat
          for (int64_t j = 0; j < c; ++j) {
            const double xhat = (xv[j] - mu) * is;
            const double gdy = gi->data[j] * dy[j];
            s1 += gdy;
            s2 += gdy * xhat;
            if (gi->requires_grad) gi->grad[j] += dy[j] * xhat;
            if (bi->requires_grad) bi->grad[j] += dy[j];
          }
          if (xi->requires_grad) {
            double* dx = xi->grad.data() + r * c;
            const double c1 = s1 / double(c), c2 = s2 / double(c);
            for (int64_t j = 0; j < c; ++j) {
              const double xhat = (xv[j] - mu) * is;
              dx[j] += is * (gi->data[j] * dy[j] - c1 - xhat * c2);
            }
          }
        }
      });
  return y;
}

// ---- activations / softmax ----

Tensor relu(const Tensor& x) {
  check_input("relu", x);
  Tensor y(x.shape());
  const double* xd = x.data().data();
  double* yd = y.data().data();
  const int64_t n = x.numel();
  for (int64_t i = 0; i < n; ++i) yd[i] = xd[i] > 0.0 ? xd[i] : 0.0;

  detail::autodiff_record(y, {&x}, [xi = x.impl(), yi = y.impl(), n]() {
    if (!xi->requires_grad) return;
    // Subgradient at exactly 0 is 0.
    for (int64_t i = 0; i < n; ++i)
      if (xi->data[i] > 0.0) xi->grad[i] += yi->grad[i];
  });
  return y;
}

Tensor gelu(const Tensor& x) {
  check_input("gelu", x);
  Tensor y(x.shape());
  const double* xd = x.data().data();
  double* yd = y.data().data();
  const int64_t n = x.numel();
  for (int64_t i = 0; i < n; ++i) {
    yd[i] = 0.5 * xd[i] * (1.0 + std::erf(xd[i] * kInvSqrt2));
  }
  detail::autodiff_record(y, {&x}, [xi = x.impl(), yi = y.impl(), n]() {
    if (!xi->requires_grad) return;
    for (int64_t i = 0; i < n; ++i) {
      const double v = xi->data[i];
      const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
      const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
      xi->grad[i] += yi->grad[i] * (cdf + v * pdf);
    }
  });
  return y;
}

namespace {
void softmax_extents(const Tensor& x, int axis, int64_t* outer, int64_t* len,
                     int64_t* inner, int* norm_axis) {
  int a = axis < 0 ? axis + int(x.ndim()) : axis;
  if (a < 0 || a >= int(x.ndim()))
    throw DimensionError("softmax: axis " + std::to_string(axis) +
                         " out of range for " + shape_str(x.shape()));
  int64_t o = 1, i = 1;
  for (int d = 0; d < a; ++d) o *= x.dim(d);
  for (size_t d = a + 1; d < x.ndim(); ++d) i *= x.dim(d);
  *outer = o;
  *len = x.dim(a);
  *inner = i;
  *norm_axis = a;
}
}  // namespace

Tensor softmax(const Tensor& x, int axis) {
  check_input("softmax", x);
  int64_t outer, len, inner;
  int a;
  softmax_extents(x, axis, &outer, &len, &inner, &a);

  Tensor y(x.shape());
  const double* xd = x.data().data();
  double* yd = y.data().data();
  for (int64_t o = 0; o < outer; ++o)
    for (int64_t i = 0; i < inner; ++i) {
      const int64_t base = o * len * inner + i;
      double mx = xd[base];
      for (int64_t j = 1; j < len; ++j)
        mx = std::max(mx, xd[base + j * inner]);
      double z = 0.0;
      for (int64_t j = 0; j < len; ++j) {
        const double e = std::exp(xd[base + j * inner] - mx);
        yd[base + j * inner] = e;
        z += e;
      }
      const double inv = 1.0 / z;
      for (int64_t j = 0; j < len; ++j) yd[base + j * inner] *= inv;
    }
  check_output("softmax", y);

  detail::autodiff_record(
      y, {&x}, [xi = x.impl(), yi = y.impl(), outer, len, inner]() {
        if (!xi->requires_grad) return;
        for (int64_t o = 0; o < outer; ++o)
          for (int64_t i = 0; i < inner; ++i) {
            const int64_t base = o * len * inner + i;
            double dot = 0.0;
            for (int64_t j = 0; j < len; ++j)
              dot += yi->grad[base + j * inner] * yi->data[base + j * inner];
            for (int64_t j = 0; j < len; ++j) {
              const int64_t k = base + j * inner;
              xi->grad[k] += yi->data[k] * (yi->grad[k] - dot);
            }
          }
      });
  return y;
}

// ---- elementwise ----

namespace {
template <typename Fwd, typename Bwd>
Tensor binary_elementwise(const char* op, const Tensor& a, const Tensor& b,
                          Fwd fwd, Bwd bwd) {
  check_input(op, a);
  check_input(op, b);
  detail::check_same_shape(op, a, b);
  Tensor y(a.shape());
  const double* ad = a.data().data();
  const double* bd = b.data().data();
  double* yd = y.data().data();
  const int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) yd[i] = fwd(ad[i], bd[i]);
  detail::autodiff_record(y, {&a, &b},
                          [ai = a.impl(), bi = b.impl(), yi = y.impl(), n,
                           bwd]() { bwd(*ai, *bi, *yi, n); });
  return y;
}
}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      "add", a, b, [](double x, double y) { return x + y; },
      [](TensorImpl& ai, TensorImpl& bi, TensorImpl& yi, int64_t n) {
        if (ai.requires_grad)
          for (int64_t i = 0; i < n; ++i) ai.grad[i] += yi.grad[i];
        if (bi.requires_grad)
          for (int64_t i = 0; i < n; ++i) bi.grad[i] += yi.grad[i];
      });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](TensorImpl& ai, TensorImpl& bi, TensorImpl& yi, int64_t n) {
        if (ai.requires_grad)
          for (int64_t i = 0; i < n; ++i) ai.grad[i] += yi.grad[i];
        if (bi.requires_grad)
          for (int64_t i = 0; i < n; ++i) bi.grad[i] -= yi.grad[i];
      });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](TensorImpl& ai, TensorImpl& bi, TensorImpl& yi, int64_t n) {
        if (ai.requires_grad)
          for (int64_t i = 0; i < n; ++i) ai.grad[i] += yi.grad[i] * bi.data[i];
        if (bi.requires_grad)
          for (int64_t i = 0; i < n; ++i) bi.grad[i] += yi.grad[i] * ai.data[i];
      });
}

Tensor scalar_mul(const Tensor& a, double c) {
  check_input("scalar_mul", a);
  Tensor y(a.shape());
  const double* ad = a.data().data();
  double* yd = y.data().data();
  const int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) yd[i] = ad[i] * c;
  detail::autodiff_record(y, {&a}, [ai = a.impl(), yi = y.impl(), n, c]() {
    if (!ai->requires_grad) return;
    for (int64_t i = 0; i < n; ++i) ai->grad[i] += yi->grad[i] * c;
  });
  return y;
}

Tensor abs(const Tensor& x) {
  check_input("abs", x);
  Tensor y(x.shape());
  const double* xd = x.data().data();
  double* yd = y.data().data();
  const int64_t n = x.numel();
  for (int64_t i = 0; i < n; ++i) yd[i] = std::fabs(xd[i]);
  detail::autodiff_record(y, {&x}, [xi = x.impl(), yi = y.impl(), n]() {
    if (!xi->requires_grad) return;
    // Subgradient at 0 is 0, matching the relu convention.
    for (int64_t i = 0; i < n; ++i) {
      const double v = xi->data[i];
      if (v > 0.0)
        xi->grad[i] += yi->grad[i];
      else if (v < 0.0)
        xi->grad[i] -= yi->grad[i];
    }
  });
  return y;
}

// ---- shape ops ----

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw UsageError("concat: no inputs");
  const Tensor& first = parts.front();
  check_input("concat", first);
  int a = axis < 0 ? axis + int(first.ndim()) : axis;
  if (a < 0 || a >= int(first.ndim()))
    throw DimensionError("concat: axis out of range");
  Shape out_shape = first.shape();
  int64_t total = first.dim(a);
  for (size_t p = 1; p < parts.size(); ++p) {
    check_input("concat", parts[p]);
    if (parts[p].ndim() != first.ndim())
      throw DimensionError("concat: rank mismatch");
    for (size_t d = 0; d < first.ndim(); ++d) {
      if (int(d) == a) continue;
      if (parts[p].dim(d) != first.dim(d))
        throw DimensionError("concat: extent mismatch off the concat axis: " +
                             shape_str(first.shape()) + " vs " +
                             shape_str(parts[p].shape()));
    }
    total += parts[p].dim(a);
  }
  out_shape[a] = total;

  int64_t outer = 1, inner = 1;
  for (int d = 0; d < a; ++d) outer *= first.dim(d);
  for (size_t d = a + 1; d < first.ndim(); ++d) inner *= first.dim(d);

  Tensor y(out_shape);
  {
    double* yd = y.data().data();
    int64_t offset = 0;  // in axis units
    for (const Tensor& part : parts) {
      const int64_t len = part.dim(a);
      const double* pd = part.data().data();
      for (int64_t o = 0; o < outer; ++o) {
        std::memcpy(yd + (o * total + offset) * inner, pd + o * len * inner,
                    static_cast<size_t>(len * inner) * sizeof(double));
      }
      offset += len;
    }
  }

  std::vector<ImplPtr> impls;
  impls.reserve(parts.size());
  bool needs = false;
  for (const Tensor& part : parts) {
    impls.push_back(part.impl());
    needs = needs || part.requires_grad();
  }
  if (active_tape() && needs) {
    y.set_requires_grad(true);
    active_tape()->record(y.impl(), [impls, yi = y.impl(), outer, inner, total,
                                     a]() {
      int64_t offset = 0;
      for (const auto& pi : impls) {
        const int64_t len = pi->shape[a];
        if (pi->requires_grad) {
          for (int64_t o = 0; o < outer; ++o) {
            const double* src = yi->grad.data() + (o * total + offset) * inner;
            double* dst = pi->grad.data() + o * len * inner;
            for (int64_t i = 0; i < len * inner; ++i) dst[i] += src[i];
          }
        }
        offset += len;
      }
    });
  }
  return y;
}

Tensor slice(const Tensor& x, int axis, int64_t start, int64_t len) {
  check_input("slice", x);
  int a = axis < 0 ? axis + int(x.ndim()) : axis;
  if (a < 0 || a >= int(x.ndim()))
    throw DimensionError("slice: axis out of range");
  const int64_t extent = x.dim(a);
  if (start < 0 || len < 1 || start + len > extent)
    throw DimensionError("slice: window [" + std::to_string(start) + "," +
                         std::to_string(start + len) + ") outside extent " +
                         std::to_string(extent));
  int64_t outer = 1, inner = 1;
  for (int d = 0; d < a; ++d) outer *= x.dim(d);
  for (size_t d = a + 1; d < x.ndim(); ++d) inner *= x.dim(d);

  Shape out_shape = x.shape();
  out_shape[a] = len;
  Tensor y(out_shape);
  for (int64_t o = 0; o < outer; ++o) {
    std::memcpy(y.data().data() + o * len * inner,
                x.data().data() + (o * extent + start) * inner,
                static_cast<size_t>(len * inner) * sizeof(double));
  }
  detail::autodiff_record(y, {&x}, [xi = x.impl(), yi = y.impl(), outer, inner,
                                    extent, start, len]() {
    if (!xi->requires_grad) return;
    for (int64_t o = 0; o < outer; ++o) {
      const double* src = yi->grad.data() + o * len * inner;
      double* dst = xi->grad.data() + (o * extent + start) * inner;
      for (int64_t i = 0; i < len * inner; ++i) dst[i] += src[i];
    }
  });
  return y;
}

Tensor reshape(const Tensor& x, Shape shape) {
  check_input("reshape", x);
  if (numel_of(shape) != x.numel())
    throw DimensionError("reshape: cannot view " + shape_str(x.shape()) +
                         " as " + shape_str(shape));
  Tensor y = Tensor::from_data(std::move(shape),
                               {x.data().begin(), x.data().end()});
  detail::autodiff_record(y, {&x}, [xi = x.impl(), yi = y.impl()]() {
    if (!xi->requires_grad) return;
    for (size_t i = 0; i < xi->grad.size(); ++i) xi->grad[i] += yi->grad[i];
  });
  return y;
}

Tensor flatten_tokens(const Tensor& x) {
  check_input("flatten_tokens", x);
  if (x.ndim() != 4)
    throw DimensionError("flatten_tokens: expected [N,C,H,W], got " +
                         shape_str(x.shape()));
  const int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int64_t l = h * w;
  Tensor y({n, l, c});
  const double* xd = x.data().data();
  double* yd = y.data().data();
  for (int64_t in = 0; in < n; ++in)
    for (int64_t ic = 0; ic < c; ++ic) {
      const double* plane = xd + (in * c + ic) * l;
      double* out = yd + in * l * c + ic;
      for (int64_t p = 0; p < l; ++p) out[p * c] = plane[p];
    }
  detail::autodiff_record(y, {&x}, [xi = x.impl(), yi = y.impl(), n, c, l]() {
    if (!xi->requires_grad) return;
    for (int64_t in = 0; in < n; ++in)
      for (int64_t ic = 0; ic < c; ++ic) {
        double* dplane = xi->grad.data() + (in * c + ic) * l;
        const double* dy = yi->grad.data() + in * l * c + ic;
        for (int64_t p = 0; p < l; ++p) dplane[p] += dy[p * c];
      }
  });
  return y;
}

Tensor unflatten_tokens(const Tensor& t, int64_t h, int64_t w) {
  check_input("unflatten_tokens", t);
  if (t.ndim() != 3)
    throw DimensionError("unflatten_tokens: expected [N,L,C], got " +
                         shape_str(t.shape()));
  const int64_t n = t.dim(0), l = t.dim(1), c = t.dim(2);
  if (l != h * w)
    throw DimensionError("unflatten_tokens: " + std::to_string(l) +
                         " tokens cannot fill " + std::to_string(h) + "x" +
                         std::to_string(w));
  Tensor y({n, c, h, w});
  const double* td = t.data().data();
  double* yd = y.data().data();
  for (int64_t in = 0; in < n; ++in)
    for (int64_t ic = 0; ic < c; ++ic) {
      double* plane = yd + (in * c + ic) * l;
      const double* src = td + in * l * c + ic;
      for (int64_t p = 0; p < l; ++p) plane[p] = src[p * c];
    }
  detail::autodiff_record(y, {&t}, [ti = t.impl(), yi = y.impl(), n, c, l]() {
    if (!ti->requires_grad) return;
    for (int64_t in = 0; in < n; ++in)
      for (int64_t ic = 0; ic < c; ++ic) {
        const double* dplane = yi->grad.data() + (in * c + ic) * l;
        double* dt = ti->grad.data() + in * l * c + ic;
        for (int64_t p = 0; p < l; ++p) dt[p * c] += dplane[p];
      }
  });
  return y;
}

// ---- pooling / resampling ----

Tensor global_avg_pool(const Tensor& x) {
  check_input("global_avg_pool", x);
  if (x.ndim() != 4)
    throw DimensionError("global_avg_pool: expected [N,C,H,W], got " +
                         shape_str(x.shape()));
  const int64_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  if (hw < 1) throw DimensionError("global_avg_pool: empty spatial extent");
  Tensor y({n, c});
  const double* xd = x.data().data();
  double* yd = y.data().data();
  for (int64_t i = 0; i < n * c; ++i) {
    const double* plane = xd + i * hw;
    double s = 0.0;
    for (int64_t p = 0; p < hw; ++p) s += plane[p];
    yd[i] = s / double(hw);
  }
  detail::autodiff_record(y, {&x}, [xi = x.impl(), yi = y.impl(), n, c, hw]() {
    if (!xi->requires_grad) return;
    const double inv = 1.0 / double(hw);
    for (int64_t i = 0; i < n * c; ++i) {
      const double g = yi->grad[i] * inv;
      double* dplane = xi->grad.data() + i * hw;
      for (int64_t p = 0; p < hw; ++p) dplane[p] += g;
    }
  });
  return y;
}

namespace {
// Half-pixel-center source taps for x2 upsampling along one axis.
struct UpTaps {
  std::vector<int64_t> lo, hi;
  std::vector<double> t;  // weight of hi
};

UpTaps upsample_taps(int64_t in_extent) {
  UpTaps taps;
  const int64_t out = in_extent * 2;
  taps.lo.resize(out);
  taps.hi.resize(out);
  taps.t.resize(out);
  for (int64_t i = 0; i < out; ++i) {
    double src = (double(i) + 0.5) / 2.0 - 0.5;
    src = std::clamp(src, 0.0, double(in_extent - 1));
    const int64_t lo = static_cast<int64_t>(std::floor(src));
    taps.lo[i] = lo;
    taps.hi[i] = std::min(lo + 1, in_extent - 1);
    taps.t[i] = src - double(lo);
  }
  return taps;
}
}  // namespace

Tensor bilinear_upsample2x(const Tensor& x) {
  check_input("bilinear_upsample2x", x);
  if (x.ndim() != 4)
    throw DimensionError("bilinear_upsample2x: expected [N,C,H,W], got " +
                         shape_str(x.shape()));
  const int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (h < 1 || w < 1)
    throw DimensionError("bilinear_upsample2x: empty spatial extent");
  const UpTaps ty = upsample_taps(h), tx = upsample_taps(w);
  const int64_t oh = 2 * h, ow = 2 * w;

  Tensor y({n, c, oh, ow});
  {
    const double* xd = x.data().data();
    double* yd = y.data().data();
    for (int64_t i = 0; i < n * c; ++i) {
      const double* plane = xd + i * h * w;
      double* out = yd + i * oh * ow;
      for (int64_t oy = 0; oy < oh; ++oy) {
        const int64_t y0 = ty.lo[oy], y1 = ty.hi[oy];
        const double fy = ty.t[oy];
        for (int64_t ox = 0; ox < ow; ++ox) {
          const int64_t x0 = tx.lo[ox], x1 = tx.hi[ox];
          const double fx = tx.t[ox];
          const double top = plane[y0 * w + x0] * (1 - fx) + plane[y0 * w + x1] * fx;
          const double bot = plane[y1 * w + x0] * (1 - fx) + plane[y1 * w + x1] * fx;
          out[oy * ow + ox] = top * (1 - fy) + bot * fy;
        }
      }
    }
  }
  detail::autodiff_record(y, {&x}, [xi = x.impl(), yi = y.impl(), n, c, h, w,
                                    ty, tx, oh, ow]() {
    if (!xi->requires_grad) return;
    for (int64_t i = 0; i < n * c; ++i) {
      double* dplane = xi->grad.data() + i * h * w;
      const double* dy = yi->grad.data() + i * oh * ow;
      for (int64_t oy = 0; oy < oh; ++oy) {
        const int64_t y0 = ty.lo[oy], y1 = ty.hi[oy];
        const double fy = ty.t[oy];
        for (int64_t ox = 0; ox < ow; ++ox) {
          const int64_t x0 = tx.lo[ox], x1 = tx.hi[ox];
          const double fx = tx.t[ox];
          const double g = dy[oy * ow + ox];
          dplane[y0 * w + x0] += g * (1 - fy) * (1 - fx);
          dplane[y0 * w + x1] += g * (1 - fy) * fx;
          dplane[y1 * w + x0] += g * fy * (1 - fx);
          dplane[y1 * w + x1] += g * fy * fx;
        }
      }
    }
  });
  return y;
}

Tensor scale_channels(const Tensor& x, const Tensor& s) {
  check_input("scale_channels", x);
  check_input("scale_channels", s);
  if (x.ndim() != 4 || s.ndim() != 2 || s.dim(0) != x.dim(0) ||
      s.dim(1) != x.dim(1))
    throw DimensionError("scale_channels: want x [N,C,H,W] and s [N,C], got " +
                         shape_str(x.shape()) + " and " + shape_str(s.shape()));
  const int64_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  Tensor y(x.shape());
  const double* xd = x.data().data();
  const double* sd = s.data().data();
  double* yd = y.data().data();
  for (int64_t i = 0; i < n * c; ++i) {
    const double k = sd[i];
    const double* plane = xd + i * hw;
    double* out = yd + i * hw;
    for (int64_t p = 0; p < hw; ++p) out[p] = plane[p] * k;
  }
  detail::autodiff_record(
      y, {&x, &s}, [xi = x.impl(), si = s.impl(), yi = y.impl(), n, c, hw]() {
        for (int64_t i = 0; i < n * c; ++i) {
          const double* dy = yi->grad.data() + i * hw;
          if (xi->requires_grad) {
            const double k = si->data[i];
            double* dx = xi->grad.data() + i * hw;
            for (int64_t p = 0; p < hw; ++p) dx[p] += dy[p] * k;
          }
          if (si->requires_grad) {
            const double* xv = xi->data.data() + i * hw;
            double acc = 0.0;
            for (int64_t p = 0; p < hw; ++p) acc += dy[p] * xv[p];
            si->grad[i] += acc;
          }
        }
      });
  return y;
}

// ---- reductions ----

Tensor sum(const Tensor& x) {
  check_input("sum", x);
  double s = 0.0;
  for (double v : x.data()) s += v;
  Tensor y = Tensor::from_data({1}, {s});
  detail::autodiff_record(y, {&x}, [xi = x.impl(), yi = y.impl()]() {
    if (!xi->requires_grad) return;
    const double g = yi->grad[0];
    for (auto& gv : xi->grad) gv += g;
  });
  return y;
}

Tensor mean(const Tensor& x) {
  check_input("mean", x);
  if (x.numel() == 0) throw DimensionError("mean: empty tensor");
  double s = 0.0;
  for (double v : x.data()) s += v;
  const double inv = 1.0 / double(x.numel());
  Tensor y = Tensor::from_data({1}, {s * inv});
  detail::autodiff_record(y, {&x}, [xi = x.impl(), yi = y.impl(), inv]() {
    if (!xi->requires_grad) return;
    const double g = yi->grad[0] * inv;
    for (auto& gv : xi->grad) gv += g;
  });
  return y;
}

// ---- loss / prediction ----

namespace {
int check_mask_value(double v, int64_t num_classes) {
  if (v != std::floor(v) || v < 0 || v >= double(num_classes))
    throw DataError("mask: expected integer class ids in [0," +
                    std::to_string(num_classes) + "), found " +
                    std::to_string(v));
  return static_cast<int>(v);
}
}  // namespace

Tensor weighted_ce_loss(const Tensor& logits, const Tensor& mask,
                        const std::vector<double>& weights) {
  check_input("weighted_ce_loss", logits);
  check_input("weighted_ce_loss", mask);
  if (logits.ndim() != 4)
    throw DimensionError("weighted_ce_loss: logits must be [N,K,H,W], got " +
                         shape_str(logits.shape()));
  const int64_t n = logits.dim(0), k = logits.dim(1), h = logits.dim(2),
                w = logits.dim(3);
  if (mask.ndim() != 3 || mask.dim(0) != n || mask.dim(1) != h || mask.dim(2) != w)
    throw DimensionError("weighted_ce_loss: mask " + shape_str(mask.shape()) +
                         " does not match logits " + shape_str(logits.shape()));
  if (int64_t(weights.size()) != k)
    throw DimensionError("weighted_ce_loss: need one weight per class");
  for (double wv : weights)
    if (!(wv > 0)) throw ConfigError("weighted_ce_loss: weights must be > 0");

  const int64_t hw = h * w;
  const double* ld = logits.data().data();
  const double* md = mask.data().data();
  double total = 0.0, wsum = 0.0;
  for (int64_t in = 0; in < n; ++in)
    for (int64_t p = 0; p < hw; ++p) {
      const int y = check_mask_value(md[in * hw + p], k);
      const double* cell = ld + in * k * hw + p;
      double mx = cell[0];
      for (int64_t c = 1; c < k; ++c) mx = std::max(mx, cell[c * hw]);
      double z = 0.0;
      for (int64_t c = 0; c < k; ++c) z += std::exp(cell[c * hw] - mx);
      const double lse = mx + std::log(z);
      const double wv = weights[size_t(y)];
      total += wv * (lse - cell[int64_t(y) * hw]);
      wsum += wv;
    }

  Tensor out = Tensor::from_data({1}, {total / wsum});
  check_output("weighted_ce_loss", out);

  detail::autodiff_record(
      out, {&logits},
      [li = logits.impl(), mi = mask.impl(), oi = out.impl(), weights, wsum, n,
       k, hw]() {
        if (!li->requires_grad) return;
        const double g = oi->grad[0] / wsum;
        for (int64_t in = 0; in < n; ++in)
          for (int64_t p = 0; p < hw; ++p) {
            const int y = static_cast<int>(mi->data[in * hw + p]);
            const double* cell = li->data.data() + in * k * hw + p;
            double* dcell = li->grad.data() + in * k * hw + p;
            double mx = cell[0];
            for (int64_t c = 1; c < k; ++c) mx = std::max(mx, cell[c * hw]);
            double z = 0.0;
            for (int64_t c = 0; c < k; ++c) z += std::exp(cell[c * hw] - mx);
            const double wv = weights[size_t(y)];
            for (int64_t c = 0; c < k; ++c) {
              const double prob = std::exp(cell[c * hw] - mx) / z;
              dcell[c * hw] += g * wv * (prob - (c == y ? 1.0 : 0.0));
            }
          }
      });
  return out;
}

Tensor argmax_channel(const Tensor& logits) {
  if (logits.ndim() != 4)
    throw DimensionError("argmax_channel: logits must be [N,K,H,W]");
  const int64_t n = logits.dim(0), k = logits.dim(1),
                hw = logits.dim(2) * logits.dim(3);
  Tensor out({n, logits.dim(2), logits.dim(3)});
  const double* ld = logits.data().data();
  double* od = out.data().data();
  for (int64_t in = 0; in < n; ++in)
    for (int64_t p = 0; p < hw; ++p) {
      const double* cell = ld + in * k * hw + p;
      int best = 0;
      double bv = cell[0];
      for (int64_t c = 1; c < k; ++c) {
        if (cell[c * hw] > bv) {
          bv = cell[c * hw];
          best = int(c);
        }
      }
      od[in * hw + p] = double(best);
    }
  return out;
}

std::array<double, 2> batch_class_weights(const Tensor& mask, double clamp_lo,
                                          double clamp_hi) {
  check_input("batch_class_weights", mask);
  int64_t counts[2] = {0, 0};
  for (double v : mask.data()) counts[check_mask_value(v, 2)]++;
  const double total = double(counts[0] + counts[1]);
  std::array<double, 2> w{};
  for (int c = 0; c < 2; ++c) {
    w[size_t(c)] = counts[c] == 0 ? clamp_hi
                                  : std::clamp(total / (2.0 * double(counts[c])),
                                               clamp_lo, clamp_hi);
  }
  return w;
}

}  // namespace mctnet
