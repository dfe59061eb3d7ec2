#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <type_traits>
#include <vector>

#include "aif/tensor.hpp"

// Differentiable array operations. Conventions:
//   - images are NCHW, row-major
//   - elementwise binaries require identical shapes (no implicit broadcast)
//   - log inputs are clamped at 1e-12 with zero gradient below the floor
// Shape rules are stated per op; every op here is covered by the
// finite-difference suite in tests/.

namespace aif {

namespace detail {

template <class T>
using EMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using EMap = Eigen::Map<EMat<T>>;
template <class T>
using ECMap = Eigen::Map<const EMat<T>>;

template <class T>
inline void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  check(a.shape() == b.shape(),
        std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

constexpr double kLogFloor = 1e-12;

}  // namespace detail

// ---------------------------------------------------------------------------
// elementwise binaries
// ---------------------------------------------------------------------------

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a, b, "add");
  std::vector<T> out(a.data());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.data()[i];
  auto an = a.node(), bn = b.node();
  return Tensor<T>::make_op(a.shape(), std::move(out), {a, b}, [an, bn](const std::vector<T>& g, GradMap<T>& gm) {
    auto& ga = gm.buf(an.get());
    auto& gb = gm.buf(bn.get());
    for (std::size_t i = 0; i < g.size(); ++i) {
      ga[i] += g[i];
      gb[i] += g[i];
    }
  });
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a, b, "sub");
  std::vector<T> out(a.data());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.data()[i];
  auto an = a.node(), bn = b.node();
  return Tensor<T>::make_op(a.shape(), std::move(out), {a, b}, [an, bn](const std::vector<T>& g, GradMap<T>& gm) {
    auto& ga = gm.buf(an.get());
    auto& gb = gm.buf(bn.get());
    for (std::size_t i = 0; i < g.size(); ++i) {
      ga[i] += g[i];
      gb[i] -= g[i];
    }
  });
}

// Hadamard product.
template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a, b, "mul");
  std::vector<T> out(a.data());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.data()[i];
  auto an = a.node(), bn = b.node();
  return Tensor<T>::make_op(a.shape(), std::move(out), {a, b}, [an, bn](const std::vector<T>& g, GradMap<T>& gm) {
    auto& ga = gm.buf(an.get());
    auto& gb = gm.buf(bn.get());
    for (std::size_t i = 0; i < g.size(); ++i) {
      ga[i] += g[i] * bn->data[i];
      gb[i] += g[i] * an->data[i];
    }
  });
}

template <class T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a, b, "div");
  std::vector<T> out(a.data());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] /= b.data()[i];
  auto an = a.node(), bn = b.node();
  return Tensor<T>::make_op(a.shape(), std::move(out), {a, b}, [an, bn](const std::vector<T>& g, GradMap<T>& gm) {
    auto& ga = gm.buf(an.get());
    auto& gb = gm.buf(bn.get());
    for (std::size_t i = 0; i < g.size(); ++i) {
      const T inv = T(1) / bn->data[i];
      ga[i] += g[i] * inv;
      gb[i] -= g[i] * an->data[i] * inv * inv;
    }
  });
}

// ---------------------------------------------------------------------------
// elementwise unaries
// ---------------------------------------------------------------------------

namespace detail {

// fwd(x) -> y, dydx(x, y) -> local derivative
template <class T, class F, class D>
Tensor<T> unary_op(const Tensor<T>& x, F fwd, D dydx) {
  std::vector<T> out(x.data().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(x.data()[i]);
  auto xn = x.node();
  auto out_copy = out;  // y values for the backward closure
  return Tensor<T>::make_op(x.shape(), std::move(out), {x},
                            [xn, dydx, y = std::move(out_copy)](const std::vector<T>& g, GradMap<T>& gm) {
                              auto& gx = gm.buf(xn.get());
                              for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * dydx(xn->data[i], y[i]);
                            });
}

}  // namespace detail

template <class T>
Tensor<T> neg(const Tensor<T>& x) {
  return detail::unary_op(
      x, [](T v) { return -v; }, [](T, T) { return T(-1); });
}

template <class T>
Tensor<T> scale(const Tensor<T>& x, T c) {
  return detail::unary_op(
      x, [c](T v) { return c * v; }, [c](T, T) { return c; });
}

template <class T>
Tensor<T> add_scalar(const Tensor<T>& x, T c) {
  return detail::unary_op(
      x, [c](T v) { return v + c; }, [](T, T) { return T(1); });
}

template <class T>
Tensor<T> exp(const Tensor<T>& x) {
  return detail::unary_op(
      x, [](T v) { return std::exp(v); }, [](T, T y) { return y; });
}

// ln(max(x, 1e-12)); derivative is exactly 0 below the floor.
template <class T>
Tensor<T> log(const Tensor<T>& x) {
  const T floor = static_cast<T>(detail::kLogFloor);
  return detail::unary_op(
      x, [floor](T v) { return std::log(std::max(v, floor)); },
      [floor](T v, T) { return v >= floor ? T(1) / v : T(0); });
}

template <class T>
Tensor<T> sqrt(const Tensor<T>& x) {
  return detail::unary_op(
      x, [](T v) { return std::sqrt(v); }, [](T, T y) { return T(0.5) / y; });
}

template <class T>
Tensor<T> leaky_relu(const Tensor<T>& x, T slope = T(0.01)) {
  return detail::unary_op(
      x, [slope](T v) { return v > T(0) ? v : slope * v; },
      [slope](T v, T) { return v > T(0) ? T(1) : slope; });
}

// Logistic; saturated tails are nudged inside (0,1) so downstream masks and
// probabilities stay strictly in the open interval.
template <class T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  const T lo = std::numeric_limits<T>::min();
  const T hi = T(1) - std::numeric_limits<T>::epsilon() / T(2);
  return detail::unary_op(
      x,
      [lo, hi](T v) {
        const T y = v >= T(0) ? T(1) / (T(1) + std::exp(-v)) : std::exp(v) / (T(1) + std::exp(v));
        return std::min(hi, std::max(lo, y));
      },
      [](T, T y) { return y * (T(1) - y); });
}

// Gradient passes only strictly inside [lo, hi].
template <class T>
Tensor<T> clamp(const Tensor<T>& x, T lo, T hi) {
  return detail::unary_op(
      x, [lo, hi](T v) { return std::min(hi, std::max(lo, v)); },
      [lo, hi](T v, T) { return (v > lo && v < hi) ? T(1) : T(0); });
}

// sign(x) * ln(1 + |x|); continuous with slope 1 at the origin. Used to
// condition DCT spectra before the attention net.
template <class T>
Tensor<T> signed_log1p(const Tensor<T>& x) {
  return detail::unary_op(
      x,
      [](T v) { return v >= T(0) ? std::log1p(v) : -std::log1p(-v); },
      [](T v, T) { return T(1) / (T(1) + std::abs(v)); });
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

template <class T>
Tensor<T> sum(const Tensor<T>& x) {
  T s = 0;
  for (T v : x.data()) s += v;
  auto xn = x.node();
  return Tensor<T>::make_op(Shape{1}, {s}, {x}, [xn](const std::vector<T>& g, GradMap<T>& gm) {
    auto& gx = gm.buf(xn.get());
    for (auto& v : gx) v += g[0];
  });
}

template <class T>
Tensor<T> mean(const Tensor<T>& x) {
  const T inv = T(1) / static_cast<T>(x.numel());
  T s = 0;
  for (T v : x.data()) s += v;
  auto xn = x.node();
  return Tensor<T>::make_op(Shape{1}, {s * inv}, {x}, [xn, inv](const std::vector<T>& g, GradMap<T>& gm) {
    auto& gx = gm.buf(xn.get());
    for (auto& v : gx) v += g[0] * inv;
  });
}

// [N,d] x [N,d] -> [N], row-wise inner products.
template <class T>
Tensor<T> row_dot(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a, b, "row_dot");
  check(a.ndim() == 2, "row_dot: expected 2-d input, got " + shape_str(a.shape()));
  const int n = a.dim(0), d = a.dim(1);
  std::vector<T> out(static_cast<std::size_t>(n), T(0));
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < d; ++k) out[i] += a.data()[i * d + k] * b.data()[i * d + k];
  auto an = a.node(), bn = b.node();
  return Tensor<T>::make_op(Shape{n}, std::move(out), {a, b}, [an, bn, n, d](const std::vector<T>& g, GradMap<T>& gm) {
    auto& ga = gm.buf(an.get());
    auto& gb = gm.buf(bn.get());
    for (int i = 0; i < n; ++i)
      for (int k = 0; k < d; ++k) {
        ga[i * d + k] += g[i] * bn->data[i * d + k];
        gb[i * d + k] += g[i] * an->data[i * d + k];
      }
  });
}

// ---------------------------------------------------------------------------
// linear algebra
// ---------------------------------------------------------------------------

// [M,K] x [K,N] -> [M,N]
template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  check(a.ndim() == 2 && b.ndim() == 2,
        "matmul: expected 2-d operands, got " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  check(a.dim(1) == b.dim(0),
        "matmul: inner dimensions disagree, " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<T> out(static_cast<std::size_t>(m) * n);
  detail::ECMap<T> A(a.data().data(), m, k), B(b.data().data(), k, n);
  detail::EMap<T>(out.data(), m, n).noalias() = A * B;
  auto an = a.node(), bn = b.node();
  return Tensor<T>::make_op(Shape{m, n}, std::move(out), {a, b},
                            [an, bn, m, k, n](const std::vector<T>& g, GradMap<T>& gm) {
                              detail::ECMap<T> G(g.data(), m, n);
                              detail::ECMap<T> A(an->data.data(), m, k), B(bn->data.data(), k, n);
                              detail::EMap<T>(gm.buf(an.get()).data(), m, k).noalias() += G * B.transpose();
                              detail::EMap<T>(gm.buf(bn.get()).data(), k, n).noalias() += A.transpose() * G;
                            });
}

// x [N,in] * W^T [in,out] + b [out] -> [N,out]
template <class T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  check(x.ndim() == 2 && w.ndim() == 2, "linear: expected 2-d input and weight");
  check(x.dim(1) == w.dim(1), "linear: input features " + shape_str(x.shape()) + " do not match weight " +
                                  shape_str(w.shape()));
  const int n = x.dim(0), in = x.dim(1), out_f = w.dim(0);
  check(b.numel() == out_f, "linear: bias " + shape_str(b.shape()) + " does not match out features");
  std::vector<T> out(static_cast<std::size_t>(n) * out_f);
  detail::ECMap<T> X(x.data().data(), n, in), W(w.data().data(), out_f, in);
  detail::EMap<T> Y(out.data(), n, out_f);
  Y.noalias() = X * W.transpose();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < out_f; ++j) out[static_cast<std::size_t>(i) * out_f + j] += b.data()[j];
  auto xn = x.node(), wn = w.node(), bn = b.node();
  return Tensor<T>::make_op(Shape{n, out_f}, std::move(out), {x, w, b},
                            [xn, wn, bn, n, in, out_f](const std::vector<T>& g, GradMap<T>& gm) {
                              detail::ECMap<T> G(g.data(), n, out_f);
                              detail::ECMap<T> X(xn->data.data(), n, in), W(wn->data.data(), out_f, in);
                              detail::EMap<T>(gm.buf(xn.get()).data(), n, in).noalias() += G * W;
                              detail::EMap<T>(gm.buf(wn.get()).data(), out_f, in).noalias() += G.transpose() * X;
                              auto& gb = gm.buf(bn.get());
                              for (int i = 0; i < n; ++i)
                                for (int j = 0; j < out_f; ++j) gb[j] += g[static_cast<std::size_t>(i) * out_f + j];
                            });
}

// ---------------------------------------------------------------------------
// convolution (NCHW cross-correlation, im2col + GEMM)
// ---------------------------------------------------------------------------

namespace detail {

template <class T>
void im2col(const T* x, int c_in, int h, int w, int kh, int kw, int stride, int pad, int oh, int ow, T* cols) {
  // cols is [c_in*kh*kw, oh*ow] row-major
  for (int c = 0; c < c_in; ++c) {
    for (int ki = 0; ki < kh; ++ki) {
      for (int kj = 0; kj < kw; ++kj) {
        T* row = cols + (static_cast<std::size_t>(c) * kh * kw + ki * kw + kj) * oh * ow;
        for (int oi = 0; oi < oh; ++oi) {
          const int ii = oi * stride + ki - pad;
          if (ii < 0 || ii >= h) {
            std::fill(row + static_cast<std::size_t>(oi) * ow, row + static_cast<std::size_t>(oi + 1) * ow, T(0));
            continue;
          }
          const T* src = x + (static_cast<std::size_t>(c) * h + ii) * w;
          for (int oj = 0; oj < ow; ++oj) {
            const int jj = oj * stride + kj - pad;
            row[static_cast<std::size_t>(oi) * ow + oj] = (jj >= 0 && jj < w) ? src[jj] : T(0);
          }
        }
      }
    }
  }
}

template <class T>
void col2im_add(const T* cols, int c_in, int h, int w, int kh, int kw, int stride, int pad, int oh, int ow, T* gx) {
  for (int c = 0; c < c_in; ++c) {
    for (int ki = 0; ki < kh; ++ki) {
      for (int kj = 0; kj < kw; ++kj) {
        const T* row = cols + (static_cast<std::size_t>(c) * kh * kw + ki * kw + kj) * oh * ow;
        for (int oi = 0; oi < oh; ++oi) {
          const int ii = oi * stride + ki - pad;
          if (ii < 0 || ii >= h) continue;
          T* dst = gx + (static_cast<std::size_t>(c) * h + ii) * w;
          for (int oj = 0; oj < ow; ++oj) {
            const int jj = oj * stride + kj - pad;
            if (jj >= 0 && jj < w) dst[jj] += row[static_cast<std::size_t>(oi) * ow + oj];
          }
        }
      }
    }
  }
}

}  // namespace detail

// input [N,Cin,H,W], kernel [Cout,Cin,kh,kw], optional bias [Cout].
// Output spatial dims: floor((H + 2*pad - k)/stride) + 1.
template <class T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w,
                 const std::optional<std::type_identity_t<Tensor<T>>>& b = std::nullopt, int stride = 1,
                 int pad = 0) {
  check(x.ndim() == 4, "conv2d: input must be NCHW, got " + shape_str(x.shape()));
  check(w.ndim() == 4, "conv2d: kernel must be [out,in,kh,kw], got " + shape_str(w.shape()));
  check(stride >= 1, "conv2d: stride must be >= 1");
  check(pad >= 0, "conv2d: padding must be >= 0");
  const int n = x.dim(0), c_in = x.dim(1), h = x.dim(2), wdt = x.dim(3);
  const int c_out = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  check(w.dim(1) == c_in, "conv2d: kernel expects " + std::to_string(w.dim(1)) + " input channels, input has " +
                              std::to_string(c_in) + " (" + shape_str(x.shape()) + " vs " + shape_str(w.shape()) + ")");
  check(h + 2 * pad >= kh && wdt + 2 * pad >= kw,
        "conv2d: padded spatial dims smaller than kernel (" + shape_str(x.shape()) + ", kernel " +
            shape_str(w.shape()) + ", pad " + std::to_string(pad) + ")");
  if (b) check(b->numel() == c_out, "conv2d: bias " + shape_str(b->shape()) + " does not match out channels");

  const int oh = (h + 2 * pad - kh) / stride + 1;
  const int ow = (wdt + 2 * pad - kw) / stride + 1;
  const int k = c_in * kh * kw, p = oh * ow;

  std::vector<T> out(static_cast<std::size_t>(n) * c_out * p);
  std::vector<T> cols(static_cast<std::size_t>(k) * p);
  detail::ECMap<T> W(w.data().data(), c_out, k);
  for (int i = 0; i < n; ++i) {
    detail::im2col(x.data().data() + static_cast<std::size_t>(i) * c_in * h * wdt, c_in, h, wdt, kh, kw, stride, pad,
                   oh, ow, cols.data());
    detail::EMap<T> Y(out.data() + static_cast<std::size_t>(i) * c_out * p, c_out, p);
    Y.noalias() = W * detail::ECMap<T>(cols.data(), k, p);
    if (b)
      for (int c = 0; c < c_out; ++c)
        for (int q = 0; q < p; ++q) out[(static_cast<std::size_t>(i) * c_out + c) * p + q] += b->data()[c];
  }

  std::vector<Tensor<T>> parents = {x, w};
  if (b) parents.push_back(*b);
  auto xn = x.node(), wn = w.node();
  auto bn = b ? b->node() : nullptr;
  auto backward = [xn, wn, bn, n, c_in, h, wdt, c_out, kh, kw, stride, pad, oh, ow, k,
                   p](const std::vector<T>& g, GradMap<T>& gm) {
    std::vector<T> cols(static_cast<std::size_t>(k) * p);
    std::vector<T> gcols(static_cast<std::size_t>(k) * p);
    detail::ECMap<T> W(wn->data.data(), c_out, k);
    detail::EMap<T> GW(gm.buf(wn.get()).data(), c_out, k);
    auto& gx = gm.buf(xn.get());
    for (int i = 0; i < n; ++i) {
      detail::ECMap<T> G(g.data() + static_cast<std::size_t>(i) * c_out * p, c_out, p);
      detail::im2col(xn->data.data() + static_cast<std::size_t>(i) * c_in * h * wdt, c_in, h, wdt, kh, kw, stride,
                     pad, oh, ow, cols.data());
      GW.noalias() += G * detail::ECMap<T>(cols.data(), k, p).transpose();
      detail::EMap<T>(gcols.data(), k, p).noalias() = W.transpose() * G;
      detail::col2im_add(gcols.data(), c_in, h, wdt, kh, kw, stride, pad, oh, ow,
                         gx.data() + static_cast<std::size_t>(i) * c_in * h * wdt);
    }
    if (bn) {
      auto& gb = gm.buf(bn.get());
      for (int i = 0; i < n; ++i)
        for (int c = 0; c < c_out; ++c)
          for (int q = 0; q < p; ++q) gb[c] += g[(static_cast<std::size_t>(i) * c_out + c) * p + q];
    }
  };
  return Tensor<T>::make_op(Shape{n, c_out, oh, ow}, std::move(out), std::move(parents), std::move(backward));
}

// ---------------------------------------------------------------------------
// spatial ops
// ---------------------------------------------------------------------------

template <class T>
Tensor<T> upsample2_nearest(const Tensor<T>& x) {
  check(x.ndim() == 4, "upsample2_nearest: input must be NCHW");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  std::vector<T> out(static_cast<std::size_t>(n) * c * 4 * h * w);
  for (int nc = 0; nc < n * c; ++nc) {
    const T* src = x.data().data() + static_cast<std::size_t>(nc) * h * w;
    T* dst = out.data() + static_cast<std::size_t>(nc) * 4 * h * w;
    for (int i = 0; i < 2 * h; ++i)
      for (int j = 0; j < 2 * w; ++j) dst[static_cast<std::size_t>(i) * 2 * w + j] = src[(i / 2) * w + (j / 2)];
  }
  auto xn = x.node();
  return Tensor<T>::make_op(Shape{n, c, 2 * h, 2 * w}, std::move(out), {x},
                            [xn, n, c, h, w](const std::vector<T>& g, GradMap<T>& gm) {
                              auto& gx = gm.buf(xn.get());
                              for (int nc = 0; nc < n * c; ++nc) {
                                const T* gs = g.data() + static_cast<std::size_t>(nc) * 4 * h * w;
                                T* gd = gx.data() + static_cast<std::size_t>(nc) * h * w;
                                for (int i = 0; i < 2 * h; ++i)
                                  for (int j = 0; j < 2 * w; ++j)
                                    gd[(i / 2) * w + (j / 2)] += gs[static_cast<std::size_t>(i) * 2 * w + j];
                              }
                            });
}

namespace detail {

template <class T>
Tensor<T> pool2(const Tensor<T>& x, bool take_max, const char* name) {
  check(x.ndim() == 4, std::string(name) + ": input must be NCHW");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  check(h % 2 == 0 && w % 2 == 0, std::string(name) + ": spatial dims must be even, got " + shape_str(x.shape()));
  const int oh = h / 2, ow = w / 2;
  std::vector<T> out(static_cast<std::size_t>(n) * c * oh * ow);
  std::vector<int> argmax(take_max ? out.size() : 0);
  for (int nc = 0; nc < n * c; ++nc) {
    const T* src = x.data().data() + static_cast<std::size_t>(nc) * h * w;
    T* dst = out.data() + static_cast<std::size_t>(nc) * oh * ow;
    for (int i = 0; i < oh; ++i)
      for (int j = 0; j < ow; ++j) {
        const int base = 2 * i * w + 2 * j;
        if (take_max) {
          int best = base;
          for (int di = 0; di < 2; ++di)
            for (int dj = 0; dj < 2; ++dj) {
              const int idx = base + di * w + dj;
              if (src[idx] > src[best]) best = idx;
            }
          dst[static_cast<std::size_t>(i) * ow + j] = src[best];
          argmax[static_cast<std::size_t>(nc) * oh * ow + i * ow + j] = best;
        } else {
          dst[static_cast<std::size_t>(i) * ow + j] =
              T(0.25) * (src[base] + src[base + 1] + src[base + w] + src[base + w + 1]);
        }
      }
  }
  auto xn = x.node();
  return Tensor<T>::make_op(
      Shape{n, c, oh, ow}, std::move(out), {x},
      [xn, n, c, h, w, oh, ow, take_max, am = std::move(argmax)](const std::vector<T>& g, GradMap<T>& gm) {
        auto& gx = gm.buf(xn.get());
        for (int nc = 0; nc < n * c; ++nc) {
          const T* gs = g.data() + static_cast<std::size_t>(nc) * oh * ow;
          T* gd = gx.data() + static_cast<std::size_t>(nc) * h * w;
          for (int i = 0; i < oh; ++i)
            for (int j = 0; j < ow; ++j) {
              const T gv = gs[static_cast<std::size_t>(i) * ow + j];
              if (take_max) {
                gd[am[static_cast<std::size_t>(nc) * oh * ow + i * ow + j]] += gv;
              } else {
                const int base = 2 * i * w + 2 * j;
                gd[base] += gv * T(0.25);
                gd[base + 1] += gv * T(0.25);
                gd[base + w] += gv * T(0.25);
                gd[base + w + 1] += gv * T(0.25);
              }
            }
        }
      });
}

}  // namespace detail

template <class T>
Tensor<T> maxpool2(const Tensor<T>& x) {
  return detail::pool2(x, true, "maxpool2");
}

template <class T>
Tensor<T> avgpool2(const Tensor<T>& x) {
  return detail::pool2(x, false, "avgpool2");
}

// [N,C,H,W] -> [N,C]
template <class T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
  check(x.ndim() == 4, "global_avg_pool: input must be NCHW");
  const int n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  const T inv = T(1) / static_cast<T>(hw);
  std::vector<T> out(static_cast<std::size_t>(n) * c, T(0));
  for (int nc = 0; nc < n * c; ++nc) {
    const T* src = x.data().data() + static_cast<std::size_t>(nc) * hw;
    T s = 0;
    for (int i = 0; i < hw; ++i) s += src[i];
    out[static_cast<std::size_t>(nc)] = s * inv;
  }
  auto xn = x.node();
  return Tensor<T>::make_op(Shape{n, c}, std::move(out), {x},
                            [xn, n, c, hw, inv](const std::vector<T>& g, GradMap<T>& gm) {
                              auto& gx = gm.buf(xn.get());
                              for (int nc = 0; nc < n * c; ++nc) {
                                T* gd = gx.data() + static_cast<std::size_t>(nc) * hw;
                                const T gv = g[static_cast<std::size_t>(nc)] * inv;
                                for (int i = 0; i < hw; ++i) gd[i] += gv;
                              }
                            });
}

// Per-pixel softmax over the channel dimension of [N,C,H,W].
template <class T>
Tensor<T> softmax_channels(const Tensor<T>& x) {
  check(x.ndim() == 4, "softmax_channels: input must be NCHW");
  const int n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  std::vector<T> out(x.data().size());
  for (int i = 0; i < n; ++i) {
    const T* src = x.data().data() + static_cast<std::size_t>(i) * c * hw;
    T* dst = out.data() + static_cast<std::size_t>(i) * c * hw;
    for (int q = 0; q < hw; ++q) {
      T mx = src[q];
      for (int ch = 1; ch < c; ++ch) mx = std::max(mx, src[static_cast<std::size_t>(ch) * hw + q]);
      T denom = 0;
      for (int ch = 0; ch < c; ++ch) {
        const T e = std::exp(src[static_cast<std::size_t>(ch) * hw + q] - mx);
        dst[static_cast<std::size_t>(ch) * hw + q] = e;
        denom += e;
      }
      const T inv = T(1) / denom;
      for (int ch = 0; ch < c; ++ch) dst[static_cast<std::size_t>(ch) * hw + q] *= inv;
    }
  }
  auto xn = x.node();
  auto y_copy = out;
  return Tensor<T>::make_op(x.shape(), std::move(out), {x},
                            [xn, n, c, hw, y = std::move(y_copy)](const std::vector<T>& g, GradMap<T>& gm) {
                              auto& gx = gm.buf(xn.get());
                              for (int i = 0; i < n; ++i) {
                                const std::size_t off = static_cast<std::size_t>(i) * c * hw;
                                for (int q = 0; q < hw; ++q) {
                                  T dot = 0;
                                  for (int ch = 0; ch < c; ++ch)
                                    dot += g[off + static_cast<std::size_t>(ch) * hw + q] *
                                           y[off + static_cast<std::size_t>(ch) * hw + q];
                                  for (int ch = 0; ch < c; ++ch) {
                                    const std::size_t idx = off + static_cast<std::size_t>(ch) * hw + q;
                                    gx[idx] += y[idx] * (g[idx] - dot);
                                  }
                                }
                              }
                            });
}

// Channel concatenation of two NCHW tensors.
template <class T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  check(a.ndim() == 4 && b.ndim() == 4, "concat_channels: inputs must be NCHW");
  check(a.dim(0) == b.dim(0) && a.dim(2) == b.dim(2) && a.dim(3) == b.dim(3),
        "concat_channels: non-channel dims disagree, " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  const int n = a.dim(0), ca = a.dim(1), cb = b.dim(1), hw = a.dim(2) * a.dim(3);
  std::vector<T> out(static_cast<std::size_t>(n) * (ca + cb) * hw);
  for (int i = 0; i < n; ++i) {
    std::copy_n(a.data().data() + static_cast<std::size_t>(i) * ca * hw, static_cast<std::size_t>(ca) * hw,
                out.data() + static_cast<std::size_t>(i) * (ca + cb) * hw);
    std::copy_n(b.data().data() + static_cast<std::size_t>(i) * cb * hw, static_cast<std::size_t>(cb) * hw,
                out.data() + static_cast<std::size_t>(i) * (ca + cb) * hw + static_cast<std::size_t>(ca) * hw);
  }
  auto an = a.node(), bn = b.node();
  return Tensor<T>::make_op(Shape{n, ca + cb, a.dim(2), a.dim(3)}, std::move(out), {a, b},
                            [an, bn, n, ca, cb, hw](const std::vector<T>& g, GradMap<T>& gm) {
                              auto& ga = gm.buf(an.get());
                              auto& gb = gm.buf(bn.get());
                              for (int i = 0; i < n; ++i) {
                                const T* gs = g.data() + static_cast<std::size_t>(i) * (ca + cb) * hw;
                                for (std::size_t k = 0; k < static_cast<std::size_t>(ca) * hw; ++k)
                                  ga[static_cast<std::size_t>(i) * ca * hw + k] += gs[k];
                                for (std::size_t k = 0; k < static_cast<std::size_t>(cb) * hw; ++k)
                                  gb[static_cast<std::size_t>(i) * cb * hw + k] += gs[static_cast<std::size_t>(ca) * hw + k];
                              }
                            });
}

// [N,C,H,W] -> [N,H,W], one channel.
template <class T>
Tensor<T> select_channel(const Tensor<T>& x, int channel) {
  check(x.ndim() == 4, "select_channel: input must be NCHW");
  const int n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  check(channel >= 0 && channel < c, "select_channel: channel " + std::to_string(channel) + " out of range [0," +
                                         std::to_string(c) + ")");
  std::vector<T> out(static_cast<std::size_t>(n) * hw);
  for (int i = 0; i < n; ++i)
    std::copy_n(x.data().data() + (static_cast<std::size_t>(i) * c + channel) * hw, hw,
                out.data() + static_cast<std::size_t>(i) * hw);
  auto xn = x.node();
  return Tensor<T>::make_op(Shape{n, x.dim(2), x.dim(3)}, std::move(out), {x},
                            [xn, n, c, hw, channel](const std::vector<T>& g, GradMap<T>& gm) {
                              auto& gx = gm.buf(xn.get());
                              for (int i = 0; i < n; ++i)
                                for (int k = 0; k < hw; ++k)
                                  gx[(static_cast<std::size_t>(i) * c + channel) * hw + k] +=
                                      g[static_cast<std::size_t>(i) * hw + k];
                            });
}

// p [N,C,H,W], labels flat [N*H*W] -> [N,H,W] with out[n,h,w] = p[n,labels,h,w].
template <class T>
Tensor<T> gather_class(const Tensor<T>& p, const std::vector<int>& labels) {
  check(p.ndim() == 4, "gather_class: input must be NCHW");
  const int n = p.dim(0), c = p.dim(1), hw = p.dim(2) * p.dim(3);
  check(static_cast<std::int64_t>(labels.size()) == static_cast<std::int64_t>(n) * hw,
        "gather_class: label count " + std::to_string(labels.size()) + " does not match " + shape_str(p.shape()));
  std::vector<T> out(static_cast<std::size_t>(n) * hw);
  for (int i = 0; i < n; ++i)
    for (int q = 0; q < hw; ++q) {
      const int cls = labels[static_cast<std::size_t>(i) * hw + q];
      check(cls >= 0 && cls < c, "gather_class: label " + std::to_string(cls) + " out of range [0," +
                                     std::to_string(c) + ")");
      out[static_cast<std::size_t>(i) * hw + q] = p.data()[(static_cast<std::size_t>(i) * c + cls) * hw + q];
    }
  auto pn = p.node();
  return Tensor<T>::make_op(Shape{n, p.dim(2), p.dim(3)}, std::move(out), {p},
                            [pn, n, c, hw, labels](const std::vector<T>& g, GradMap<T>& gm) {
                              auto& gp = gm.buf(pn.get());
                              for (int i = 0; i < n; ++i)
                                for (int q = 0; q < hw; ++q) {
                                  const int cls = labels[static_cast<std::size_t>(i) * hw + q];
                                  gp[(static_cast<std::size_t>(i) * c + cls) * hw + q] +=
                                      g[static_cast<std::size_t>(i) * hw + q];
                                }
                            });
}

// Log-density matrix of diagonal Gaussians: mu, logvar [N,d], z [M,d] ->
// [N,M] with (i,j) = log N(z_j; mu_i, exp(logvar_i)).
template <class T>
Tensor<T> pairwise_gaussian_logprob(const Tensor<T>& mu, const Tensor<T>& logvar, const Tensor<T>& z) {
  detail::check_same_shape(mu, logvar, "pairwise_gaussian_logprob");
  check(mu.ndim() == 2 && z.ndim() == 2 && mu.dim(1) == z.dim(1),
        "pairwise_gaussian_logprob: expected [N,d] parameters and [M,d] samples, got " + shape_str(mu.shape()) +
            " and " + shape_str(z.shape()));
  const int n = mu.dim(0), m = z.dim(0), d = mu.dim(1);
  const T log2pi = static_cast<T>(1.8378770664093454835606594728112);
  std::vector<T> out(static_cast<std::size_t>(n) * m);
  for (int i = 0; i < n; ++i) {
    const T* mu_i = mu.data().data() + static_cast<std::size_t>(i) * d;
    const T* lv_i = logvar.data().data() + static_cast<std::size_t>(i) * d;
    for (int j = 0; j < m; ++j) {
      const T* z_j = z.data().data() + static_cast<std::size_t>(j) * d;
      T s = 0;
      for (int k = 0; k < d; ++k) {
        const T diff = z_j[k] - mu_i[k];
        s += diff * diff * std::exp(-lv_i[k]) + lv_i[k] + log2pi;
      }
      out[static_cast<std::size_t>(i) * m + j] = T(-0.5) * s;
    }
  }
  auto mn = mu.node(), ln = logvar.node(), zn = z.node();
  return Tensor<T>::make_op(
      Shape{n, m}, std::move(out), {mu, logvar, z}, [mn, ln, zn, n, m, d](const std::vector<T>& g, GradMap<T>& gm) {
        auto& gmu = gm.buf(mn.get());
        auto& glv = gm.buf(ln.get());
        auto& gz = gm.buf(zn.get());
        for (int i = 0; i < n; ++i) {
          const T* mu_i = mn->data.data() + static_cast<std::size_t>(i) * d;
          const T* lv_i = ln->data.data() + static_cast<std::size_t>(i) * d;
          for (int j = 0; j < m; ++j) {
            const T gij = g[static_cast<std::size_t>(i) * m + j];
            if (gij == T(0)) continue;
            const T* z_j = zn->data.data() + static_cast<std::size_t>(j) * d;
            for (int k = 0; k < d; ++k) {
              const T inv_var = std::exp(-lv_i[k]);
              const T diff = z_j[k] - mu_i[k];
              gmu[static_cast<std::size_t>(i) * d + k] += gij * diff * inv_var;
              glv[static_cast<std::size_t>(i) * d + k] += gij * T(0.5) * (diff * diff * inv_var - T(1));
              gz[static_cast<std::size_t>(j) * d + k] -= gij * diff * inv_var;
            }
          }
        }
      });
}

// [N,N] -> [N] main diagonal.
template <class T>
Tensor<T> diag(const Tensor<T>& x) {
  check(x.ndim() == 2 && x.dim(0) == x.dim(1), "diag: expected a square matrix, got " + shape_str(x.shape()));
  const int n = x.dim(0);
  std::vector<T> out(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) out[i] = x.data()[static_cast<std::size_t>(i) * n + i];
  auto xn = x.node();
  return Tensor<T>::make_op(Shape{n}, std::move(out), {x}, [xn, n](const std::vector<T>& g, GradMap<T>& gm) {
    auto& gx = gm.buf(xn.get());
    for (int i = 0; i < n; ++i) gx[static_cast<std::size_t>(i) * n + i] += g[i];
  });
}

}  // namespace aif
