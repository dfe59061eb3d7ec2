#pragma once

#include <cmath>
#include <map>
#include <vector>

#include "aif/ops.hpp"
#include "aif/tensor.hpp"

// Orthonormal 2D DCT-II and spectral masking. Coefficients use the
// orthonormal convention (C * C^T = I), so the inverse transform is the
// transpose transform and round trips are exact up to float noise.

namespace aif {

// Per-channel DCT coefficient grid, same NCHW shape as the source image.
template <class T>
struct Spectrum {
  Tensor<T> coefficients;
  int height() const { return coefficients.dim(2); }
  int width() const { return coefficients.dim(3); }
};

// [0,1] spectral attention mask, same spatial shape as the spectrum it
// multiplies.
template <class T>
struct FilterMap {
  Tensor<T> mask;
};

// Orthonormal DCT-II matrix: C[k,i] = s_k * cos(pi*(2i+1)*k / (2n)),
// s_0 = sqrt(1/n), s_k = sqrt(2/n).
template <class T>
Tensor<T> dct_matrix(int n) {
  check(n >= 1, "dct_matrix: size must be >= 1, got " + std::to_string(n));
  std::vector<T> c(static_cast<std::size_t>(n) * n);
  const double pi = 3.14159265358979323846264338327950288;
  for (int k = 0; k < n; ++k) {
    const double s = k == 0 ? std::sqrt(1.0 / n) : std::sqrt(2.0 / n);
    for (int i = 0; i < n; ++i)
      c[static_cast<std::size_t>(k) * n + i] = static_cast<T>(s * std::cos(pi * (2 * i + 1) * k / (2.0 * n)));
  }
  return Tensor<T>(Shape{n, n}, std::move(c));
}

namespace detail {

// Basis matrices are deterministic constants; cache per size.
template <class T>
const std::vector<T>& dct_matrix_cached(int n) {
  thread_local std::map<int, std::vector<T>> cache;
  auto it = cache.find(n);
  if (it == cache.end()) it = cache.emplace(n, dct_matrix<T>(n).data()).first;
  return it->second;
}

// Applies Y[n,c] = L * X[n,c] * R^T per channel of an NCHW tensor, with the
// matching transposed backward. Covers both dct2 (L=C_H, R=C_W) and idct2
// (L=C_H^T, R=C_W^T).
template <class T>
Tensor<T> per_channel_bilinear(const Tensor<T>& x, bool transpose_basis) {
  check(x.ndim() == 4, "dct: input must be NCHW, got " + shape_str(x.shape()));
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const auto& ch = dct_matrix_cached<T>(h);
  const auto& cw = dct_matrix_cached<T>(w);
  ECMap<T> H(ch.data(), h, h), W(cw.data(), w, w);

  auto apply = [&](const T* src, T* dst, bool tr) {
    EMat<T> tmp(h, w);
    ECMap<T> X(src, h, w);
    if (tr) {
      tmp.noalias() = H.transpose() * X;
      EMap<T>(dst, h, w).noalias() = tmp * W;
    } else {
      tmp.noalias() = H * X;
      EMap<T>(dst, h, w).noalias() = tmp * W.transpose();
    }
  };

  std::vector<T> out(x.data().size());
  for (int nc = 0; nc < n * c; ++nc)
    apply(x.data().data() + static_cast<std::size_t>(nc) * h * w, out.data() + static_cast<std::size_t>(nc) * h * w,
          transpose_basis);

  auto xn = x.node();
  return Tensor<T>::make_op(x.shape(), std::move(out), {x},
                            [xn, n, c, h, w, transpose_basis](const std::vector<T>& g, GradMap<T>& gm) {
                              const auto& ch = dct_matrix_cached<T>(h);
                              const auto& cw = dct_matrix_cached<T>(w);
                              ECMap<T> H(ch.data(), h, h), W(cw.data(), w, w);
                              auto& gx = gm.buf(xn.get());
                              EMat<T> tmp(h, w);
                              for (int nc = 0; nc < n * c; ++nc) {
                                ECMap<T> G(g.data() + static_cast<std::size_t>(nc) * h * w, h, w);
                                EMap<T> GX(gx.data() + static_cast<std::size_t>(nc) * h * w, h, w);
                                if (transpose_basis) {
                                  tmp.noalias() = H * G;
                                  GX.noalias() += tmp * W.transpose();
                                } else {
                                  tmp.noalias() = H.transpose() * G;
                                  GX.noalias() += tmp * W;
                                }
                              }
                            });
}

}  // namespace detail

// Forward 2D DCT per channel: coefficients = C_H * X * C_W^T.
template <class T>
Spectrum<T> dct2(const Tensor<T>& image) {
  return Spectrum<T>{detail::per_channel_bilinear(image, false)};
}

// Inverse 2D DCT per channel: X = C_H^T * S * C_W.
template <class T>
Tensor<T> idct2(const Spectrum<T>& spec) {
  return detail::per_channel_bilinear(spec.coefficients, true);
}

// Hadamard masking of a spectrum; differentiable through both arguments.
template <class T>
Spectrum<T> apply_spectral_mask(const Spectrum<T>& spec, const FilterMap<T>& map) {
  return Spectrum<T>{mul(spec.coefficients, map.mask)};
}

// Binary radial high-pass: entry (u,v) is zeroed iff
// sqrt(u^2+v^2)/sqrt((H-1)^2+(W-1)^2) < t. Non-differentiable constant.
template <class T>
FilterMap<T> fixed_highpass_mask(int h, int w, double t) {
  check(h >= 1 && w >= 1, "fixed_highpass_mask: dimensions must be >= 1");
  check(t >= 0.0 && t <= 1.0, "fixed_highpass_mask: threshold must lie in [0,1], got " + std::to_string(t));
  const double denom = std::sqrt(static_cast<double>(h - 1) * (h - 1) + static_cast<double>(w - 1) * (w - 1));
  std::vector<T> m(static_cast<std::size_t>(h) * w);
  for (int u = 0; u < h; ++u)
    for (int v = 0; v < w; ++v) {
      const double r = denom > 0.0 ? std::sqrt(static_cast<double>(u) * u + static_cast<double>(v) * v) / denom : 0.0;
      m[static_cast<std::size_t>(u) * w + v] = r < t ? T(0) : T(1);
    }
  return FilterMap<T>{Tensor<T>(Shape{1, 1, h, w}, std::move(m))};
}

// Replicates a [1,1,H,W] mask across batch and channel dims (constant).
template <class T>
FilterMap<T> tile_mask(const FilterMap<T>& map, int n, int c) {
  check(map.mask.ndim() == 4 && map.mask.dim(0) == 1 && map.mask.dim(1) == 1,
        "tile_mask: expected a [1,1,H,W] mask, got " + shape_str(map.mask.shape()));
  const int h = map.mask.dim(2), w = map.mask.dim(3);
  std::vector<T> m(static_cast<std::size_t>(n) * c * h * w);
  for (int nc = 0; nc < n * c; ++nc)
    std::copy_n(map.mask.data().data(), static_cast<std::size_t>(h) * w,
                m.data() + static_cast<std::size_t>(nc) * h * w);
  return FilterMap<T>{Tensor<T>(Shape{n, c, h, w}, std::move(m))};
}

}  // namespace aif
