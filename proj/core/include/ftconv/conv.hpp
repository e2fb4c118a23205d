#pragma once

#include <cstddef>
#include <type_traits>
#include <utility>
#include <vector>

#include "ftconv/tensor.hpp"

namespace ftconv {

enum class ConvImpl { direct, mm };

namespace detail {

template <typename T>
void check_conv_shapes(const Tensor4<T>& D, const Tensor4<T>& W,
                       const ConvParams& p) {
  if (p.groups == 0) throw ConfigError("groups must be positive");
  if (D.dim(2) != D.dim(3)) throw ShapeError("fmap must be square (H x H)");
  if (W.dim(2) != W.dim(3)) throw ShapeError("kernel must be square (R x R)");
  if (D.dim(1) % p.groups != 0 || W.dim(0) % p.groups != 0)
    throw ConfigError("groups must divide Ch and M");
  if (W.dim(1) != D.dim(1) / p.groups)
    throw ShapeError("kernel channel count must equal Ch/groups");
}

template <typename T>
inline T padded_at(const Tensor4<T>& D, std::size_t n, std::size_t k, long long h,
                   long long w, std::size_t pad) {
  const long long hh = h - static_cast<long long>(pad);
  const long long ww = w - static_cast<long long>(pad);
  if (hh < 0 || ww < 0 || hh >= static_cast<long long>(D.dim(2)) ||
      ww >= static_cast<long long>(D.dim(3)))
    return T(0);
  return D(n, k, static_cast<std::size_t>(hh), static_cast<std::size_t>(ww));
}

template <typename T>
Tensor4<T> conv_direct(const Tensor4<T>& D, const Tensor4<T>& W,
                       const ConvParams& p, std::size_t E) {
  const std::size_t N = D.dim(0), M = W.dim(0), Ckw = W.dim(1), R = W.dim(2);
  const std::size_t U = p.stride, mpg = M / p.groups;
  Tensor4<T> O(N, M, E, E);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t m = 0; m < M; ++m) {
      const std::size_t kbase = (m / mpg) * Ckw;  // channel group of kernel m
      for (std::size_t x = 0; x < E; ++x)
        for (std::size_t y = 0; y < E; ++y) {
          T acc = T(0);
          for (std::size_t k = 0; k < Ckw; ++k)
            for (std::size_t i = 0; i < R; ++i)
              for (std::size_t j = 0; j < R; ++j)
                acc += padded_at(D, n, kbase + k,
                                 static_cast<long long>(U * x + i),
                                 static_cast<long long>(U * y + j), p.pad) *
                       W(m, k, i, j);
          O(n, m, x, y) = acc;
        }
    }
  return O;
}

/// im2col patch matrix for one channel group: (Ckw*R*R) x (N*E*E).
template <typename T>
std::vector<T> im2col_group(const Tensor4<T>& D, std::size_t kbase,
                            std::size_t Ckw, std::size_t R, const ConvParams& p,
                            std::size_t E) {
  const std::size_t N = D.dim(0), U = p.stride;
  const std::size_t rows = Ckw * R * R, cols = N * E * E;
  std::vector<T> patches(rows * cols, T(0));
  for (std::size_t k = 0; k < Ckw; ++k)
    for (std::size_t i = 0; i < R; ++i)
      for (std::size_t j = 0; j < R; ++j) {
        const std::size_t row = (k * R + i) * R + j;
        T* dst = patches.data() + row * cols;
        for (std::size_t n = 0; n < N; ++n)
          for (std::size_t x = 0; x < E; ++x)
            for (std::size_t y = 0; y < E; ++y)
              dst[(n * E + x) * E + y] =
                  padded_at(D, n, kbase + k, static_cast<long long>(U * x + i),
                            static_cast<long long>(U * y + j), p.pad);
      }
  return patches;
}

template <typename T>
Tensor4<T> conv_mm(const Tensor4<T>& D, const Tensor4<T>& W, const ConvParams& p,
                   std::size_t E) {
  const std::size_t N = D.dim(0), M = W.dim(0), Ckw = W.dim(1), R = W.dim(2);
  const std::size_t mpg = M / p.groups;
  Tensor4<T> O(N, M, E, E);
  const std::size_t kdim = Ckw * R * R, cols = N * E * E;
  for (std::size_t g = 0; g < p.groups; ++g) {
    const std::vector<T> patches = im2col_group(D, g * Ckw, Ckw, R, p, E);
    for (std::size_t mg = 0; mg < mpg; ++mg) {
      const std::size_t m = g * mpg + mg;
      const T* wrow = W.data() + m * kdim;  // flattened kernel row
      for (std::size_t c = 0; c < cols; ++c) {
        T acc = T(0);
        for (std::size_t r = 0; r < kdim; ++r) acc += wrow[r] * patches[r * cols + c];
        const std::size_t n = c / (E * E), rem = c % (E * E);
        O(n, m, rem / E, rem % E) = acc;
      }
    }
  }
  return O;
}

}  // namespace detail

/// Forward convolution per the layer definition, with optional bias broadcast.
/// `direct` and `mm` are interchangeable implementations of the same result.
template <typename T>
Tensor4<T> conv_forward(const Tensor4<T>& D, const Tensor4<T>& W,
                        const std::type_identity_t<Tensor4<T>>* bias,
                        const ConvParams& p, ConvImpl impl = ConvImpl::direct) {
  detail::check_conv_shapes(D, W, p);
  const std::size_t E = output_extent(D.dim(2), W.dim(2), p);
  Tensor4<T> O = (impl == ConvImpl::direct) ? detail::conv_direct(D, W, p, E)
                                            : detail::conv_mm(D, W, p, E);
  if (p.bias_enabled) {
    if (bias == nullptr || bias->dim(0) != W.dim(0))
      throw ShapeError("bias length must equal kernel count M");
    for (std::size_t n = 0; n < O.dim(0); ++n)
      for (std::size_t m = 0; m < O.dim(1); ++m)
        for (std::size_t x = 0; x < E; ++x)
          for (std::size_t y = 0; y < E; ++y) O(n, m, x, y) += (*bias)(m, 0, 0, 0);
  }
  return O;
}

/// Convolution of a single fmap block (1,Ch,H,H) with a single kernel block
/// (1,Ch,R,R), bias excluded. Groups are always 1 at block level.
template <typename T>
Grid<T> conv_block(const Tensor4<T>& Dn, const Tensor4<T>& Wm, const ConvParams& p) {
  ConvParams q = p;
  q.groups = 1;
  q.bias_enabled = false;
  Tensor4<T> O = conv_forward(Dn, Wm, nullptr, q, ConvImpl::direct);
  Grid<T> g(O.dim(2));
  for (std::size_t x = 0; x < g.n; ++x)
    for (std::size_t y = 0; y < g.n; ++y) g(x, y) = O(0, 0, x, y);
  return g;
}

/// Gradients of conv_forward w.r.t. W and D given upstream dO. Groups > 1 are
/// not supported here.
template <typename T>
std::pair<Tensor4<T>, Tensor4<T>> conv_backward(const Tensor4<T>& D,
                                                const Tensor4<T>& W,
                                                const Tensor4<T>& dO,
                                                const ConvParams& p) {
  if (p.groups != 1) throw ConfigError("grouped back-propagation is unsupported");
  detail::check_conv_shapes(D, W, p);
  const std::size_t E = output_extent(D.dim(2), W.dim(2), p);
  if (dO.dim(0) != D.dim(0) || dO.dim(1) != W.dim(0) || dO.dim(2) != E ||
      dO.dim(3) != E)
    throw ShapeError("upstream gradient shape must be N x M x E x E");

  const std::size_t N = D.dim(0), M = W.dim(0), Ch = D.dim(1), R = W.dim(2);
  const std::size_t H = D.dim(2), U = p.stride;
  Tensor4<T> dW(M, Ch, R, R);
  Tensor4<T> dD(N, Ch, H, H);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t m = 0; m < M; ++m)
      for (std::size_t x = 0; x < E; ++x)
        for (std::size_t y = 0; y < E; ++y) {
          const T g = dO(n, m, x, y);
          for (std::size_t k = 0; k < Ch; ++k)
            for (std::size_t i = 0; i < R; ++i)
              for (std::size_t j = 0; j < R; ++j) {
                const long long h = static_cast<long long>(U * x + i) -
                                    static_cast<long long>(p.pad);
                const long long w = static_cast<long long>(U * y + j) -
                                    static_cast<long long>(p.pad);
                if (h < 0 || w < 0 || h >= static_cast<long long>(H) ||
                    w >= static_cast<long long>(H))
                  continue;
                dW(m, k, i, j) += D(n, k, h, w) * g;
                dD(n, k, h, w) += W(m, k, i, j) * g;
              }
        }
  return {std::move(dW), std::move(dD)};
}

}  // namespace ftconv
