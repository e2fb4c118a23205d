#pragma once

#include <cmath>
#include <cstddef>

#include "ftconv/conv.hpp"
#include "ftconv/tensor.hpp"

namespace ftconv::test {

template <typename T>
bool close(T a, T b, double tol) {
  const double x = static_cast<double>(a), y = static_cast<double>(b);
  return std::abs(x - y) <= tol * std::max({1.0, std::abs(x), std::abs(y)});
}

template <typename T>
bool tensors_close(const Tensor4<T>& a, const Tensor4<T>& b, double tol) {
  if (!a.same_shape(b)) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (!close(a.raw()[i], b.raw()[i], tol)) return false;
  return true;
}

/// Reference grouped convolution: run each group as an independent ungrouped
/// convolution on sliced channels/kernels and splice the outputs back.
template <typename T>
Tensor4<T> grouped_oracle(const Tensor4<T>& D, const Tensor4<T>& W,
                          const ConvParams& p) {
  const std::size_t N = D.dim(0), Ch = D.dim(1), H = D.dim(2);
  const std::size_t M = W.dim(0), Ckw = W.dim(1), R = W.dim(2);
  const std::size_t G = p.groups, mpg = M / G;
  const std::size_t E = output_extent(H, R, p);
  Tensor4<T> O(N, M, E, E);
  for (std::size_t g = 0; g < G; ++g) {
    Tensor4<T> Dg(N, Ckw, H, H);
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t k = 0; k < Ckw; ++k)
        for (std::size_t a = 0; a < H; ++a)
          for (std::size_t b = 0; b < H; ++b)
            Dg(n, k, a, b) = D(n, g * Ckw + k, a, b);
    Tensor4<T> Wg(mpg, Ckw, R, R);
    for (std::size_t m = 0; m < mpg; ++m)
      for (std::size_t k = 0; k < Ckw; ++k)
        for (std::size_t i = 0; i < R; ++i)
          for (std::size_t j = 0; j < R; ++j)
            Wg(m, k, i, j) = W(g * mpg + m, k, i, j);
    ConvParams q = p;
    q.groups = 1;
    q.bias_enabled = false;
    Tensor4<T> Og = conv_forward(Dg, Wg, nullptr, q);
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t m = 0; m < mpg; ++m)
        for (std::size_t x = 0; x < E; ++x)
          for (std::size_t y = 0; y < E; ++y)
            O(n, g * mpg + m, x, y) = Og(n, m, x, y);
  }
  (void)Ch;
  return O;
}

}  // namespace ftconv::test
