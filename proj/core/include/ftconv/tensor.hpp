#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

#include "ftconv/errors.hpp"

namespace ftconv {

/// Dense 4D tensor, row-major with the last dimension fastest.
/// Holds fmaps (N,Ch,H,H), kernels (M,Ch,R,R), outputs (N,M,E,E) and
/// bias vectors stored as (M,1,1,1).
template <typename T>
class Tensor4 {
 public:
  Tensor4() : dims_{0, 0, 0, 0} {}
  Tensor4(std::size_t d0, std::size_t d1, std::size_t d2, std::size_t d3)
      : dims_{d0, d1, d2, d3}, data_(d0 * d1 * d2 * d3, T(0)) {}

  std::size_t dim(std::size_t i) const { return dims_[i]; }
  const std::array<std::size_t, 4>& dims() const { return dims_; }
  std::size_t size() const { return data_.size(); }

  T& operator()(std::size_t a, std::size_t b, std::size_t c, std::size_t d) {
    return data_[((a * dims_[1] + b) * dims_[2] + c) * dims_[3] + d];
  }
  T operator()(std::size_t a, std::size_t b, std::size_t c, std::size_t d) const {
    return data_[((a * dims_[1] + b) * dims_[2] + c) * dims_[3] + d];
  }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& raw() { return data_; }
  const std::vector<T>& raw() const { return data_; }

  bool same_shape(const Tensor4& o) const { return dims_ == o.dims_; }

  bool all_finite() const {
    for (T v : data_)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  /// Copy of the 3D block at index n along dim 0, returned as (1,d1,d2,d3).
  Tensor4 block(std::size_t n) const {
    Tensor4 b(1, dims_[1], dims_[2], dims_[3]);
    const std::size_t stride = dims_[1] * dims_[2] * dims_[3];
    std::copy(data_.begin() + n * stride, data_.begin() + (n + 1) * stride,
              b.data_.begin());
    return b;
  }

  /// Seeded uniform fill over [lo, hi]; deterministic for a given seed.
  static Tensor4 random(std::size_t d0, std::size_t d1, std::size_t d2,
                        std::size_t d3, std::uint64_t seed, double lo = -1.0,
                        double hi = 1.0) {
    Tensor4 t(d0, d1, d2, d3);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(lo, hi);
    for (T& v : t.data_) v = static_cast<T>(dist(rng));
    return t;
  }

 private:
  std::array<std::size_t, 4> dims_;
  std::vector<T> data_;
};

/// Square 2D grid of side E; one output block O_nm or one output checksum.
template <typename T>
struct Grid {
  std::size_t n = 0;
  std::vector<T> v;

  Grid() = default;
  explicit Grid(std::size_t side) : n(side), v(side * side, T(0)) {}

  T& operator()(std::size_t x, std::size_t y) { return v[x * n + y]; }
  T operator()(std::size_t x, std::size_t y) const { return v[x * n + y]; }

  Grid& operator+=(const Grid& o) {
    for (std::size_t i = 0; i < v.size(); ++i) v[i] += o.v[i];
    return *this;
  }
};

/// Convolution hyperparameters shared by every operation on one layer.
struct ConvParams {
  std::size_t stride = 1;
  std::size_t groups = 1;
  std::size_t pad = 0;
  bool bias_enabled = false;
};

/// E = (H + 2*pad - R + U) / U; throws ConfigError when not a positive integer.
inline std::size_t output_extent(std::size_t H, std::size_t R, const ConvParams& p) {
  const std::size_t Hp = H + 2 * p.pad;
  if (p.stride == 0) throw ConfigError("stride must be positive");
  if (Hp < R) throw ConfigError("kernel larger than padded input");
  if ((Hp - R) % p.stride != 0)
    throw ConfigError("output extent (H+2p-R+U)/U is not an integer");
  return (Hp - R) / p.stride + 1;
}

}  // namespace ftconv
