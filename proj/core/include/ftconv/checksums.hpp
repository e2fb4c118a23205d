#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <vector>

#include "ftconv/conv.hpp"
#include "ftconv/tensor.hpp"

namespace ftconv {

/// Selection mask for output checksums / summations.
enum CkSel : unsigned {
  CK_O1 = 1u << 0,
  CK_O2 = 1u << 1,
  CK_O3 = 1u << 2,
  CK_O4 = 1u << 3,
  CK_O5 = 1u << 4,
  CK_O6 = 1u << 5,
  CK_O7 = 1u << 6,
  CK_ALL = 0x7f,
};

/// Checksums of the inputs. Cd1/Cd2 are (1,Ch,H,H); Cw1/Cw2 are (1,Ch,R,R):
/// with groups the per-group kernel sums are channel-concatenated so the
/// result always carries the full Ch channels.
template <typename T>
struct InputChecksums {
  Tensor4<T> cd1;
  std::optional<Tensor4<T>> cd2;
  Tensor4<T> cw1;
  std::optional<Tensor4<T>> cw2;
};

/// Output checksums C_o1..C_o7 (convolutions of input checksums).
template <typename T>
struct OutputChecksums {
  std::optional<std::vector<Grid<T>>> co1;  // per column m
  std::optional<std::vector<Grid<T>>> co2;  // per row n
  std::optional<std::vector<Grid<T>>> co3;  // per column m, n-weighted
  std::optional<std::vector<Grid<T>>> co4;  // per row n, m-weighted
  std::optional<Grid<T>> co5, co6, co7;
};

/// Output summations S_o1..S_o7 computed from the actual output O.
template <typename T>
struct OutputSummations {
  std::optional<std::vector<Grid<T>>> so1, so2, so3, so4;
  std::optional<Grid<T>> so5, so6, so7;
};

/// Tolerance comparison: mismatch when |c-s| > tau * max(|c|,|s|,1).
template <typename T>
inline bool values_differ(T c, T s, double tau) {
  const double cc = std::abs(static_cast<double>(c));
  const double ss = std::abs(static_cast<double>(s));
  return std::abs(static_cast<double>(c) - static_cast<double>(s)) >
         tau * std::max({cc, ss, 1.0});
}

template <typename T>
inline bool grids_consistent(const Grid<T>& c, const Grid<T>& s, double tau) {
  for (std::size_t i = 0; i < c.v.size(); ++i)
    if (values_differ(c.v[i], s.v[i], tau)) return false;
  return true;
}

/// Kernel checksums alone; precomputable once per model from golden weights.
template <typename T>
void kernel_checksums(const Tensor4<T>& W, std::size_t groups, Tensor4<T>& cw1,
                      Tensor4<T>& cw2) {
  const std::size_t M = W.dim(0), Ckw = W.dim(1), R = W.dim(2);
  if (groups == 0 || M % groups != 0) throw ConfigError("groups must divide M");
  const std::size_t mpg = M / groups;
  cw1 = Tensor4<T>(1, Ckw * groups, R, R);
  cw2 = Tensor4<T>(1, Ckw * groups, R, R);
  for (std::size_t g = 0; g < groups; ++g)
    for (std::size_t mg = 0; mg < mpg; ++mg) {
      const std::size_t m = g * mpg + mg;  // global kernel index weights
      for (std::size_t k = 0; k < Ckw; ++k)
        for (std::size_t i = 0; i < R; ++i)
          for (std::size_t j = 0; j < R; ++j) {
            cw1(0, g * Ckw + k, i, j) += W(m, k, i, j);
            cw2(0, g * Ckw + k, i, j) += static_cast<T>(m) * W(m, k, i, j);
          }
    }
}

/// Cd1 = sum_n D_n, Cd2 = sum_n n*D_n, plus (grouped) kernel checksums.
template <typename T>
InputChecksums<T> input_checksums(const Tensor4<T>& D, const Tensor4<T>& W,
                                  std::size_t groups) {
  const std::size_t N = D.dim(0), Ch = D.dim(1), H = D.dim(2);
  if (Ch % groups != 0) throw ConfigError("groups must divide Ch");
  if (W.dim(1) != Ch / groups) throw ShapeError("kernel channels must be Ch/groups");
  InputChecksums<T> ic;
  ic.cd1 = Tensor4<T>(1, Ch, H, H);
  ic.cd2 = Tensor4<T>(1, Ch, H, H);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t k = 0; k < Ch; ++k)
      for (std::size_t a = 0; a < H; ++a)
        for (std::size_t b = 0; b < H; ++b) {
          const T v = D(n, k, a, b);
          ic.cd1(0, k, a, b) += v;
          (*ic.cd2)(0, k, a, b) += static_cast<T>(n) * v;
        }
  Tensor4<T> cw1, cw2;
  kernel_checksums(W, groups, cw1, cw2);
  ic.cw1 = std::move(cw1);
  ic.cw2 = std::move(cw2);
  return ic;
}

namespace detail {

template <typename T>
std::vector<Grid<T>> split_blocks(const Tensor4<T>& O) {
  // O has shape (1,K,E,E) or (K,1,E,E); flattens to K grids.
  const std::size_t K = std::max(O.dim(0), O.dim(1)), E = O.dim(2);
  std::vector<Grid<T>> out(K, Grid<T>(E));
  const T* p = O.data();
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t i = 0; i < E * E; ++i) out[k].v[i] = *p++;
  return out;
}

}  // namespace detail

/// Convolution images of the input checksums. Only the checksums requested in
/// `which` are computed. C_o1/C_o3 use the real (possibly grouped) kernel W;
/// all convolutions against C_w1/C_w2 run ungrouped since those checksums
/// carry the full Ch channels.
template <typename T>
OutputChecksums<T> output_checksums(unsigned which, const Tensor4<T>& D,
                                    const Tensor4<T>& W,
                                    const InputChecksums<T>& ic,
                                    const ConvParams& p) {
  if ((which & (CK_O3 | CK_O7)) && !ic.cd2)
    throw ConfigError("requested checksum needs Cd2 which is absent");
  if ((which & (CK_O4 | CK_O6)) && !ic.cw2)
    throw ConfigError("requested checksum needs Cw2 which is absent");
  ConvParams grouped = p;
  grouped.bias_enabled = false;
  ConvParams flat = grouped;
  flat.groups = 1;

  OutputChecksums<T> cs;
  if (which & CK_O1)
    cs.co1 = detail::split_blocks(conv_forward(ic.cd1, W, nullptr, grouped));
  if (which & CK_O2)
    cs.co2 = detail::split_blocks(conv_forward(D, ic.cw1, nullptr, flat));
  if (which & CK_O3)
    cs.co3 = detail::split_blocks(conv_forward(*ic.cd2, W, nullptr, grouped));
  if (which & CK_O4)
    cs.co4 = detail::split_blocks(conv_forward(D, *ic.cw2, nullptr, flat));
  if (which & CK_O5) cs.co5 = conv_block(ic.cd1, ic.cw1, flat);
  if (which & CK_O6) cs.co6 = conv_block(ic.cd1, *ic.cw2, flat);
  if (which & CK_O7) cs.co7 = conv_block(*ic.cd2, ic.cw1, flat);
  return cs;
}

/// Block summations of O matching the requested checksums; ascending-index
/// reduction order throughout.
template <typename T>
OutputSummations<T> output_summations(const Tensor4<T>& O, unsigned which) {
  const std::size_t N = O.dim(0), M = O.dim(1), E = O.dim(2);
  OutputSummations<T> s;
  if (which & CK_O1) s.so1 = std::vector<Grid<T>>(M, Grid<T>(E));
  if (which & CK_O2) s.so2 = std::vector<Grid<T>>(N, Grid<T>(E));
  if (which & CK_O3) s.so3 = std::vector<Grid<T>>(M, Grid<T>(E));
  if (which & CK_O4) s.so4 = std::vector<Grid<T>>(N, Grid<T>(E));
  if (which & CK_O5) s.so5 = Grid<T>(E);
  if (which & CK_O6) s.so6 = Grid<T>(E);
  if (which & CK_O7) s.so7 = Grid<T>(E);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t m = 0; m < M; ++m)
      for (std::size_t x = 0; x < E; ++x)
        for (std::size_t y = 0; y < E; ++y) {
          const T v = O(n, m, x, y);
          if (s.so1) (*s.so1)[m](x, y) += v;
          if (s.so2) (*s.so2)[n](x, y) += v;
          if (s.so3) (*s.so3)[m](x, y) += static_cast<T>(n) * v;
          if (s.so4) (*s.so4)[n](x, y) += static_cast<T>(m) * v;
          if (s.so5) (*s.so5)(x, y) += v;
          if (s.so6) (*s.so6)(x, y) += static_cast<T>(m) * v;
          if (s.so7) (*s.so7)(x, y) += static_cast<T>(n) * v;
        }
  return s;
}

/// Per-layer bias aggregates, precomputed once so summation adjustment is a
/// handful of subtractions. Index weights are 0-based, so the n-weighted rows
/// use sum_{i=0..N-1} i = N(N-1)/2.
template <typename T>
class BiasAdjuster {
 public:
  BiasAdjuster() = default;
  BiasAdjuster(const Tensor4<T>& bias, std::size_t N) : n_(N) {
    const std::size_t M = bias.dim(0);
    b_.resize(M);
    for (std::size_t m = 0; m < M; ++m) {
      b_[m] = bias(m, 0, 0, 0);
      sum_b_ += b_[m];
      sum_mb_ += static_cast<T>(m) * b_[m];
    }
    wn_ = static_cast<T>(N * (N - 1) / 2);
  }

  void apply(OutputSummations<T>& s) const {
    const T nN = static_cast<T>(n_);
    if (s.so1)
      for (std::size_t m = 0; m < s.so1->size(); ++m)
        for (T& v : (*s.so1)[m].v) v -= nN * b_[m];
    if (s.so2)
      for (Grid<T>& g : *s.so2)
        for (T& v : g.v) v -= sum_b_;
    if (s.so3)
      for (std::size_t m = 0; m < s.so3->size(); ++m)
        for (T& v : (*s.so3)[m].v) v -= wn_ * b_[m];
    if (s.so4)
      for (Grid<T>& g : *s.so4)
        for (T& v : g.v) v -= sum_mb_;
    if (s.so5)
      for (T& v : s.so5->v) v -= nN * sum_b_;
    if (s.so6)
      for (T& v : s.so6->v) v -= nN * sum_mb_;
    if (s.so7)
      for (T& v : s.so7->v) v -= wn_ * sum_b_;
  }

 private:
  std::vector<T> b_;
  T sum_b_ = T(0), sum_mb_ = T(0), wn_ = T(0);
  std::size_t n_ = 0;
};

/// Removes the bias contribution from the summations (Table of per-checksum
/// adjustments); O itself already contains bias and is never touched.
template <typename T>
void bias_adjust(OutputSummations<T>& s, const Tensor4<T>& bias, std::size_t N,
                 std::size_t M) {
  if (bias.dim(0) != M) throw ShapeError("bias length must equal M");
  BiasAdjuster<T>(bias, N).apply(s);
}

/// True iff the freshly computed kernel checksum matches the reference
/// captured at model load. False signals corruption of W (or of the cached
/// checksum itself); the caller reloads both from the golden copy.
template <typename T>
bool verify_kernel(const Tensor4<T>& W, const Tensor4<T>& cw1_ref,
                   std::size_t groups, double tau) {
  Tensor4<T> cw1, cw2;
  kernel_checksums(W, groups, cw1, cw2);
  if (!cw1.same_shape(cw1_ref)) throw ShapeError("kernel checksum shape mismatch");
  for (std::size_t i = 0; i < cw1.size(); ++i)
    if (values_differ(cw1.raw()[i], cw1_ref.raw()[i], tau)) return false;
  return true;
}

}  // namespace ftconv
