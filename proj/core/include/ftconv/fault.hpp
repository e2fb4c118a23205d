#pragma once

#include <cstdint>
#include <cstring>
#include <random>
#include <string>
#include <vector>

#include "ftconv/report.hpp"
#include "ftconv/workflow.hpp"

namespace ftconv {

enum class FaultTarget { output_block, output_row, output_column, fmap, kernel, checksum };
enum class FaultMode { scale, bitflip };
enum class ChecksumName { none, cd1, cd2, cw1, cw2 };

inline const char* to_string(FaultTarget t) {
  switch (t) {
    case FaultTarget::output_block: return "output_block";
    case FaultTarget::output_row: return "output_row";
    case FaultTarget::output_column: return "output_column";
    case FaultTarget::fmap: return "fmap";
    case FaultTarget::kernel: return "kernel";
    case FaultTarget::checksum: return "checksum";
  }
  return "?";
}

inline const char* to_string(ChecksumName c) {
  switch (c) {
    case ChecksumName::none: return "none";
    case ChecksumName::cd1: return "cd1";
    case ChecksumName::cd2: return "cd2";
    case ChecksumName::cw1: return "cw1";
    case ChecksumName::cw2: return "cw2";
  }
  return "?";
}

/// Deterministic description of one injected fault episode.
struct FaultSpec {
  std::size_t layer_index = 0;
  FaultTarget target = FaultTarget::output_block;
  ChecksumName checksum = ChecksumName::none;
  std::size_t i = 0;   // block row (n) where applicable
  std::size_t j = 0;   // block column (m) where applicable
  long long x = -1;    // element coords within the target; -1 means all
  long long y = -1;
  FaultMode mode = FaultMode::scale;
  unsigned bit = 23;   // bit index for bitflip mode
  std::uint64_t seed = 0;
};

/// What the protection pipeline is expected to do with this fault.
struct GroundTruth {
  bool benign = false;           // invisible to detection by construction
  ResolveStage expected_stage = ResolveStage::none;
  bool output_diverges = false;  // discarded as checksum corruption but O is bad
};

struct CorpusEntry {
  FaultSpec fault;
  GroundTruth truth;
};

namespace detail {

/// Additive perturbation, always positive and at least 0.5 in magnitude so
/// per-position deltas never cancel across blocks and always clear the
/// detection tolerance.
template <typename T>
void perturb(T& v, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double mag = 0.5 + 1.5 * u(rng);
  v += static_cast<T>(mag * std::max(1.0, std::abs(static_cast<double>(v))));
}

template <typename T>
void flip_bit(T& v, unsigned bit);

inline void flip_bit_impl(float& v, unsigned bit) {
  std::uint32_t u;
  std::memcpy(&u, &v, 4);
  u ^= (1u << (bit % 31));  // sign bit excluded to keep magnitudes meaningful
  std::memcpy(&v, &u, 4);
}
inline void flip_bit_impl(double& v, unsigned bit) {
  std::uint64_t u;
  std::memcpy(&u, &v, 8);
  u ^= (1ull << (bit % 63));
  std::memcpy(&v, &u, 8);
}
template <>
inline void flip_bit<float>(float& v, unsigned bit) { flip_bit_impl(v, bit); }
template <>
inline void flip_bit<double>(double& v, unsigned bit) { flip_bit_impl(v, bit); }

template <typename T>
void hit(T& v, const FaultSpec& f, std::mt19937_64& rng) {
  if (f.mode == FaultMode::bitflip)
    flip_bit(v, f.bit);
  else
    perturb(v, rng);
}

}  // namespace detail

/// Builds the workflow hooks that apply `f` at the right pipeline phase.
/// Mutation is deterministic given f.seed.
template <typename T>
FaultHooks<T> make_hooks(const FaultSpec& f) {
  FaultHooks<T> hooks;
  switch (f.target) {
    case FaultTarget::output_block:
    case FaultTarget::output_row:
    case FaultTarget::output_column:
      hooks.post_conv = [f](Tensor4<T>& O) {
        std::mt19937_64 rng(f.seed);
        const std::size_t N = O.dim(0), M = O.dim(1), E = O.dim(2);
        if (f.i >= N || f.j >= M || f.x >= (long long)E || f.y >= (long long)E)
          throw ConfigError("fault coordinates out of range");
        auto hit_block = [&](std::size_t n, std::size_t m) {
          if (f.x >= 0)
            detail::hit(O(n, m, (std::size_t)f.x, (std::size_t)f.y), f, rng);
          else
            for (std::size_t x = 0; x < E; ++x)
              for (std::size_t y = 0; y < E; ++y) detail::hit(O(n, m, x, y), f, rng);
        };
        if (f.target == FaultTarget::output_block)
          hit_block(f.i, f.j);
        else if (f.target == FaultTarget::output_row)
          for (std::size_t m = 0; m < M; ++m) hit_block(f.i, m);
        else
          for (std::size_t n = 0; n < N; ++n) hit_block(n, f.j);
      };
      break;
    case FaultTarget::fmap:
    case FaultTarget::kernel:
    case FaultTarget::checksum:
      hooks.pre_conv = [f](Tensor4<T>& D, Tensor4<T>& W, InputChecksums<T>& ic) {
        std::mt19937_64 rng(f.seed);
        auto hit_tensor = [&](Tensor4<T>& t, std::size_t blk) {
          if (blk >= t.dim(0)) throw ConfigError("fault block index out of range");
          const std::size_t d2 = t.dim(2), d3 = t.dim(3);
          if (f.x >= (long long)d2 || f.y >= (long long)d3)
            throw ConfigError("fault coordinates out of range");
          if (f.x >= 0) {
            detail::hit(t(blk, 0, (std::size_t)f.x, (std::size_t)f.y), f, rng);
          } else {
            for (std::size_t k = 0; k < t.dim(1); ++k)
              for (std::size_t a = 0; a < d2; ++a)
                for (std::size_t b = 0; b < d3; ++b) detail::hit(t(blk, k, a, b), f, rng);
          }
        };
        switch (f.target) {
          case FaultTarget::fmap: hit_tensor(D, f.i); break;
          case FaultTarget::kernel: hit_tensor(W, f.j); break;
          default:
            switch (f.checksum) {
              case ChecksumName::cd1: hit_tensor(ic.cd1, 0); break;
              case ChecksumName::cd2: hit_tensor(*ic.cd2, 0); break;
              case ChecksumName::cw1: hit_tensor(ic.cw1, 0); break;
              case ChecksumName::cw2: hit_tensor(*ic.cw2, 0); break;
              default: throw ConfigError("checksum fault needs a checksum name");
            }
        }
      };
      break;
  }
  return hooks;
}

/// Expected resolution per the per-scheme ability analysis, given the layer's
/// block-grid dimensions. The n=0 fmap corner is pattern-identical to input
/// checksum corruption and is expected to be discarded, leaving O corrupted.
inline GroundTruth ground_truth(const FaultSpec& f, std::size_t N, std::size_t M) {
  GroundTruth g;
  switch (f.target) {
    case FaultTarget::output_block:
      g.expected_stage = ResolveStage::coc;
      break;
    case FaultTarget::output_row:
      g.expected_stage = (M == 1) ? ResolveStage::coc : ResolveStage::rc;
      break;
    case FaultTarget::output_column:
      g.expected_stage = (N == 1) ? ResolveStage::coc : ResolveStage::clc;
      break;
    case FaultTarget::fmap:
      if (M == 1)
        g.expected_stage = ResolveStage::coc;
      else if (f.i == 0) {
        g.expected_stage = ResolveStage::discard;
        g.output_diverges = true;
      } else
        g.expected_stage = ResolveStage::rc;
      break;
    case FaultTarget::kernel:
      g.expected_stage = (N == 1) ? ResolveStage::coc : ResolveStage::clc;
      break;
    case FaultTarget::checksum:
      switch (f.checksum) {
        case ChecksumName::cd1: g.expected_stage = ResolveStage::discard; break;
        case ChecksumName::cw1: g.expected_stage = ResolveStage::reload; break;
        default:
          g.benign = true;  // cd2/cw2 feed no detection-path checksum
          g.expected_stage = ResolveStage::none;
      }
      break;
  }
  return g;
}

/// Sampling weights over fault targets; zero removes a target entirely.
struct TargetWeights {
  double output_block = 1, output_row = 1, output_column = 1;
  double fmap = 1, kernel = 1, checksum = 1;
};

struct LayerGrid {
  std::size_t N, M, Ch, H, R;  // enough to draw in-range coordinates
};

/// Reproducible fault corpus: run r injects into layer r % L, mirroring the
/// one-layer-per-epoch methodology. Ground truth is attached per entry.
inline std::vector<CorpusEntry> campaign(const std::vector<LayerGrid>& layers,
                                         std::size_t n_runs,
                                         const TargetWeights& w,
                                         std::uint64_t seed) {
  if (layers.empty()) throw ConfigError("campaign needs at least one layer");
  const double weights[6] = {w.output_block, w.output_row, w.output_column,
                             w.fmap,         w.kernel,     w.checksum};
  for (double x : weights)
    if (x < 0) throw ConfigError("target weights must be nonnegative");
  std::mt19937_64 rng(seed);
  std::discrete_distribution<int> pick(weights, weights + 6);
  std::uniform_real_distribution<double> u(0.0, 1.0);

  std::vector<CorpusEntry> corpus;
  corpus.reserve(n_runs);
  for (std::size_t r = 0; r < n_runs; ++r) {
    const std::size_t li = r % layers.size();
    const LayerGrid& g = layers[li];
    FaultSpec f;
    f.layer_index = li;
    f.target = static_cast<FaultTarget>(pick(rng));
    f.seed = rng();
    auto draw = [&](std::size_t n) {
      return static_cast<std::size_t>(u(rng) * static_cast<double>(n)) % n;
    };
    f.i = draw(g.N);
    f.j = draw(g.M);
    const bool single_element = u(rng) < 0.5;
    if (f.target == FaultTarget::checksum) {
      const ChecksumName names[4] = {ChecksumName::cd1, ChecksumName::cd2,
                                     ChecksumName::cw1, ChecksumName::cw2};
      f.checksum = names[draw(4)];
      const std::size_t side =
          (f.checksum == ChecksumName::cw1 || f.checksum == ChecksumName::cw2)
              ? g.R
              : g.H;
      f.x = static_cast<long long>(draw(side));
      f.y = static_cast<long long>(draw(side));
    } else if (f.target == FaultTarget::fmap) {
      if (single_element) {
        f.x = static_cast<long long>(draw(g.H));
        f.y = static_cast<long long>(draw(g.H));
      }
    } else if (f.target == FaultTarget::kernel) {
      if (single_element) {
        f.x = static_cast<long long>(draw(g.R));
        f.y = static_cast<long long>(draw(g.R));
      }
    } else {
      const std::size_t E = g.H - g.R + 1;  // campaign layers use U=1, pad=0
      if (single_element) {
        f.x = static_cast<long long>(draw(E));
        f.y = static_cast<long long>(draw(E));
      }
    }
    // Sprinkle bit flips over single-element output-block faults only; larger
    // targets keep the additive mode so deltas cannot cancel.
    if (f.target == FaultTarget::output_block && f.x >= 0 && r % 7 == 3) {
      f.mode = FaultMode::bitflip;
      f.bit = 23;
    }
    CorpusEntry e{f, ground_truth(f, g.N, g.M)};
    corpus.push_back(e);
  }
  return corpus;
}

}  // namespace ftconv
