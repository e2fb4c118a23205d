#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <set>
#include <vector>

#include "ftconv/checksums.hpp"
#include "ftconv/tensor.hpp"

namespace ftconv {

enum class Scheme { coc_d, coc, rc, clc, fc };

template <typename T>
struct DetectionResult {
  bool clean = true;
  std::vector<std::uint8_t> mismatch_mask;  // E*E, row-major
  double max_rel_dev = 0.0;
};

enum class CorrectionStatus { corrected, checksum_corruption_discard, escalate };

struct BlockCoord {
  std::size_t i = 0, j = 0;
  bool operator<(const BlockCoord& o) const {
    return i != o.i ? i < o.i : j < o.j;
  }
  bool operator==(const BlockCoord& o) const { return i == o.i && j == o.j; }
};

struct CorrectionOutcome {
  CorrectionStatus status = CorrectionStatus::escalate;
  std::vector<BlockCoord> corrected_blocks;
  Scheme scheme_used = Scheme::coc;
};

/// Re-verification hook: recompute fresh summations for the (possibly just
/// corrected) output and compare against the cached checksums. Schemes must
/// not report `corrected` unless this passes.
using Verifier = std::function<bool()>;

/// On-demand cross checks used to separate checksum corruption from output
/// corruption in the index-0 degenerate patterns. Each returns true when the
/// probed output row/column 0 is consistent with its checksum.
struct CocProbes {
  std::function<bool()> row0_consistent;
  std::function<bool()> col0_consistent;
};

namespace detail {

/// Accept a real-valued location only if it rounds to an in-range integer
/// within a 0.01 band.
inline std::optional<std::size_t> locate_index(double r, std::size_t n) {
  const long long i = std::llround(r);
  if (std::abs(r - static_cast<double>(i)) > 0.01) return std::nullopt;
  if (i < 0 || i >= static_cast<long long>(n)) return std::nullopt;
  return static_cast<std::size_t>(i);
}

/// Undo log for in-place corrections.
template <typename T>
struct Patch {
  std::size_t i, j, x, y;
  T delta;
};

template <typename T>
void rollback(Tensor4<T>& O, const std::vector<Patch<T>>& applied) {
  for (const auto& p : applied) O(p.i, p.j, p.x, p.y) -= p.delta;
}

}  // namespace detail

/// CoC-D: cheapest detection, compares C_o5 against S_o5 elementwise.
template <typename T>
DetectionResult<T> detect_coc_d(const Grid<T>& co5, const Grid<T>& so5, double tau) {
  DetectionResult<T> r;
  r.mismatch_mask.assign(co5.v.size(), 0);
  for (std::size_t i = 0; i < co5.v.size(); ++i) {
    const double c = static_cast<double>(co5.v[i]);
    const double s = static_cast<double>(so5.v[i]);
    const double dev = std::abs(c - s) / std::max({std::abs(c), std::abs(s), 1.0});
    r.max_rel_dev = std::max(r.max_rel_dev, dev);
    if (values_differ(co5.v[i], so5.v[i], tau)) {
      r.mismatch_mask[i] = 1;
      r.clean = false;
    }
  }
  return r;
}

/// CoC: locates a single corrupted block from delta ratios against C_o6/C_o7
/// and repairs it in place. Inconsistent patterns either implicate the
/// checksums themselves (discard) or exceed CoC's ability (escalate).
template <typename T>
CorrectionOutcome correct_coc(const OutputChecksums<T>& cs,
                              const OutputSummations<T>& s, Tensor4<T>& O,
                              double tau, const CocProbes& probes = {},
                              const Verifier& verify = {}) {
  if (!cs.co5 || !cs.co6 || !cs.co7 || !s.so5 || !s.so6 || !s.so7)
    throw ConfigError("CoC requires Co5..Co7 and So5..So7");
  const Grid<T>&c5 = *cs.co5, &c6 = *cs.co6, &c7 = *cs.co7;
  const Grid<T>&s5 = *s.so5, &s6 = *s.so6, &s7 = *s.so7;
  const std::size_t E = c5.n, N = O.dim(0), M = O.dim(1);

  CorrectionOutcome out;
  out.scheme_used = Scheme::coc;

  std::vector<std::size_t> flagged;
  for (std::size_t i = 0; i < E * E; ++i)
    if (values_differ(c5.v[i], s5.v[i], tau)) flagged.push_back(i);
  if (flagged.empty()) {
    out.status = CorrectionStatus::corrected;
    return out;
  }

  bool valid = true;
  std::optional<BlockCoord> loc;
  for (std::size_t f : flagged) {
    const double delta = static_cast<double>(c5.v[f]) - static_cast<double>(s5.v[f]);
    if (std::abs(delta) < tau) {
      valid = false;
      break;
    }
    const double ri = (static_cast<double>(c7.v[f]) - static_cast<double>(s7.v[f])) / delta;
    const double rj = (static_cast<double>(c6.v[f]) - static_cast<double>(s6.v[f])) / delta;
    const auto i = detail::locate_index(ri, N);
    const auto j = detail::locate_index(rj, M);
    if (!i || !j || (loc && !(*loc == BlockCoord{*i, *j}))) {
      valid = false;
      break;
    }
    loc = BlockCoord{*i, *j};
  }

  if (valid && loc) {
    std::vector<detail::Patch<T>> applied;
    for (std::size_t f : flagged) {
      const T d = c5.v[f] - s5.v[f];
      O(loc->i, loc->j, f / E, f % E) += d;
      applied.push_back({loc->i, loc->j, f / E, f % E, d});
    }
    if (!verify || verify()) {
      out.status = CorrectionStatus::corrected;
      out.corrected_blocks = {*loc};
      return out;
    }
    detail::rollback(O, applied);
    out.status = CorrectionStatus::escalate;
    return out;
  }

  // Pattern analysis. A corrupted Cd1 poisons Co5/Co6 but leaves Co7 intact;
  // the same signature also arises from a genuine row-0 multi-column fault,
  // so a cheap probe of output row 0 against its column checksum settles it.
  // Symmetrically for Cw1 / column 0 via Co7.
  const bool m6 = !grids_consistent(c6, s6, tau);
  const bool m7 = !grids_consistent(c7, s7, tau);
  if (m6 && !m7) {
    if (probes.row0_consistent)
      out.status = probes.row0_consistent()
                       ? CorrectionStatus::checksum_corruption_discard
                       : CorrectionStatus::escalate;
    else
      out.status = CorrectionStatus::checksum_corruption_discard;
    return out;
  }
  if (m7 && !m6) {
    if (probes.col0_consistent)
      out.status = probes.col0_consistent()
                       ? CorrectionStatus::checksum_corruption_discard
                       : CorrectionStatus::escalate;
    else
      out.status = CorrectionStatus::checksum_corruption_discard;
    return out;
  }
  out.status = CorrectionStatus::escalate;
  return out;
}

/// RC: per-column deltas from C_o1, row located by the C_o3/C_o1 delta ratio.
/// All corrupted entries must agree on a single row.
template <typename T>
CorrectionOutcome correct_rc(const OutputChecksums<T>& cs,
                             const OutputSummations<T>& s, Tensor4<T>& O,
                             double tau, const Verifier& verify = {}) {
  if (!cs.co1 || !cs.co3 || !s.so1 || !s.so3)
    throw ConfigError("RC requires Co1/Co3 and So1/So3");
  const auto& c1 = *cs.co1;
  const auto& c3 = *cs.co3;
  const auto& s1 = *s.so1;
  const auto& s3 = *s.so3;
  const std::size_t N = O.dim(0), M = O.dim(1), E = O.dim(2);

  CorrectionOutcome out;
  out.scheme_used = Scheme::rc;

  std::optional<std::size_t> row;
  std::vector<detail::Patch<T>> patches;
  for (std::size_t j = 0; j < M; ++j)
    for (std::size_t f = 0; f < E * E; ++f) {
      if (!values_differ(c1[j].v[f], s1[j].v[f], tau)) continue;
      const double delta =
          static_cast<double>(c1[j].v[f]) - static_cast<double>(s1[j].v[f]);
      if (std::abs(delta) < tau) {
        out.status = CorrectionStatus::escalate;
        return out;
      }
      const double ri =
          (static_cast<double>(c3[j].v[f]) - static_cast<double>(s3[j].v[f])) / delta;
      const auto i = detail::locate_index(ri, N);
      if (!i || (row && *row != *i)) {
        out.status = CorrectionStatus::escalate;
        return out;
      }
      row = *i;
      patches.push_back({*i, j, f / E, f % E, c1[j].v[f] - s1[j].v[f]});
    }

  if (patches.empty()) {
    out.status = CorrectionStatus::corrected;
    return out;
  }
  std::set<BlockCoord> blocks;
  for (const auto& p : patches) {
    O(p.i, p.j, p.x, p.y) += p.delta;
    blocks.insert({p.i, p.j});
  }
  if (!verify || verify()) {
    out.status = CorrectionStatus::corrected;
    out.corrected_blocks.assign(blocks.begin(), blocks.end());
    return out;
  }
  detail::rollback(O, patches);
  out.status = CorrectionStatus::escalate;
  return out;
}

/// ClC: mirror of RC with rows and columns swapped (C_o2/C_o4).
template <typename T>
CorrectionOutcome correct_clc(const OutputChecksums<T>& cs,
                              const OutputSummations<T>& s, Tensor4<T>& O,
                              double tau, const Verifier& verify = {}) {
  if (!cs.co2 || !cs.co4 || !s.so2 || !s.so4)
    throw ConfigError("ClC requires Co2/Co4 and So2/So4");
  const auto& c2 = *cs.co2;
  const auto& c4 = *cs.co4;
  const auto& s2 = *s.so2;
  const auto& s4 = *s.so4;
  const std::size_t N = O.dim(0), M = O.dim(1), E = O.dim(2);

  CorrectionOutcome out;
  out.scheme_used = Scheme::clc;

  std::optional<std::size_t> col;
  std::vector<detail::Patch<T>> patches;
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t f = 0; f < E * E; ++f) {
      if (!values_differ(c2[n].v[f], s2[n].v[f], tau)) continue;
      const double delta =
          static_cast<double>(c2[n].v[f]) - static_cast<double>(s2[n].v[f]);
      if (std::abs(delta) < tau) {
        out.status = CorrectionStatus::escalate;
        return out;
      }
      const double rj =
          (static_cast<double>(c4[n].v[f]) - static_cast<double>(s4[n].v[f])) / delta;
      const auto j = detail::locate_index(rj, M);
      if (!j || (col && *col != *j)) {
        out.status = CorrectionStatus::escalate;
        return out;
      }
      col = *j;
      patches.push_back({n, *j, f / E, f % E, c2[n].v[f] - s2[n].v[f]});
    }

  if (patches.empty()) {
    out.status = CorrectionStatus::corrected;
    return out;
  }
  std::set<BlockCoord> blocks;
  for (const auto& p : patches) {
    O(p.i, p.j, p.x, p.y) += p.delta;
    blocks.insert({p.i, p.j});
  }
  if (!verify || verify()) {
    out.status = CorrectionStatus::corrected;
    out.corrected_blocks.assign(blocks.begin(), blocks.end());
    return out;
  }
  detail::rollback(O, patches);
  out.status = CorrectionStatus::escalate;
  return out;
}

/// FC: the strongest scheme. Handles same-row and same-column corruption via
/// C_o1/C_o2; when one of those families is blind or corrupted, the CoC
/// checksums locate the damaged row/column instead. A one-sided pattern that
/// locates index 0 is indistinguishable from checksum corruption and is
/// resolved as a discard when the orthogonal family vouches for O.
template <typename T>
CorrectionOutcome correct_fc(const OutputChecksums<T>& cs,
                             const OutputSummations<T>& s, Tensor4<T>& O,
                             double tau, const Verifier& verify = {}) {
  if (!cs.co1 || !cs.co2 || !cs.co5 || !cs.co6 || !cs.co7 || !s.so1 || !s.so2 ||
      !s.so5 || !s.so6 || !s.so7)
    throw ConfigError("FC requires Co1/Co2/Co5/Co6/Co7 and matching summations");
  const auto& c1 = *cs.co1;
  const auto& c2 = *cs.co2;
  const auto& s1 = *s.so1;
  const auto& s2 = *s.so2;
  const Grid<T>&c5 = *cs.co5, &s5 = *s.so5;
  const Grid<T>&c6 = *cs.co6, &s6 = *s.so6;
  const Grid<T>&c7 = *cs.co7, &s7 = *s.so7;
  const std::size_t N = O.dim(0), M = O.dim(1), E = O.dim(2);

  CorrectionOutcome out;
  out.scheme_used = Scheme::fc;

  std::vector<std::vector<std::size_t>> colflag(M), rowflag(N);
  std::vector<std::size_t> cset, rset;
  for (std::size_t j = 0; j < M; ++j) {
    for (std::size_t f = 0; f < E * E; ++f)
      if (values_differ(c1[j].v[f], s1[j].v[f], tau)) colflag[j].push_back(f);
    if (!colflag[j].empty()) cset.push_back(j);
  }
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t f = 0; f < E * E; ++f)
      if (values_differ(c2[n].v[f], s2[n].v[f], tau)) rowflag[n].push_back(f);
    if (!rowflag[n].empty()) rset.push_back(n);
  }

  auto commit = [&](std::vector<detail::Patch<T>>& patches) -> CorrectionOutcome {
    std::set<BlockCoord> blocks;
    for (const auto& p : patches) {
      O(p.i, p.j, p.x, p.y) += p.delta;
      blocks.insert({p.i, p.j});
    }
    if (!verify || verify()) {
      out.status = CorrectionStatus::corrected;
      out.corrected_blocks.assign(blocks.begin(), blocks.end());
      return out;
    }
    detail::rollback(O, patches);
    out.status = CorrectionStatus::escalate;
    return out;
  };

  // Locate a block index from the CoC delta ratios; used when one of the
  // C_o1/C_o2 families gives no evidence.
  auto locate_via_coc = [&](const Grid<T>& weighted, const Grid<T>& sweighted,
                            std::size_t range) -> std::optional<std::size_t> {
    std::optional<std::size_t> idx;
    bool any = false;
    for (std::size_t f = 0; f < E * E; ++f) {
      if (!values_differ(c5.v[f], s5.v[f], tau)) continue;
      any = true;
      const double d = static_cast<double>(c5.v[f]) - static_cast<double>(s5.v[f]);
      if (std::abs(d) < tau) return std::nullopt;
      const double r = (static_cast<double>(weighted.v[f]) -
                        static_cast<double>(sweighted.v[f])) /
                       d;
      const auto k = detail::locate_index(r, range);
      if (!k || (idx && *idx != *k)) return std::nullopt;
      idx = *k;
    }
    return any ? idx : std::nullopt;
  };

  if (rset.empty() && cset.empty()) {
    // O agrees with both block families; the detection mismatch lives in the
    // CoC checksums only.
    out.status = CorrectionStatus::checksum_corruption_discard;
    return out;
  }

  if (rset.empty()) {
    // Columns flagged but every row sum agrees: either the C_o1 family is
    // corrupt, or the row evidence is blind (fmap corrupted before C_o2 was
    // taken). The CoC checksums arbitrate.
    if (grids_consistent(c5, s5, tau)) {
      out.status = CorrectionStatus::checksum_corruption_discard;
      return out;
    }
    const auto i = locate_via_coc(c7, s7, N);
    if (!i) {
      out.status = CorrectionStatus::escalate;
      return out;
    }
    if (*i == 0) {
      // Indistinguishable from corrupted weight-1 input checksums.
      out.status = CorrectionStatus::checksum_corruption_discard;
      return out;
    }
    std::vector<detail::Patch<T>> patches;
    for (std::size_t j : cset)
      for (std::size_t f : colflag[j])
        patches.push_back({*i, j, f / E, f % E, c1[j].v[f] - s1[j].v[f]});
    return commit(patches);
  }

  if (cset.empty()) {
    if (grids_consistent(c5, s5, tau)) {
      out.status = CorrectionStatus::checksum_corruption_discard;
      return out;
    }
    const auto j = locate_via_coc(c6, s6, M);
    if (!j) {
      out.status = CorrectionStatus::escalate;
      return out;
    }
    if (*j == 0) {
      out.status = CorrectionStatus::checksum_corruption_discard;
      return out;
    }
    std::vector<detail::Patch<T>> patches;
    for (std::size_t n : rset)
      for (std::size_t f : rowflag[n])
        patches.push_back({n, *j, f / E, f % E, c2[n].v[f] - s2[n].v[f]});
    return commit(patches);
  }

  if (rset.size() == 1) {
    // Same-row corruption: per-column deltas recover each block exactly.
    const std::size_t i = rset.front();
    std::vector<detail::Patch<T>> patches;
    for (std::size_t j : cset)
      for (std::size_t f : colflag[j])
        patches.push_back({i, j, f / E, f % E, c1[j].v[f] - s1[j].v[f]});
    return commit(patches);
  }
  if (cset.size() == 1) {
    const std::size_t j = cset.front();
    std::vector<detail::Patch<T>> patches;
    for (std::size_t n : rset)
      for (std::size_t f : rowflag[n])
        patches.push_back({n, j, f / E, f % E, c2[n].v[f] - s2[n].v[f]});
    return commit(patches);
  }

  out.status = CorrectionStatus::escalate;  // corruption spans rows and columns
  return out;
}

}  // namespace ftconv
