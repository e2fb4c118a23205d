#pragma once

#include <algorithm>
#include <chrono>
#include <cstddef>
#include <functional>
#include <type_traits>
#include <string>
#include <utility>
#include <vector>

#include "ftconv/checksums.hpp"
#include "ftconv/conv.hpp"
#include "ftconv/report.hpp"
#include "ftconv/schemes.hpp"

namespace ftconv {

inline double default_tau(bool f64) { return f64 ? 1e-10 : 1e-4; }

/// Per-layer protection plan: which correction schemes sit between CoC and FC,
/// the comparison tolerance, and the profiled runtimes backing that choice.
struct LayerPlan {
  bool rc_enabled = true;
  bool clc_enabled = false;
  double tau = 1e-4;
  double t0 = 0.0, t1 = 0.0, t2 = 0.0;  // CoC+FC, CoC+RC, CoC+RC+FC
  double p_r = 0.5;
};

/// Linear runtime model: alpha weighs multiply-accumulate work, beta weighs
/// memory-bound reductions.
struct CostModel {
  double alpha = 1.0;
  double beta = 1.0;
};

struct LayerDims {
  std::size_t N = 1, M = 1, Ch = 1, H = 1, R = 1, E = 1;
};

template <typename T>
LayerDims make_dims(const Tensor4<T>& D, const Tensor4<T>& W, const ConvParams& p) {
  LayerDims d;
  d.N = D.dim(0);
  d.Ch = D.dim(1);
  d.H = D.dim(2);
  d.M = W.dim(0);
  d.R = W.dim(2);
  d.E = output_extent(d.H, d.R, p);
  return d;
}

/// Closed-form predicted cost of running one scheme on one layer.
inline double cost_model(Scheme scheme, const LayerDims& d, const CostModel& cm) {
  const double N = static_cast<double>(d.N), M = static_cast<double>(d.M);
  const double Ch = static_cast<double>(d.Ch);
  const double H2 = static_cast<double>(d.H) * static_cast<double>(d.H);
  const double R2 = static_cast<double>(d.R) * static_cast<double>(d.R);
  const double E2 = static_cast<double>(d.E) * static_cast<double>(d.E);
  const double a = cm.alpha, b = cm.beta;
  switch (scheme) {
    case Scheme::fc:
      return a * (N + M) * Ch * R2 * E2 + b * (N * Ch * H2 + 2 * N * M * E2);
    case Scheme::rc:
      return 2 * a * M * Ch * R2 * E2 + 2 * b * (N * Ch * H2 + N * M * E2);
    case Scheme::clc:
      return 2 * a * N * Ch * R2 * E2 + 2 * b * N * M * E2;
    case Scheme::coc:
      return 3 * a * Ch * R2 * E2 + b * (2 * N * Ch * H2 + 3 * N * M * E2);
    case Scheme::coc_d:
      return a * Ch * R2 * E2 + b * (2 * N * Ch * H2 + N * M * E2);
  }
  throw ConfigError("unknown scheme in cost model");
}

/// Enable RC iff the expected time saved on row faults exceeds the expected
/// time added on column faults: p_r*(t0-t1) > p_c*(t2-t0). Equality disables.
inline bool decide_rc(double t0, double t1, double t2, double p_r, double p_c) {
  return p_r * (t0 - t1) > p_c * (t2 - t0);
}

/// Mirror decision for ClC: the saving applies to column (kernel-side) faults.
inline bool decide_clc(double t0, double t1, double t2, double p_r, double p_c) {
  return p_c * (t0 - t1) > p_r * (t2 - t0);
}

/// p_r = |D| / (|D| + |W|): faults land in the fmap or the kernel in
/// proportion to their element counts.
inline std::pair<double, double> estimate_error_probs(const LayerDims& d) {
  const double nd = static_cast<double>(d.N * d.Ch * d.H * d.H);
  const double nw = static_cast<double>(d.M * d.Ch * d.R * d.R);
  const double p_r = nd / (nd + nw);
  return {p_r, 1.0 - p_r};
}

/// Unprofiled default: RC on/off from cost-model-predicted workflow times,
/// ClC off (it is the expensive scheme on typical layers).
inline LayerPlan make_default_plan(const LayerDims& d, double tau,
                                   const CostModel& cm = {}) {
  LayerPlan plan;
  plan.tau = tau;
  const double coc = cost_model(Scheme::coc, d, cm);
  plan.t0 = coc + cost_model(Scheme::fc, d, cm);
  plan.t1 = coc + cost_model(Scheme::rc, d, cm);
  plan.t2 = plan.t1 + cost_model(Scheme::fc, d, cm);
  const auto [p_r, p_c] = estimate_error_probs(d);
  plan.p_r = p_r;
  plan.rc_enabled = decide_rc(plan.t0, plan.t1, plan.t2, p_r, p_c);
  plan.clc_enabled = false;
  return plan;
}

/// Injection points used by the fault injector and by profiling. pre_conv runs
/// after input checksums are taken (a fault strikes mid-flight, not before the
/// encoding); post_conv runs on the freshly computed output.
template <typename T>
struct FaultHooks {
  std::function<void(Tensor4<T>&, Tensor4<T>&, InputChecksums<T>&)> pre_conv;
  std::function<void(Tensor4<T>&)> post_conv;
};

namespace detail {

/// Copy of channels [lo, lo+len) of a (1,Ch,H,H) tensor.
template <typename T>
Tensor4<T> channel_slice(const Tensor4<T>& t, std::size_t lo, std::size_t len) {
  Tensor4<T> out(1, len, t.dim(2), t.dim(3));
  for (std::size_t k = 0; k < len; ++k)
    for (std::size_t a = 0; a < t.dim(2); ++a)
      for (std::size_t b = 0; b < t.dim(3); ++b)
        out(0, k, a, b) = t(0, lo + k, a, b);
  return out;
}

}  // namespace detail

/// One protected layer execution: detect with CoC-D, then escalate through the
/// enabled correction chain, recomputing the layer as a last resort. Checksums
/// and summations are computed once and reused down the chain.
template <typename T>
Tensor4<T> run_protected_layer(const Tensor4<T>& D_in, const Tensor4<T>& W_golden,
                               const std::type_identity_t<Tensor4<T>>* bias,
                               const ConvParams& p,
                               const LayerPlan& plan, LayerReport& rep,
                               ConvImpl impl = ConvImpl::direct,
                               const FaultHooks<T>& hooks = {},
                               const Tensor4<T>* cw1_golden = nullptr,
                               const Tensor4<T>* cw2_golden = nullptr) {
  const double tau = plan.tau;
  Tensor4<T> D = D_in;
  Tensor4<T> W = W_golden;
  InputChecksums<T> ic = input_checksums(D, W, p.groups);
  // Golden kernel checksums: taken now (pre-hook) unless precomputed upstream.
  const Tensor4<T> cw1_ref = cw1_golden ? *cw1_golden : ic.cw1;
  const Tensor4<T> cw2_ref = cw2_golden ? *cw2_golden : *ic.cw2;

  if (hooks.pre_conv) hooks.pre_conv(D, W, ic);
  Tensor4<T> O = conv_forward(D, W, bias, p, impl);
  if (hooks.post_conv) hooks.post_conv(O);

  const std::size_t N = O.dim(0), M = O.dim(1), E = O.dim(2);
  BiasAdjuster<T> adj;
  if (p.bias_enabled) adj = BiasAdjuster<T>(*bias, N);

  OutputChecksums<T> cs;
  unsigned cs_have = 0;
  auto ensure_cs = [&](unsigned want) {
    const unsigned need = want & ~cs_have;
    if (!need) return;
    OutputChecksums<T> f = output_checksums(need, D, W, ic, p);
    if (need & CK_O1) cs.co1 = std::move(f.co1);
    if (need & CK_O2) cs.co2 = std::move(f.co2);
    if (need & CK_O3) cs.co3 = std::move(f.co3);
    if (need & CK_O4) cs.co4 = std::move(f.co4);
    if (need & CK_O5) cs.co5 = std::move(f.co5);
    if (need & CK_O6) cs.co6 = std::move(f.co6);
    if (need & CK_O7) cs.co7 = std::move(f.co7);
    cs_have |= need;
  };
  OutputSummations<T> s;
  unsigned s_have = 0;
  auto ensure_s = [&](unsigned want) {
    const unsigned need = want & ~s_have;
    if (!need) return;
    OutputSummations<T> f = output_summations(O, need);
    if (p.bias_enabled) adj.apply(f);
    if (need & CK_O1) s.so1 = std::move(f.so1);
    if (need & CK_O2) s.so2 = std::move(f.so2);
    if (need & CK_O3) s.so3 = std::move(f.so3);
    if (need & CK_O4) s.so4 = std::move(f.so4);
    if (need & CK_O5) s.so5 = std::move(f.so5);
    if (need & CK_O6) s.so6 = std::move(f.so6);
    if (need & CK_O7) s.so7 = std::move(f.so7);
    s_have |= need;
  };

  // Post-correction check against every trusted checksum computed so far, not
  // just Co5. A correction that repairs the aggregate Co5 balance while
  // leaving the weighted identities broken (e.g. a multi-block fault whose
  // weighted ratio happens to round to a block index) is rejected here and
  // escalates instead. Only checksums derived from the pre-fault input
  // checksums qualify: Co2/Co4 convolve the raw (possibly corrupted) input
  // tensor, so a correct repair of the output legitimately disagrees with them.
  auto verifier = [&]() {
    const unsigned trusted = cs_have & (CK_O1 | CK_O3 | CK_O5 | CK_O6 | CK_O7);
    OutputSummations<T> fresh = output_summations(O, trusted);
    if (p.bias_enabled) adj.apply(fresh);
    if ((trusted & CK_O5) && !grids_consistent(*cs.co5, *fresh.so5, tau)) return false;
    if ((trusted & CK_O6) && !grids_consistent(*cs.co6, *fresh.so6, tau)) return false;
    if ((trusted & CK_O7) && !grids_consistent(*cs.co7, *fresh.so7, tau)) return false;
    if (trusted & CK_O1)
      for (std::size_t m = 0; m < O.dim(1); ++m)
        if (!grids_consistent((*cs.co1)[m], (*fresh.so1)[m], tau)) return false;
    if (trusted & CK_O3)
      for (std::size_t m = 0; m < O.dim(1); ++m)
        if (!grids_consistent((*cs.co3)[m], (*fresh.so3)[m], tau)) return false;
    return true;
  };

  ensure_cs(CK_O5);
  ensure_s(CK_O5);
  DetectionResult<T> det = detect_coc_d(*cs.co5, *s.so5, tau);
  rep.detected = !det.clean;
  if (det.clean) {
    rep.stage = ResolveStage::none;
    return O;
  }

  // Either W or its cached checksum may itself be the victim; reload both from
  // the golden copies and see whether the mismatch evaporates.
  if (!verify_kernel(W, ic.cw1, p.groups, tau)) {
    W = W_golden;
    ic.cw1 = cw1_ref;
    ic.cw2 = cw2_ref;
    cs = OutputChecksums<T>{};
    cs_have = 0;
    rep.weights_reloaded = true;
    ensure_cs(CK_O5);
    det = detect_coc_d(*cs.co5, *s.so5, tau);
    if (det.clean) {
      rep.stage = ResolveStage::reload;
      return O;
    }
  }

  CocProbes probes;
  probes.row0_consistent = [&]() {
    Grid<T> c = conv_block(D.block(0), ic.cw1, p);
    Grid<T> sum(E);
    for (std::size_t m = 0; m < M; ++m)
      for (std::size_t i = 0; i < E * E; ++i) sum.v[i] += O(0, m, i / E, i % E);
    if (p.bias_enabled) {
      T sb = T(0);
      for (std::size_t m = 0; m < M; ++m) sb += (*bias)(m, 0, 0, 0);
      for (T& v : sum.v) v -= sb;
    }
    return grids_consistent(c, sum, tau);
  };
  probes.col0_consistent = [&]() {
    const std::size_t Ckw = W.dim(1);
    Tensor4<T> d0 = (p.groups == 1) ? ic.cd1 : detail::channel_slice(ic.cd1, 0, Ckw);
    Grid<T> c = conv_block(d0, W.block(0), p);
    Grid<T> sum(E);
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t i = 0; i < E * E; ++i) sum.v[i] += O(n, 0, i / E, i % E);
    if (p.bias_enabled)
      for (T& v : sum.v) v -= static_cast<T>(N) * (*bias)(0, 0, 0, 0);
    return grids_consistent(c, sum, tau);
  };

  auto finish = [&](const CorrectionOutcome& oc, ResolveStage st) {
    rep.stage = st;
    for (const auto& b : oc.corrected_blocks) rep.corrected_blocks.push_back({b.i, b.j});
  };

  ensure_cs(CK_O5 | CK_O6 | CK_O7);
  ensure_s(CK_O5 | CK_O6 | CK_O7);
  rep.stages_attempted.push_back(ResolveStage::coc);
  CorrectionOutcome oc = correct_coc(cs, s, O, tau, probes, verifier);
  if (oc.status == CorrectionStatus::corrected) {
    finish(oc, ResolveStage::coc);
    return O;
  }
  if (oc.status == CorrectionStatus::checksum_corruption_discard) {
    rep.stage = ResolveStage::discard;
    return O;
  }

  if (plan.rc_enabled) {
    ensure_cs(CK_O1 | CK_O3);
    ensure_s(CK_O1 | CK_O3);
    rep.stages_attempted.push_back(ResolveStage::rc);
    oc = correct_rc(cs, s, O, tau, verifier);
    if (oc.status == CorrectionStatus::corrected) {
      finish(oc, ResolveStage::rc);
      return O;
    }
  }
  if (plan.clc_enabled) {
    ensure_cs(CK_O2 | CK_O4);
    ensure_s(CK_O2 | CK_O4);
    rep.stages_attempted.push_back(ResolveStage::clc);
    oc = correct_clc(cs, s, O, tau, verifier);
    if (oc.status == CorrectionStatus::corrected) {
      finish(oc, ResolveStage::clc);
      return O;
    }
  }
  ensure_cs(CK_O1 | CK_O2);
  ensure_s(CK_O1 | CK_O2);
  rep.stages_attempted.push_back(ResolveStage::fc);
  oc = correct_fc(cs, s, O, tau, verifier);
  if (oc.status == CorrectionStatus::corrected) {
    finish(oc, ResolveStage::fc);
    return O;
  }
  if (oc.status == CorrectionStatus::checksum_corruption_discard) {
    rep.stage = ResolveStage::discard;
    return O;
  }

  // Last resort: recompute the layer with fresh checksums. The fault model
  // allows at most one fault episode, so a second failure is unrecoverable.
  rep.stages_attempted.push_back(ResolveStage::recompute);
  for (int attempt = 0; attempt < 2; ++attempt) {
    O = conv_forward(D, W, bias, p, impl);
    ic = input_checksums(D, W, p.groups);
    OutputChecksums<T> c2 = output_checksums(CK_O5, D, W, ic, p);
    OutputSummations<T> s2 = output_summations(O, CK_O5);
    if (p.bias_enabled) adj.apply(s2);
    if (detect_coc_d(*c2.co5, *s2.so5, tau).clean) {
      rep.stage = ResolveStage::recompute;
      rep.recomputed = true;
      return O;
    }
  }
  throw IntegrityError("layer recomputation failed verification twice");
}

/// Checksum-protected back-propagation: compares block sums of dW and dD
/// against the convolution images of the upstream-gradient checksums; on
/// mismatch recomputes once, a second mismatch is unrecoverable.
struct BackwardReport {
  bool dw_detected = false;
  bool dd_detected = false;
  bool recomputed = false;
};

template <typename T>
std::pair<Tensor4<T>, Tensor4<T>> run_protected_backward(
    const Tensor4<T>& D, const Tensor4<T>& W, const Tensor4<T>& dO,
    const ConvParams& p, double tau, BackwardReport& rep,
    const std::type_identity_t<std::function<void(Tensor4<T>&, Tensor4<T>&)>>&
        post_hook = {}) {
  const std::size_t N = D.dim(0), M = W.dim(0), Ch = D.dim(1), R = W.dim(2);
  const std::size_t H = D.dim(2), E = dO.dim(2);

  // Checksums of the upstream gradient: per-row and per-column block sums.
  Tensor4<T> go_rows(N, 1, E, E);  // sum over m, one block per n -> protects dW
  Tensor4<T> go_cols(1, M, E, E);  // sum over n, one block per m -> protects dD
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t m = 0; m < M; ++m)
      for (std::size_t x = 0; x < E; ++x)
        for (std::size_t y = 0; y < E; ++y) {
          go_rows(n, 0, x, y) += dO(n, m, x, y);
          go_cols(0, m, x, y) += dO(n, m, x, y);
        }

  // Reference sums: sum_m dW[m] = sum_n corr(D_n, sum_m dO_nm) and
  // sum_n dD[n] = sum_m fullcorr(W_m, sum_n dO_nm); both fall out of
  // conv_backward applied to the stacked checksum gradients.
  Tensor4<T> w1(1, Ch, R, R);
  auto [cdw, unused_dd] = conv_backward(D, w1, go_rows, p);
  Tensor4<T> d1(1, Ch, H, H);
  auto [unused_dw, cdd] = conv_backward(d1, W, go_cols, p);

  auto check = [&](const Tensor4<T>& dW, const Tensor4<T>& dD, bool& bad_w,
                   bool& bad_d) {
    bad_w = bad_d = false;
    for (std::size_t k = 0; k < Ch && !bad_w; ++k)
      for (std::size_t i = 0; i < R && !bad_w; ++i)
        for (std::size_t j = 0; j < R; ++j) {
          T sum = T(0);
          for (std::size_t m = 0; m < M; ++m) sum += dW(m, k, i, j);
          if (values_differ(cdw(0, k, i, j), sum, tau)) {
            bad_w = true;
            break;
          }
        }
    for (std::size_t k = 0; k < Ch && !bad_d; ++k)
      for (std::size_t a = 0; a < H && !bad_d; ++a)
        for (std::size_t b = 0; b < H; ++b) {
          T sum = T(0);
          for (std::size_t n = 0; n < N; ++n) sum += dD(n, k, a, b);
          if (values_differ(cdd(0, k, a, b), sum, tau)) {
            bad_d = true;
            break;
          }
        }
  };

  auto [dW, dD] = conv_backward(D, W, dO, p);
  if (post_hook) post_hook(dW, dD);
  bool bad_w = false, bad_d = false;
  check(dW, dD, bad_w, bad_d);
  rep.dw_detected = bad_w;
  rep.dd_detected = bad_d;
  if (!bad_w && !bad_d) return {std::move(dW), std::move(dD)};

  std::tie(dW, dD) = conv_backward(D, W, dO, p);
  rep.recomputed = true;
  check(dW, dD, bad_w, bad_d);
  if (bad_w || bad_d)
    throw IntegrityError("gradient recomputation failed verification");
  return {std::move(dW), std::move(dD)};
}

/// Offline profiling of the three workflow variants per optional scheme, each
/// driven by a forced fault on its fast path. Degenerate layers (no second row
/// or column to corrupt) or a too-coarse timer fall back to cost-model times.
struct ProfileResult {
  double rc_t0 = 0, rc_t1 = 0, rc_t2 = 0;
  double clc_t0 = 0, clc_t1 = 0, clc_t2 = 0;
  bool used_cost_model = false;
};

template <typename T>
ProfileResult profile_layer(const Tensor4<T>& D, const Tensor4<T>& W,
                            const std::type_identity_t<Tensor4<T>>* bias,
                            const ConvParams& p,
                            double tau, std::size_t reps,
                            const std::function<double()>& clock = {}) {
  if (reps < 3) throw ConfigError("profiling needs at least 3 repetitions");
  const LayerDims dims = make_dims(D, W, p);

  ProfileResult pr;
  auto fallback = [&]() {
    pr.used_cost_model = true;
    const CostModel cm{};
    const double coc = cost_model(Scheme::coc, dims, cm);
    const double fc = cost_model(Scheme::fc, dims, cm);
    pr.rc_t0 = pr.clc_t0 = coc + fc;
    pr.rc_t1 = coc + cost_model(Scheme::rc, dims, cm);
    pr.rc_t2 = pr.rc_t1 + fc;
    pr.clc_t1 = coc + cost_model(Scheme::clc, dims, cm);
    pr.clc_t2 = pr.clc_t1 + fc;
    return pr;
  };
  if (dims.N < 2 || dims.M < 2) return fallback();

  std::function<double()> now = clock;
  if (!now)
    now = []() {
      return std::chrono::duration<double>(
                 std::chrono::steady_clock::now().time_since_epoch())
          .count();
    };

  const std::size_t E = dims.E;
  auto row_fault = [E, M = dims.M](Tensor4<T>& O) {
    for (std::size_t m = 0; m < M; ++m)
      for (std::size_t i = 0; i < E * E; ++i)
        O(1, m, i / E, i % E) += T(3) + static_cast<T>(m);
  };
  auto col_fault = [E, N = dims.N](Tensor4<T>& O) {
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t i = 0; i < E * E; ++i)
        O(n, 1, i / E, i % E) += T(3) + static_cast<T>(n);
  };

  auto timed = [&](bool rc, bool clc, bool row) {
    std::vector<double> t(reps);
    for (std::size_t r = 0; r < reps; ++r) {
      LayerPlan plan;
      plan.rc_enabled = rc;
      plan.clc_enabled = clc;
      plan.tau = tau;
      FaultHooks<T> hooks;
      hooks.post_conv = row ? std::function<void(Tensor4<T>&)>(row_fault)
                            : std::function<void(Tensor4<T>&)>(col_fault);
      LayerReport rep;
      const double a = now();
      run_protected_layer(D, W, bias, p, plan, rep, ConvImpl::direct, hooks);
      t[r] = now() - a;
    }
    std::nth_element(t.begin(), t.begin() + t.size() / 2, t.end());
    return t[t.size() / 2];
  };

  pr.rc_t0 = timed(false, false, true);    // CoC -> FC on a row fault
  pr.rc_t1 = timed(true, false, true);     // CoC -> RC on a row fault
  pr.rc_t2 = timed(true, false, false);    // CoC -> RC -> FC on a column fault
  pr.clc_t0 = timed(false, false, false);  // CoC -> FC on a column fault
  pr.clc_t1 = timed(false, true, false);   // CoC -> ClC on a column fault
  pr.clc_t2 = timed(false, true, true);    // CoC -> ClC -> FC on a row fault
  if (pr.rc_t0 <= 0 || pr.rc_t1 <= 0 || pr.rc_t2 <= 0 || pr.clc_t0 <= 0 ||
      pr.clc_t1 <= 0 || pr.clc_t2 <= 0)
    return fallback();  // timer resolution insufficient for this layer
  return pr;
}

}  // namespace ftconv
