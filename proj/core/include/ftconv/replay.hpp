#pragma once

#include <cstddef>
#include <vector>

#include "ftconv/fault.hpp"
#include "ftconv/model.hpp"
#include "ftconv/report.hpp"
#include "ftconv/workflow.hpp"

namespace ftconv {

/// Unprotected forward pass; element i is the output of layer i.
template <typename T>
std::vector<Tensor4<T>> clean_chain(const Model<T>& model, const Tensor4<T>& D0,
                                    ConvImpl impl = ConvImpl::direct) {
  std::vector<Tensor4<T>> outs;
  const Tensor4<T>* x = &D0;
  for (const ModelLayer<T>& l : model.layers) {
    outs.push_back(conv_forward(*x, l.W, l.cfg.bias ? &l.bias : nullptr,
                                l.cfg.params(), impl));
    x = &outs.back();
  }
  return outs;
}

/// A fault whose natural corrector is disabled lands on FC instead.
inline ResolveStage adjust_expected(ResolveStage expected, const LayerPlan& plan) {
  if (expected == ResolveStage::rc && !plan.rc_enabled) return ResolveStage::fc;
  if (expected == ResolveStage::clc && !plan.clc_enabled) return ResolveStage::fc;
  return expected;
}

template <typename T>
bool outputs_close(const Tensor4<T>& a, const Tensor4<T>& b, double tol = 1e-3) {
  if (!a.same_shape(b)) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double x = static_cast<double>(a.raw()[i]);
    const double y = static_cast<double>(b.raw()[i]);
    if (std::abs(x - y) > tol * std::max({1.0, std::abs(x), std::abs(y)}))
      return false;
  }
  return true;
}

template <typename T>
struct ReplayResult {
  LayerReport rep;
  bool above_threshold = false;  // fault visibly shifts the block sums
  bool asserted = false;         // entry counts toward recovery denominators
  bool stage_ok = false;
  bool recovered = false;
  bool integrity_fatal = false;
  Tensor4<T> final_output;
};

/// Replays one corpus entry through the protected model and judges the
/// outcome against its ground truth. Detectability is classified empirically:
/// the fault counts as above-threshold when the faulty unprotected output's
/// per-position block sums deviate from the clean ones beyond 10x tolerance.
template <typename T>
ReplayResult<T> replay_entry(const Model<T>& model, const Tensor4<T>& D0,
                             const std::vector<Tensor4<T>>& clean_outs,
                             const CorpusEntry& e,
                             const std::vector<LayerPlan>& plans,
                             ConvImpl impl = ConvImpl::direct) {
  const std::size_t L = e.fault.layer_index;
  if (L >= model.layers.size()) throw ConfigError("corpus layer index out of range");
  const ModelLayer<T>& layer = model.layers[L];
  const ConvParams p = layer.cfg.params();
  const Tensor4<T>& Din = (L == 0) ? D0 : clean_outs[L - 1];
  const Tensor4<T>* bias = layer.cfg.bias ? &layer.bias : nullptr;
  const double tau = plans[L].tau;
  FaultHooks<T> hooks = make_hooks<T>(e.fault);

  ReplayResult<T> res;

  {  // what the fault does to an unprotected run of this layer
    Tensor4<T> D = Din;
    Tensor4<T> W = layer.W;
    InputChecksums<T> ic = input_checksums(D, W, p.groups);
    if (hooks.pre_conv) hooks.pre_conv(D, W, ic);
    Tensor4<T> Of = conv_forward(D, W, bias, p, impl);
    if (hooks.post_conv) hooks.post_conv(Of);
    OutputSummations<T> sf = output_summations(Of, CK_O5);
    OutputSummations<T> sc = output_summations(clean_outs[L], CK_O5);
    for (std::size_t i = 0; i < sf.so5->v.size(); ++i) {
      const double f = static_cast<double>(sf.so5->v[i]);
      const double c = static_cast<double>(sc.so5->v[i]);
      if (std::abs(f - c) > 10.0 * tau * std::max(1.0, std::abs(c))) {
        res.above_threshold = true;
        break;
      }
    }
  }

  res.rep.layer = layer.cfg.name;
  Tensor4<T> x;
  try {
    x = run_protected_layer(Din, layer.W, bias, p, plans[L], res.rep, impl,
                            hooks, &layer.cw1, &layer.cw2);
  } catch (const IntegrityError&) {
    res.integrity_fatal = true;
    return res;
  }
  for (std::size_t li = L + 1; li < model.layers.size(); ++li) {
    const ModelLayer<T>& l = model.layers[li];
    x = conv_forward(x, l.W, l.cfg.bias ? &l.bias : nullptr, l.cfg.params(), impl);
  }
  res.final_output = std::move(x);

  const Tensor4<T>& baseline = clean_outs.back();
  if (e.fault.target == FaultTarget::checksum) {
    res.asserted = true;
    res.stage_ok = res.rep.stage == e.truth.expected_stage;
    res.recovered =
        res.stage_ok && res.final_output.raw() == baseline.raw();
  } else if (res.above_threshold) {
    res.asserted = true;
    const ResolveStage expected = adjust_expected(e.truth.expected_stage, plans[L]);
    res.stage_ok = res.rep.detected && res.rep.stage == expected;
    if (e.truth.output_diverges)
      res.recovered = res.stage_ok;
    else
      res.recovered = res.stage_ok && outputs_close(res.final_output, baseline);
  }
  return res;
}

/// Full corpus replay with aggregate bookkeeping.
template <typename T>
CampaignReport run_campaign(const Model<T>& model, const Tensor4<T>& D0,
                            const std::vector<CorpusEntry>& corpus,
                            const std::vector<LayerPlan>& plans,
                            ConvImpl impl = ConvImpl::direct) {
  const std::vector<Tensor4<T>> clean = clean_chain(model, D0, impl);
  CampaignReport rep;
  rep.runs = corpus.size();
  for (const CorpusEntry& e : corpus) {
    ReplayResult<T> r = replay_entry(model, D0, clean, e, plans, impl);
    if (r.rep.detected) ++rep.detected;
    if (r.above_threshold) ++rep.above_threshold;
    if (r.asserted && r.recovered) ++rep.recovered;
    if (r.asserted && !r.recovered) ++rep.ground_truth_mismatches;
    if (r.integrity_fatal) {
      ++rep.ground_truth_mismatches;
      ++rep.integrity_fatals;
    }
    ++rep.by_stage[to_string(r.rep.stage)];
    rep.entries.push_back(r.rep);
  }
  return rep;
}

}  // namespace ftconv
