#include <doctest.h>

#include <random>

#include "ftconv/workflow.hpp"
#include "helpers.hpp"

using namespace ftconv;
using ftconv::test::close;
using ftconv::test::tensors_close;

TEST_CASE("cost model closed forms") {
  CostModel cm;
  LayerDims unit;  // everything 1
  CHECK(cost_model(Scheme::fc, unit, cm) == 5.0);
  LayerDims d{8, 8, 16, 16, 3, 14};
  CHECK(cost_model(Scheme::coc, d, cm) < cost_model(Scheme::fc, d, cm));
  LayerDims d2 = d;
  d2.M *= 2;
  // the compute term of RC is linear in M
  CostModel alpha_only{1.0, 0.0};
  CHECK(close(cost_model(Scheme::rc, d2, alpha_only),
              2 * cost_model(Scheme::rc, d, alpha_only), 1e-12));
}

TEST_CASE("RC enablement decision") {
  CHECK(decide_rc(100, 60, 110, 0.8, 0.2));         // 32 > 2
  CHECK_FALSE(decide_rc(100, 100, 110, 0.8, 0.2));  // saves nothing
  CHECK_FALSE(decide_rc(100, 95, 160, 0.5, 0.5));   // 2.5 < 30
  // boundary t_y == t_n must be false
  CHECK_FALSE(decide_rc(100, 90, 110, 0.5, 0.5));
  // scale invariance
  for (double c : {0.5, 3.0, 1e6}) {
    CHECK(decide_rc(100 * c, 60 * c, 110 * c, 0.8, 0.2));
    CHECK_FALSE(decide_rc(100 * c, 95 * c, 160 * c, 0.5, 0.5));
  }
}

TEST_CASE("fault location probability follows element counts") {
  LayerDims d{1, 64, 3, 224, 7, 218};
  const auto [p_r, p_c] = estimate_error_probs(d);
  CHECK(close(p_r, 16.0 / 17.0, 1e-12));
  CHECK(close(p_r + p_c, 1.0, 1e-15));
  LayerDims sym{2, 2, 3, 4, 4, 1};
  const auto [a, b] = estimate_error_probs(sym);
  CHECK(close(a, 0.5, 1e-15));
}

namespace {

struct WorkflowFixture {
  ConvParams p;
  Tensor4<double> D, W;
  LayerPlan plan;

  WorkflowFixture(std::size_t N = 3, std::size_t M = 3, std::uint64_t seed = 500) {
    D = Tensor4<double>::random(N, 2, 6, 6, seed);
    W = Tensor4<double>::random(M, 2, 3, 3, seed + 1);
    plan.tau = 1e-10;
    plan.rc_enabled = true;
    plan.clc_enabled = true;
  }

  Tensor4<double> run(LayerReport& rep, const FaultHooks<double>& hooks = {}) {
    return run_protected_layer(D, W, nullptr, p, plan, rep, ConvImpl::direct,
                               hooks);
  }
};

}  // namespace

TEST_CASE("clean runs report nothing and leave the output alone") {
  WorkflowFixture f;
  LayerReport rep;
  Tensor4<double> O = f.run(rep);
  CHECK_FALSE(rep.detected);
  CHECK(rep.stage == ResolveStage::none);
  CHECK(O.raw() == conv_forward(f.D, f.W, nullptr, f.p).raw());
}

TEST_CASE("chain monotonicity: the resolving stage ends the chain") {
  WorkflowFixture f;
  SUBCASE("block fault stops at CoC") {
    FaultHooks<double> h;
    h.post_conv = [](Tensor4<double>& O) { O(1, 2, 0, 0) += 9.0; };
    LayerReport rep;
    f.run(rep, h);
    CHECK(rep.stage == ResolveStage::coc);
    CHECK(rep.stages_attempted == std::vector<ResolveStage>{ResolveStage::coc});
  }
  SUBCASE("row fault walks CoC then RC; FC never runs") {
    FaultHooks<double> h;
    h.post_conv = [](Tensor4<double>& O) {
      for (std::size_t m = 0; m < O.dim(1); ++m) O(1, m, 0, 0) += 2.0 + double(m);
    };
    LayerReport rep;
    Tensor4<double> O = f.run(rep, h);
    CHECK(rep.stage == ResolveStage::rc);
    CHECK(rep.stages_attempted ==
          std::vector<ResolveStage>{ResolveStage::coc, ResolveStage::rc});
    CHECK(tensors_close(O, conv_forward(f.D, f.W, nullptr, f.p), 1e-8));
  }
  SUBCASE("row fault with RC disabled lands on FC") {
    f.plan.rc_enabled = false;
    f.plan.clc_enabled = false;
    FaultHooks<double> h;
    h.post_conv = [](Tensor4<double>& O) {
      for (std::size_t m = 0; m < O.dim(1); ++m) O(1, m, 0, 0) += 2.0 + double(m);
    };
    LayerReport rep;
    f.run(rep, h);
    CHECK(rep.stage == ResolveStage::fc);
  }
  SUBCASE("column fault walks CoC, RC, ClC") {
    FaultHooks<double> h;
    h.post_conv = [](Tensor4<double>& O) {
      for (std::size_t n = 0; n < O.dim(0); ++n) O(n, 1, 0, 0) += 2.0 + double(n);
    };
    LayerReport rep;
    f.run(rep, h);
    CHECK(rep.stage == ResolveStage::clc);
    CHECK(rep.stages_attempted ==
          std::vector<ResolveStage>{ResolveStage::coc, ResolveStage::rc,
                                    ResolveStage::clc});
  }
}

TEST_CASE("kernel corruption reloads golden weights then corrects the column") {
  WorkflowFixture f;
  FaultHooks<double> h;
  h.pre_conv = [](Tensor4<double>& D, Tensor4<double>& W, InputChecksums<double>&) {
    (void)D;
    W(1, 0, 0, 0) += 5.0;
  };
  LayerReport rep;
  Tensor4<double> O = f.run(rep, h);
  CHECK(rep.weights_reloaded);
  CHECK(rep.stage == ResolveStage::clc);
  CHECK(tensors_close(O, conv_forward(f.D, f.W, nullptr, f.p), 1e-8));
}

TEST_CASE("kernel-checksum corruption resolves by reload alone") {
  WorkflowFixture f;
  FaultHooks<double> h;
  h.pre_conv = [](Tensor4<double>&, Tensor4<double>&, InputChecksums<double>& ic) {
    ic.cw1(0, 0, 1, 1) += 4.0;
  };
  LayerReport rep;
  Tensor4<double> O = f.run(rep, h);
  CHECK(rep.stage == ResolveStage::reload);
  CHECK(O.raw() == conv_forward(f.D, f.W, nullptr, f.p).raw());
}

TEST_CASE("fmap-checksum corruption is discarded with the output intact") {
  WorkflowFixture f;
  FaultHooks<double> h;
  h.pre_conv = [](Tensor4<double>&, Tensor4<double>&, InputChecksums<double>& ic) {
    ic.cd1(0, 1, 2, 3) += 6.0;
  };
  LayerReport rep;
  Tensor4<double> O = f.run(rep, h);
  CHECK(rep.stage == ResolveStage::discard);
  CHECK(O.raw() == conv_forward(f.D, f.W, nullptr, f.p).raw());
}

TEST_CASE("weighted-checksum corruption is invisible to detection") {
  WorkflowFixture f;
  FaultHooks<double> h;
  h.pre_conv = [](Tensor4<double>&, Tensor4<double>&, InputChecksums<double>& ic) {
    (*ic.cd2)(0, 0, 0, 0) += 8.0;
    (*ic.cw2)(0, 0, 0, 0) += 8.0;
  };
  LayerReport rep;
  f.run(rep, h);
  CHECK_FALSE(rep.detected);
  CHECK(rep.stage == ResolveStage::none);
}

TEST_CASE("fmap fault in a later row is corrected by RC") {
  WorkflowFixture f;
  FaultHooks<double> h;
  h.pre_conv = [](Tensor4<double>& D, Tensor4<double>&, InputChecksums<double>&) {
    D(2, 0, 3, 3) += 4.0;
  };
  LayerReport rep;
  Tensor4<double> O = f.run(rep, h);
  CHECK(rep.stage == ResolveStage::rc);
  CHECK(tensors_close(O, conv_forward(f.D, f.W, nullptr, f.p), 1e-8));
}

TEST_CASE("fmap fault at row zero is indistinguishable from checksum corruption") {
  WorkflowFixture f;
  FaultHooks<double> h;
  h.pre_conv = [](Tensor4<double>& D, Tensor4<double>&, InputChecksums<double>&) {
    D(0, 0, 3, 3) += 4.0;
  };
  LayerReport rep;
  f.run(rep, h);
  CHECK(rep.stage == ResolveStage::discard);  // output diverges; documented corner
}

TEST_CASE("multi-row multi-column corruption falls through to recompute") {
  WorkflowFixture f;
  FaultHooks<double> h;
  h.post_conv = [](Tensor4<double>& O) {
    O(0, 1, 0, 0) += 5.0;
    O(0, 2, 0, 0) += 6.0;
    O(1, 1, 1, 1) += 7.0;
    O(2, 1, 0, 1) += 8.0;
  };
  LayerReport rep;
  Tensor4<double> O = f.run(rep, h);
  CHECK(rep.stage == ResolveStage::recompute);
  CHECK(rep.recomputed);
  CHECK(O.raw() == conv_forward(f.D, f.W, nullptr, f.p).raw());
}

TEST_CASE("no false positives over many randomized layers") {
  std::mt19937_64 rng(9000);
  int detections = 0;
  for (int rep = 0; rep < 2000; ++rep) {
    ConvParams p;
    const std::size_t N = 1 + rng() % 3, M = 1 + rng() % 3, Ch = 1 + rng() % 2;
    const std::size_t R = 1 + rng() % 2, H = R + 1 + rng() % 4;
    auto D = Tensor4<float>::random(N, Ch, H, H, rng());
    auto W = Tensor4<float>::random(M, Ch, R, R, rng());
    LayerPlan plan;
    plan.tau = 1e-4;
    LayerReport r;
    run_protected_layer(D, W, nullptr, p, plan, r);
    if (r.detected) ++detections;
  }
  CHECK(detections == 0);
}

TEST_CASE("default plan picks RC from cost-model times") {
  LayerDims d{8, 4, 3, 32, 3, 30};  // N > M: RC cheap, row faults likely
  LayerPlan plan = make_default_plan(d, 1e-4);
  CHECK(plan.rc_enabled);
  CHECK_FALSE(plan.clc_enabled);
  LayerDims d2{2, 32, 3, 16, 3, 14};  // M >> N: RC costs more than FC
  CHECK_FALSE(make_default_plan(d2, 1e-4).rc_enabled);
}

TEST_CASE("profiling medians come straight from the injected clock") {
  WorkflowFixture f;
  double t = 0.0;
  auto stub_clock = [&t]() { return t += 1.0; };  // every timed span = 1s
  ProfileResult pr = profile_layer(f.D, f.W, nullptr, f.p, 1e-10, 3, stub_clock);
  CHECK_FALSE(pr.used_cost_model);
  CHECK(pr.rc_t0 == 1.0);
  CHECK(pr.rc_t1 == 1.0);
  CHECK(pr.clc_t2 == 1.0);
}

TEST_CASE("degenerate layers fall back to the cost model") {
  ConvParams p;
  auto D = Tensor4<double>::random(1, 1, 3, 3, 1);
  auto W = Tensor4<double>::random(1, 1, 2, 2, 2);
  ProfileResult pr = profile_layer(D, W, nullptr, p, 1e-10, 5);
  CHECK(pr.used_cost_model);
  CHECK(pr.rc_t0 > 0);
  CHECK_THROWS_AS(profile_layer(D, W, nullptr, p, 1e-10, 2), ConfigError);
}

TEST_CASE("real profiling on a desk-scale layer orders t2 >= t1") {
  ConvParams p;
  auto D = Tensor4<float>::random(4, 8, 24, 24, 3);
  auto W = Tensor4<float>::random(8, 8, 3, 3, 4);
  ProfileResult pr = profile_layer(D, W, nullptr, p, 1e-4, 5);
  if (!pr.used_cost_model) {
    CHECK(pr.rc_t2 >= pr.rc_t1 * 0.5);  // generous noise band
  }
}

TEST_CASE("protected backward detects injected gradient corruption") {
  ConvParams p;
  auto D = Tensor4<double>::random(2, 2, 5, 5, 10);
  auto W = Tensor4<double>::random(3, 2, 2, 2, 11);
  auto dO = Tensor4<double>::random(2, 3, 4, 4, 12);

  SUBCASE("clean gradients pass through") {
    BackwardReport rep;
    auto [dW, dD] = run_protected_backward(D, W, dO, p, 1e-10, rep);
    CHECK_FALSE(rep.dw_detected);
    CHECK_FALSE(rep.dd_detected);
    auto [rw, rd] = conv_backward(D, W, dO, p);
    CHECK(dW.raw() == rw.raw());
    CHECK(dD.raw() == rd.raw());
  }
  SUBCASE("a corrupted dW is caught and recomputed") {
    BackwardReport rep;
    auto hook = [](Tensor4<double>& dW, Tensor4<double>&) { dW(1, 0, 0, 0) += 3.0; };
    auto [dW, dD] = run_protected_backward(D, W, dO, p, 1e-10, rep, hook);
    CHECK(rep.dw_detected);
    CHECK(rep.recomputed);
    auto [rw, rd] = conv_backward(D, W, dO, p);
    CHECK(dW.raw() == rw.raw());
  }
  SUBCASE("a corrupted dD is caught and recomputed") {
    BackwardReport rep;
    auto hook = [](Tensor4<double>&, Tensor4<double>& dD) { dD(0, 1, 2, 2) -= 4.0; };
    auto [dW, dD] = run_protected_backward(D, W, dO, p, 1e-10, rep, hook);
    CHECK(rep.dd_detected);
    CHECK(rep.recomputed);
  }
}
