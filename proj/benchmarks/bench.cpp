#include <benchmark/benchmark.h>

#include "ftconv/ftconv.hpp"

using namespace ftconv;

namespace {

struct Layer {
  Tensor4<float> D, W;
  ConvParams p;
  Layer(std::size_t N, std::size_t M, std::size_t Ch, std::size_t H, std::size_t R)
      : D(Tensor4<float>::random(N, Ch, H, H, 1)),
        W(Tensor4<float>::random(M, Ch, R, R, 2)) {}
};

void BM_ConvDirect(benchmark::State& state) {
  Layer l(4, state.range(0), 32, 28, 3);
  for (auto _ : state)
    benchmark::DoNotOptimize(conv_forward(l.D, l.W, nullptr, l.p, ConvImpl::direct));
}

void BM_ConvMM(benchmark::State& state) {
  Layer l(4, state.range(0), 32, 28, 3);
  for (auto _ : state)
    benchmark::DoNotOptimize(conv_forward(l.D, l.W, nullptr, l.p, ConvImpl::mm));
}

void BM_Detection(benchmark::State& state) {
  Layer l(4, state.range(0), 32, 28, 3);
  Tensor4<float> O = conv_forward(l.D, l.W, nullptr, l.p, ConvImpl::mm);
  for (auto _ : state) {
    InputChecksums<float> ic = input_checksums(l.D, l.W, 1);
    OutputChecksums<float> cs = output_checksums(CK_O5, l.D, l.W, ic, l.p);
    OutputSummations<float> s = output_summations(O, CK_O5);
    benchmark::DoNotOptimize(detect_coc_d(*cs.co5, *s.so5, 1e-4));
  }
}

void BM_ProtectedLayer(benchmark::State& state) {
  Layer l(4, state.range(0), 32, 28, 3);
  LayerPlan plan;
  for (auto _ : state) {
    LayerReport rep;
    benchmark::DoNotOptimize(
        run_protected_layer(l.D, l.W, nullptr, l.p, plan, rep, ConvImpl::mm));
  }
}

}  // namespace

BENCHMARK(BM_ConvDirect)->Arg(8)->Arg(32)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvMM)->Arg(8)->Arg(32)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Detection)->Arg(8)->Arg(32)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ProtectedLayer)->Arg(8)->Arg(32)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
