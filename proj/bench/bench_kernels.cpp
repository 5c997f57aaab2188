// Parallel kernels against their serial reference twins.
#include <benchmark/benchmark.h>

#include "grokkit/nd/kernels.hpp"
#include "grokkit/rng.hpp"

using namespace grokkit;
using namespace grokkit::nd;
using kernels::Trans;

namespace {

Tensor2<float> random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
  SplitMix64 rng(seed);
  Tensor2<float> m(r, c);
  for (auto& v : m.data()) v = static_cast<float>(rng.normal());
  return m;
}

// Square products, plus the n x 113 logits shape the modular runs produce.
void gemm_args(benchmark::internal::Benchmark* b) {
  for (int n : {64, 256, 512}) b->Args({n, n, n});
  b->Args({3000, 512, 113});
}

template <bool Parallel>
void BM_gemm(benchmark::State& state) {
  const auto m = static_cast<std::size_t>(state.range(0)), k = static_cast<std::size_t>(state.range(1)),
             n = static_cast<std::size_t>(state.range(2));
  const auto a = random_matrix(m, k, 1), b = random_matrix(k, n, 2);
  Tensor2<float> c;
  for (auto _ : state) {
    if constexpr (Parallel) {
      kernels::gemm(Trans::No, Trans::No, a, b, c);
    } else {
      kernels::reference::gemm(Trans::No, Trans::No, a, b, c);
    }
    benchmark::DoNotOptimize(c.data().data());
  }
  state.counters["GFLOP/s"] = benchmark::Counter(2.0 * m * k * n, benchmark::Counter::kIsIterationInvariantRate,
                                                 benchmark::Counter::kIs1000);
}

template <bool Parallel>
void BM_softmax(benchmark::State& state) {
  const auto x = random_matrix(static_cast<std::size_t>(state.range(0)), 113, 3);
  Tensor2<float> out;
  for (auto _ : state) {
    if constexpr (Parallel) {
      kernels::softmax_rows(x, out);
    } else {
      kernels::reference::softmax_rows(x, out);
    }
    benchmark::DoNotOptimize(out.data().data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

}  // namespace

BENCHMARK(BM_gemm<true>)->Name("gemm/parallel")->Apply(gemm_args);
BENCHMARK(BM_gemm<false>)->Name("gemm/reference")->Apply(gemm_args);
BENCHMARK(BM_softmax<true>)->Name("softmax/parallel")->Arg(3000)->Arg(12769);
BENCHMARK(BM_softmax<false>)->Name("softmax/reference")->Arg(3000)->Arg(12769);

BENCHMARK_MAIN();
