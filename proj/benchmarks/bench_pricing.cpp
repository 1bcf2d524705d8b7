#include <benchmark/benchmark.h>

#include "hxai/black_scholes.hpp"
#include "hxai/heston.hpp"

using namespace hxai::heston;

namespace {

const HestonParams kMid{0.02, -0.525, 0.505, 0.105, 5.5};

void BM_PriceCall(benchmark::State& state) {
  const double strike = static_cast<double>(state.range(0)) / 10.0;
  for (auto _ : state) benchmark::DoNotOptimize(price_call(kMid, strike, 0.6));
}
BENCHMARK(BM_PriceCall)->Arg(5)->Arg(10)->Arg(15);

void BM_ImpliedVol(benchmark::State& state) {
  const auto q = bs_price(0.25, 1.2, 0.3);
  for (auto _ : state) benchmark::DoNotOptimize(implied_vol(q, 0.3));
}
BENCHMARK(BM_ImpliedVol);

void BM_Surface(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(surface(kMid));
}
BENCHMARK(BM_Surface)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
