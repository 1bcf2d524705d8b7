#include <benchmark/benchmark.h>

#include "hxai/nnet.hpp"

using namespace hxai::nnet;

namespace {

void BM_Predict(benchmark::State& state, Model (*build)(const hxai::datagen::ParamBounds&, std::uint64_t)) {
  const Model m = build(hxai::datagen::ParamBounds::standard(), 1);
  const Eigen::MatrixXd x = Eigen::MatrixXd::Random(state.range(0), 88);
  for (auto _ : state) benchmark::DoNotOptimize(m.predict(x));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK_CAPTURE(BM_Predict, fcnn, &build_fcnn)->Arg(1)->Arg(64)->Arg(1024);
BENCHMARK_CAPTURE(BM_Predict, cnn, &build_cnn)->Arg(1)->Arg(64)->Arg(1024);

void BM_Gradients(benchmark::State& state, Model (*build)(const hxai::datagen::ParamBounds&, std::uint64_t)) {
  const Model m = build(hxai::datagen::ParamBounds::standard(), 1);
  const Eigen::MatrixXd x = Eigen::MatrixXd::Random(64, 88);
  const Eigen::MatrixXd y = m.predict(Eigen::MatrixXd::Random(64, 88));
  for (auto _ : state) benchmark::DoNotOptimize(gradients(m, x, y, LossKind::msle));
}
BENCHMARK_CAPTURE(BM_Gradients, fcnn, &build_fcnn);
BENCHMARK_CAPTURE(BM_Gradients, cnn, &build_cnn);

}  // namespace
