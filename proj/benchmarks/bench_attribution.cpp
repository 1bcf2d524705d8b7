#include <benchmark/benchmark.h>

#include "hxai/attrib.hpp"

using namespace hxai;
using namespace hxai::attrib;

namespace {

const nnet::Model& fcnn() {
  static const nnet::Model m = nnet::build_fcnn();
  return m;
}

const Eigen::RowVectorXd& instance() {
  static const Eigen::RowVectorXd x = Eigen::RowVectorXd::Random(88);
  return x;
}

void BM_KernelShap(benchmark::State& state) {
  const auto f = predictor(fcnn());
  const Eigen::MatrixXd background = Eigen::RowVectorXd::Zero(88);
  for (auto _ : state)
    benchmark::DoNotOptimize(kernel_shap_all(f, instance(), background, static_cast<std::size_t>(state.range(0)), 1));
}
BENCHMARK(BM_KernelShap)->Arg(512)->Arg(4096)->Unit(benchmark::kMillisecond);

void BM_SampledShapley(benchmark::State& state) {
  const auto f = predictor(fcnn());
  for (auto _ : state)
    benchmark::DoNotOptimize(sampled_shapley_all(f, instance(), Eigen::RowVectorXd::Zero(88), 100, 1));
}
BENCHMARK(BM_SampledShapley)->Unit(benchmark::kMillisecond);

void BM_Lime(benchmark::State& state) {
  const auto f = predictor(fcnn());
  LimeOptions o;
  o.n_samples = static_cast<std::size_t>(state.range(0));
  const std::vector<int> v0{0};
  for (auto _ : state) benchmark::DoNotOptimize(lime_explain_all(f, instance(), Eigen::RowVectorXd::Zero(88), o, 1, v0));
}
BENCHMARK(BM_Lime)->Arg(1000)->Arg(5000)->Unit(benchmark::kMillisecond);

void BM_DeepLift(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(deeplift_rescale_all(fcnn(), instance(), Eigen::RowVectorXd::Zero(88)));
}
BENCHMARK(BM_DeepLift);

void BM_EpsilonLrp(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(epsilon_lrp_all(fcnn(), instance()));
}
BENCHMARK(BM_EpsilonLrp);

}  // namespace
