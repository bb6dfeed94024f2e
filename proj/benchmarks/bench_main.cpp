#include <benchmark/benchmark.h>

#include <vector>

#include "auxcal/baselines.hpp"
#include "auxcal/calibrators.hpp"
#include "auxcal/dataset.hpp"
#include "auxcal/metrics.hpp"
#include "auxcal/net.hpp"
#include "auxcal/synth.hpp"

namespace {

auxcal::CalibrationDataset bench_data(int n) {
  auxcal::SynthConfig cfg;
  cfg.n_in = n;
  cfg.n_shift = n / 3;
  cfg.n_ood = n / 3;
  return auxcal::generate(cfg);
}

void BM_ForwardBatch(benchmark::State& state) {
  const auto ds = bench_data(static_cast<int>(state.range(0)));
  const Eigen::MatrixXd x = auxcal::logit_matrix(ds);
  const std::vector<int> dims{10, 50, 20, 11};
  const auto net = auxcal::FeedForwardNet::glorot(dims, 1);
  for (auto _ : state) {
    benchmark::DoNotOptimize(net.forward_batch(x));
  }
  state.SetItemsProcessed(state.iterations() * x.cols());
}
BENCHMARK(BM_ForwardBatch)->Arg(256)->Arg(4096);

void BM_CcacBackward(benchmark::State& state) {
  const auto ds = bench_data(static_cast<int>(state.range(0)));
  const Eigen::MatrixXd x = auxcal::logit_matrix(ds);
  std::vector<int> targets;
  for (const auto& r : auxcal::assign_aux_labels(ds)) targets.push_back(r.aux_label);
  const std::vector<int> dims{10, 50, 20, 11};
  const auto net = auxcal::FeedForwardNet::glorot(dims, 1);
  for (auto _ : state) {
    benchmark::DoNotOptimize(auxcal::ccac_backward(net, x, targets, {}));
  }
  state.SetItemsProcessed(state.iterations() * x.cols());
}
BENCHMARK(BM_CcacBackward)->Arg(256)->Arg(4096);

void BM_Metrics(benchmark::State& state) {
  const auto ds = bench_data(static_cast<int>(state.range(0)));
  const auto outcomes = auxcal::calibrated_confidences(auxcal::MaxProbModel{ds.k()}, ds);
  for (auto _ : state) {
    benchmark::DoNotOptimize(auxcal::ece(outcomes));
    benchmark::DoNotOptimize(auxcal::auroc(outcomes));
    benchmark::DoNotOptimize(auxcal::aupr(outcomes));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(outcomes.size()));
}
BENCHMARK(BM_Metrics)->Arg(3000)->Arg(30000);

void BM_FitTemperature(benchmark::State& state) {
  const auto ds = bench_data(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(auxcal::fit_temperature(ds));
  }
}
BENCHMARK(BM_FitTemperature)->Arg(3000);

}  // namespace

BENCHMARK_MAIN();
