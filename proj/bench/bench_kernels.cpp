#include "segline/harness.hpp"

#include <benchmark/benchmark.h>

using namespace segline;

namespace {

Dataset cpl1_data(std::size_t n) {
    Scenario s = scenario_cpl1();
    s.n = n;
    s.truth = {};
    for (std::size_t k = 1; k < 10; ++k) {
        s.truth.locations.push_back(n * k / 10);
        s.truth.deltas.push_back(scenario_cpl1().truth.deltas[k - 1]);
    }
    return simulate_dataset(s).first;
}

void BM_EstimateDeltasSerial(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const Dataset data = cpl1_data(n);
    const Segmentation seg = make_segmentation(n, n / 50, data.q());
    for (auto _ : state) {
        benchmark::DoNotOptimize(estimate_deltas_serial(data, seg));
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}

void BM_EstimateDeltasParallel(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const Dataset data = cpl1_data(n);
    const Segmentation seg = make_segmentation(n, n / 50, data.q());
    for (auto _ : state) {
        benchmark::DoNotOptimize(estimate_deltas(data, seg));
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}

void BM_ReplicationsSerial(benchmark::State& state) {
    const auto reps = static_cast<std::size_t>(state.range(0));
    for (auto _ : state) {
        benchmark::DoNotOptimize(
            run_replications_serial(scenario_cpl1(), {Algorithm::Ls, Algorithm::Scad}, reps, 1));
    }
}

void BM_ReplicationsParallel(benchmark::State& state) {
    const auto reps = static_cast<std::size_t>(state.range(0));
    for (auto _ : state) {
        benchmark::DoNotOptimize(run_replications(scenario_cpl1(), {Algorithm::Ls, Algorithm::Scad}, reps, 1));
    }
}

} // namespace

BENCHMARK(BM_EstimateDeltasSerial)->Arg(5000)->Arg(20000)->Arg(100000)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_EstimateDeltasParallel)->Arg(5000)->Arg(20000)->Arg(100000)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_ReplicationsSerial)->Arg(8)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ReplicationsParallel)->Arg(8)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
