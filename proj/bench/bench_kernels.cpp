#include "mslide/aggregator.hpp"
#include "mslide/kernels.hpp"
#include "mslide/matrix.hpp"
#include "mslide/merge.hpp"
#include "mslide/rng.hpp"

#include <benchmark/benchmark.h>

#include <random>

using namespace mslide;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
    auto                             rng = make_rng({seed, r, c});
    std::normal_distribution<double> n(0.0, 1.0);
    Matrix                           m(r, c);
    for (auto& v : m.values()) {
        v = n(rng);
    }
    return m;
}

template<kernels::Exec E>
void BM_Matmul(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto a = random_matrix(n, n, 1);
    const auto b = random_matrix(n, n, 2);
    Matrix     out(n, n);
    for (auto _ : state) {
        kernels::matmul_into(a, b, out, E);
        benchmark::DoNotOptimize(out.values().data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(n * n * n));
}

template<kernels::Exec E>
void BM_MergeStep(benchmark::State& state) {
    const auto d    = static_cast<std::size_t>(state.range(0));
    const auto base = make_base_params(d, 0.6, 11);
    auto       t1   = apply_delta(base, make_base_params(d, 0.1, 12), 0.1);
    auto       t2   = apply_delta(base, make_base_params(d, 0.1, 13), 0.1);
    const auto s1   = merge_step(MergeState::init(base), t1, E);
    for (auto _ : state) {
        auto s2 = merge_step(s1, t2, E);
        benchmark::DoNotOptimize(s2.lambda);
    }
}

void BM_Forward(benchmark::State& state) {
    const auto d       = static_cast<std::size_t>(state.range(0));
    const auto params  = make_base_params(d, 0.6, 11);
    const auto patches = random_matrix(64, d, 3);
    for (auto _ : state) {
        auto z = forward(patches, params);
        benchmark::DoNotOptimize(z.values().data());
    }
}

} // namespace

BENCHMARK(BM_Matmul<kernels::Exec::Serial>)->Arg(32)->Arg(128)->Arg(256);
BENCHMARK(BM_Matmul<kernels::Exec::Parallel>)->Arg(32)->Arg(128)->Arg(256);
BENCHMARK(BM_MergeStep<kernels::Exec::Serial>)->Arg(32)->Arg(128);
BENCHMARK(BM_MergeStep<kernels::Exec::Parallel>)->Arg(32)->Arg(128);
BENCHMARK(BM_Forward)->Arg(32)->Arg(128);

BENCHMARK_MAIN();
