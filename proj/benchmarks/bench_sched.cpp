#include <benchmark/benchmark.h>

#include <cstdint>
#include <vector>

#include "densched/rng.hpp"
#include "densched/sched.hpp"
#include "densched/types.hpp"

using namespace densched;

namespace {

std::vector<std::uint8_t> striped_indicator(std::size_t n) {
    std::vector<std::uint8_t> ind(n, 0);
    for (std::size_t i = 0; i < n; i += 4) ind[i] = 1;
    return ind;
}

void BM_solve_category_probs(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    for (auto _ : state) {
        benchmark::DoNotOptimize(sched::solve_category_probs(n, n / 4, 0.5, 2.0));
    }
}
BENCHMARK(BM_solve_category_probs)->Arg(32)->Arg(2048);

void BM_sample_soft_mask_bernoulli(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto ind = striped_indicator(n);
    const auto probs = sched::solve_category_probs(n, n / 4, 0.5, 2.0);
    RngStream rng(7);
    for (auto _ : state) {
        benchmark::DoNotOptimize(
            sched::sample_soft_mask(ind, probs, Mode::bernoulli, rng));
    }
    state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_sample_soft_mask_bernoulli)->Arg(32)->Arg(256)->Arg(2048);

void BM_sample_soft_mask_exact(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto ind = striped_indicator(n);
    const auto probs = sched::solve_category_probs(n, n / 4, 0.5, 2.0);
    RngStream rng(7);
    for (auto _ : state) {
        benchmark::DoNotOptimize(
            sched::sample_soft_mask(ind, probs, Mode::exact_count, rng));
    }
    state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_sample_soft_mask_exact)->Arg(32)->Arg(256)->Arg(2048);

void BM_sample_hard_mask(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto ind = striped_indicator(n);
    RngStream rng(7);
    for (auto _ : state) {
        benchmark::DoNotOptimize(
            sched::sample_hard_mask(ind, 0.5, sched::HardDirection::dense_first, rng));
    }
    state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_sample_hard_mask)->Arg(256)->Arg(2048);

void BM_schedule_indicator_pair(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto ind = striped_indicator(n);
    SchedulerConfig config;
    config.weight = Weight::soft(2.0);
    config.complement = true;
    RngStream rng(7);
    for (auto _ : state) {
        benchmark::DoNotOptimize(sched::schedule_indicator(ind, config, rng));
    }
    state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_schedule_indicator_pair)->Arg(256)->Arg(2048);

void BM_schedule_indicator_blocks(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto ind = striped_indicator(n);
    SchedulerConfig config;
    config.weight = Weight::soft(2.0);
    config.scope = Scope::per_block;
    config.block_size = 32;
    config.complement = true;
    RngStream rng(7);
    for (auto _ : state) {
        benchmark::DoNotOptimize(sched::schedule_indicator(ind, config, rng));
    }
    state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_schedule_indicator_blocks)->Arg(256)->Arg(2048);

}  // namespace

BENCHMARK_MAIN();
