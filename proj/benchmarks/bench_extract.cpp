#include <benchmark/benchmark.h>

#include <string>

#include "densched/extract.hpp"
#include "densched/types.hpp"

using namespace densched;

namespace {

const std::string kCodeAnswer =
    "def rolling(values, window):\n"
    "    total = 0\n"
    "    best = None\n"
    "    for i, v in enumerate(values):\n"
    "        total = total + v\n"
    "        if i >= window:\n"
    "            total = total - values[i - window]\n"
    "        if i >= window - 1 and (best is None or total > best):\n"
    "            best = total\n"
    "    return best\n";

const std::string kMathAnswer =
    "First compute the partial sums: 17 * 3 = 51 and 51 + 29 = 80. "
    "Dividing by the group size gives 80 / 4 = 20, and adding the "
    "remainder 20 + 7 = 27. The answer is 27.";

void BM_extract_dense_code(benchmark::State& state) {
    const auto& rules = extract::RuleSet::builtin(Domain::code);
    for (auto _ : state) {
        benchmark::DoNotOptimize(extract::extract_dense(kCodeAnswer, rules));
    }
    state.SetBytesProcessed(state.iterations() * kCodeAnswer.size());
}
BENCHMARK(BM_extract_dense_code);

void BM_extract_dense_math(benchmark::State& state) {
    const auto& rules = extract::RuleSet::builtin(Domain::math);
    for (auto _ : state) {
        benchmark::DoNotOptimize(extract::extract_dense(kMathAnswer, rules));
    }
    state.SetBytesProcessed(state.iterations() * kMathAnswer.size());
}
BENCHMARK(BM_extract_dense_math);

void BM_reference_tokenize(benchmark::State& state) {
    for (auto _ : state) {
        benchmark::DoNotOptimize(extract::reference_tokenize(kCodeAnswer));
    }
    state.SetBytesProcessed(state.iterations() * kCodeAnswer.size());
}
BENCHMARK(BM_reference_tokenize);

void BM_annotate_end_to_end(benchmark::State& state) {
    const auto& rules = extract::RuleSet::builtin(Domain::math);
    RawRecord record;
    record.id = "bench";
    record.prompt = "Work it out.";
    record.answer = kMathAnswer;
    record.domain = Domain::math;
    for (auto _ : state) {
        benchmark::DoNotOptimize(extract::annotate(record, rules));
    }
    state.SetBytesProcessed(state.iterations() * kMathAnswer.size());
}
BENCHMARK(BM_annotate_end_to_end);

}  // namespace

BENCHMARK_MAIN();
