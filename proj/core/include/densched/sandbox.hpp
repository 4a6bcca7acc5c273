#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "densched/dataset.hpp"
#include "densched/types.hpp"

namespace densched::sandbox {

// Controls the synthetic template corpus. Every answer instantiates
//   a = A ; b = B ; if a CMP b : r = a OP b = X ; return X
// with integers A != B drawn from the value range, CMP chosen so the guard
// holds, OP in {+, -} and X = A OP B. Dense positions are the guard tokens,
// the result chain and the returned value; the realized density is a fixed
// property of the template.
struct SyntheticSpec {
    std::size_t sample_count = 2000;
    int value_lo = 0;
    int value_hi = 9;
    std::uint64_t seed = 1;
};

std::vector<AnnotatedSample> gen_synthetic_corpus(const SyntheticSpec& spec);

// Count-based denoiser: for a masked position, every visible neighbor within
// `radius` votes through a smoothed conditional P(token | offset, neighbor).
// Transparent enough that where the training signal landed is directly
// inspectable.
class ToyDenoiser {
public:
    ToyDenoiser(double alpha = 0.001, unsigned radius = 3);

    void train(const std::vector<dataset::TrainingRecord>& records);  // ArgumentError if empty

    double alpha() const { return alpha_; }
    unsigned radius() const { return radius_; }
    const std::vector<std::string>& vocabulary() const { return vocab_; }

    // Smoothed conditional over the vocabulary for one (offset, neighbor)
    // context; sums to 1 within 1e-9. Unseen contexts give the uniform
    // distribution.
    std::vector<double> conditional(int offset, const std::string& neighbor) const;

    // Argmax reconstruction of the token at `pos` from visible neighbors
    // (mask == 0 within radius). Ties break toward the smaller vocab id.
    std::string predict(const std::vector<std::string>& tokens,
                        const std::vector<std::uint8_t>& mask, std::size_t pos) const;

private:
    double alpha_;
    unsigned radius_;
    std::vector<std::string> vocab_;
    std::map<std::string, std::size_t> vocab_ids_;
    // context table: (offset, neighbor id) -> counts over target ids
    std::map<std::pair<int, std::size_t>, std::vector<std::uint64_t>> counts_;
    std::vector<std::uint64_t> prior_;  // global target counts
    std::uint64_t prior_total_ = 0;
};

ToyDenoiser train_toy_denoiser(const std::vector<dataset::TrainingRecord>& records,
                               double alpha = 0.001, unsigned radius = 3);

// Any position predictor (the denoiser, an oracle, a random baseline).
using Predictor = std::function<std::string(const std::vector<std::string>& tokens,
                                            const std::vector<std::uint8_t>& mask,
                                            std::size_t pos)>;

// Top-1 reconstruction accuracy over masked positions, split by the density
// indicator. A category with no masked events reports an absent accuracy.
struct CategoryAccuracy {
    std::optional<double> dense;
    std::optional<double> sparse;
    double overall = 0.0;
    std::uint64_t dense_events = 0;
    std::uint64_t sparse_events = 0;
};

CategoryAccuracy eval_by_category(const Predictor& predictor,
                                  const std::vector<dataset::TrainingRecord>& heldout);
CategoryAccuracy eval_by_category(const ToyDenoiser& model,
                                  const std::vector<dataset::TrainingRecord>& heldout);

// One scheduler variant in an experiment sweep.
struct ExperimentConfig {
    std::string label;
    SchedulerConfig scheduler;
};

struct RunResult {
    std::string label;
    std::uint64_t seed = 0;
    CategoryAccuracy accuracy;
};

struct ConfigSummary {
    std::string label;
    std::optional<double> median_dense;
    std::optional<double> median_sparse;
    double median_overall = 0.0;
};

struct ExperimentTable {
    std::vector<RunResult> runs;
    std::vector<ConfigSummary> summaries;  // one per config, config order
};

// For each (config, seed): generate a training corpus, emit records, train
// the denoiser, and evaluate on a held-out corpus masked in the
// mid-generation state: dense-first hard masks at sigma = (1 + rho) / 2, so
// every dense token is still hidden while half the sparse scaffold is
// already visible. Deterministic for fixed spec, configs, and seeds.
ExperimentTable run_experiment(const SyntheticSpec& spec,
                               const std::vector<ExperimentConfig>& configs,
                               const std::vector<std::uint64_t>& seeds);

// The default comparison: uniform w=1 single records vs w=2 complementary.
std::vector<ExperimentConfig> default_experiment_configs();

std::string to_json(const ExperimentTable& table);
std::string render_table(const ExperimentTable& table);

}  // namespace densched::sandbox
