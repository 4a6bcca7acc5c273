#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "densched/rng.hpp"
#include "densched/types.hpp"

namespace densched::sched {

// Solves the two-category system under marginal mass conservation
//   rho * p_dense + (1 - rho) * p_base == sigma,   p_dense == w * p_base,
// clamping to 1 where the weighted solution leaves [0, 1] and re-solving the
// free probability so conservation still holds exactly. The clamped regime is
// reported through `saturated`; the two clamp branches cannot co-occur.
CategoryProbs solve_category_probs(std::size_t n, std::size_t dense, double sigma,
                                   double weight);

// Uniform t in [0, 1) mapped affinely onto the corruption band [lo, hi].
NoiseDraw draw_sigma(double lo, double hi, RngStream& rng);

// floor(value) + Bernoulli(frac(value)): integer budgets whose expectation
// equals the real-valued target.
std::size_t stochastic_round(double value, RngStream& rng);

// Samples a priority mask over the maskable region. bernoulli mode draws one
// coin per position; exact_count mode stochastically rounds the total and
// dense budgets, clamps the dense budget to the feasible interval, and picks
// uniform within-category subsets.
MaskVector sample_soft_mask(const std::vector<std::uint8_t>& indicator,
                            const CategoryProbs& probs, Mode mode, RngStream& rng);

enum class HardDirection { dense_first, sparse_first };

// Deterministic-priority masks: fill the preferred category first, spill the
// remaining budget into the other. Budget is stochastic_round(sigma * N).
MaskVector sample_hard_mask(const std::vector<std::uint8_t>& indicator, double sigma,
                            HardDirection direction, RngStream& rng);

MaskVector complement(const MaskVector& mask);

// One scheduled record: the priority mask plus (unless disabled) its
// complement.
struct ScheduledPair {
    MaskVector logical;
    std::optional<MaskVector> syntactic;
    NoiseDraw draw;
    Weight weight;

    MaskPair as_pair() const;  // throws ArgumentError when complement is off
};

// Core scheduling over a bare indicator vector. per_block scope draws an
// independent sigma per block and reports the length-weighted mean sigma.
ScheduledPair schedule_indicator(const std::vector<std::uint8_t>& indicator,
                                 const SchedulerConfig& config, RngStream& rng);

ScheduledPair make_pair(const AnnotatedSample& sample, const SchedulerConfig& config,
                        RngStream& rng);

}  // namespace densched::sched
