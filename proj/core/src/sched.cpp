#include "densched/sched.hpp"

#include <algorithm>
#include <cmath>

#include "densched/dataset.hpp"
#include "densched/errors.hpp"

namespace densched::sched {

CategoryProbs solve_category_probs(std::size_t n, std::size_t dense, double sigma,
                                   double weight) {
    if (n == 0) throw ArgumentError("solve_category_probs: maskable region is empty");
    if (dense > n) {
        throw ArgumentError("solve_category_probs: dense count " + std::to_string(dense) +
                            " exceeds region length " + std::to_string(n));
    }
    if (!(sigma > 0.0) || !(sigma < 1.0)) {
        throw ArgumentError("solve_category_probs: sigma must lie in (0, 1)");
    }
    if (!std::isfinite(weight) || weight < 0.0) {
        throw ArgumentError("solve_category_probs: weight must be finite and non-negative");
    }

    const double nd = static_cast<double>(n);
    const double dd = static_cast<double>(dense);
    CategoryProbs probs;
    probs.rho = dd / nd;
    probs.sigma = sigma;

    // Single-category regions: conservation pins the populated category at
    // sigma; the empty one keeps its law value for reporting only.
    if (dense == 0) {
        probs.p_base = sigma;
        probs.p_dense = std::min(weight * sigma, 1.0);
        return probs;
    }
    if (dense == n) {
        probs.p_dense = sigma;
        probs.p_base = weight > 0.0 ? std::min(sigma / weight, 1.0) : 1.0;
        return probs;
    }

    const double denom = weight * dd + (nd - dd);
    double p_base = sigma * nd / denom;
    double p_dense = weight * p_base;
    if (p_dense > 1.0) {
        // Only reachable for weight > 1: cap the dense side, give the excess
        // mass back to the sparse positions.
        probs.saturated = Saturation::dense_at_one;
        p_dense = 1.0;
        p_base = (sigma * nd - dd) / (nd - dd);
    } else if (p_base > 1.0) {
        // Mirror case, only reachable for weight < 1.
        probs.saturated = Saturation::base_at_one;
        p_base = 1.0;
        p_dense = (sigma * nd - (nd - dd)) / dd;
    }
    probs.p_dense = p_dense;
    probs.p_base = p_base;
    return probs;
}

NoiseDraw draw_sigma(double lo, double hi, RngStream& rng) {
    if (!(lo > 0.0) || !(hi < 1.0) || !(lo <= hi)) {
        throw ArgumentError("draw_sigma: band must satisfy 0 < lo <= hi < 1");
    }
    NoiseDraw draw;
    // Always consume one draw so stream positions do not depend on the band.
    const double u = rng.next_double();
    draw.t = hi > lo ? u : 0.0;
    draw.sigma = lo + draw.t * (hi - lo);
    return draw;
}

std::size_t stochastic_round(double value, RngStream& rng) {
    if (!(value >= 0.0) || !std::isfinite(value)) {
        throw ArgumentError("stochastic_round: value must be finite and non-negative");
    }
    const double floor_v = std::floor(value);
    const double frac = value - floor_v;
    const auto base = static_cast<std::size_t>(floor_v);
    return (frac > 0.0 && rng.bernoulli(frac)) ? base + 1 : base;
}

namespace {

void split_positions(const std::vector<std::uint8_t>& indicator,
                     std::vector<std::uint32_t>& dense_pos,
                     std::vector<std::uint32_t>& sparse_pos) {
    for (std::uint32_t i = 0; i < indicator.size(); ++i) {
        (indicator[i] ? dense_pos : sparse_pos).push_back(i);
    }
}

}  // namespace

MaskVector sample_soft_mask(const std::vector<std::uint8_t>& indicator,
                            const CategoryProbs& probs, Mode mode, RngStream& rng) {
    const std::size_t n = indicator.size();
    if (n == 0) throw ArgumentError("sample_soft_mask: empty indicator");
    std::size_t dense = 0;
    for (const auto c : indicator) dense += c ? 1 : 0;
    // rho is the fingerprint of the (N, D) the probabilities were solved for.
    if (probs.rho != static_cast<double>(dense) / static_cast<double>(n)) {
        throw ArgumentError("sample_soft_mask: probs were solved for a different shape");
    }

    std::vector<std::uint8_t> bits(n, 0);
    if (mode == Mode::bernoulli) {
        for (std::size_t i = 0; i < n; ++i) {
            bits[i] = rng.bernoulli(indicator[i] ? probs.p_dense : probs.p_base) ? 1 : 0;
        }
        return MaskVector::from_bits(std::move(bits));
    }

    std::vector<std::uint32_t> dense_pos, sparse_pos;
    split_positions(indicator, dense_pos, sparse_pos);
    const std::size_t d = dense_pos.size();
    const std::size_t s = sparse_pos.size();

    // Draw order: total budget, dense budget, dense subset, sparse subset.
    std::size_t total = std::min(stochastic_round(probs.sigma * static_cast<double>(n), rng), n);
    std::size_t n_dense = stochastic_round(probs.p_dense * static_cast<double>(d), rng);
    const std::size_t feasible_lo = total > s ? total - s : 0;
    const std::size_t feasible_hi = std::min(d, total);
    n_dense = std::clamp(n_dense, feasible_lo, feasible_hi);
    const std::size_t n_sparse = total - n_dense;

    for (const auto idx : rng.sample_indices(static_cast<std::uint32_t>(d),
                                             static_cast<std::uint32_t>(n_dense))) {
        bits[dense_pos[idx]] = 1;
    }
    for (const auto idx : rng.sample_indices(static_cast<std::uint32_t>(s),
                                             static_cast<std::uint32_t>(n_sparse))) {
        bits[sparse_pos[idx]] = 1;
    }
    return MaskVector::from_bits(std::move(bits));
}

MaskVector sample_hard_mask(const std::vector<std::uint8_t>& indicator, double sigma,
                            HardDirection direction, RngStream& rng) {
    const std::size_t n = indicator.size();
    if (n == 0) throw ArgumentError("sample_hard_mask: empty indicator");
    if (!(sigma > 0.0) || !(sigma < 1.0)) {
        throw ArgumentError("sample_hard_mask: sigma must lie in (0, 1)");
    }

    std::vector<std::uint32_t> dense_pos, sparse_pos;
    split_positions(indicator, dense_pos, sparse_pos);
    auto& first = direction == HardDirection::dense_first ? dense_pos : sparse_pos;
    auto& second = direction == HardDirection::dense_first ? sparse_pos : dense_pos;

    const std::size_t budget =
        std::min(stochastic_round(sigma * static_cast<double>(n), rng), n);
    const std::size_t take_first = std::min(budget, first.size());
    const std::size_t take_second = budget - take_first;

    std::vector<std::uint8_t> bits(n, 0);
    for (const auto idx : rng.sample_indices(static_cast<std::uint32_t>(first.size()),
                                             static_cast<std::uint32_t>(take_first))) {
        bits[first[idx]] = 1;
    }
    for (const auto idx : rng.sample_indices(static_cast<std::uint32_t>(second.size()),
                                             static_cast<std::uint32_t>(take_second))) {
        bits[second[idx]] = 1;
    }
    return MaskVector::from_bits(std::move(bits));
}

MaskVector complement(const MaskVector& mask) {
    MaskVector out;
    out.bits.resize(mask.bits.size());
    for (std::size_t i = 0; i < mask.bits.size(); ++i) {
        out.bits[i] = mask.bits[i] ? 0 : 1;
    }
    out.count = mask.bits.size() - mask.count;
    return out;
}

MaskPair ScheduledPair::as_pair() const {
    if (!syntactic) {
        throw ArgumentError("ScheduledPair: complement emission is disabled");
    }
    return MaskPair{logical, *syntactic, draw, weight};
}

namespace {

MaskVector one_mask(const std::vector<std::uint8_t>& indicator, double sigma,
                    const SchedulerConfig& config, RngStream& rng) {
    switch (config.weight.kind) {
        case Weight::Kind::hard_dense:
            return sample_hard_mask(indicator, sigma, HardDirection::dense_first, rng);
        case Weight::Kind::hard_sparse:
            return sample_hard_mask(indicator, sigma, HardDirection::sparse_first, rng);
        case Weight::Kind::soft:
            break;
    }
    const std::size_t dense =
        static_cast<std::size_t>(std::count(indicator.begin(), indicator.end(), 1));
    const CategoryProbs probs =
        solve_category_probs(indicator.size(), dense, sigma, config.weight.value);
    return sample_soft_mask(indicator, probs, config.mode, rng);
}

}  // namespace

ScheduledPair schedule_indicator(const std::vector<std::uint8_t>& indicator,
                                 const SchedulerConfig& config, RngStream& rng) {
    const auto violations = validate_config(config);
    if (!violations.empty()) {
        throw ArgumentError("scheduler config: " + violations.front().field + ": " +
                            violations.front().message);
    }
    if (indicator.empty()) {
        throw ArgumentError("schedule_indicator: empty maskable region");
    }

    ScheduledPair out;
    out.weight = config.weight;

    if (config.scope == Scope::per_sequence) {
        out.draw = draw_sigma(config.sigma_lo, config.sigma_hi, rng);
        out.logical = one_mask(indicator, out.draw.sigma, config, rng);
    } else {
        const auto blocks = dataset::layout_blocks(indicator.size(), config.block_size);
        std::vector<std::uint8_t> bits(indicator.size(), 0);
        double sigma_weighted = 0.0;
        for (const auto& block : blocks) {
            const NoiseDraw block_draw = draw_sigma(config.sigma_lo, config.sigma_hi, rng);
            const std::vector<std::uint8_t> sub(indicator.begin() + block.begin,
                                                indicator.begin() + block.end);
            const MaskVector sub_mask = one_mask(sub, block_draw.sigma, config, rng);
            std::copy(sub_mask.bits.begin(), sub_mask.bits.end(), bits.begin() + block.begin);
            sigma_weighted +=
                block_draw.sigma * static_cast<double>(block.end - block.begin);
        }
        out.draw.sigma = sigma_weighted / static_cast<double>(indicator.size());
        out.draw.t = config.sigma_hi > config.sigma_lo
                         ? (out.draw.sigma - config.sigma_lo) /
                               (config.sigma_hi - config.sigma_lo)
                         : 0.0;
        out.logical = MaskVector::from_bits(std::move(bits));
    }

    if (config.complement) {
        out.syntactic = complement(out.logical);
    }
    return out;
}

ScheduledPair make_pair(const AnnotatedSample& sample, const SchedulerConfig& config,
                        RngStream& rng) {
    return schedule_indicator(sample.indicator, config, rng);
}

}  // namespace densched::sched
