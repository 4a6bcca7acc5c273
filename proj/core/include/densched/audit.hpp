#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "densched/dataset.hpp"
#include "densched/types.hpp"

namespace densched::audit {

// Neumaier compensated sum. Integer tallies merge exactly on their own; the
// few floating aggregations go through this so a sharded merge agrees with a
// single pass to well under 1e-12.
struct KahanSum {
    double sum = 0.0;
    double comp = 0.0;

    void add(double value) {
        const double t = sum + value;
        if (std::abs(sum) >= std::abs(value)) {
            comp += (sum - t) + value;
        } else {
            comp += (value - t) + sum;
        }
        sum = t;
    }
    void merge(const KahanSum& other) {
        add(other.sum);
        add(other.comp);
    }
    double value() const { return sum + comp; }
};

// Synthetic input for auditing a sampler directly, without a record file:
// `draws` masks over a region of length n with `dense` dense positions at a
// fixed sigma.
struct SamplerSpec {
    std::size_t n = 0;
    std::size_t dense = 0;
    double sigma = 0.5;
    Weight weight = Weight::soft(2.0);
    Mode mode = Mode::bernoulli;
    std::size_t draws = 100000;
    std::uint64_t seed = 0;
};

// ---- marginal conservation ----

struct RoleMarginal {
    std::string role;
    std::uint64_t records = 0;
    std::uint64_t positions = 0;
    std::uint64_t masked = 0;
    double empirical = 0.0;  // masked / positions
    double target = 0.0;     // position-weighted mean sigma (1-sigma for syntactic)
    double se = 0.0;         // binomial standard error at the target rate
    double z = 0.0;
};

struct MarginalReport {
    std::vector<RoleMarginal> roles;
};

class MarginalAccum {
public:
    void add(const dataset::TrainingRecord& record);
    void merge(const MarginalAccum& other);
    // min_records guards statistical validity; ArgumentError when the stream
    // holds fewer masks.
    MarginalReport finalize(std::size_t min_records = 1000) const;

private:
    struct RoleAccum {
        std::uint64_t records = 0;
        std::uint64_t positions = 0;
        std::uint64_t masked = 0;
        KahanSum target_mass;  // sum of per-record target rate * positions
    };
    RoleAccum roles_[2];
};

MarginalReport marginal_report(const std::vector<dataset::TrainingRecord>& records,
                               std::size_t min_records = 1000);
MarginalReport marginal_report(const SamplerSpec& spec);

// ---- ratio law ----

struct RatioReport {
    Weight weight;
    double p_dense_hat = 0.0;
    double p_base_hat = 0.0;
    double w_hat = 0.0;
    double se = 0.0;     // delta-method standard error of w_hat
    double ci_lo = 0.0;  // w_hat -/+ 3 se
    double ci_hi = 0.0;
    std::uint64_t dense_events = 0;
    std::uint64_t sparse_events = 0;
    std::uint64_t dense_masked = 0;
    std::uint64_t sparse_masked = 0;
    bool saturated = false;  // the solve clamped; the w-law does not apply
    bool undefined = false;  // p_base_hat == 0
    bool valid_for_law = false;
};

class RatioAccum {
public:
    // Logical records only; throws ArgumentError when records do not share
    // (sigma, weight, N, D) or when a record is syntactic.
    void add(const dataset::TrainingRecord& record);
    void merge(const RatioAccum& other);
    RatioReport finalize() const;

private:
    struct Shape {
        std::size_t n = 0;
        std::size_t dense = 0;
        double sigma = 0.0;
        Weight weight;

        friend bool operator==(const Shape&, const Shape&) = default;
    };
    std::optional<Shape> shape_;
    std::uint64_t dense_events_ = 0;
    std::uint64_t sparse_events_ = 0;
    std::uint64_t dense_masked_ = 0;
    std::uint64_t sparse_masked_ = 0;
};

RatioReport ratio_report(const std::vector<dataset::TrainingRecord>& records);
RatioReport ratio_report(const SamplerSpec& spec);

// ---- run lengths ----

struct RunLengthGroup {
    std::string key;  // "role=... weight=... mode=..."
    std::uint64_t records = 0;
    std::uint64_t runs = 0;
    std::uint64_t masked = 0;
    std::uint64_t max_run = 0;
    double mean_run = 0.0;      // masked / runs
    double mean_max_run = 0.0;  // per-record max run, averaged
    std::vector<std::uint64_t> histogram;  // histogram[len] = run count
};

struct RunLengthReport {
    std::vector<RunLengthGroup> groups;  // sorted by key
};

class RunLengthAccum {
public:
    void add(const dataset::TrainingRecord& record);
    void merge(const RunLengthAccum& other);
    RunLengthReport finalize() const;

private:
    struct GroupAccum {
        std::uint64_t records = 0;
        std::uint64_t runs = 0;
        std::uint64_t masked = 0;
        std::uint64_t max_run = 0;
        std::uint64_t max_run_total = 0;  // sum of per-record max runs
        std::vector<std::uint64_t> histogram;
    };
    std::map<std::string, GroupAccum> groups_;
};

RunLengthReport run_length_report(const std::vector<dataset::TrainingRecord>& records);

// ---- pair-set symmetry ----

struct SymmetrySide {
    std::size_t n = 0;
    std::size_t dense = 0;
    SchedulerConfig config;
};

struct SymmetryReport {
    double tv = 0.0;          // total-variation distance between pooled histograms
    std::size_t draws = 0;    // per side
    std::size_t cells = 0;    // occupied (dense count, sparse count) cells
};

// Pools the per-category mask-count joint histogram of {M, complement} from
// each side over `draws` scheduled pairs and reports the TV distance.
// Throws ArgumentError when the sides disagree on (N, D).
SymmetryReport symmetry_report(const SymmetrySide& a, const SymmetrySide& b,
                               std::size_t draws);

// ---- complement pairing ----

struct ComplementViolation {
    std::string id;
    std::size_t record_index = 0;   // index into the record stream
    std::ptrdiff_t position = -1;   // first offending mask position, -1 if n/a
    std::string kind;  // orphan_logical | orphan_syntactic | length_mismatch |
                       // complement_mismatch
};

struct ComplementReport {
    std::size_t pairs = 0;
    std::size_t records = 0;
    bool skipped = false;  // stream carries no syntactic records at all
    std::string note;
    std::vector<ComplementViolation> violations;
};

ComplementReport complement_check(const std::vector<dataset::TrainingRecord>& records);

std::string to_json(const MarginalReport& report);
std::string to_json(const RatioReport& report);
std::string to_json(const RunLengthReport& report);
std::string to_json(const SymmetryReport& report);
std::string to_json(const ComplementReport& report);

}  // namespace densched::audit
