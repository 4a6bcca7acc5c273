#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace densched {

// Half-open character range [start, end) into a source text.
struct TokenSpan {
    std::size_t start = 0;
    std::size_t end = 0;

    friend bool operator==(const TokenSpan&, const TokenSpan&) = default;
    friend bool operator<(const TokenSpan& a, const TokenSpan& b) {
        return a.start != b.start ? a.start < b.start : a.end < b.end;
    }
};

enum class Domain { code, math, other };

std::string_view to_string(Domain domain);
std::optional<Domain> domain_from_string(std::string_view name);

// One surface token and where it came from in the answer text.
struct Token {
    std::string surface;
    TokenSpan span;

    friend bool operator==(const Token&, const Token&) = default;
};

// Raw corpus record, one JSON line of the input schema. `spans` and
// `token_offsets` are only present once a record has been annotated.
struct RawRecord {
    std::string id;
    std::string prompt;
    std::string answer;
    Domain domain = Domain::other;
    std::optional<std::vector<TokenSpan>> spans;
    std::optional<std::vector<TokenSpan>> token_offsets;
};

// An SFT sample with its density annotation resolved to token level. The
// indicator has one slot per answer token plus a trailing <eos> slot, so its
// length equals the maskable region length N. Prompt tokens never mask.
struct AnnotatedSample {
    std::string id;
    std::string prompt;
    std::string answer;
    Domain domain = Domain::other;
    std::vector<Token> tokens;            // answer tokens, ascending offsets
    std::vector<TokenSpan> dense_spans;   // merged character spans, ascending
    std::vector<std::uint8_t> indicator;  // 0/1 per maskable position

    std::size_t maskable_len() const { return indicator.size(); }
    std::size_t dense_count() const;
};

struct Violation {
    std::string field;
    std::string message;
};

// Structural checks: indicator length = tokens + 1, binary values, spans and
// token offsets in bounds, ascending, non-overlapping.
std::vector<Violation> validate_sample(const AnnotatedSample& sample);

// A line that could not be parsed or validated. Loaders collect these so no
// input is ever silently dropped. line_no is 1-based, 0 if unknown.
struct Reject {
    std::string id;
    std::size_t line_no = 0;
    std::string reason;
};

// Noise level for one record: t uniform in [0,1] mapped onto the configured
// corruption band sigma in [lo, hi].
struct NoiseDraw {
    double t = 0.0;
    double sigma = 0.0;
};

enum class Saturation { none, dense_at_one, base_at_one };

// Per-category masking probabilities solved under marginal conservation:
// rho * p_dense + (1 - rho) * p_base == sigma.
struct CategoryProbs {
    double p_dense = 0.0;
    double p_base = 0.0;
    double rho = 0.0;    // dense fraction D/N
    double sigma = 0.0;  // conservation target the solve ran at
    Saturation saturated = Saturation::none;
};

struct MaskVector {
    std::vector<std::uint8_t> bits;
    std::size_t count = 0;  // number of ones, kept in sync with bits

    static MaskVector from_bits(std::vector<std::uint8_t> bits);
};

// How masking probability is allocated across the two categories.
struct Weight {
    enum class Kind { soft, hard_dense, hard_sparse };

    Kind kind = Kind::soft;
    double value = 1.0;  // multiplier w; meaningful for soft only

    static Weight soft(double w) { return {Kind::soft, w}; }
    static Weight hard_dense() { return {Kind::hard_dense, 0.0}; }
    static Weight hard_sparse() { return {Kind::hard_sparse, 0.0}; }

    friend bool operator==(const Weight&, const Weight&) = default;
};

enum class Mode { bernoulli, exact_count };
enum class Scope { per_sequence, per_block };

std::string_view to_string(Mode mode);
std::string_view to_string(Scope scope);

struct SchedulerConfig {
    Weight weight = Weight::soft(2.0);
    double sigma_lo = 0.3;
    double sigma_hi = 0.8;
    Mode mode = Mode::bernoulli;
    Scope scope = Scope::per_sequence;
    std::uint32_t block_size = 32;
    bool complement = true;       // emit the complementary sibling record
    bool eos_is_dense = false;    // classification of the trailing <eos> slot
    std::uint64_t global_seed = 0;
};

// Range and combination checks (sigma band inside (0,1), positive block
// size, finite non-negative weight).
std::vector<Violation> validate_config(const SchedulerConfig& config);

// A priority mask and its complement for one record.
struct MaskPair {
    MaskVector logical;    // priority mask M: the information-focused record
    MaskVector syntactic;  // complement 1-M: the structure-focused record
    NoiseDraw draw;
    Weight weight;
};

}  // namespace densched
