#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "densched/types.hpp"

namespace densched::extract {

enum class PatternKind { line_prefix, delimited_expression, answer_marker, regex };
enum class CapturePolicy { whole_match, group };

std::string_view to_string(PatternKind kind);
std::string_view to_string(CapturePolicy policy);

// One annotation rule. For delimited_expression the pattern is the opening
// delimiter and pattern_close the closing one; the other kinds use pattern
// alone (keyword, marker, or ECMAScript regex source).
struct Rule {
    std::string id;
    PatternKind kind = PatternKind::line_prefix;
    std::string pattern;
    std::string pattern_close;
    CapturePolicy capture = CapturePolicy::whole_match;
};

// A validated, compiled set of rules for one domain.
class RuleSet {
public:
    RuleSet(Domain domain, std::vector<Rule> rules);  // throws ConfigError
    RuleSet(const RuleSet&);
    RuleSet(RuleSet&&) noexcept;
    RuleSet& operator=(RuleSet);
    ~RuleSet();

    // Parse the JSON rule-file schema. `origin` names the source in errors.
    static RuleSet parse(const std::string& json_text, const std::string& origin);
    static RuleSet load_file(const std::string& path);  // IoError / ConfigError

    // The rule sets shipped with the toolkit (mirrored in rules/*.json).
    static const RuleSet& builtin(Domain domain);

    Domain domain() const;
    const std::vector<Rule>& rules() const;
    std::string to_json() const;  // canonical serialization of the schema

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
    friend std::vector<TokenSpan> extract_dense(std::string_view, const RuleSet&);
};

// Run every rule over the answer text; returns merged, ascending,
// non-overlapping character spans. Deterministic: no randomness anywhere.
std::vector<TokenSpan> extract_dense(std::string_view answer, const RuleSet& rules);
// Domain-named conveniences over the shared engine.
std::vector<TokenSpan> extract_code_dense(std::string_view answer, const RuleSet& rules);
std::vector<TokenSpan> extract_math_dense(std::string_view answer, const RuleSet& rules);

// Whitespace-splitting reference tokenizer: maximal runs of [A-Za-z0-9_] or
// bytes >= 0x80 form one token; every other non-space byte is its own token.
std::vector<Token> reference_tokenize(std::string_view text);

// Project character spans onto tokens: a token is dense when it overlaps any
// span by at least one character. The result carries one extra slot for the
// trailing <eos> position, classified by eos_is_dense. Throws ArgumentError
// on out-of-bounds spans, naming the offending span.
std::vector<std::uint8_t> spans_to_indicator(const std::vector<TokenSpan>& spans,
                                             const std::vector<Token>& tokens,
                                             std::size_t text_len,
                                             bool eos_is_dense);

// Annotate one raw record with a rule set (tokenizes with the reference
// tokenizer unless the record carries its own token offsets).
AnnotatedSample annotate(const RawRecord& record, const RuleSet& rules,
                         bool eos_is_dense = false);

// Adopt externally produced span annotations. Invalid records become rejects;
// valid ones keep exactly the spans they arrived with (merged where needed).
struct ImportResult {
    std::vector<AnnotatedSample> samples;
    std::vector<Reject> rejects;
};
ImportResult import_annotations(const std::vector<RawRecord>& records,
                                bool eos_is_dense = false);

// Density summary per domain over an annotated corpus.
struct DomainDensity {
    Domain domain = Domain::other;
    std::size_t samples = 0;
    double mean_rho = 0.0;
    std::array<std::uint64_t, 20> histogram{};  // rho binned into [i/20,(i+1)/20)
};
struct DensityStats {
    std::vector<DomainDensity> per_domain;  // ordered code, math, other
    std::size_t total = 0;
};
DensityStats density_stats(const std::vector<AnnotatedSample>& corpus);
std::string to_json(const DensityStats& stats);

}  // namespace densched::extract
