#include "densched/types.hpp"

#include <cmath>
#include <numeric>
#include <string>

namespace densched {

std::string_view to_string(Domain domain) {
    switch (domain) {
        case Domain::code: return "code";
        case Domain::math: return "math";
        case Domain::other: return "other";
    }
    return "other";
}

std::optional<Domain> domain_from_string(std::string_view name) {
    if (name == "code") return Domain::code;
    if (name == "math") return Domain::math;
    if (name == "other") return Domain::other;
    return std::nullopt;
}

std::string_view to_string(Mode mode) {
    return mode == Mode::bernoulli ? "bernoulli" : "exact_count";
}

std::string_view to_string(Scope scope) {
    return scope == Scope::per_sequence ? "per_sequence" : "per_block";
}

std::size_t AnnotatedSample::dense_count() const {
    return std::accumulate(indicator.begin(), indicator.end(), std::size_t{0});
}

MaskVector MaskVector::from_bits(std::vector<std::uint8_t> bits) {
    MaskVector mask;
    mask.count = std::accumulate(bits.begin(), bits.end(), std::size_t{0});
    mask.bits = std::move(bits);
    return mask;
}

namespace {

void check_spans(const std::vector<TokenSpan>& spans, std::size_t text_len,
                 const char* field, std::vector<Violation>& out) {
    for (std::size_t i = 0; i < spans.size(); ++i) {
        const TokenSpan& s = spans[i];
        if (s.start >= s.end) {
            out.push_back({field, "span " + std::to_string(i) + " is empty or inverted"});
        }
        if (s.end > text_len) {
            out.push_back({field, "span " + std::to_string(i) + " out of bounds: [" +
                                      std::to_string(s.start) + ", " + std::to_string(s.end) +
                                      ") exceeds text length " + std::to_string(text_len)});
        }
        if (i > 0 && spans[i - 1].end > s.start) {
            out.push_back({field, "span " + std::to_string(i) +
                                      " overlaps or is out of order with its predecessor"});
        }
    }
}

}  // namespace

std::vector<Violation> validate_sample(const AnnotatedSample& sample) {
    std::vector<Violation> out;
    if (sample.id.empty()) {
        out.push_back({"id", "id must be non-empty"});
    }
    if (sample.indicator.size() != sample.tokens.size() + 1) {
        out.push_back({"indicator",
                       "indicator length " + std::to_string(sample.indicator.size()) +
                           " != token count + 1 (" + std::to_string(sample.tokens.size() + 1) +
                           ")"});
    }
    for (std::size_t i = 0; i < sample.indicator.size(); ++i) {
        if (sample.indicator[i] > 1) {
            out.push_back({"indicator", "value at position " + std::to_string(i) +
                                            " is not binary"});
            break;
        }
    }

    std::vector<TokenSpan> offsets;
    offsets.reserve(sample.tokens.size());
    for (const Token& tok : sample.tokens) offsets.push_back(tok.span);
    check_spans(offsets, sample.answer.size(), "tokens", out);
    for (std::size_t i = 0; i < sample.tokens.size(); ++i) {
        const Token& tok = sample.tokens[i];
        if (tok.span.end <= sample.answer.size() && tok.span.start < tok.span.end &&
            sample.answer.compare(tok.span.start, tok.span.end - tok.span.start,
                                  tok.surface) != 0) {
            out.push_back({"tokens", "token " + std::to_string(i) +
                                         " surface does not match its offsets"});
        }
    }
    check_spans(sample.dense_spans, sample.answer.size(), "spans", out);
    return out;
}

std::vector<Violation> validate_config(const SchedulerConfig& config) {
    std::vector<Violation> out;
    if (!(config.sigma_lo > 0.0) || !(config.sigma_hi < 1.0) ||
        !(config.sigma_lo <= config.sigma_hi)) {
        out.push_back({"sigma", "corruption band must satisfy 0 < lo <= hi < 1"});
    }
    if (config.weight.kind == Weight::Kind::soft &&
        (!std::isfinite(config.weight.value) || config.weight.value < 0.0)) {
        out.push_back({"weight", "soft weight must be finite and non-negative"});
    }
    if (config.scope == Scope::per_block && config.block_size == 0) {
        out.push_back({"block_size", "block size must be positive"});
    }
    return out;
}

}  // namespace densched
