#include "densched/extract.hpp"

#include <algorithm>
#include <fstream>
#include <regex>
#include <sstream>

#include "densched/errors.hpp"
#include "json.hpp"

namespace densched::extract {

using ordered_json = nlohmann::ordered_json;

std::string_view to_string(PatternKind kind) {
    switch (kind) {
        case PatternKind::line_prefix: return "line_prefix";
        case PatternKind::delimited_expression: return "delimited_expression";
        case PatternKind::answer_marker: return "answer_marker";
        case PatternKind::regex: return "regex";
    }
    return "line_prefix";
}

std::string_view to_string(CapturePolicy policy) {
    return policy == CapturePolicy::whole_match ? "whole_match" : "group";
}

namespace {

bool is_word_byte(unsigned char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
           c == '_' || c >= 0x80;
}

bool is_blank(char c) { return c == ' ' || c == '\t'; }

bool is_ascii_space(char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

std::size_t line_end_from(std::string_view text, std::size_t pos) {
    const std::size_t nl = text.find('\n', pos);
    return nl == std::string_view::npos ? text.size() : nl;
}

std::size_t rtrim(std::string_view text, std::size_t begin, std::size_t end) {
    while (end > begin && is_ascii_space(text[end - 1])) --end;
    return end;
}

// Locates `token` in [from, to) requiring word boundaries on any side of the
// token that itself starts/ends with a word byte.
std::size_t find_token(std::string_view text, std::size_t from, std::size_t to,
                       std::string_view token) {
    if (token.empty()) return std::string_view::npos;
    while (from + token.size() <= to) {
        const std::size_t pos = text.find(token, from);
        if (pos == std::string_view::npos || pos + token.size() > to) {
            return std::string_view::npos;
        }
        const bool left_ok = !is_word_byte(token.front()) || pos == 0 ||
                             !is_word_byte(text[pos - 1]);
        const bool right_ok = !is_word_byte(token.back()) ||
                              pos + token.size() == text.size() ||
                              !is_word_byte(text[pos + token.size()]);
        if (left_ok && right_ok) return pos;
        from = pos + 1;
    }
    return std::string_view::npos;
}

void apply_line_prefix(std::string_view text, const Rule& rule,
                       std::vector<TokenSpan>& out) {
    std::size_t ls = 0;
    while (ls <= text.size()) {
        const std::size_t le = line_end_from(text, ls);
        std::size_t pos = ls;
        while (pos < le && is_blank(text[pos])) ++pos;
        const std::string_view kw = rule.pattern;
        if (pos + kw.size() <= le && text.compare(pos, kw.size(), kw) == 0) {
            const std::size_t after = pos + kw.size();
            const bool boundary = !is_word_byte(kw.back()) || after == le ||
                                  !is_word_byte(text[after]);
            if (boundary) {
                std::size_t expr_start = after;
                while (expr_start < le && is_blank(text[expr_start])) ++expr_start;
                std::size_t expr_end = rtrim(text, expr_start, le);
                while (expr_end > expr_start && text[expr_end - 1] == ';') --expr_end;
                expr_end = rtrim(text, expr_start, expr_end);
                if (expr_end > expr_start) {
                    if (rule.capture == CapturePolicy::group) {
                        out.push_back({expr_start, expr_end});
                    } else {
                        out.push_back({pos, expr_end});
                    }
                }
            }
        }
        if (le == text.size()) break;
        ls = le + 1;
    }
}

void apply_delimited(std::string_view text, const Rule& rule,
                     std::vector<TokenSpan>& out) {
    std::size_t search = 0;
    for (;;) {
        const std::size_t open_pos = find_token(text, search, text.size(), rule.pattern);
        if (open_pos == std::string_view::npos) break;
        const std::size_t le = line_end_from(text, open_pos);
        const std::size_t after_open = open_pos + rule.pattern.size();
        const std::size_t close_pos = find_token(text, after_open, le, rule.pattern_close);
        if (close_pos == std::string_view::npos) {
            search = after_open;
            continue;
        }
        std::size_t expr_start = after_open;
        while (expr_start < close_pos && is_blank(text[expr_start])) ++expr_start;
        const std::size_t expr_end = rtrim(text, expr_start, close_pos);
        if (expr_end > expr_start) {
            if (rule.capture == CapturePolicy::group) {
                out.push_back({expr_start, expr_end});
            } else {
                out.push_back({open_pos, close_pos + rule.pattern_close.size()});
            }
        }
        search = close_pos + rule.pattern_close.size();
    }
}

void apply_answer_marker(std::string_view text, const Rule& rule,
                         std::vector<TokenSpan>& out) {
    std::size_t from = 0;
    for (;;) {
        const std::size_t pos = text.find(rule.pattern, from);
        if (pos == std::string_view::npos) break;
        std::size_t payload_start = pos + rule.pattern.size();
        const std::size_t le = line_end_from(text, payload_start);
        while (payload_start < le && is_blank(text[payload_start])) ++payload_start;
        const std::size_t payload_end = rtrim(text, payload_start, le);
        if (payload_end > payload_start) {
            if (rule.capture == CapturePolicy::group) {
                out.push_back({payload_start, payload_end});
            } else {
                out.push_back({pos, payload_end});
            }
        }
        from = pos + rule.pattern.size();
    }
}

void apply_regex(std::string_view text, const Rule& rule, const std::regex& re,
                 std::vector<TokenSpan>& out) {
    const char* begin = text.data();
    const char* end = begin + text.size();
    for (std::cregex_iterator it(begin, end, re), last; it != last; ++it) {
        const std::cmatch& m = *it;
        if (rule.capture == CapturePolicy::group) {
            if (m.size() > 1 && m[1].matched && m.length(1) > 0) {
                const auto start = static_cast<std::size_t>(m.position(1));
                out.push_back({start, start + static_cast<std::size_t>(m.length(1))});
            }
        } else if (m.length(0) > 0) {
            const auto start = static_cast<std::size_t>(m.position(0));
            out.push_back({start, start + static_cast<std::size_t>(m.length(0))});
        }
    }
}

std::vector<TokenSpan> merge_spans(std::vector<TokenSpan> spans) {
    std::sort(spans.begin(), spans.end());
    std::vector<TokenSpan> merged;
    for (const TokenSpan& s : spans) {
        // Merge only genuine overlaps; adjacent spans stay separate.
        if (!merged.empty() && s.start < merged.back().end) {
            merged.back().end = std::max(merged.back().end, s.end);
        } else {
            merged.push_back(s);
        }
    }
    return merged;
}

}  // namespace

struct RuleSet::Impl {
    Domain domain = Domain::other;
    std::vector<Rule> rules;
    std::vector<std::regex> compiled;  // parallel to rules; engaged for regex kind
};

RuleSet::RuleSet(Domain domain, std::vector<Rule> rules) : impl_(new Impl) {
    impl_->domain = domain;
    for (std::size_t i = 0; i < rules.size(); ++i) {
        const Rule& rule = rules[i];
        const std::string where =
            "rule '" + (rule.id.empty() ? "#" + std::to_string(i) : rule.id) + "': ";
        if (rule.id.empty()) throw ConfigError(where + "missing id");
        for (std::size_t j = 0; j < i; ++j) {
            if (rules[j].id == rule.id) throw ConfigError(where + "duplicate id");
        }
        if (rule.pattern.empty()) throw ConfigError(where + "missing pattern");
        if (rule.kind == PatternKind::delimited_expression && rule.pattern_close.empty()) {
            throw ConfigError(where + "delimited_expression needs open and close");
        }
        std::regex re;
        if (rule.kind == PatternKind::regex) {
            try {
                re.assign(rule.pattern, std::regex::ECMAScript);
            } catch (const std::regex_error& e) {
                throw ConfigError(where + "bad regex: " + e.what());
            }
            if (rule.capture == CapturePolicy::group && re.mark_count() < 1) {
                throw ConfigError(where + "capture 'group' needs a capture group");
            }
        }
        impl_->compiled.push_back(std::move(re));
    }
    impl_->rules = std::move(rules);
}

RuleSet::RuleSet(const RuleSet& other) : impl_(new Impl(*other.impl_)) {}
RuleSet::RuleSet(RuleSet&&) noexcept = default;
RuleSet& RuleSet::operator=(RuleSet other) {
    impl_.swap(other.impl_);
    return *this;
}
RuleSet::~RuleSet() = default;

Domain RuleSet::domain() const { return impl_->domain; }
const std::vector<Rule>& RuleSet::rules() const { return impl_->rules; }

RuleSet RuleSet::parse(const std::string& json_text, const std::string& origin) {
    ordered_json doc;
    try {
        doc = ordered_json::parse(json_text);
    } catch (const ordered_json::parse_error& e) {
        throw ConfigError(origin + ": not valid JSON: " + e.what());
    }
    if (!doc.is_object() || !doc.contains("domain") || !doc.contains("rules")) {
        throw ConfigError(origin + ": expected object with 'domain' and 'rules'");
    }
    if (!doc["domain"].is_string()) throw ConfigError(origin + ": 'domain' must be a string");
    const auto domain = domain_from_string(doc["domain"].get<std::string>());
    if (!domain) throw ConfigError(origin + ": unknown domain '" +
                                   doc["domain"].get<std::string>() + "'");
    if (!doc["rules"].is_array()) throw ConfigError(origin + ": 'rules' must be an array");

    std::vector<Rule> rules;
    for (const auto& item : doc["rules"]) {
        Rule rule;
        if (!item.is_object()) throw ConfigError(origin + ": rule entries must be objects");
        rule.id = item.value("id", std::string{});
        const std::string where = origin + ": rule '" + rule.id + "': ";
        const std::string kind = item.value("kind", std::string{});
        if (kind == "line_prefix") {
            rule.kind = PatternKind::line_prefix;
        } else if (kind == "delimited_expression") {
            rule.kind = PatternKind::delimited_expression;
        } else if (kind == "answer_marker") {
            rule.kind = PatternKind::answer_marker;
        } else if (kind == "regex") {
            rule.kind = PatternKind::regex;
        } else {
            throw ConfigError(where + "unknown kind '" + kind + "'");
        }
        if (!item.contains("pattern")) throw ConfigError(where + "missing pattern");
        if (rule.kind == PatternKind::delimited_expression) {
            const auto& pat = item["pattern"];
            if (!pat.is_object() || !pat.contains("open") || !pat.contains("close") ||
                !pat["open"].is_string() || !pat["close"].is_string()) {
                throw ConfigError(where + "pattern must be {\"open\", \"close\"}");
            }
            rule.pattern = pat["open"].get<std::string>();
            rule.pattern_close = pat["close"].get<std::string>();
        } else {
            if (!item["pattern"].is_string()) {
                throw ConfigError(where + "pattern must be a string");
            }
            rule.pattern = item["pattern"].get<std::string>();
        }
        const std::string capture = item.value("capture", std::string{"whole_match"});
        if (capture == "whole_match") {
            rule.capture = CapturePolicy::whole_match;
        } else if (capture == "group") {
            rule.capture = CapturePolicy::group;
        } else {
            throw ConfigError(where + "unknown capture policy '" + capture + "'");
        }
        rules.push_back(std::move(rule));
    }
    try {
        return RuleSet(*domain, std::move(rules));
    } catch (const ConfigError& e) {
        throw ConfigError(origin + ": " + e.what());
    }
}

RuleSet RuleSet::load_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open rule file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse(buf.str(), path);
}

std::string RuleSet::to_json() const {
    ordered_json doc;
    doc["domain"] = std::string(densched::to_string(impl_->domain));
    doc["rules"] = ordered_json::array();
    for (const Rule& rule : impl_->rules) {
        ordered_json item;
        item["id"] = rule.id;
        item["kind"] = std::string(to_string(rule.kind));
        if (rule.kind == PatternKind::delimited_expression) {
            item["pattern"] = {{"open", rule.pattern}, {"close", rule.pattern_close}};
        } else {
            item["pattern"] = rule.pattern;
        }
        item["capture"] = std::string(to_string(rule.capture));
        doc["rules"].push_back(std::move(item));
    }
    return doc.dump(2);
}

namespace {

// Bundled defaults, byte-for-byte the content of rules/code.json and
// rules/math.json. A unit test keeps the files and these strings in sync.
constexpr const char* kCodeRulesJson = R"json({
  "domain": "code",
  "rules": [
    {
      "id": "if-guard",
      "kind": "delimited_expression",
      "pattern": {
        "open": "if",
        "close": ":"
      },
      "capture": "group"
    },
    {
      "id": "elif-guard",
      "kind": "delimited_expression",
      "pattern": {
        "open": "elif",
        "close": ":"
      },
      "capture": "group"
    },
    {
      "id": "while-guard",
      "kind": "delimited_expression",
      "pattern": {
        "open": "while",
        "close": ":"
      },
      "capture": "group"
    },
    {
      "id": "ternary-guard",
      "kind": "delimited_expression",
      "pattern": {
        "open": "if",
        "close": "else"
      },
      "capture": "group"
    },
    {
      "id": "paren-guard",
      "kind": "regex",
      "pattern": "\\b(?:if|while)\\s*\\(([^()\\n]*(?:\\([^()\\n]*\\)[^()\\n]*)*)\\)",
      "capture": "group"
    },
    {
      "id": "for-header",
      "kind": "regex",
      "pattern": "\\bfor[ \\t]+([^:\\n]*[^:\\n \\t])[ \\t]*:",
      "capture": "group"
    },
    {
      "id": "return-expr",
      "kind": "line_prefix",
      "pattern": "return",
      "capture": "group"
    }
  ]
})json";

constexpr const char* kMathRulesJson = R"json({
  "domain": "math",
  "rules": [
    {
      "id": "equation-chain",
      "kind": "regex",
      "pattern": "\\$?\\d+(?:,\\d{3})*(?:\\.\\d+)?(?:[ \\t]*[-+*/x][ \\t]*\\$?\\d+(?:,\\d{3})*(?:\\.\\d+)?)+[ \\t]*=[ \\t]*\\$?\\d+(?:,\\d{3})*(?:\\.\\d+)?",
      "capture": "whole_match"
    },
    {
      "id": "result-value",
      "kind": "regex",
      "pattern": "=[ \\t]*(\\$?\\d+(?:,\\d{3})*(?:\\.\\d+)?)",
      "capture": "group"
    },
    {
      "id": "final-answer",
      "kind": "answer_marker",
      "pattern": "#### ",
      "capture": "group"
    }
  ]
})json";

}  // namespace

const RuleSet& RuleSet::builtin(Domain domain) {
    static const RuleSet code = RuleSet::parse(kCodeRulesJson, "builtin:code");
    static const RuleSet math = RuleSet::parse(kMathRulesJson, "builtin:math");
    static const RuleSet other(Domain::other, {});
    switch (domain) {
        case Domain::code: return code;
        case Domain::math: return math;
        case Domain::other: return other;
    }
    return other;
}

std::vector<TokenSpan> extract_dense(std::string_view answer, const RuleSet& rules) {
    std::vector<TokenSpan> raw;
    const auto& impl = *rules.impl_;
    for (std::size_t i = 0; i < impl.rules.size(); ++i) {
        const Rule& rule = impl.rules[i];
        switch (rule.kind) {
            case PatternKind::line_prefix: apply_line_prefix(answer, rule, raw); break;
            case PatternKind::delimited_expression: apply_delimited(answer, rule, raw); break;
            case PatternKind::answer_marker: apply_answer_marker(answer, rule, raw); break;
            case PatternKind::regex: apply_regex(answer, rule, impl.compiled[i], raw); break;
        }
    }
    return merge_spans(std::move(raw));
}

std::vector<TokenSpan> extract_code_dense(std::string_view answer, const RuleSet& rules) {
    return extract_dense(answer, rules);
}

std::vector<TokenSpan> extract_math_dense(std::string_view answer, const RuleSet& rules) {
    return extract_dense(answer, rules);
}

std::vector<Token> reference_tokenize(std::string_view text) {
    std::vector<Token> tokens;
    std::size_t i = 0;
    while (i < text.size()) {
        const char c = text[i];
        if (is_ascii_space(c)) {
            ++i;
        } else if (is_word_byte(static_cast<unsigned char>(c))) {
            std::size_t j = i + 1;
            while (j < text.size() && is_word_byte(static_cast<unsigned char>(text[j]))) ++j;
            tokens.push_back({std::string(text.substr(i, j - i)), {i, j}});
            i = j;
        } else {
            tokens.push_back({std::string(1, c), {i, i + 1}});
            ++i;
        }
    }
    return tokens;
}

std::vector<std::uint8_t> spans_to_indicator(const std::vector<TokenSpan>& spans,
                                             const std::vector<Token>& tokens,
                                             std::size_t text_len, bool eos_is_dense) {
    for (std::size_t i = 0; i < spans.size(); ++i) {
        if (spans[i].start >= spans[i].end || spans[i].end > text_len) {
            throw ArgumentError("span " + std::to_string(i) + " out of bounds: [" +
                                std::to_string(spans[i].start) + ", " +
                                std::to_string(spans[i].end) + ") for text length " +
                                std::to_string(text_len));
        }
        if (i > 0 && spans[i - 1].end > spans[i].start) {
            throw ArgumentError("span " + std::to_string(i) + " not in merged ascending order");
        }
    }
    std::vector<std::uint8_t> indicator(tokens.size() + 1, 0);
    std::size_t si = 0;
    for (std::size_t ti = 0; ti < tokens.size(); ++ti) {
        const TokenSpan& tok = tokens[ti].span;
        while (si < spans.size() && spans[si].end <= tok.start) ++si;
        // Dense when the token shares at least one character with a span.
        if (si < spans.size() && spans[si].start < tok.end) indicator[ti] = 1;
    }
    indicator.back() = eos_is_dense ? 1 : 0;
    return indicator;
}

namespace {

std::vector<Token> tokens_from_offsets(const RawRecord& record) {
    std::vector<Token> tokens;
    const auto& offsets = *record.token_offsets;
    tokens.reserve(offsets.size());
    std::size_t prev_end = 0;
    for (std::size_t i = 0; i < offsets.size(); ++i) {
        const TokenSpan& s = offsets[i];
        if (s.start >= s.end || s.end > record.answer.size()) {
            throw SchemaError("token offset " + std::to_string(i) + " out of bounds");
        }
        if (s.start < prev_end) {
            throw SchemaError("token offset " + std::to_string(i) + " overlaps its predecessor");
        }
        prev_end = s.end;
        tokens.push_back({record.answer.substr(s.start, s.end - s.start), s});
    }
    return tokens;
}

}  // namespace

AnnotatedSample annotate(const RawRecord& record, const RuleSet& rules, bool eos_is_dense) {
    AnnotatedSample sample;
    sample.id = record.id;
    sample.prompt = record.prompt;
    sample.answer = record.answer;
    sample.domain = record.domain;
    sample.tokens =
        record.token_offsets ? tokens_from_offsets(record) : reference_tokenize(record.answer);
    sample.dense_spans = extract_dense(record.answer, rules);
    sample.indicator =
        spans_to_indicator(sample.dense_spans, sample.tokens, record.answer.size(), eos_is_dense);
    return sample;
}

ImportResult import_annotations(const std::vector<RawRecord>& records, bool eos_is_dense) {
    ImportResult result;
    for (const RawRecord& record : records) {
        if (!record.spans) {
            result.rejects.push_back({record.id, 0, "record carries no span annotations"});
            continue;
        }
        try {
            AnnotatedSample sample;
            sample.id = record.id;
            sample.prompt = record.prompt;
            sample.answer = record.answer;
            sample.domain = record.domain;
            sample.tokens = record.token_offsets ? tokens_from_offsets(record)
                                                 : reference_tokenize(record.answer);
            sample.dense_spans = merge_spans(*record.spans);
            sample.indicator = spans_to_indicator(sample.dense_spans, sample.tokens,
                                                  record.answer.size(), eos_is_dense);
            const auto violations = validate_sample(sample);
            if (!violations.empty()) {
                result.rejects.push_back(
                    {record.id, 0, violations.front().field + ": " + violations.front().message});
                continue;
            }
            result.samples.push_back(std::move(sample));
        } catch (const SchemaError& e) {
            result.rejects.push_back({record.id, 0, e.what()});
        } catch (const ArgumentError& e) {
            result.rejects.push_back({record.id, 0, e.what()});
        }
    }
    return result;
}

DensityStats density_stats(const std::vector<AnnotatedSample>& corpus) {
    if (corpus.empty()) throw ArgumentError("density_stats: corpus is empty");
    DensityStats stats;
    stats.total = corpus.size();
    for (Domain domain : {Domain::code, Domain::math, Domain::other}) {
        DomainDensity dd;
        dd.domain = domain;
        double rho_sum = 0.0;
        for (const AnnotatedSample& sample : corpus) {
            if (sample.domain != domain || sample.maskable_len() == 0) continue;
            const double rho = static_cast<double>(sample.dense_count()) /
                               static_cast<double>(sample.maskable_len());
            rho_sum += rho;
            const auto bin = std::min<std::size_t>(19, static_cast<std::size_t>(rho * 20.0));
            ++dd.histogram[bin];
            ++dd.samples;
        }
        if (dd.samples > 0) {
            dd.mean_rho = rho_sum / static_cast<double>(dd.samples);
            stats.per_domain.push_back(dd);
        }
    }
    return stats;
}

std::string to_json(const DensityStats& stats) {
    ordered_json doc;
    doc["total"] = stats.total;
    doc["domains"] = ordered_json::array();
    for (const DomainDensity& dd : stats.per_domain) {
        ordered_json item;
        item["domain"] = std::string(densched::to_string(dd.domain));
        item["samples"] = dd.samples;
        item["mean_rho"] = dd.mean_rho;
        item["histogram"] = dd.histogram;
        doc["domains"].push_back(std::move(item));
    }
    return doc.dump(2);
}

}  // namespace densched::extract
