#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <string>
#include <vector>

#include "densched/dataset.hpp"
#include "densched/errors.hpp"
#include "densched/extract.hpp"
#include "densched/rng.hpp"

using namespace densched;
using extract::RuleSet;

namespace {

// Locates `needle` in `text` and returns its span; fails the test when absent
// or ambiguous, so expected spans are written as visible substrings.
TokenSpan span_of(const std::string& text, const std::string& needle) {
    const auto pos = text.find(needle);
    REQUIRE(pos != std::string::npos);
    REQUIRE(text.find(needle, pos + 1) == std::string::npos);
    return {pos, pos + needle.size()};
}

std::string slice(const std::string& text, TokenSpan s) {
    return text.substr(s.start, s.end - s.start);
}

}  // namespace

TEST_CASE("code rules capture guard conditions and return expressions") {
    const auto& rules = RuleSet::builtin(Domain::code);
    const std::string text = "if a < b:\n    return a + b";
    auto spans = extract::extract_code_dense(text, rules);
    REQUIRE(spans.size() == 2);
    CHECK(spans[0] == span_of(text, "a < b"));
    CHECK(spans[1] == span_of(text, "a + b"));
}

TEST_CASE("code rules stay silent on plain statements") {
    const auto& rules = RuleSet::builtin(Domain::code);
    CHECK(extract::extract_code_dense("x = 1", rules).empty());
}

TEST_CASE("while guards and trailing returns are sorted and disjoint") {
    const auto& rules = RuleSet::builtin(Domain::code);
    const std::string text = "while n > 0:\n    n -= 1\nreturn n";
    auto spans = extract::extract_code_dense(text, rules);
    REQUIRE(spans.size() == 2);
    CHECK(slice(text, spans[0]) == "n > 0");
    CHECK(spans[1].start == text.size() - 1);  // the final "n"
    CHECK(std::is_sorted(spans.begin(), spans.end()));
    CHECK(spans[0].end <= spans[1].start);
}

TEST_CASE("code rules cover elif, parenthesized guards, for headers, ternaries") {
    const auto& rules = RuleSet::builtin(Domain::code);
    SUBCASE("elif") {
        const std::string text = "if x:\n    pass\nelif y > 2:\n    pass";
        auto spans = extract::extract_code_dense(text, rules);
        REQUIRE(spans.size() == 2);
        CHECK(slice(text, spans[1]) == "y > 2");
    }
    SUBCASE("C-style parenthesized guard") {
        const std::string text = "while (count < limit) {\n  count++;\n}";
        auto spans = extract::extract_code_dense(text, rules);
        REQUIRE(!spans.empty());
        CHECK(slice(text, spans[0]) == "count < limit");
    }
    SUBCASE("for header") {
        const std::string text = "for i in range(10):\n    total += i";
        auto spans = extract::extract_code_dense(text, rules);
        REQUIRE(spans.size() == 1);
        CHECK(slice(text, spans[0]) == "i in range(10)");
    }
    SUBCASE("ternary guard") {
        const std::string text = "r = a if a > b else b";
        auto spans = extract::extract_code_dense(text, rules);
        REQUIRE(!spans.empty());
        bool covers = false;
        const auto want = span_of(text, "a > b");
        for (auto s : spans) covers = covers || (s.start <= want.start && want.end <= s.end);
        CHECK(covers);
    }
    SUBCASE("identifier containing a keyword does not fire") {
        CHECK(extract::extract_code_dense("therefore = 1", rules).empty());
        CHECK(extract::extract_code_dense("x = whiled", rules).empty());
    }
}

TEST_CASE("math rules capture equation chains and the final answer") {
    const auto& rules = RuleSet::builtin(Domain::math);
    const std::string text = "He has 3 + 4 = 7 apples. #### 7";
    auto spans = extract::extract_math_dense(text, rules);
    REQUIRE(spans.size() == 2);
    CHECK(spans[0] == span_of(text, "3 + 4 = 7"));
    const auto final_pos = text.rfind('7');
    CHECK(spans[1] == TokenSpan{final_pos, final_pos + 1});
}

TEST_CASE("math rules stay silent on qualitative text") {
    const auto& rules = RuleSet::builtin(Domain::math);
    CHECK(extract::extract_math_dense("The reasoning is qualitative.", rules).empty());
}

TEST_CASE("overlapping math captures merge into sorted disjoint spans") {
    const auto& rules = RuleSet::builtin(Domain::math);
    const std::string text = "2 * 3 = 6 and 6 - 1 = 5. #### 5";
    auto spans = extract::extract_math_dense(text, rules);
    REQUIRE(spans.size() == 3);
    CHECK(spans[0] == span_of(text, "2 * 3 = 6"));
    CHECK(spans[1] == span_of(text, "6 - 1 = 5"));
    CHECK(spans[2].start == text.size() - 1);
    for (std::size_t i = 1; i < spans.size(); ++i) CHECK(spans[i - 1].end <= spans[i].start);
}

TEST_CASE("math rules handle dollar amounts and thousands separators") {
    const auto& rules = RuleSet::builtin(Domain::math);
    const std::string text = "She paid $1,200 - $300 = $900 total. #### 900";
    auto spans = extract::extract_math_dense(text, rules);
    REQUIRE(!spans.empty());
    CHECK(slice(text, spans[0]) == "$1,200 - $300 = $900");
}

TEST_CASE("bundled rule files match the builtin rule sets") {
    auto code = RuleSet::load_file(std::string(DENSCHED_RULES_DIR) + "/code.json");
    auto math = RuleSet::load_file(std::string(DENSCHED_RULES_DIR) + "/math.json");
    CHECK(code.to_json() == RuleSet::builtin(Domain::code).to_json());
    CHECK(math.to_json() == RuleSet::builtin(Domain::math).to_json());
}

TEST_CASE("rule set validation rejects broken definitions at load time") {
    using extract::CapturePolicy;
    using extract::PatternKind;
    using extract::Rule;

    SUBCASE("duplicate ids") {
        std::vector<Rule> rules(2);
        rules[0] = {"dup", PatternKind::line_prefix, "return", "", CapturePolicy::group};
        rules[1] = {"dup", PatternKind::line_prefix, "yield", "", CapturePolicy::group};
        CHECK_THROWS_AS(RuleSet(Domain::code, std::move(rules)), ConfigError);
    }
    SUBCASE("empty pattern") {
        std::vector<Rule> rules(1);
        rules[0] = {"r", PatternKind::line_prefix, "", "", CapturePolicy::group};
        CHECK_THROWS_AS(RuleSet(Domain::code, std::move(rules)), ConfigError);
    }
    SUBCASE("regex that does not compile") {
        std::vector<Rule> rules(1);
        rules[0] = {"r", PatternKind::regex, "([unclosed", "", CapturePolicy::group};
        CHECK_THROWS_AS(RuleSet(Domain::code, std::move(rules)), ConfigError);
    }
    SUBCASE("group capture requires a capture group") {
        std::vector<Rule> rules(1);
        rules[0] = {"r", PatternKind::regex, "abc", "", CapturePolicy::group};
        CHECK_THROWS_AS(RuleSet(Domain::code, std::move(rules)), ConfigError);
    }
    SUBCASE("malformed JSON") {
        CHECK_THROWS_AS(RuleSet::parse("{not json", "inline"), ConfigError);
        CHECK_THROWS_AS(RuleSet::parse(R"({"domain":"code"})", "inline"), ConfigError);
        CHECK_THROWS_AS(
            RuleSet::parse(R"({"domain":"prose","rules":[]})", "inline"), ConfigError);
    }
}

TEST_CASE("reference tokenizer splits words, digits, and punctuation") {
    auto toks = extract::reference_tokenize("a = 5 ;");
    REQUIRE(toks.size() == 4);
    CHECK(toks[0].surface == "a");
    CHECK(toks[1].surface == "=");
    CHECK(toks[2].surface == "5");
    CHECK(toks[3].surface == ";");
    CHECK(toks[3].span == TokenSpan{6, 7});

    auto fn = extract::reference_tokenize("foo(bar_2)");
    REQUIRE(fn.size() == 4);
    CHECK(fn[0].surface == "foo");
    CHECK(fn[1].surface == "(");
    CHECK(fn[2].surface == "bar_2");
    CHECK(fn[3].surface == ")");

    auto ops = extract::reference_tokenize("x+=1");
    REQUIRE(ops.size() == 4);
    CHECK(ops[1].surface == "+");
    CHECK(ops[2].surface == "=");

    CHECK(extract::reference_tokenize("  \n\t ").empty());
    CHECK(extract::reference_tokenize("").empty());
}

TEST_CASE("reference tokenizer keeps multi-byte sequences inside one token") {
    auto toks = extract::reference_tokenize("caf\xc3\xa9 7");
    REQUIRE(toks.size() == 2);
    CHECK(toks[0].surface == "caf\xc3\xa9");
    CHECK(toks[1].surface == "7");
}

TEST_CASE("spans_to_indicator marks tokens overlapping any span") {
    const std::vector<Token> tokens = {
        {"ab", {0, 2}}, {"c", {3, 4}}, {"d", {5, 6}}};

    SUBCASE("span across the middle tokens") {
        auto ind = extract::spans_to_indicator({{3, 6}}, tokens, 6, false);
        CHECK(ind == std::vector<std::uint8_t>{0, 1, 1, 0});
    }
    SUBCASE("no spans gives all zeros") {
        auto ind = extract::spans_to_indicator({}, tokens, 6, false);
        CHECK(ind == std::vector<std::uint8_t>{0, 0, 0, 0});
    }
    SUBCASE("one character of overlap is enough") {
        auto ind = extract::spans_to_indicator({{1, 2}}, tokens, 6, false);
        CHECK(ind == std::vector<std::uint8_t>{1, 0, 0, 0});
    }
    SUBCASE("eos slot follows the flag") {
        auto ind = extract::spans_to_indicator({}, tokens, 6, true);
        CHECK(ind == std::vector<std::uint8_t>{0, 0, 0, 1});
    }
    SUBCASE("out-of-bounds span is rejected and names the span") {
        CHECK_THROWS_WITH_AS(extract::spans_to_indicator({{3, 99}}, tokens, 6, false),
                             doctest::Contains("span 0"), ArgumentError);
    }
    SUBCASE("descending spans are rejected") {
        CHECK_THROWS_AS(extract::spans_to_indicator({{3, 6}, {0, 2}}, tokens, 6, false),
                        ArgumentError);
    }
}

TEST_CASE("spans_to_indicator is monotone in the span set") {
    const std::vector<Token> tokens = {
        {"if", {0, 2}}, {"a", {3, 4}}, {"<", {5, 6}}, {"b", {7, 8}}};
    auto base = extract::spans_to_indicator({{3, 4}}, tokens, 8, false);
    auto more = extract::spans_to_indicator({{3, 4}, {5, 8}}, tokens, 8, false);
    REQUIRE(base.size() == more.size());
    for (std::size_t i = 0; i < base.size(); ++i) CHECK(more[i] >= base[i]);
}

TEST_CASE("annotate builds a valid sample from a raw record") {
    RawRecord rec;
    rec.id = "r-1";
    rec.prompt = "add";
    rec.answer = "if a < b:\n    return a + b";
    rec.domain = Domain::code;

    auto sample = extract::annotate(rec, RuleSet::builtin(Domain::code));
    CHECK(validate_sample(sample).empty());
    CHECK(sample.id == "r-1");
    CHECK(sample.maskable_len() == sample.tokens.size() + 1);
    CHECK(sample.dense_count() > 0);
    CHECK(sample.indicator.back() == 0);

    auto dense_eos = extract::annotate(rec, RuleSet::builtin(Domain::code), true);
    CHECK(dense_eos.indicator.back() == 1);
}

TEST_CASE("annotate honors caller-provided token offsets") {
    RawRecord rec;
    rec.id = "r-2";
    rec.answer = "ab cd";
    rec.domain = Domain::code;
    rec.token_offsets = std::vector<TokenSpan>{{0, 2}, {3, 5}};
    auto sample = extract::annotate(rec, RuleSet::builtin(Domain::code));
    REQUIRE(sample.tokens.size() == 2);
    CHECK(sample.tokens[0].surface == "ab");
    CHECK(sample.tokens[1].surface == "cd");
}

TEST_CASE("import_annotations keeps valid records and rejects broken ones") {
    RawRecord good;
    good.id = "g";
    good.answer = "x is 3";
    good.domain = Domain::math;
    good.spans = std::vector<TokenSpan>{{5, 6}};

    RawRecord empty_spans = good;
    empty_spans.id = "e";
    empty_spans.spans = std::vector<TokenSpan>{};

    RawRecord oob = good;
    oob.id = "bad-span";
    oob.spans = std::vector<TokenSpan>{{5, 999}};

    RawRecord unannotated = good;
    unannotated.id = "missing";
    unannotated.spans.reset();

    auto result = extract::import_annotations({good, empty_spans, oob, unannotated});
    REQUIRE(result.samples.size() == 2);
    REQUIRE(result.rejects.size() == 2);

    CHECK(result.samples[0].id == "g");
    CHECK(result.samples[0].dense_count() == 1);
    CHECK(result.samples[1].id == "e");
    CHECK(result.samples[1].dense_count() == 0);

    CHECK(result.rejects[0].id == "bad-span");
    CHECK(result.rejects[0].reason.find("bounds") != std::string::npos);
    CHECK(result.rejects[1].id == "missing");
    CHECK(result.rejects[1].reason.find("span") != std::string::npos);
}

TEST_CASE("density_stats aggregates per domain") {
    auto make = [](const char* id, Domain d, std::vector<std::uint8_t> ind) {
        AnnotatedSample s;
        s.id = id;
        s.domain = d;
        std::string answer;
        for (std::size_t i = 0; i + 1 < ind.size(); ++i) {
            if (i) answer += ' ';
            answer += 'a';
        }
        s.answer = answer;
        s.tokens = extract::reference_tokenize(answer);
        s.indicator = std::move(ind);
        return s;
    };

    SUBCASE("mean of two samples") {
        // rho 0.2 and 0.4 over 5 maskable slots each.
        std::vector<AnnotatedSample> corpus = {
            make("a", Domain::code, {1, 0, 0, 0, 0}),
            make("b", Domain::code, {1, 1, 0, 0, 0})};
        auto stats = extract::density_stats(corpus);
        REQUIRE(stats.per_domain.size() == 1);
        CHECK(stats.per_domain[0].domain == Domain::code);
        CHECK(stats.per_domain[0].samples == 2);
        CHECK(stats.per_domain[0].mean_rho == doctest::Approx(0.3));
        CHECK(stats.total == 2);
        // 0.2 falls in bin 4, 0.4 in bin 8
        CHECK(stats.per_domain[0].histogram[4] == 1);
        CHECK(stats.per_domain[0].histogram[8] == 1);
    }
    SUBCASE("all-zero indicators give rho 0") {
        std::vector<AnnotatedSample> corpus = {make("a", Domain::math, {0, 0, 0, 0})};
        auto stats = extract::density_stats(corpus);
        CHECK(stats.per_domain[0].mean_rho == 0.0);
        CHECK(stats.per_domain[0].histogram[0] == 1);
    }
    SUBCASE("domains are reported in a fixed order") {
        std::vector<AnnotatedSample> corpus = {
            make("o", Domain::other, {0, 0}),
            make("m", Domain::math, {1, 0}),
            make("c", Domain::code, {1, 0})};
        auto stats = extract::density_stats(corpus);
        REQUIRE(stats.per_domain.size() == 3);
        CHECK(stats.per_domain[0].domain == Domain::code);
        CHECK(stats.per_domain[1].domain == Domain::math);
        CHECK(stats.per_domain[2].domain == Domain::other);
        CHECK(extract::to_json(stats).find("\"code\"") != std::string::npos);
    }
    SUBCASE("empty corpus is an error") {
        CHECK_THROWS_AS(extract::density_stats({}), ArgumentError);
    }
}

TEST_CASE("extraction invariants hold on random text") {
    const auto& code = RuleSet::builtin(Domain::code);
    const auto& math = RuleSet::builtin(Domain::math);
    const std::string charset =
        "abcdefghijklmnopqrstuvwxyz0123456789 \n\t()[]{}<>=+-*/:;.,#$_\"'";
    RngStream rng(2024);

    for (int iter = 0; iter < 2000; ++iter) {
        std::string text;
        const auto len = rng.next_below(160);
        text.reserve(len);
        for (std::uint64_t i = 0; i < len; ++i)
            text += charset[rng.next_below(charset.size())];

        for (const auto* rules : {&code, &math}) {
            auto spans = extract::extract_dense(text, *rules);
            for (std::size_t i = 0; i < spans.size(); ++i) {
                REQUIRE(spans[i].start < spans[i].end);
                REQUIRE(spans[i].end <= text.size());
                if (i) REQUIRE(spans[i - 1].end <= spans[i].start);
            }
            // The indicator projection must accept whatever extraction made.
            auto tokens = extract::reference_tokenize(text);
            auto ind = extract::spans_to_indicator(spans, tokens, text.size(), false);
            REQUIRE(ind.size() == tokens.size() + 1);
        }
    }
}

TEST_CASE("raw record serialization round-trips canonically") {
    RawRecord rec;
    rec.id = "round";
    rec.prompt = "p";
    rec.answer = "if x > 1:\n    return x";
    rec.domain = Domain::code;
    rec.spans = std::vector<TokenSpan>{{3, 8}, {14, 22}};

    const auto line = dataset::to_json_line(rec);
    const auto back = dataset::raw_record_from_json_line(line);
    CHECK(dataset::to_json_line(back) == line);
    CHECK(back.id == rec.id);
    REQUIRE(back.spans.has_value());
    CHECK(*back.spans == *rec.spans);
}
