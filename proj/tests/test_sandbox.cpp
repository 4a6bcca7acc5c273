#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "densched/dataset.hpp"
#include "densched/errors.hpp"
#include "densched/sandbox.hpp"

using namespace densched;
using sandbox::SyntheticSpec;
using sandbox::ToyDenoiser;

namespace {

std::vector<dataset::TrainingRecord> records_for(const std::vector<AnnotatedSample>& corpus,
                                                 const SchedulerConfig& config) {
    std::vector<dataset::TrainingRecord> out;
    for (const auto& s : corpus) {
        auto recs = dataset::make_records(s, config);
        for (auto& r : recs) out.push_back(std::move(r));
    }
    return out;
}

SchedulerConfig uniform_cfg(std::uint64_t seed) {
    SchedulerConfig cfg;
    cfg.weight = Weight::soft(1.0);
    cfg.sigma_lo = cfg.sigma_hi = 0.5;
    cfg.complement = false;
    cfg.global_seed = seed;
    return cfg;
}

}  // namespace

TEST_CASE("synthetic corpus instantiates the template deterministically") {
    SyntheticSpec spec;
    spec.sample_count = 50;
    auto a = sandbox::gen_synthetic_corpus(spec);
    auto b = sandbox::gen_synthetic_corpus(spec);
    REQUIRE(a.size() == 50);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].id == b[i].id);
        CHECK(a[i].answer == b[i].answer);
        CHECK(a[i].indicator == b[i].indicator);
    }

    SyntheticSpec reseeded = spec;
    reseeded.seed = 2;
    auto c = sandbox::gen_synthetic_corpus(reseeded);
    bool any_diff = false;
    for (std::size_t i = 0; i < a.size(); ++i) any_diff = any_diff || a[i].answer != c[i].answer;
    CHECK(any_diff);
}

TEST_CASE("every synthetic sample is valid with a fixed density") {
    SyntheticSpec spec;
    spec.sample_count = 200;
    auto corpus = sandbox::gen_synthetic_corpus(spec);
    for (const auto& s : corpus) {
        REQUIRE(validate_sample(s).empty());
        REQUIRE(s.tokens.size() == 23);
        REQUIRE(s.indicator.size() == 24);
        CHECK(s.dense_count() == 9);  // rho = 9/24 by construction

        const auto& t = s.tokens;
        const int a_val = std::stoi(t[2].surface);
        const int b_val = std::stoi(t[6].surface);
        const int x_val = std::stoi(t[19].surface);
        CHECK(a_val >= spec.value_lo);
        CHECK(a_val <= spec.value_hi);
        CHECK(b_val >= spec.value_lo);
        CHECK(b_val <= spec.value_hi);
        CHECK(a_val != b_val);

        // The guard names the true order of a and b.
        const auto& cmp = t[10].surface;
        REQUIRE((cmp == "<" || cmp == ">"));
        CHECK((cmp == "<" ? a_val < b_val : a_val > b_val));

        // The result chain is internally consistent and echoed by return.
        const auto& op = t[16].surface;
        REQUIRE((op == "+" || op == "-"));
        CHECK(x_val == (op == "+" ? a_val + b_val : a_val - b_val));
        CHECK(t[22].surface == t[19].surface);

        // Dense positions are the guard, the result chain, and the return value.
        const std::set<std::size_t> dense = {9, 10, 11, 15, 16, 17, 18, 19, 22};
        for (std::size_t i = 0; i < s.indicator.size(); ++i)
            CHECK(s.indicator[i] == (dense.count(i) ? 1 : 0));
    }
}

TEST_CASE("synthetic spec validation") {
    SyntheticSpec bad;
    bad.value_lo = 5;
    bad.value_hi = 5;
    CHECK_THROWS_AS(sandbox::gen_synthetic_corpus(bad), ArgumentError);
}

TEST_CASE("denoiser training rejects an empty record set") {
    ToyDenoiser model;
    CHECK_THROWS_AS(model.train({}), ArgumentError);
    CHECK_THROWS_AS(model.conditional(1, "x"), ArgumentError);
}

TEST_CASE("denoiser conditionals are normalized distributions") {
    SyntheticSpec spec;
    spec.sample_count = 300;
    auto corpus = sandbox::gen_synthetic_corpus(spec);
    auto model = sandbox::train_toy_denoiser(records_for(corpus, uniform_cfg(3)));

    CHECK(model.vocabulary().size() < 100);
    CHECK(std::is_sorted(model.vocabulary().begin(), model.vocabulary().end()));

    auto check_normalized = [&](int offset, const std::string& neighbor) {
        auto dist = model.conditional(offset, neighbor);
        REQUIRE(dist.size() == model.vocabulary().size());
        double sum = 0.0;
        for (double p : dist) {
            CHECK(p >= 0.0);
            sum += p;
        }
        CHECK(std::abs(sum - 1.0) <= 1e-9);
    };
    check_normalized(-1, "=");      // a context the corpus exercises heavily
    check_normalized(1, ";");
    check_normalized(-3, "return");
    check_normalized(2, "no-such-token");  // unseen context: uniform
    auto unseen = model.conditional(2, "no-such-token");
    for (double p : unseen) CHECK(p == doctest::Approx(1.0 / model.vocabulary().size()));
}

TEST_CASE("huge smoothing flattens every conditional to uniform") {
    SyntheticSpec spec;
    spec.sample_count = 100;
    auto corpus = sandbox::gen_synthetic_corpus(spec);
    auto model = sandbox::train_toy_denoiser(records_for(corpus, uniform_cfg(4)), 1e15);
    const double u = 1.0 / model.vocabulary().size();
    for (const auto& neighbor : model.vocabulary()) {
        auto dist = model.conditional(-1, neighbor);
        for (double p : dist) CHECK(std::abs(p - u) <= 1e-9);
    }
}

TEST_CASE("denoiser predictions are invariant under corpus duplication") {
    SyntheticSpec spec;
    spec.sample_count = 150;
    auto corpus = sandbox::gen_synthetic_corpus(spec);
    auto records = records_for(corpus, uniform_cfg(5));
    auto doubled = records;
    doubled.insert(doubled.end(), records.begin(), records.end());

    auto one = sandbox::train_toy_denoiser(records);
    auto two = sandbox::train_toy_denoiser(doubled);
    REQUIRE(one.vocabulary() == two.vocabulary());

    // Probe every masked position of a held-out slice.
    SyntheticSpec probe_spec = spec;
    probe_spec.seed = 99;
    probe_spec.sample_count = 40;
    auto probe = sandbox::gen_synthetic_corpus(probe_spec);
    for (const auto& s : probe) {
        auto recs = dataset::make_records(s, uniform_cfg(6));
        for (const auto& r : recs) {
            for (std::size_t i = 0; i < r.mask.size(); ++i) {
                if (!r.mask[i]) continue;
                CHECK(one.predict(r.tokens, r.mask, i) == two.predict(r.tokens, r.mask, i));
            }
        }
    }
}

TEST_CASE("denoiser learns a dominant context") {
    // Hand-built records: the token after "answer" is always "42".
    std::vector<dataset::TrainingRecord> records;
    for (int i = 0; i < 20; ++i) {
        dataset::TrainingRecord rec;
        rec.id = "drill-" + std::to_string(i);
        rec.role = dataset::Role::logical;
        rec.sigma = 0.5;
        rec.t = 0.0;
        rec.weight = Weight::soft(1.0);
        rec.mode = Mode::bernoulli;
        rec.tokens = {"answer", "42", "stop", "<eos>"};
        rec.indicator = {0, 1, 0, 0};
        rec.mask = {0, 1, 0, 0};  // the "42" is the masked target
        rec.blocks = {{0, 4}};
        records.push_back(std::move(rec));
    }
    auto model = sandbox::train_toy_denoiser(records);
    CHECK(model.predict({"answer", "??", "stop", "<eos>"}, {0, 1, 0, 0}, 1) == "42");
}

TEST_CASE("eval_by_category splits accuracy by the density indicator") {
    SyntheticSpec spec;
    spec.sample_count = 60;
    auto corpus = sandbox::gen_synthetic_corpus(spec);
    auto heldout = records_for(corpus, uniform_cfg(7));

    SUBCASE("an oracle predictor scores 1.0 everywhere") {
        sandbox::Predictor oracle = [](const std::vector<std::string>& tokens,
                                       const std::vector<std::uint8_t>&, std::size_t pos) {
            return tokens[pos];
        };
        auto acc = sandbox::eval_by_category(oracle, heldout);
        REQUIRE(acc.dense.has_value());
        REQUIRE(acc.sparse.has_value());
        CHECK(*acc.dense == 1.0);
        CHECK(*acc.sparse == 1.0);
        CHECK(acc.overall == 1.0);
        CHECK(acc.dense_events > 0);
        CHECK(acc.sparse_events > 0);
    }
    SUBCASE("a constant wrong predictor scores 0.0") {
        sandbox::Predictor junk = [](const std::vector<std::string>&,
                                     const std::vector<std::uint8_t>&, std::size_t) {
            return std::string("no-such-token");
        };
        auto acc = sandbox::eval_by_category(junk, heldout);
        CHECK(acc.overall == 0.0);
    }
    SUBCASE("a category with no masked events reports absent, not zero") {
        auto rec = heldout[0];
        for (std::size_t i = 0; i < rec.mask.size(); ++i)
            rec.mask[i] = rec.indicator[i] ? 0 : rec.mask[i];
        sandbox::Predictor oracle = [](const std::vector<std::string>& tokens,
                                       const std::vector<std::uint8_t>&, std::size_t pos) {
            return tokens[pos];
        };
        auto acc = sandbox::eval_by_category(oracle, {rec});
        CHECK_FALSE(acc.dense.has_value());
        CHECK(acc.dense_events == 0);
    }
}

TEST_CASE("a trained denoiser beats chance on the template") {
    SyntheticSpec spec;
    spec.sample_count = 400;
    auto corpus = sandbox::gen_synthetic_corpus(spec);

    SchedulerConfig train_cfg;
    train_cfg.weight = Weight::soft(2.0);
    train_cfg.complement = true;
    train_cfg.global_seed = 12;
    auto model = sandbox::train_toy_denoiser(records_for(corpus, train_cfg));

    SyntheticSpec heldout_spec = spec;
    heldout_spec.seed = 1234;
    heldout_spec.sample_count = 100;
    auto heldout = records_for(sandbox::gen_synthetic_corpus(heldout_spec), uniform_cfg(13));

    auto acc = sandbox::eval_by_category(model, heldout);
    const double chance = 1.0 / double(model.vocabulary().size());
    REQUIRE(acc.dense.has_value());
    REQUIRE(acc.sparse.has_value());
    CHECK(*acc.dense > 3 * chance);
    CHECK(*acc.sparse > 3 * chance);
}

TEST_CASE("training only on structure-focused records favors sparse positions") {
    SyntheticSpec spec;
    spec.sample_count = 300;

    int sparse_wins = 0;
    for (std::uint64_t seed : {1, 2, 3, 4, 5}) {
        SyntheticSpec seeded = spec;
        seeded.seed = seed;
        auto corpus = sandbox::gen_synthetic_corpus(seeded);

        SchedulerConfig cfg;
        cfg.weight = Weight::soft(2.0);
        cfg.complement = true;
        cfg.global_seed = seed;
        auto all = records_for(corpus, cfg);
        std::vector<dataset::TrainingRecord> syntactic_only;
        for (auto& r : all)
            if (r.role == dataset::Role::syntactic) syntactic_only.push_back(std::move(r));
        auto model = sandbox::train_toy_denoiser(syntactic_only);

        SyntheticSpec heldout_spec = seeded;
        heldout_spec.seed = seed + 500;
        heldout_spec.sample_count = 100;
        auto heldout =
            records_for(sandbox::gen_synthetic_corpus(heldout_spec), uniform_cfg(seed + 900));
        auto acc = sandbox::eval_by_category(model, heldout);
        REQUIRE(acc.dense.has_value());
        REQUIRE(acc.sparse.has_value());
        sparse_wins += *acc.sparse >= *acc.dense ? 1 : 0;
    }
    CHECK(sparse_wins >= 3);  // majority over 5 seeds
}

TEST_CASE("run_experiment sweeps configs deterministically") {
    SyntheticSpec spec;
    spec.sample_count = 250;
    auto configs = sandbox::default_experiment_configs();
    REQUIRE(configs.size() == 2);

    const std::vector<std::uint64_t> seeds = {1, 2, 3};
    auto table = sandbox::run_experiment(spec, configs, seeds);
    REQUIRE(table.runs.size() == configs.size() * seeds.size());
    REQUIRE(table.summaries.size() == configs.size());
    for (const auto& summary : table.summaries) {
        CHECK(summary.median_overall > 0.0);
        CHECK(summary.median_overall <= 1.0);
    }

    auto again = sandbox::run_experiment(spec, configs, seeds);
    CHECK(sandbox::to_json(table) == sandbox::to_json(again));

    auto text = sandbox::render_table(table);
    for (const auto& config : configs)
        CHECK(text.find(config.label) != std::string::npos);

    CHECK_THROWS_AS(sandbox::run_experiment(spec, {}, seeds), ArgumentError);
    CHECK_THROWS_AS(sandbox::run_experiment(spec, configs, {}), ArgumentError);
}
