#include "densched/sandbox.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "densched/errors.hpp"
#include "densched/rng.hpp"
#include "json.hpp"

namespace densched::sandbox {

using ordered_json = nlohmann::ordered_json;
using dataset::TrainingRecord;

namespace {

std::uint64_t derive_seed(std::uint64_t base, std::string_view tag, std::uint64_t run_seed) {
    return mix64(mix64(base ^ fnv1a64(tag)) ^ run_seed);
}

}  // namespace

std::vector<AnnotatedSample> gen_synthetic_corpus(const SyntheticSpec& spec) {
    if (spec.value_hi <= spec.value_lo) {
        throw ArgumentError("synthetic spec: value range needs at least two values");
    }
    const auto range = static_cast<std::uint64_t>(spec.value_hi - spec.value_lo) + 1;

    std::vector<AnnotatedSample> corpus;
    corpus.reserve(spec.sample_count);
    for (std::size_t index = 0; index < spec.sample_count; ++index) {
        RngStream rng = derive_stream(spec.seed, std::string_view("sandbox/corpus"), index);
        const int a = spec.value_lo + static_cast<int>(rng.next_below(range));
        // b drawn uniformly from the remaining values, never equal to a.
        int b = spec.value_lo + static_cast<int>(rng.next_below(range - 1));
        if (b >= a) ++b;
        const bool add = rng.next_below(2) == 0;
        const int x = add ? a + b : a - b;
        const char* cmp = a < b ? "<" : ">";
        const char* op = add ? "+" : "-";

        //  0 1 2 3 4 5 6 7 8  9 10  11 12 13 14 15 16  17 18 19 20 21     22
        //  a = A ; b = B ; if a CMP b  :  r  =  a  OP   b  =  X  ; return  X
        const std::string a_str = std::to_string(a);
        const std::string b_str = std::to_string(b);
        const std::string x_str = std::to_string(x);
        const std::vector<std::string> surfaces = {
            "a", "=", a_str, ";", "b",  "=", b_str, ";", "if",     "a", cmp, "b",
            ":", "r", "=",   "a", op,   "b", "=",   x_str, ";",    "return",  x_str};

        AnnotatedSample sample;
        char id[16];
        std::snprintf(id, sizeof id, "syn-%06zu", index);
        sample.id = id;
        sample.prompt = "evaluate the snippet";
        sample.domain = Domain::code;
        std::string answer;
        for (std::size_t t = 0; t < surfaces.size(); ++t) {
            if (t > 0) answer += ' ';
            const std::size_t start = answer.size();
            answer += surfaces[t];
            sample.tokens.push_back({surfaces[t], {start, answer.size()}});
        }
        sample.answer = std::move(answer);
        // Dense by construction: guard "a CMP b", chain "a OP b = X", final X.
        sample.dense_spans = {
            {sample.tokens[9].span.start, sample.tokens[11].span.end},
            {sample.tokens[15].span.start, sample.tokens[19].span.end},
            {sample.tokens[22].span.start, sample.tokens[22].span.end}};
        sample.indicator.assign(sample.tokens.size() + 1, 0);
        for (const std::size_t t : {std::size_t{9}, std::size_t{10}, std::size_t{11},
                                    std::size_t{15}, std::size_t{16}, std::size_t{17},
                                    std::size_t{18}, std::size_t{19}, std::size_t{22}}) {
            sample.indicator[t] = 1;
        }
        corpus.push_back(std::move(sample));
    }
    return corpus;
}

ToyDenoiser::ToyDenoiser(double alpha, unsigned radius) : alpha_(alpha), radius_(radius) {
    if (!(alpha >= 0.0) || !std::isfinite(alpha)) {
        throw ArgumentError("denoiser: alpha must be finite and non-negative");
    }
    if (radius == 0) throw ArgumentError("denoiser: radius must be positive");
}

void ToyDenoiser::train(const std::vector<TrainingRecord>& records) {
    if (records.empty()) throw ArgumentError("denoiser: empty training set");

    vocab_.clear();
    vocab_ids_.clear();
    counts_.clear();
    for (const TrainingRecord& record : records) {
        for (const std::string& token : record.tokens) vocab_ids_.emplace(token, 0);
    }
    vocab_.reserve(vocab_ids_.size());
    for (auto& [token, id] : vocab_ids_) {
        id = vocab_.size();
        vocab_.push_back(token);
    }
    prior_.assign(vocab_.size(), 0);
    prior_total_ = 0;

    const auto r = static_cast<std::ptrdiff_t>(radius_);
    for (const TrainingRecord& record : records) {
        const auto len = static_cast<std::ptrdiff_t>(record.tokens.size());
        for (std::ptrdiff_t pos = 0; pos < len; ++pos) {
            if (!record.mask[static_cast<std::size_t>(pos)]) continue;
            const std::size_t target = vocab_ids_.at(record.tokens[static_cast<std::size_t>(pos)]);
            ++prior_[target];
            ++prior_total_;
            for (std::ptrdiff_t d = -r; d <= r; ++d) {
                if (d == 0) continue;
                const std::ptrdiff_t q = pos + d;
                if (q < 0 || q >= len) continue;
                if (record.mask[static_cast<std::size_t>(q)]) continue;
                const std::size_t neighbor =
                    vocab_ids_.at(record.tokens[static_cast<std::size_t>(q)]);
                auto& table = counts_[{static_cast<int>(d), neighbor}];
                if (table.empty()) table.assign(vocab_.size(), 0);
                ++table[target];
            }
        }
    }
}

std::vector<double> ToyDenoiser::conditional(int offset, const std::string& neighbor) const {
    const std::size_t v = vocab_.size();
    if (v == 0) throw ArgumentError("denoiser: conditional queried before training");
    std::vector<double> probs(v, 1.0 / static_cast<double>(v));
    const auto id_it = vocab_ids_.find(neighbor);
    if (id_it == vocab_ids_.end()) return probs;
    const auto it = counts_.find({offset, id_it->second});
    if (it == counts_.end()) return probs;

    const auto& table = it->second;
    std::uint64_t total = 0;
    for (const std::uint64_t c : table) total += c;
    if (total == 0) return probs;
    const double denom = 1.0 + alpha_ * static_cast<double>(v);
    for (std::size_t i = 0; i < v; ++i) {
        const double freq = static_cast<double>(table[i]) / static_cast<double>(total);
        probs[i] = (freq + alpha_) / denom;
    }
    return probs;
}

std::string ToyDenoiser::predict(const std::vector<std::string>& tokens,
                                 const std::vector<std::uint8_t>& mask,
                                 std::size_t pos) const {
    const std::size_t v = vocab_.size();
    if (v == 0) throw ArgumentError("denoiser: predict queried before training");
    if (pos >= tokens.size() || tokens.size() != mask.size()) {
        throw ArgumentError("denoiser: predict position out of range");
    }

    const double denom = 1.0 + alpha_ * static_cast<double>(v);
    std::vector<double> scores(v, 0.0);
    if (prior_total_ > 0) {
        for (std::size_t i = 0; i < v; ++i) {
            const double freq =
                static_cast<double>(prior_[i]) / static_cast<double>(prior_total_);
            scores[i] = std::log((freq + alpha_) / denom);
        }
    }

    const auto r = static_cast<std::ptrdiff_t>(radius_);
    const auto len = static_cast<std::ptrdiff_t>(tokens.size());
    for (std::ptrdiff_t d = -r; d <= r; ++d) {
        if (d == 0) continue;
        const std::ptrdiff_t q = static_cast<std::ptrdiff_t>(pos) + d;
        if (q < 0 || q >= len) continue;
        if (mask[static_cast<std::size_t>(q)]) continue;
        const auto id_it = vocab_ids_.find(tokens[static_cast<std::size_t>(q)]);
        if (id_it == vocab_ids_.end()) continue;  // out-of-vocabulary context
        const auto ctx = counts_.find({static_cast<int>(d), id_it->second});
        if (ctx == counts_.end()) continue;  // unseen context: uniform, argmax-neutral
        const auto& table = ctx->second;
        std::uint64_t total = 0;
        for (const std::uint64_t c : table) total += c;
        if (total == 0) continue;
        for (std::size_t i = 0; i < v; ++i) {
            const double freq = static_cast<double>(table[i]) / static_cast<double>(total);
            scores[i] += std::log((freq + alpha_) / denom);
        }
    }

    std::size_t best = 0;
    for (std::size_t i = 1; i < v; ++i) {
        if (scores[i] > scores[best]) best = i;
    }
    return vocab_[best];
}

ToyDenoiser train_toy_denoiser(const std::vector<TrainingRecord>& records, double alpha,
                               unsigned radius) {
    ToyDenoiser model(alpha, radius);
    model.train(records);
    return model;
}

CategoryAccuracy eval_by_category(const Predictor& predictor,
                                  const std::vector<TrainingRecord>& heldout) {
    CategoryAccuracy result;
    std::uint64_t dense_hits = 0;
    std::uint64_t sparse_hits = 0;
    for (const TrainingRecord& record : heldout) {
        for (std::size_t pos = 0; pos < record.mask.size(); ++pos) {
            if (!record.mask[pos]) continue;
            const bool hit = predictor(record.tokens, record.mask, pos) == record.tokens[pos];
            if (record.indicator[pos]) {
                ++result.dense_events;
                dense_hits += hit;
            } else {
                ++result.sparse_events;
                sparse_hits += hit;
            }
        }
    }
    if (result.dense_events > 0) {
        result.dense = static_cast<double>(dense_hits) /
                       static_cast<double>(result.dense_events);
    }
    if (result.sparse_events > 0) {
        result.sparse = static_cast<double>(sparse_hits) /
                        static_cast<double>(result.sparse_events);
    }
    const std::uint64_t events = result.dense_events + result.sparse_events;
    result.overall = events > 0 ? static_cast<double>(dense_hits + sparse_hits) /
                                      static_cast<double>(events)
                                : 0.0;
    return result;
}

CategoryAccuracy eval_by_category(const ToyDenoiser& model,
                                  const std::vector<TrainingRecord>& heldout) {
    return eval_by_category(
        [&model](const std::vector<std::string>& tokens,
                 const std::vector<std::uint8_t>& mask,
                 std::size_t pos) { return model.predict(tokens, mask, pos); },
        heldout);
}

namespace {

std::optional<double> median_of(std::vector<double> values) {
    if (values.empty()) return std::nullopt;
    std::sort(values.begin(), values.end());
    const std::size_t mid = values.size() / 2;
    if (values.size() % 2 == 1) return values[mid];
    return 0.5 * (values[mid - 1] + values[mid]);
}

}  // namespace

ExperimentTable run_experiment(const SyntheticSpec& spec,
                               const std::vector<ExperimentConfig>& configs,
                               const std::vector<std::uint64_t>& seeds) {
    if (configs.empty()) throw ArgumentError("run_experiment: needs at least one config");
    if (seeds.empty()) throw ArgumentError("run_experiment: needs at least one seed");

    ExperimentTable table;
    for (const ExperimentConfig& config : configs) {
        std::vector<double> dense_vals, sparse_vals, overall_vals;
        for (const std::uint64_t seed : seeds) {
            SyntheticSpec train_spec = spec;
            train_spec.seed = derive_seed(spec.seed, "sandbox/train", seed);
            const auto corpus = gen_synthetic_corpus(train_spec);

            SchedulerConfig sched_cfg = config.scheduler;
            sched_cfg.global_seed = seed;
            std::vector<TrainingRecord> records;
            for (const AnnotatedSample& sample : corpus) {
                for (auto& record : dataset::make_records(sample, sched_cfg)) {
                    records.push_back(std::move(record));
                }
            }
            const ToyDenoiser model = train_toy_denoiser(records);

            SyntheticSpec heldout_spec = spec;
            heldout_spec.sample_count = std::max<std::size_t>(200, spec.sample_count / 4);
            heldout_spec.seed = derive_seed(spec.seed, "sandbox/heldout", seed);
            const auto heldout = gen_synthetic_corpus(heldout_spec);

            // Shared evaluation protocol: the mid-generation state. Dense
            // tokens decode last, so the deployment-relevant question is how
            // well the model fills them in while half the sparse scaffold is
            // still hidden: dense-first hard masks at sigma = (1 + rho) / 2.
            std::uint64_t held_dense = 0, held_total = 0;
            for (const AnnotatedSample& sample : heldout) {
                for (const std::uint8_t bit : sample.indicator) held_dense += bit;
                held_total += sample.indicator.size();
            }
            const double rho = held_total ? double(held_dense) / double(held_total) : 0.0;
            SchedulerConfig eval_cfg;
            eval_cfg.weight = Weight::hard_dense();
            eval_cfg.sigma_lo = (1.0 + rho) / 2.0;
            eval_cfg.sigma_hi = eval_cfg.sigma_lo;
            eval_cfg.mode = Mode::bernoulli;
            eval_cfg.scope = Scope::per_sequence;
            eval_cfg.complement = false;
            eval_cfg.global_seed = derive_seed(spec.seed, "sandbox/eval", seed);
            std::vector<TrainingRecord> heldout_records;
            for (const AnnotatedSample& sample : heldout) {
                for (auto& record : dataset::make_records(sample, eval_cfg)) {
                    heldout_records.push_back(std::move(record));
                }
            }

            RunResult run;
            run.label = config.label;
            run.seed = seed;
            run.accuracy = eval_by_category(model, heldout_records);
            if (run.accuracy.dense) dense_vals.push_back(*run.accuracy.dense);
            if (run.accuracy.sparse) sparse_vals.push_back(*run.accuracy.sparse);
            overall_vals.push_back(run.accuracy.overall);
            table.runs.push_back(std::move(run));
        }
        ConfigSummary summary;
        summary.label = config.label;
        summary.median_dense = median_of(std::move(dense_vals));
        summary.median_sparse = median_of(std::move(sparse_vals));
        summary.median_overall = median_of(std::move(overall_vals)).value_or(0.0);
        table.summaries.push_back(std::move(summary));
    }
    return table;
}

std::vector<ExperimentConfig> default_experiment_configs() {
    // Both variants draw sigma from [0.3, 0.6]. The template sits at
    // rho = 0.375, so w=2 saturates once sigma crosses (w*D + S) / (w*N)
    // = 0.6875; capping the band below that keeps the soft law exact and
    // the two variants comparable across the whole range.
    ExperimentConfig uniform;
    uniform.label = "uniform w=1";
    uniform.scheduler.weight = Weight::soft(1.0);
    uniform.scheduler.sigma_lo = 0.3;
    uniform.scheduler.sigma_hi = 0.6;
    uniform.scheduler.complement = false;

    ExperimentConfig priority;
    priority.label = "priority w=2 complementary";
    priority.scheduler.weight = Weight::soft(2.0);
    priority.scheduler.sigma_lo = 0.3;
    priority.scheduler.sigma_hi = 0.6;
    priority.scheduler.complement = true;

    return {std::move(uniform), std::move(priority)};
}

namespace {

ordered_json accuracy_to_json(const CategoryAccuracy& accuracy) {
    ordered_json doc;
    doc["dense"] = accuracy.dense ? ordered_json(*accuracy.dense) : ordered_json(nullptr);
    doc["sparse"] = accuracy.sparse ? ordered_json(*accuracy.sparse) : ordered_json(nullptr);
    doc["overall"] = accuracy.overall;
    doc["dense_events"] = accuracy.dense_events;
    doc["sparse_events"] = accuracy.sparse_events;
    return doc;
}

std::string format_cell(const std::optional<double>& value) {
    if (!value) return "-";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", *value);
    return buf;
}

}  // namespace

std::string to_json(const ExperimentTable& table) {
    ordered_json doc;
    doc["runs"] = ordered_json::array();
    for (const RunResult& run : table.runs) {
        ordered_json item;
        item["label"] = run.label;
        item["seed"] = run.seed;
        item["accuracy"] = accuracy_to_json(run.accuracy);
        doc["runs"].push_back(std::move(item));
    }
    doc["summaries"] = ordered_json::array();
    for (const ConfigSummary& summary : table.summaries) {
        ordered_json item;
        item["label"] = summary.label;
        item["median_dense"] = summary.median_dense ? ordered_json(*summary.median_dense)
                                                    : ordered_json(nullptr);
        item["median_sparse"] = summary.median_sparse
                                    ? ordered_json(*summary.median_sparse)
                                    : ordered_json(nullptr);
        item["median_overall"] = summary.median_overall;
        doc["summaries"].push_back(std::move(item));
    }
    return doc.dump(2);
}

std::string render_table(const ExperimentTable& table) {
    std::string out;
    char line[160];
    std::snprintf(line, sizeof line, "%-34s %8s %8s %8s %8s\n", "config", "seed", "dense",
                  "sparse", "overall");
    out += line;
    for (const RunResult& run : table.runs) {
        std::snprintf(line, sizeof line, "%-34s %8llu %8s %8s %8.4f\n", run.label.c_str(),
                      static_cast<unsigned long long>(run.seed),
                      format_cell(run.accuracy.dense).c_str(),
                      format_cell(run.accuracy.sparse).c_str(), run.accuracy.overall);
        out += line;
    }
    out += '\n';
    std::snprintf(line, sizeof line, "%-34s %8s %8s %8s %8s\n", "config (medians)", "",
                  "dense", "sparse", "overall");
    out += line;
    for (const ConfigSummary& summary : table.summaries) {
        std::snprintf(line, sizeof line, "%-34s %8s %8s %8s %8.4f\n", summary.label.c_str(),
                      "", format_cell(summary.median_dense).c_str(),
                      format_cell(summary.median_sparse).c_str(), summary.median_overall);
        out += line;
    }
    return out;
}

}  // namespace densched::sandbox
