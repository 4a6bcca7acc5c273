// densched: turn SFT corpora into density-aware complementary masked training
// records, and audit what came out. One binary, four subcommands: extract,
// schedule, audit, sandbox. Exit codes: 0 success, 1 runtime/data failure,
// 2 usage.
#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "densched/audit.hpp"
#include "densched/dataset.hpp"
#include "densched/errors.hpp"
#include "densched/extract.hpp"
#include "densched/rng.hpp"
#include "densched/sandbox.hpp"

using namespace densched;

namespace {

// "LO:HI" -> pair of doubles.
std::pair<double, double> parse_band(const std::string& text) {
    const auto colon = text.find(':');
    if (colon == std::string::npos) {
        throw ArgumentError("expected LO:HI, got '" + text + "'");
    }
    try {
        return {std::stod(text.substr(0, colon)), std::stod(text.substr(colon + 1))};
    } catch (const std::exception&) {
        throw ArgumentError("expected LO:HI, got '" + text + "'");
    }
}

// "N:D" -> pair of sizes.
std::pair<std::size_t, std::size_t> parse_shape(const std::string& text) {
    const auto colon = text.find(':');
    if (colon == std::string::npos) {
        throw ArgumentError("expected N:D, got '" + text + "'");
    }
    try {
        const long long n = std::stoll(text.substr(0, colon));
        const long long d = std::stoll(text.substr(colon + 1));
        if (n <= 0 || d < 0) throw ArgumentError("shape values must be positive");
        return {std::size_t(n), std::size_t(d)};
    } catch (const ArgumentError&) {
        throw;
    } catch (const std::exception&) {
        throw ArgumentError("expected N:D, got '" + text + "'");
    }
}

// weight spelled as a number or a hard-limit name.
Weight parse_weight(const std::string& text) {
    if (text == "hard_dense") return Weight::hard_dense();
    if (text == "hard_sparse") return Weight::hard_sparse();
    try {
        return Weight::soft(std::stod(text));
    } catch (const std::exception&) {
        throw ArgumentError("weight must be a number, 'hard_dense', or 'hard_sparse'");
    }
}

std::uint64_t seed_or_env(const std::optional<std::uint64_t>& flag) {
    if (flag) return *flag;
    if (const char* env = std::getenv("DENSCHED_SEED")) {
        char* end = nullptr;
        const auto value = std::strtoull(env, &end, 10);
        if (end == env || *end != '\0') {
            throw ArgumentError("DENSCHED_SEED must be an unsigned integer");
        }
        return value;
    }
    return 0;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out << text;
    if (!out) throw IoError("write failed on " + path);
}

std::vector<dataset::TrainingRecord> load_training_records(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::vector<dataset::TrainingRecord> records;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            records.push_back(dataset::record_from_json_line(line));
        } catch (const SchemaError& e) {
            throw SchemaError(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    if (in.bad()) throw IoError("read failed on " + path);
    return records;
}

RawRecord sample_to_raw(const AnnotatedSample& sample) {
    RawRecord rec;
    rec.id = sample.id;
    rec.prompt = sample.prompt;
    rec.answer = sample.answer;
    rec.domain = sample.domain;
    rec.spans = sample.dense_spans;
    std::vector<TokenSpan> offsets;
    offsets.reserve(sample.tokens.size());
    for (const auto& token : sample.tokens) offsets.push_back(token.span);
    rec.token_offsets = std::move(offsets);
    return rec;
}

void write_rejects(const std::string& out_path, const std::vector<Reject>& rejects) {
    if (rejects.empty()) return;
    std::ostringstream body;
    for (const auto& r : rejects) {
        nlohmann::ordered_json line;
        line["id"] = r.id;
        line["line"] = r.line_no;
        line["reason"] = r.reason;
        body << line.dump() << '\n';
    }
    write_text(out_path + ".rejects.jsonl", body.str());
}

// ---- extract ----

struct ExtractArgs {
    std::string domain;
    std::string rules_path;
    std::string in_path;
    std::string out_path;
    bool import_spans = false;
};

int run_extract(const ExtractArgs& args) {
    if (!args.import_spans && args.domain.empty() && args.rules_path.empty()) {
        throw ArgumentError("extract needs --domain or --rules (or --import-spans)");
    }

    auto loaded = dataset::load_sft_corpus(args.in_path);
    std::vector<Reject> rejects = loaded.rejects;
    std::vector<AnnotatedSample> samples;

    if (args.import_spans) {
        auto imported = extract::import_annotations(loaded.records);
        samples = std::move(imported.samples);
        for (auto& r : imported.rejects) rejects.push_back(std::move(r));
    } else {
        const extract::RuleSet* rules = nullptr;
        std::optional<extract::RuleSet> owned;
        if (!args.rules_path.empty()) {
            owned.emplace(extract::RuleSet::load_file(args.rules_path));
            if (!args.domain.empty() &&
                domain_from_string(args.domain) != owned->domain()) {
                throw ArgumentError("--domain disagrees with the rule file's domain");
            }
            rules = &*owned;
        } else {
            const auto domain = domain_from_string(args.domain);
            if (!domain) throw ArgumentError("--domain must be code or math");
            rules = &extract::RuleSet::builtin(*domain);
        }
        for (std::size_t i = 0; i < loaded.records.size(); ++i) {
            try {
                samples.push_back(extract::annotate(loaded.records[i], *rules));
            } catch (const std::exception& e) {
                rejects.push_back({loaded.records[i].id, 0, e.what()});
            }
        }
    }

    std::ostringstream body;
    for (const auto& sample : samples) body << dataset::to_json_line(sample_to_raw(sample)) << '\n';
    write_text(args.out_path, body.str());
    write_rejects(args.out_path, rejects);

    std::printf("accepted %zu rejected %zu -> %s\n", samples.size(), rejects.size(),
                args.out_path.c_str());
    if (!samples.empty()) {
        const auto stats = extract::density_stats(samples);
        for (const auto& d : stats.per_domain) {
            std::printf("  %s: samples=%zu mean_rho=%.4f\n",
                        std::string(to_string(d.domain)).c_str(), d.samples, d.mean_rho);
        }
    }
    for (const auto& r : rejects) {
        std::fprintf(stderr, "reject %s line %zu: %s\n", r.id.c_str(), r.line_no,
                     r.reason.c_str());
    }
    return 0;
}

// ---- schedule ----

struct ScheduleArgs {
    std::string in_path;
    std::string out_path;
    std::optional<std::string> weight;
    std::optional<std::string> hard;
    std::string sigma = "0.3:0.8";
    std::string mode = "bernoulli";
    std::string scope = "sequence";
    std::uint32_t block_size = 32;
    std::optional<double> mix_frac;
    std::optional<std::uint64_t> seed;
    bool no_complement = false;
    bool eos_dense = false;
    unsigned jobs = 1;
};

int run_schedule(const ScheduleArgs& args) {
    SchedulerConfig config;
    if (args.weight && args.hard) {
        throw ArgumentError("--weight and --hard are mutually exclusive");
    }
    if (args.hard) {
        if (*args.hard == "dense") config.weight = Weight::hard_dense();
        else if (*args.hard == "sparse") config.weight = Weight::hard_sparse();
        else throw ArgumentError("--hard takes 'dense' or 'sparse'");
    } else if (args.weight) {
        config.weight = parse_weight(*args.weight);
    }
    const auto band = parse_band(args.sigma);
    config.sigma_lo = band.first;
    config.sigma_hi = band.second;
    if (args.mode == "bernoulli") config.mode = Mode::bernoulli;
    else if (args.mode == "exact") config.mode = Mode::exact_count;
    else throw ArgumentError("--mode takes 'bernoulli' or 'exact'");
    if (args.scope == "sequence") config.scope = Scope::per_sequence;
    else if (args.scope == "block") config.scope = Scope::per_block;
    else throw ArgumentError("--scope takes 'sequence' or 'block'");
    config.block_size = args.block_size;
    config.complement = !args.no_complement;
    config.eos_is_dense = args.eos_dense;
    config.global_seed = seed_or_env(args.seed);
    if (auto problems = validate_config(config); !problems.empty()) {
        throw ArgumentError(problems.front().field + ": " + problems.front().message);
    }
    if (args.mix_frac && !(*args.mix_frac >= 0.0 && *args.mix_frac <= 1.0)) {
        throw ArgumentError("--mix-frac must lie in [0, 1]");
    }
    if (args.jobs == 0) throw ArgumentError("--jobs must be at least 1");

    auto loaded = dataset::load_sft_corpus(args.in_path);
    auto imported = extract::import_annotations(loaded.records, config.eos_is_dense);
    auto samples = std::move(imported.samples);
    if (args.mix_frac) {
        samples = dataset::mix_annotated(std::move(samples), *args.mix_frac,
                                         config.global_seed);
    }

    auto result = dataset::emit_training_records(samples, config, args.out_path, args.jobs);

    std::size_t upstream_rejects = loaded.rejects.size() + imported.rejects.size();
    std::printf("samples %zu records %zu (logical %zu, syntactic %zu) -> %s\n",
                result.manifest.samples, result.manifest.records, result.manifest.logical,
                result.manifest.syntactic, args.out_path.c_str());
    std::printf("seed %llu digest %s rejects %zu\n",
                static_cast<unsigned long long>(result.manifest.seed),
                result.manifest.digest_hex.c_str(),
                upstream_rejects + result.rejects.size());
    for (const auto& r : loaded.rejects)
        std::fprintf(stderr, "reject line %zu: %s\n", r.line_no, r.reason.c_str());
    for (const auto& r : imported.rejects)
        std::fprintf(stderr, "reject %s: %s\n", r.id.c_str(), r.reason.c_str());
    for (const auto& r : result.rejects)
        std::fprintf(stderr, "reject %s: %s\n", r.id.c_str(), r.reason.c_str());
    return 0;
}

// ---- audit ----

struct AuditArgs {
    std::string in_path;
    std::string report;
    std::string out_path;
    std::size_t min_records = 1000;
    // symmetry-only knobs
    std::string shape;
    std::string sigma = "0.5:0.5";
    std::optional<std::string> sigma_b;
    std::string weight_a = "2";
    std::optional<std::string> weight_b;
    std::size_t draws = 100000;
    std::optional<std::uint64_t> seed;
};

int run_audit(const AuditArgs& args) {
    const std::string out_path =
        args.out_path.empty() ? "audit_" + args.report + ".json" : args.out_path;

    if (args.report == "symmetry") {
        if (args.shape.empty()) throw ArgumentError("symmetry needs --shape N:D");
        const auto [n, dense] = parse_shape(args.shape);
        const auto band_a = parse_band(args.sigma);
        const auto band_b = args.sigma_b ? parse_band(*args.sigma_b) : band_a;
        const auto weight_a = parse_weight(args.weight_a);
        Weight weight_b = weight_a;
        if (args.weight_b) {
            weight_b = parse_weight(*args.weight_b);
        } else if (weight_a.kind == Weight::Kind::soft && weight_a.value > 0.0) {
            weight_b = Weight::soft(1.0 / weight_a.value);
        }
        const auto seed = seed_or_env(args.seed);

        audit::SymmetrySide a, b;
        a.n = b.n = n;
        a.dense = b.dense = dense;
        a.config.weight = weight_a;
        a.config.sigma_lo = band_a.first;
        a.config.sigma_hi = band_a.second;
        a.config.global_seed = seed;
        b.config.weight = weight_b;
        b.config.sigma_lo = band_b.first;
        b.config.sigma_hi = band_b.second;
        b.config.global_seed = mix64(seed ^ 0x5157634c69646573ULL);  // independent side

        const auto report = audit::symmetry_report(a, b, args.draws);
        std::printf("symmetry TV %.6f over %zu draws (%zu occupied cells)\n", report.tv,
                    report.draws, report.cells);
        write_text(out_path, audit::to_json(report));
        return 0;
    }

    auto records = load_training_records(args.in_path);

    if (args.report == "marginal") {
        const auto report = audit::marginal_report(records, args.min_records);
        bool ok = true;
        for (const auto& role : report.roles) {
            std::printf("%-9s records %llu empirical %.5f target %.5f z %+.2f\n",
                        role.role.c_str(), static_cast<unsigned long long>(role.records),
                        role.empirical, role.target, role.z);
            ok = ok && std::abs(role.z) <= 3.0;
        }
        write_text(out_path, audit::to_json(report));
        if (!ok) {
            std::fprintf(stderr, "marginal conservation violated (|z| > 3)\n");
            return 1;
        }
        return 0;
    }

    if (args.report == "ratio") {
        std::vector<dataset::TrainingRecord> logical;
        for (auto& r : records) {
            if (r.role == dataset::Role::logical) logical.push_back(std::move(r));
        }
        const auto report = audit::ratio_report(logical);
        std::printf("p_dense %.5f p_base %.5f w_hat %.4f [%.4f, %.4f]%s%s\n",
                    report.p_dense_hat, report.p_base_hat, report.w_hat, report.ci_lo,
                    report.ci_hi, report.saturated ? " (saturated)" : "",
                    report.undefined ? " (undefined: no sparse mass)" : "");
        write_text(out_path, audit::to_json(report));
        if (report.valid_for_law) {
            const double w = report.weight.value;
            if (w > 0.0 && std::abs(report.w_hat - w) / w > 0.05) {
                std::fprintf(stderr, "ratio law violated: w_hat %.4f vs w %.4f\n",
                             report.w_hat, w);
                return 1;
            }
        }
        return 0;
    }

    if (args.report == "runs") {
        const auto report = audit::run_length_report(records);
        for (const auto& g : report.groups) {
            std::printf("%s: records %llu mean_run %.3f mean_max_run %.3f max %llu\n",
                        g.key.c_str(), static_cast<unsigned long long>(g.records),
                        g.mean_run, g.mean_max_run,
                        static_cast<unsigned long long>(g.max_run));
        }
        write_text(out_path, audit::to_json(report));
        return 0;
    }

    if (args.report == "complement") {
        const auto report = audit::complement_check(records);
        write_text(out_path, audit::to_json(report));
        if (report.skipped) {
            std::printf("complement check skipped: %s\n", report.note.c_str());
            return 0;
        }
        std::printf("pairs %zu violations %zu\n", report.pairs, report.violations.size());
        for (const auto& v : report.violations) {
            std::fprintf(stderr, "violation %s record %zu %s position %td\n", v.id.c_str(),
                         v.record_index, v.kind.c_str(), v.position);
        }
        return report.violations.empty() ? 0 : 1;
    }

    throw ArgumentError("unknown report kind: " + args.report);
}

// ---- sandbox ----

struct SandboxArgs {
    std::string configs_path;
    std::size_t seeds = 5;
    std::size_t samples = 2000;
    std::optional<std::uint64_t> seed;
    std::string out_path = "sandbox_report.json";
};

int run_sandbox(const SandboxArgs& args) {
    sandbox::SyntheticSpec spec;
    spec.sample_count = args.samples;
    spec.seed = args.seed ? *args.seed : spec.seed;

    std::vector<sandbox::ExperimentConfig> configs;
    if (args.configs_path.empty()) {
        configs = sandbox::default_experiment_configs();
    } else {
        std::ifstream in(args.configs_path, std::ios::binary);
        if (!in) throw IoError("cannot open " + args.configs_path);
        nlohmann::ordered_json doc;
        try {
            in >> doc;
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(args.configs_path + ": " + e.what());
        }
        if (!doc.is_array() || doc.empty()) {
            throw ConfigError(args.configs_path + ": expected a non-empty array");
        }
        for (const auto& entry : doc) {
            if (!entry.contains("label") || !entry.contains("config")) {
                throw ConfigError(args.configs_path + ": entries need label and config");
            }
            sandbox::ExperimentConfig config;
            config.label = entry["label"].get<std::string>();
            config.scheduler = dataset::config_from_json(entry["config"].dump());
            configs.push_back(std::move(config));
        }
    }
    if (args.seeds == 0) throw ArgumentError("--seeds must be at least 1");
    std::vector<std::uint64_t> seeds(args.seeds);
    for (std::size_t i = 0; i < seeds.size(); ++i) seeds[i] = i + 1;

    const auto table = sandbox::run_experiment(spec, configs, seeds);
    std::fputs(sandbox::render_table(table).c_str(), stdout);
    write_text(args.out_path, sandbox::to_json(table));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"information-density priority masking toolkit for diffusion LM corpora"};
    app.require_subcommand(1);

    ExtractArgs extract_args;
    auto* cmd_extract = app.add_subcommand("extract", "annotate a raw corpus with dense spans");
    cmd_extract->add_option("--domain", extract_args.domain, "rule domain: code or math");
    cmd_extract->add_option("--rules", extract_args.rules_path, "rule file (JSON)");
    cmd_extract->add_option("--in", extract_args.in_path, "input corpus (JSONL)")->required();
    cmd_extract->add_option("--out", extract_args.out_path, "annotated output (JSONL)")
        ->required();
    cmd_extract->add_flag("--import-spans", extract_args.import_spans,
                          "validate precomputed spans instead of extracting");

    ScheduleArgs schedule_args;
    auto* cmd_schedule =
        app.add_subcommand("schedule", "emit priority-masked training records");
    cmd_schedule->add_option("--in", schedule_args.in_path, "annotated corpus (JSONL)")
        ->required();
    cmd_schedule->add_option("--out", schedule_args.out_path, "record output (JSONL)")
        ->required();
    cmd_schedule->add_option("--weight", schedule_args.weight,
                             "bias weight w (number, hard_dense, hard_sparse)");
    cmd_schedule->add_option("--hard", schedule_args.hard, "hard limit: dense or sparse");
    cmd_schedule->add_option("--sigma", schedule_args.sigma, "noise band LO:HI")->capture_default_str();
    cmd_schedule->add_option("--mode", schedule_args.mode, "bernoulli or exact")->capture_default_str();
    cmd_schedule->add_option("--scope", schedule_args.scope, "sequence or block")->capture_default_str();
    cmd_schedule->add_option("--block-size", schedule_args.block_size, "block length")->capture_default_str();
    cmd_schedule->add_option("--mix-frac", schedule_args.mix_frac,
                             "keep only this fraction annotated, shuffle order");
    cmd_schedule->add_option("--seed", schedule_args.seed,
                             "global seed (falls back to DENSCHED_SEED)");
    cmd_schedule->add_flag("--no-complement", schedule_args.no_complement,
                           "emit only the logical record");
    cmd_schedule->add_flag("--eos-dense", schedule_args.eos_dense,
                           "classify the <eos> slot as dense");
    cmd_schedule->add_option("--jobs", schedule_args.jobs, "worker threads")->capture_default_str();

    AuditArgs audit_args;
    auto* cmd_audit = app.add_subcommand("audit", "statistical reports over record files");
    cmd_audit->add_option("--in", audit_args.in_path, "record file (JSONL)");
    cmd_audit
        ->add_option("--report", audit_args.report,
                     "marginal, ratio, runs, symmetry, or complement")
        ->required();
    cmd_audit->add_option("--out", audit_args.out_path, "JSON report path");
    cmd_audit->add_option("--min-records", audit_args.min_records,
                          "marginal: minimum records")->capture_default_str();
    cmd_audit->add_option("--shape", audit_args.shape, "symmetry: region N:D");
    cmd_audit->add_option("--sigma", audit_args.sigma, "symmetry: noise band LO:HI")->capture_default_str();
    cmd_audit->add_option("--sigma-b", audit_args.sigma_b, "symmetry: side B band");
    cmd_audit->add_option("--weight-a", audit_args.weight_a, "symmetry: side A weight")->capture_default_str();
    cmd_audit->add_option("--weight-b", audit_args.weight_b,
                          "symmetry: side B weight (default 1/weight-a)");
    cmd_audit->add_option("--draws", audit_args.draws, "symmetry: draws per side")->capture_default_str();
    cmd_audit->add_option("--seed", audit_args.seed,
                          "symmetry: seed (falls back to DENSCHED_SEED)");

    SandboxArgs sandbox_args;
    auto* cmd_sandbox =
        app.add_subcommand("sandbox", "synthetic corpus experiment with the toy denoiser");
    cmd_sandbox->add_option("--configs", sandbox_args.configs_path,
                            "experiment config file (JSON array)");
    cmd_sandbox->add_option("--seeds", sandbox_args.seeds, "number of seeds")->capture_default_str();
    cmd_sandbox->add_option("--samples", sandbox_args.samples, "corpus size")->capture_default_str();
    cmd_sandbox->add_option("--seed", sandbox_args.seed, "corpus base seed");
    cmd_sandbox->add_option("--out", sandbox_args.out_path, "JSON report path")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return 2;
    }

    try {
        if (cmd_extract->parsed()) return run_extract(extract_args);
        if (cmd_schedule->parsed()) return run_schedule(schedule_args);
        if (cmd_audit->parsed()) return run_audit(audit_args);
        if (cmd_sandbox->parsed()) return run_sandbox(sandbox_args);
        std::fprintf(stderr, "no subcommand given\n");
        return 2;
    } catch (const ArgumentError& e) {
        std::fprintf(stderr, "usage error: %s\n", e.what());
        return 2;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
