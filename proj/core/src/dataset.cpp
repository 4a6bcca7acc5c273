#include "densched/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <thread>

#include "densched/errors.hpp"
#include "densched/rng.hpp"
#include "densched/sched.hpp"
#include "json.hpp"

namespace densched::dataset {

using ordered_json = nlohmann::ordered_json;

std::vector<BlockRange> layout_blocks(std::size_t maskable_len, std::uint32_t block_size) {
    if (block_size == 0) throw ArgumentError("layout_blocks: block size must be positive");
    std::vector<BlockRange> blocks;
    for (std::size_t begin = 0; begin < maskable_len; begin += block_size) {
        blocks.push_back({begin, std::min(maskable_len, begin + block_size)});
    }
    return blocks;
}

std::vector<BlockRange> layout_blocks(const AnnotatedSample& sample, std::uint32_t block_size) {
    return layout_blocks(sample.maskable_len(), block_size);
}

std::string_view to_string(Role role) {
    return role == Role::logical ? "logical" : "syntactic";
}

namespace {

ordered_json weight_to_json(const Weight& weight) {
    switch (weight.kind) {
        case Weight::Kind::hard_dense: return "hard_dense";
        case Weight::Kind::hard_sparse: return "hard_sparse";
        case Weight::Kind::soft: break;
    }
    return weight.value;
}

Weight weight_from_json(const ordered_json& value, const char* where) {
    if (value.is_string()) {
        const auto name = value.get<std::string>();
        if (name == "hard_dense") return Weight::hard_dense();
        if (name == "hard_sparse") return Weight::hard_sparse();
        throw SchemaError(std::string(where) + ": unknown weight '" + name + "'");
    }
    if (value.is_number()) {
        const double w = value.get<double>();
        if (!std::isfinite(w) || w < 0.0) {
            throw SchemaError(std::string(where) + ": weight must be finite and non-negative");
        }
        return Weight::soft(w);
    }
    throw SchemaError(std::string(where) + ": weight must be a number or a hard-mask name");
}

ordered_json spans_to_json(const std::vector<TokenSpan>& spans) {
    ordered_json arr = ordered_json::array();
    for (const TokenSpan& s : spans) arr.push_back(ordered_json::array({s.start, s.end}));
    return arr;
}

std::vector<TokenSpan> spans_from_json(const ordered_json& arr, const char* field) {
    if (!arr.is_array()) throw SchemaError(std::string(field) + " must be an array");
    std::vector<TokenSpan> spans;
    for (const auto& item : arr) {
        if (!item.is_array() || item.size() != 2 || !item[0].is_number_unsigned() ||
            !item[1].is_number_unsigned()) {
            throw SchemaError(std::string(field) +
                              " entries must be [start, end] pairs of non-negative integers");
        }
        spans.push_back({item[0].get<std::size_t>(), item[1].get<std::size_t>()});
    }
    return spans;
}

std::vector<std::uint8_t> bits_from_json(const ordered_json& arr, const char* field) {
    if (!arr.is_array()) throw SchemaError(std::string(field) + " must be an array");
    std::vector<std::uint8_t> bits;
    bits.reserve(arr.size());
    for (const auto& item : arr) {
        if (!item.is_number_integer() ||
            (item.get<std::int64_t>() != 0 && item.get<std::int64_t>() != 1)) {
            throw SchemaError(std::string(field) + " entries must be 0 or 1");
        }
        bits.push_back(static_cast<std::uint8_t>(item.get<std::int64_t>()));
    }
    return bits;
}

void require_keys(const ordered_json& doc, std::initializer_list<const char*> required,
                  std::initializer_list<const char*> optional, const char* what) {
    for (const char* key : required) {
        if (!doc.contains(key)) {
            throw SchemaError(std::string(what) + ": missing key '" + key + "'");
        }
    }
    for (const auto& [key, value] : doc.items()) {
        (void)value;
        const auto known = [&](std::initializer_list<const char*> list) {
            return std::any_of(list.begin(), list.end(),
                               [&](const char* k) { return key == k; });
        };
        if (!known(required) && !known(optional)) {
            throw SchemaError(std::string(what) + ": unknown key '" + key + "'");
        }
    }
}

}  // namespace

std::string to_json_line(const TrainingRecord& record) {
    ordered_json doc;
    doc["id"] = record.id;
    doc["role"] = std::string(to_string(record.role));
    doc["sigma"] = record.sigma;
    doc["t"] = record.t;
    doc["weight"] = weight_to_json(record.weight);
    doc["mode"] = std::string(densched::to_string(record.mode));
    doc["tokens"] = record.tokens;
    doc["indicator"] = record.indicator;
    doc["mask"] = record.mask;
    ordered_json blocks = ordered_json::array();
    for (const BlockRange& b : record.blocks) {
        blocks.push_back(ordered_json::array({b.begin, b.end}));
    }
    doc["blocks"] = std::move(blocks);
    return doc.dump();
}

TrainingRecord record_from_json_line(const std::string& line) {
    ordered_json doc;
    try {
        doc = ordered_json::parse(line);
    } catch (const ordered_json::parse_error& e) {
        throw SchemaError(std::string("record line is not valid JSON: ") + e.what());
    }
    if (!doc.is_object()) throw SchemaError("record line must be a JSON object");
    require_keys(doc,
                 {"id", "role", "sigma", "t", "weight", "mode", "tokens", "indicator", "mask",
                  "blocks"},
                 {}, "record");

    TrainingRecord record;
    if (!doc["id"].is_string() || doc["id"].get<std::string>().empty()) {
        throw SchemaError("record: id must be a non-empty string");
    }
    record.id = doc["id"].get<std::string>();
    const std::string role = doc["role"].is_string() ? doc["role"].get<std::string>() : "";
    if (role == "logical") {
        record.role = Role::logical;
    } else if (role == "syntactic") {
        record.role = Role::syntactic;
    } else {
        throw SchemaError("record: role must be 'logical' or 'syntactic'");
    }
    if (!doc["sigma"].is_number() || !doc["t"].is_number()) {
        throw SchemaError("record: sigma and t must be numbers");
    }
    record.sigma = doc["sigma"].get<double>();
    record.t = doc["t"].get<double>();
    record.weight = weight_from_json(doc["weight"], "record");
    const std::string mode = doc["mode"].is_string() ? doc["mode"].get<std::string>() : "";
    if (mode == "bernoulli") {
        record.mode = Mode::bernoulli;
    } else if (mode == "exact_count") {
        record.mode = Mode::exact_count;
    } else {
        throw SchemaError("record: mode must be 'bernoulli' or 'exact_count'");
    }
    if (!doc["tokens"].is_array()) throw SchemaError("record: tokens must be an array");
    for (const auto& tok : doc["tokens"]) {
        if (!tok.is_string()) throw SchemaError("record: tokens must all be strings");
        record.tokens.push_back(tok.get<std::string>());
    }
    record.indicator = bits_from_json(doc["indicator"], "record: indicator");
    record.mask = bits_from_json(doc["mask"], "record: mask");
    if (record.indicator.size() != record.tokens.size() ||
        record.mask.size() != record.tokens.size()) {
        throw SchemaError("record: tokens, indicator and mask must have equal length");
    }
    for (const TokenSpan& s : spans_from_json(doc["blocks"], "record: blocks")) {
        if (s.start >= s.end) throw SchemaError("record: blocks must be non-empty ranges");
        record.blocks.push_back({s.start, s.end});
    }
    return record;
}

std::vector<Violation> validate_record(const TrainingRecord& record) {
    std::vector<Violation> out;
    if (record.id.empty()) out.push_back({"id", "id must be non-empty"});
    if (record.indicator.size() != record.tokens.size() ||
        record.mask.size() != record.tokens.size()) {
        out.push_back({"mask", "tokens, indicator and mask lengths differ"});
    }
    if (!(record.sigma > 0.0 && record.sigma < 1.0)) {
        out.push_back({"sigma", "sigma must lie in (0, 1)"});
    }
    if (!(record.t >= 0.0 && record.t <= 1.0)) {
        out.push_back({"t", "t must lie in [0, 1]"});
    }
    std::size_t prev_end = 0;
    for (std::size_t i = 0; i < record.blocks.size(); ++i) {
        const BlockRange& b = record.blocks[i];
        if (b.begin != prev_end || b.begin >= b.end) {
            out.push_back({"blocks", "block " + std::to_string(i) + " breaks the partition"});
            break;
        }
        prev_end = b.end;
    }
    if (prev_end != record.tokens.size()) {
        out.push_back({"blocks", "blocks do not cover the full maskable region"});
    }
    return out;
}

std::string to_json_line(const RawRecord& record) {
    ordered_json doc;
    doc["id"] = record.id;
    doc["prompt"] = record.prompt;
    doc["answer"] = record.answer;
    doc["domain"] = std::string(densched::to_string(record.domain));
    if (record.spans) doc["spans"] = spans_to_json(*record.spans);
    if (record.token_offsets) doc["token_offsets"] = spans_to_json(*record.token_offsets);
    return doc.dump();
}

namespace {

RawRecord raw_record_from_json(const ordered_json& doc) {
    if (!doc.is_object()) throw SchemaError("corpus line must be a JSON object");
    require_keys(doc, {"id", "answer", "domain"}, {"prompt", "spans", "token_offsets"},
                 "corpus record");
    RawRecord record;
    if (!doc["id"].is_string() || doc["id"].get<std::string>().empty()) {
        throw SchemaError("corpus record: id must be a non-empty string");
    }
    record.id = doc["id"].get<std::string>();
    if (doc.contains("prompt")) {
        if (!doc["prompt"].is_string()) throw SchemaError("corpus record: prompt must be a string");
        record.prompt = doc["prompt"].get<std::string>();
    }
    if (!doc["answer"].is_string()) throw SchemaError("corpus record: answer must be a string");
    record.answer = doc["answer"].get<std::string>();
    if (!doc["domain"].is_string()) throw SchemaError("corpus record: domain must be a string");
    const auto domain = domain_from_string(doc["domain"].get<std::string>());
    if (!domain) {
        throw SchemaError("corpus record: unknown domain '" + doc["domain"].get<std::string>() +
                          "'");
    }
    record.domain = *domain;
    if (doc.contains("spans")) record.spans = spans_from_json(doc["spans"], "spans");
    if (doc.contains("token_offsets")) {
        record.token_offsets = spans_from_json(doc["token_offsets"], "token_offsets");
    }
    return record;
}

}  // namespace

RawRecord raw_record_from_json_line(const std::string& line) {
    ordered_json doc;
    try {
        doc = ordered_json::parse(line);
    } catch (const ordered_json::parse_error& e) {
        throw SchemaError(std::string("corpus line is not valid JSON: ") + e.what());
    }
    return raw_record_from_json(doc);
}

namespace {

ordered_json config_to_json_value(const SchedulerConfig& config) {
    ordered_json doc;
    doc["weight"] = weight_to_json(config.weight);
    doc["sigma_lo"] = config.sigma_lo;
    doc["sigma_hi"] = config.sigma_hi;
    doc["mode"] = std::string(densched::to_string(config.mode));
    doc["scope"] = std::string(densched::to_string(config.scope));
    doc["block_size"] = config.block_size;
    doc["complement"] = config.complement;
    doc["eos_is_dense"] = config.eos_is_dense;
    doc["seed"] = config.global_seed;
    return doc;
}

SchedulerConfig config_from_json_value(const ordered_json& doc) {
    if (!doc.is_object()) throw ConfigError("scheduler config must be a JSON object");
    SchedulerConfig config;
    try {
        require_keys(doc, {},
                     {"weight", "sigma_lo", "sigma_hi", "mode", "scope", "block_size",
                      "complement", "eos_is_dense", "seed"},
                     "scheduler config");
        if (doc.contains("weight")) {
            config.weight = weight_from_json(doc["weight"], "scheduler config");
        }
    } catch (const SchemaError& e) {
        throw ConfigError(e.what());
    }
    if (doc.contains("sigma_lo")) config.sigma_lo = doc["sigma_lo"].get<double>();
    if (doc.contains("sigma_hi")) config.sigma_hi = doc["sigma_hi"].get<double>();
    if (doc.contains("mode")) {
        const auto mode = doc["mode"].get<std::string>();
        if (mode == "bernoulli") {
            config.mode = Mode::bernoulli;
        } else if (mode == "exact_count") {
            config.mode = Mode::exact_count;
        } else {
            throw ConfigError("scheduler config: unknown mode '" + mode + "'");
        }
    }
    if (doc.contains("scope")) {
        const auto scope = doc["scope"].get<std::string>();
        if (scope == "per_sequence") {
            config.scope = Scope::per_sequence;
        } else if (scope == "per_block") {
            config.scope = Scope::per_block;
        } else {
            throw ConfigError("scheduler config: unknown scope '" + scope + "'");
        }
    }
    if (doc.contains("block_size")) config.block_size = doc["block_size"].get<std::uint32_t>();
    if (doc.contains("complement")) config.complement = doc["complement"].get<bool>();
    if (doc.contains("eos_is_dense")) config.eos_is_dense = doc["eos_is_dense"].get<bool>();
    if (doc.contains("seed")) config.global_seed = doc["seed"].get<std::uint64_t>();
    const auto violations = validate_config(config);
    if (!violations.empty()) {
        throw ConfigError("scheduler config: " + violations.front().field + ": " +
                          violations.front().message);
    }
    return config;
}

}  // namespace

std::string to_json(const SchedulerConfig& config) {
    return config_to_json_value(config).dump();
}

SchedulerConfig config_from_json(const std::string& json_text) {
    ordered_json doc;
    try {
        doc = ordered_json::parse(json_text);
    } catch (const ordered_json::parse_error& e) {
        throw ConfigError(std::string("scheduler config is not valid JSON: ") + e.what());
    }
    return config_from_json_value(doc);
}

LoadResult load_sft_corpus(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open corpus file: " + path);
    LoadResult result;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        ordered_json doc;
        try {
            doc = ordered_json::parse(line);
        } catch (const ordered_json::parse_error& e) {
            result.rejects.push_back({"", line_no, std::string("not valid JSON: ") + e.what()});
            continue;
        }
        try {
            result.records.push_back(raw_record_from_json(doc));
        } catch (const SchemaError& e) {
            std::string id;
            if (doc.is_object() && doc.contains("id") && doc["id"].is_string()) {
                id = doc["id"].get<std::string>();
            }
            result.rejects.push_back({id, line_no, e.what()});
        }
    }
    if (in.bad()) throw IoError("read error on corpus file: " + path);
    return result;
}

std::vector<AnnotatedSample> mix_annotated(std::vector<AnnotatedSample> corpus,
                                           double fraction, std::uint64_t seed) {
    if (!(fraction >= 0.0 && fraction <= 1.0)) {
        throw ArgumentError("mix_annotated: fraction must lie in [0, 1]");
    }
    const std::size_t n = corpus.size();
    const auto keep =
        static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n)));

    RngStream select = derive_stream(seed, std::string_view("mix/select"), 0);
    std::vector<std::uint8_t> annotated(n, 0);
    std::vector<std::uint32_t> pool(n);
    for (std::uint32_t i = 0; i < n; ++i) pool[i] = i;
    for (std::size_t i = 0; i < keep; ++i) {
        const auto j = i + static_cast<std::size_t>(select.next_below(n - i));
        std::swap(pool[i], pool[j]);
        annotated[pool[i]] = 1;
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (annotated[i]) continue;
        corpus[i].dense_spans.clear();
        std::fill(corpus[i].indicator.begin(), corpus[i].indicator.end(), 0);
    }

    RngStream order = derive_stream(seed, std::string_view("mix/order"), 0);
    order.shuffle(corpus);
    return corpus;
}

std::vector<TrainingRecord> make_records(const AnnotatedSample& sample,
                                         const SchedulerConfig& config) {
    const auto violations = validate_sample(sample);
    if (!violations.empty()) {
        throw ArgumentError("sample '" + sample.id + "': " + violations.front().field + ": " +
                            violations.front().message);
    }
    RngStream rng = derive_stream(config.global_seed, sample.id, 0);
    const sched::ScheduledPair pair = sched::schedule_indicator(sample.indicator, config, rng);

    TrainingRecord base;
    base.id = sample.id;
    base.sigma = pair.draw.sigma;
    base.t = pair.draw.t;
    base.weight = config.weight;
    base.mode = config.mode;
    base.tokens.reserve(sample.tokens.size() + 1);
    for (const Token& tok : sample.tokens) base.tokens.push_back(tok.surface);
    base.tokens.emplace_back("<eos>");
    base.indicator = sample.indicator;
    base.blocks = config.scope == Scope::per_block
                      ? layout_blocks(sample.maskable_len(), config.block_size)
                      : std::vector<BlockRange>{{0, sample.maskable_len()}};
    base.domain = sample.domain;

    std::vector<TrainingRecord> records;
    records.push_back(base);
    records.back().role = Role::logical;
    records.back().mask = pair.logical.bits;
    if (pair.syntactic) {
        records.push_back(std::move(base));
        records.back().role = Role::syntactic;
        records.back().mask = pair.syntactic->bits;
    }
    return records;
}

std::string to_json(const Manifest& manifest) {
    ordered_json doc;
    doc["seed"] = manifest.seed;
    doc["samples"] = manifest.samples;
    doc["records"] = manifest.records;
    doc["logical"] = manifest.logical;
    doc["syntactic"] = manifest.syntactic;
    doc["rejected"] = manifest.rejected;
    doc["per_domain"] = manifest.per_domain;
    doc["config"] = config_to_json_value(manifest.config);
    doc["digest"] = manifest.digest_hex;
    return doc.dump(2);
}

Manifest manifest_from_json(const std::string& json_text) {
    ordered_json doc;
    try {
        doc = ordered_json::parse(json_text);
    } catch (const ordered_json::parse_error& e) {
        throw ConfigError(std::string("manifest is not valid JSON: ") + e.what());
    }
    if (!doc.is_object()) throw ConfigError("manifest must be a JSON object");
    Manifest manifest;
    try {
        manifest.seed = doc.at("seed").get<std::uint64_t>();
        manifest.samples = doc.at("samples").get<std::size_t>();
        manifest.records = doc.at("records").get<std::size_t>();
        manifest.logical = doc.at("logical").get<std::size_t>();
        manifest.syntactic = doc.at("syntactic").get<std::size_t>();
        manifest.rejected = doc.at("rejected").get<std::size_t>();
        manifest.per_domain =
            doc.at("per_domain").get<std::map<std::string, std::size_t>>();
        manifest.config = config_from_json_value(doc.at("config"));
        manifest.digest_hex = doc.at("digest").get<std::string>();
    } catch (const ordered_json::exception& e) {
        throw ConfigError(std::string("manifest: ") + e.what());
    }
    return manifest;
}

namespace {

struct SampleOutput {
    std::string lines;  // serialized records, newline-terminated
    bool accepted = false;
    std::size_t logical = 0;
    std::size_t syntactic = 0;
    Reject reject;
};

SampleOutput emit_one(const AnnotatedSample& sample, const SchedulerConfig& config) {
    SampleOutput out;
    const auto violations = validate_sample(sample);
    if (!violations.empty()) {
        out.reject = {sample.id, 0, violations.front().field + ": " + violations.front().message};
        return out;
    }
    for (const TrainingRecord& record : make_records(sample, config)) {
        out.lines += to_json_line(record);
        out.lines += '\n';
        ++(record.role == Role::logical ? out.logical : out.syntactic);
    }
    out.accepted = true;
    return out;
}

}  // namespace

EmitResult emit_training_records(const std::vector<AnnotatedSample>& corpus,
                                 const SchedulerConfig& config, const std::string& out_path,
                                 unsigned jobs) {
    const auto violations = validate_config(config);
    if (!violations.empty()) {
        throw ArgumentError("scheduler config: " + violations.front().field + ": " +
                            violations.front().message);
    }

    std::vector<SampleOutput> outputs(corpus.size());
    const unsigned workers = std::max(1u, jobs);
    if (workers <= 1 || corpus.size() <= 1) {
        for (std::size_t i = 0; i < corpus.size(); ++i) {
            outputs[i] = emit_one(corpus[i], config);
        }
    } else {
        // Static contiguous partition; every sample's stream derives from its
        // id, so the split cannot change any record's bytes.
        std::vector<std::thread> threads;
        const std::size_t chunk = (corpus.size() + workers - 1) / workers;
        for (unsigned w = 0; w < workers; ++w) {
            const std::size_t begin = std::min(corpus.size(), w * chunk);
            const std::size_t end = std::min(corpus.size(), begin + chunk);
            if (begin >= end) break;
            threads.emplace_back([&, begin, end] {
                for (std::size_t i = begin; i < end; ++i) {
                    outputs[i] = emit_one(corpus[i], config);
                }
            });
        }
        for (std::thread& t : threads) t.join();
    }

    std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open output file: " + out_path);

    EmitResult result;
    Manifest& manifest = result.manifest;
    manifest.seed = config.global_seed;
    manifest.config = config;
    std::uint64_t digest = kFnv64Offset;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        const SampleOutput& sample_out = outputs[i];
        if (!sample_out.accepted) {
            result.rejects.push_back(sample_out.reject);
            continue;
        }
        out << sample_out.lines;
        digest = fnv1a64(sample_out.lines, digest);
        ++manifest.samples;
        manifest.logical += sample_out.logical;
        manifest.syntactic += sample_out.syntactic;
        ++manifest.per_domain[std::string(densched::to_string(corpus[i].domain))];
    }
    out.flush();
    if (!out) throw IoError("write error on output file: " + out_path);
    manifest.records = manifest.logical + manifest.syntactic;
    manifest.rejected = result.rejects.size();
    char hex[17];
    std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(digest));
    manifest.digest_hex = hex;

    std::ofstream mf(out_path + ".manifest.json", std::ios::binary | std::ios::trunc);
    if (!mf) throw IoError("cannot open manifest file: " + out_path + ".manifest.json");
    mf << to_json(manifest) << '\n';
    if (!mf.flush()) throw IoError("write error on manifest file");

    if (!result.rejects.empty()) {
        std::ofstream rf(out_path + ".rejects.jsonl", std::ios::binary | std::ios::trunc);
        if (!rf) throw IoError("cannot open rejects file");
        for (const Reject& reject : result.rejects) {
            ordered_json doc;
            doc["id"] = reject.id;
            doc["line"] = reject.line_no;
            doc["reason"] = reject.reason;
            rf << doc.dump() << '\n';
        }
        if (!rf.flush()) throw IoError("write error on rejects file");
    }
    return result;
}

}  // namespace densched::dataset
