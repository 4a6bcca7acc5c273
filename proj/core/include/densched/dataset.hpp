#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "densched/types.hpp"

namespace densched::dataset {

// Contiguous block partition of the maskable region; the last block is the
// remainder and may be short.
struct BlockRange {
    std::size_t begin = 0;
    std::size_t end = 0;

    friend bool operator==(const BlockRange&, const BlockRange&) = default;
};

std::vector<BlockRange> layout_blocks(std::size_t maskable_len, std::uint32_t block_size);
std::vector<BlockRange> layout_blocks(const AnnotatedSample& sample, std::uint32_t block_size);

enum class Role { logical, syntactic };
std::string_view to_string(Role role);

// One serialized training record. Siblings produced from the same sample and
// draw share an id and are emitted on adjacent lines, logical first.
struct TrainingRecord {
    std::string id;
    Role role = Role::logical;
    double sigma = 0.0;
    double t = 0.0;
    Weight weight;
    Mode mode = Mode::bernoulli;
    std::vector<std::string> tokens;      // answer tokens plus trailing "<eos>"
    std::vector<std::uint8_t> indicator;  // same length as tokens
    std::vector<std::uint8_t> mask;       // same length as tokens
    std::vector<BlockRange> blocks;
    Domain domain = Domain::other;  // carried in memory, not serialized
};

std::vector<Violation> validate_record(const TrainingRecord& record);

// Canonical single-line JSON with a fixed key order; the dataset digest is
// defined over exactly these bytes.
std::string to_json_line(const TrainingRecord& record);
TrainingRecord record_from_json_line(const std::string& line);  // SchemaError

// Raw corpus line (annotated or not) in the input schema.
std::string to_json_line(const RawRecord& record);
RawRecord raw_record_from_json_line(const std::string& line);  // SchemaError

// Scheduler config round-trip used by the manifest and the sandbox config
// file.
std::string to_json(const SchedulerConfig& config);
SchedulerConfig config_from_json(const std::string& json_text);  // ConfigError

// Streaming line-by-line corpus loader. Malformed lines become rejects, never
// silent drops.
struct LoadResult {
    std::vector<RawRecord> records;
    std::vector<Reject> rejects;
};
LoadResult load_sft_corpus(const std::string& path);  // IoError if unreadable

// Keeps floor(fraction * size) samples annotated, clears the annotations of
// the rest (all-zero indicator, no spans), then shuffles the corpus order.
// Selection and order use dedicated streams derived from `seed`.
std::vector<AnnotatedSample> mix_annotated(std::vector<AnnotatedSample> corpus,
                                           double fraction, std::uint64_t seed);

// Builds the records for one sample under `config`: sigma draw, priority
// mask, and (unless disabled) the complementary sibling. The random stream is
// derived from (config.global_seed, sample.id, 0).
std::vector<TrainingRecord> make_records(const AnnotatedSample& sample,
                                         const SchedulerConfig& config);

struct Manifest {
    std::uint64_t seed = 0;
    std::size_t samples = 0;   // accepted input samples
    std::size_t records = 0;   // emitted record lines
    std::size_t logical = 0;
    std::size_t syntactic = 0;
    std::size_t rejected = 0;
    std::map<std::string, std::size_t> per_domain;  // accepted samples per domain
    SchedulerConfig config;
    std::string digest_hex;  // FNV-1a 64 over the emitted record bytes
};

std::string to_json(const Manifest& manifest);
Manifest manifest_from_json(const std::string& json_text);  // ConfigError

// Emits records for the whole corpus to `out_path` (JSONL), the manifest to
// out_path + ".manifest.json", and rejects (if any) to out_path +
// ".rejects.jsonl". With jobs > 1, samples are scheduled across that many
// worker threads; output bytes are identical for any job count because every
// sample owns an id-derived stream and lines are written in input order.
struct EmitResult {
    Manifest manifest;
    std::vector<Reject> rejects;
};
EmitResult emit_training_records(const std::vector<AnnotatedSample>& corpus,
                                 const SchedulerConfig& config, const std::string& out_path,
                                 unsigned jobs = 1);

}  // namespace densched::dataset
