#include "densched/audit.hpp"

#include <algorithm>

#include "densched/errors.hpp"
#include "densched/rng.hpp"
#include "densched/sched.hpp"
#include "json.hpp"

namespace densched::audit {

using ordered_json = nlohmann::ordered_json;
using dataset::Role;
using dataset::TrainingRecord;

namespace {

std::size_t role_index(Role role) { return role == Role::logical ? 0 : 1; }

std::string weight_label(const Weight& weight) {
    switch (weight.kind) {
        case Weight::Kind::hard_dense: return "hard_dense";
        case Weight::Kind::hard_sparse: return "hard_sparse";
        case Weight::Kind::soft: break;
    }
    return ordered_json(weight.value).dump();
}

std::uint64_t masked_count(const TrainingRecord& record) {
    return static_cast<std::uint64_t>(
        std::count(record.mask.begin(), record.mask.end(), 1));
}

MaskVector draw_sampler_mask(const SamplerSpec& spec,
                             const std::vector<std::uint8_t>& indicator, RngStream& rng) {
    switch (spec.weight.kind) {
        case Weight::Kind::hard_dense:
            return sched::sample_hard_mask(indicator, spec.sigma,
                                           sched::HardDirection::dense_first, rng);
        case Weight::Kind::hard_sparse:
            return sched::sample_hard_mask(indicator, spec.sigma,
                                           sched::HardDirection::sparse_first, rng);
        case Weight::Kind::soft:
            break;
    }
    const CategoryProbs probs =
        sched::solve_category_probs(spec.n, spec.dense, spec.sigma, spec.weight.value);
    return sched::sample_soft_mask(indicator, probs, spec.mode, rng);
}

std::vector<std::uint8_t> contiguous_indicator(std::size_t n, std::size_t dense) {
    if (n == 0) throw ArgumentError("sampler spec: region length must be positive");
    if (dense > n) throw ArgumentError("sampler spec: dense count exceeds region length");
    std::vector<std::uint8_t> indicator(n, 0);
    std::fill(indicator.begin(), indicator.begin() + static_cast<std::ptrdiff_t>(dense), 1);
    return indicator;
}

}  // namespace

// ---- marginal ----

void MarginalAccum::add(const TrainingRecord& record) {
    RoleAccum& accum = roles_[role_index(record.role)];
    ++accum.records;
    accum.positions += record.mask.size();
    accum.masked += masked_count(record);
    const double target =
        record.role == Role::logical ? record.sigma : 1.0 - record.sigma;
    accum.target_mass.add(target * static_cast<double>(record.mask.size()));
}

void MarginalAccum::merge(const MarginalAccum& other) {
    for (std::size_t i = 0; i < 2; ++i) {
        roles_[i].records += other.roles_[i].records;
        roles_[i].positions += other.roles_[i].positions;
        roles_[i].masked += other.roles_[i].masked;
        roles_[i].target_mass.merge(other.roles_[i].target_mass);
    }
}

MarginalReport MarginalAccum::finalize(std::size_t min_records) const {
    const std::uint64_t total = roles_[0].records + roles_[1].records;
    if (total < min_records) {
        throw ArgumentError("marginal report needs at least " + std::to_string(min_records) +
                            " masks, got " + std::to_string(total));
    }
    MarginalReport report;
    for (std::size_t i = 0; i < 2; ++i) {
        const RoleAccum& accum = roles_[i];
        if (accum.records == 0) continue;
        RoleMarginal row;
        row.role = i == 0 ? "logical" : "syntactic";
        row.records = accum.records;
        row.positions = accum.positions;
        row.masked = accum.masked;
        row.empirical =
            static_cast<double>(accum.masked) / static_cast<double>(accum.positions);
        row.target = accum.target_mass.value() / static_cast<double>(accum.positions);
        row.se = std::sqrt(row.target * (1.0 - row.target) /
                           static_cast<double>(accum.positions));
        row.z = row.se > 0.0 ? (row.empirical - row.target) / row.se : 0.0;
        report.roles.push_back(std::move(row));
    }
    return report;
}

MarginalReport marginal_report(const std::vector<TrainingRecord>& records,
                               std::size_t min_records) {
    MarginalAccum accum;
    for (const TrainingRecord& record : records) accum.add(record);
    return accum.finalize(min_records);
}

MarginalReport marginal_report(const SamplerSpec& spec) {
    if (spec.draws < 1000) {
        throw ArgumentError("marginal report needs at least 1000 masks, got " +
                            std::to_string(spec.draws));
    }
    const auto indicator = contiguous_indicator(spec.n, spec.dense);
    MarginalAccum accum;
    TrainingRecord record;
    record.id = "sampler";
    record.role = Role::logical;
    record.sigma = spec.sigma;
    record.weight = spec.weight;
    record.mode = spec.mode;
    for (std::size_t d = 0; d < spec.draws; ++d) {
        RngStream rng = derive_stream(spec.seed, std::string_view("audit/marginal"), d);
        record.mask = draw_sampler_mask(spec, indicator, rng).bits;
        accum.add(record);
    }
    return accum.finalize(1000);
}

// ---- ratio ----

void RatioAccum::add(const TrainingRecord& record) {
    if (record.role != Role::logical) {
        throw ArgumentError("ratio report consumes logical records only");
    }
    const std::size_t dense = static_cast<std::size_t>(
        std::count(record.indicator.begin(), record.indicator.end(), 1));
    const Shape shape{record.mask.size(), dense, record.sigma, record.weight};
    if (!shape_) {
        shape_ = shape;
    } else if (!(*shape_ == shape)) {
        throw ArgumentError("ratio report requires records sharing (sigma, w, N, D)");
    }
    for (std::size_t i = 0; i < record.mask.size(); ++i) {
        if (record.indicator[i]) {
            ++dense_events_;
            dense_masked_ += record.mask[i];
        } else {
            ++sparse_events_;
            sparse_masked_ += record.mask[i];
        }
    }
}

void RatioAccum::merge(const RatioAccum& other) {
    if (!other.shape_) return;
    if (!shape_) {
        shape_ = other.shape_;
    } else if (!(*shape_ == *other.shape_)) {
        throw ArgumentError("ratio report requires records sharing (sigma, w, N, D)");
    }
    dense_events_ += other.dense_events_;
    sparse_events_ += other.sparse_events_;
    dense_masked_ += other.dense_masked_;
    sparse_masked_ += other.sparse_masked_;
}

RatioReport RatioAccum::finalize() const {
    if (!shape_) throw ArgumentError("ratio report: no logical records seen");
    if (dense_events_ == 0 || sparse_events_ == 0) {
        throw ArgumentError("ratio report needs both categories populated");
    }
    RatioReport report;
    report.weight = shape_->weight;
    report.dense_events = dense_events_;
    report.sparse_events = sparse_events_;
    report.dense_masked = dense_masked_;
    report.sparse_masked = sparse_masked_;
    report.p_dense_hat =
        static_cast<double>(dense_masked_) / static_cast<double>(dense_events_);
    report.p_base_hat =
        static_cast<double>(sparse_masked_) / static_cast<double>(sparse_events_);
    report.undefined = sparse_masked_ == 0;
    if (shape_->weight.kind == Weight::Kind::soft) {
        report.saturated = sched::solve_category_probs(shape_->n, shape_->dense,
                                                       shape_->sigma,
                                                       shape_->weight.value)
                               .saturated != Saturation::none;
    }
    if (!report.undefined) {
        report.w_hat = report.p_dense_hat / report.p_base_hat;
        // Delta method on the rate ratio, Bernoulli variances per category.
        const double vd = report.p_dense_hat * (1.0 - report.p_dense_hat) /
                          static_cast<double>(dense_events_);
        const double vb = report.p_base_hat * (1.0 - report.p_base_hat) /
                          static_cast<double>(sparse_events_);
        double rel = 0.0;
        if (report.p_dense_hat > 0.0) rel += vd / (report.p_dense_hat * report.p_dense_hat);
        rel += vb / (report.p_base_hat * report.p_base_hat);
        report.se = report.w_hat * std::sqrt(rel);
        report.ci_lo = report.w_hat - 3.0 * report.se;
        report.ci_hi = report.w_hat + 3.0 * report.se;
    }
    report.valid_for_law = shape_->weight.kind == Weight::Kind::soft &&
                           !report.saturated && !report.undefined;
    return report;
}

RatioReport ratio_report(const std::vector<TrainingRecord>& records) {
    RatioAccum accum;
    for (const TrainingRecord& record : records) accum.add(record);
    return accum.finalize();
}

RatioReport ratio_report(const SamplerSpec& spec) {
    const auto indicator = contiguous_indicator(spec.n, spec.dense);
    RatioAccum accum;
    TrainingRecord record;
    record.id = "sampler";
    record.role = Role::logical;
    record.sigma = spec.sigma;
    record.weight = spec.weight;
    record.mode = spec.mode;
    record.indicator = indicator;
    for (std::size_t d = 0; d < spec.draws; ++d) {
        RngStream rng = derive_stream(spec.seed, std::string_view("audit/ratio"), d);
        record.mask = draw_sampler_mask(spec, indicator, rng).bits;
        accum.add(record);
    }
    return accum.finalize();
}

// ---- run lengths ----

void RunLengthAccum::add(const TrainingRecord& record) {
    const std::string key = "role=" + std::string(dataset::to_string(record.role)) +
                            " weight=" + weight_label(record.weight) +
                            " mode=" + std::string(densched::to_string(record.mode));
    GroupAccum& group = groups_[key];
    ++group.records;
    std::uint64_t run = 0;
    std::uint64_t record_max = 0;
    const auto flush = [&] {
        if (run == 0) return;
        ++group.runs;
        group.masked += run;
        record_max = std::max(record_max, run);
        if (group.histogram.size() <= run) group.histogram.resize(run + 1, 0);
        ++group.histogram[run];
        run = 0;
    };
    for (const std::uint8_t bit : record.mask) {
        if (bit) {
            ++run;
        } else {
            flush();
        }
    }
    flush();
    group.max_run = std::max(group.max_run, record_max);
    group.max_run_total += record_max;
}

void RunLengthAccum::merge(const RunLengthAccum& other) {
    for (const auto& [key, src] : other.groups_) {
        GroupAccum& dst = groups_[key];
        dst.records += src.records;
        dst.runs += src.runs;
        dst.masked += src.masked;
        dst.max_run = std::max(dst.max_run, src.max_run);
        dst.max_run_total += src.max_run_total;
        if (dst.histogram.size() < src.histogram.size()) {
            dst.histogram.resize(src.histogram.size(), 0);
        }
        for (std::size_t i = 0; i < src.histogram.size(); ++i) {
            dst.histogram[i] += src.histogram[i];
        }
    }
}

RunLengthReport RunLengthAccum::finalize() const {
    RunLengthReport report;
    for (const auto& [key, group] : groups_) {
        RunLengthGroup row;
        row.key = key;
        row.records = group.records;
        row.runs = group.runs;
        row.masked = group.masked;
        row.max_run = group.max_run;
        row.mean_run = group.runs > 0 ? static_cast<double>(group.masked) /
                                            static_cast<double>(group.runs)
                                      : 0.0;
        row.mean_max_run = group.records > 0 ? static_cast<double>(group.max_run_total) /
                                                   static_cast<double>(group.records)
                                             : 0.0;
        row.histogram = group.histogram;
        report.groups.push_back(std::move(row));
    }
    return report;
}

RunLengthReport run_length_report(const std::vector<TrainingRecord>& records) {
    RunLengthAccum accum;
    for (const TrainingRecord& record : records) accum.add(record);
    return accum.finalize();
}

// ---- symmetry ----

namespace {

struct JointHistogram {
    std::size_t dense = 0;
    std::size_t sparse = 0;
    std::vector<std::uint64_t> cells;
    std::uint64_t total = 0;

    JointHistogram(std::size_t dense_count, std::size_t sparse_count)
        : dense(dense_count),
          sparse(sparse_count),
          cells((dense_count + 1) * (sparse_count + 1), 0) {}

    void add(const std::vector<std::uint8_t>& indicator, const MaskVector& mask) {
        std::size_t dense_masked = 0;
        for (std::size_t i = 0; i < mask.bits.size(); ++i) {
            dense_masked += indicator[i] & mask.bits[i];
        }
        const std::size_t sparse_masked = mask.count - dense_masked;
        ++cells[dense_masked * (sparse + 1) + sparse_masked];
        ++total;
    }
};

JointHistogram pooled_histogram(const SymmetrySide& side, std::size_t draws) {
    const auto indicator = contiguous_indicator(side.n, side.dense);
    JointHistogram hist(side.dense, side.n - side.dense);
    for (std::size_t d = 0; d < draws; ++d) {
        RngStream rng =
            derive_stream(side.config.global_seed, std::string_view("audit/symmetry"), d);
        const sched::ScheduledPair pair =
            sched::schedule_indicator(indicator, side.config, rng);
        hist.add(indicator, pair.logical);
        if (pair.syntactic) hist.add(indicator, *pair.syntactic);
    }
    return hist;
}

}  // namespace

SymmetryReport symmetry_report(const SymmetrySide& a, const SymmetrySide& b,
                               std::size_t draws) {
    if (a.n != b.n || a.dense != b.dense) {
        throw ArgumentError("symmetry report: sides must share (N, D)");
    }
    if (draws == 0) throw ArgumentError("symmetry report: draws must be positive");

    const JointHistogram ha = pooled_histogram(a, draws);
    const JointHistogram hb = pooled_histogram(b, draws);

    SymmetryReport report;
    report.draws = draws;
    double tv = 0.0;
    for (std::size_t i = 0; i < ha.cells.size(); ++i) {
        const double pa = static_cast<double>(ha.cells[i]) / static_cast<double>(ha.total);
        const double pb = static_cast<double>(hb.cells[i]) / static_cast<double>(hb.total);
        tv += std::abs(pa - pb);
        if (ha.cells[i] + hb.cells[i] > 0) ++report.cells;
    }
    report.tv = 0.5 * tv;
    return report;
}

// ---- complement pairing ----

ComplementReport complement_check(const std::vector<TrainingRecord>& records) {
    ComplementReport report;
    report.records = records.size();

    const bool any_syntactic =
        std::any_of(records.begin(), records.end(), [](const TrainingRecord& r) {
            return r.role == Role::syntactic;
        });
    if (!any_syntactic) {
        report.skipped = true;
        report.note = "no syntactic records in stream; complement emission disabled";
        return report;
    }

    std::size_t i = 0;
    while (i < records.size()) {
        const TrainingRecord& first = records[i];
        if (first.role != Role::logical) {
            report.violations.push_back({first.id, i, -1, "orphan_syntactic"});
            ++i;
            continue;
        }
        if (i + 1 >= records.size() || records[i + 1].role != Role::syntactic ||
            records[i + 1].id != first.id) {
            report.violations.push_back({first.id, i, -1, "orphan_logical"});
            ++i;
            continue;
        }
        const TrainingRecord& second = records[i + 1];
        if (first.mask.size() != second.mask.size()) {
            report.violations.push_back({first.id, i, -1, "length_mismatch"});
        } else {
            for (std::size_t pos = 0; pos < first.mask.size(); ++pos) {
                if (first.mask[pos] + second.mask[pos] != 1) {
                    report.violations.push_back(
                        {first.id, i, static_cast<std::ptrdiff_t>(pos),
                         "complement_mismatch"});
                    break;
                }
            }
        }
        ++report.pairs;
        i += 2;
    }
    return report;
}

// ---- JSON rendering ----

std::string to_json(const MarginalReport& report) {
    ordered_json doc;
    doc["report"] = "marginal";
    doc["roles"] = ordered_json::array();
    for (const RoleMarginal& row : report.roles) {
        ordered_json item;
        item["role"] = row.role;
        item["records"] = row.records;
        item["positions"] = row.positions;
        item["masked"] = row.masked;
        item["empirical"] = row.empirical;
        item["target"] = row.target;
        item["se"] = row.se;
        item["z"] = row.z;
        doc["roles"].push_back(std::move(item));
    }
    return doc.dump(2);
}

std::string to_json(const RatioReport& report) {
    ordered_json doc;
    doc["report"] = "ratio";
    doc["weight"] = report.weight.kind == Weight::Kind::soft
                        ? ordered_json(report.weight.value)
                        : ordered_json(weight_label(report.weight));
    doc["p_dense_hat"] = report.p_dense_hat;
    doc["p_base_hat"] = report.p_base_hat;
    doc["w_hat"] = report.w_hat;
    doc["se"] = report.se;
    doc["ci_lo"] = report.ci_lo;
    doc["ci_hi"] = report.ci_hi;
    doc["dense_events"] = report.dense_events;
    doc["sparse_events"] = report.sparse_events;
    doc["dense_masked"] = report.dense_masked;
    doc["sparse_masked"] = report.sparse_masked;
    doc["saturated"] = report.saturated;
    doc["undefined"] = report.undefined;
    doc["valid_for_law"] = report.valid_for_law;
    return doc.dump(2);
}

std::string to_json(const RunLengthReport& report) {
    ordered_json doc;
    doc["report"] = "run_length";
    doc["groups"] = ordered_json::array();
    for (const RunLengthGroup& group : report.groups) {
        ordered_json item;
        item["key"] = group.key;
        item["records"] = group.records;
        item["runs"] = group.runs;
        item["masked"] = group.masked;
        item["max_run"] = group.max_run;
        item["mean_run"] = group.mean_run;
        item["mean_max_run"] = group.mean_max_run;
        item["histogram"] = group.histogram;
        doc["groups"].push_back(std::move(item));
    }
    return doc.dump(2);
}

std::string to_json(const SymmetryReport& report) {
    ordered_json doc;
    doc["report"] = "symmetry";
    doc["tv"] = report.tv;
    doc["draws"] = report.draws;
    doc["cells"] = report.cells;
    return doc.dump(2);
}

std::string to_json(const ComplementReport& report) {
    ordered_json doc;
    doc["report"] = "complement";
    doc["records"] = report.records;
    doc["pairs"] = report.pairs;
    doc["skipped"] = report.skipped;
    doc["note"] = report.note;
    doc["violations"] = ordered_json::array();
    for (const ComplementViolation& violation : report.violations) {
        ordered_json item;
        item["id"] = violation.id;
        item["record_index"] = violation.record_index;
        item["position"] = violation.position;
        item["kind"] = violation.kind;
        doc["violations"].push_back(std::move(item));
    }
    return doc.dump(2);
}

}  // namespace densched::audit
