#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "chatcbm/classifier.hpp"
#include "chatcbm/intervention.hpp"
#include "chatcbm/probe.hpp"

namespace chatcbm {

struct Aggregate {
    double mean = 0.0;
    // Sample standard deviation (n - 1 denominator); 0 for a single value.
    double std = 0.0;
};

Aggregate aggregate(std::span<const double> values);

// "0.850 ± 0.071"
std::string format_cell(double mean, double std, int decimals = 3);

struct ProbeReseed {
    std::span<const ActivationRecord> train_records;
    TrainConfig config;
};

struct EvalConfig {
    std::vector<std::uint64_t> seeds;
    // When set, a probe is retrained per seed; demonstrations are always reseeded.
    std::optional<ProbeReseed> probe_reseed;
    std::size_t workers = 1;
    // Abort once backend failures exceed this share of a seed's records.
    double max_failure_rate = 0.1;
};

struct RecordOutcome {
    std::uint64_t seed = 0;
    std::string example_id;
    std::string label;
    std::optional<std::string> predicted;
    bool parse_ok = false;
    bool correct = false;
    // Backend failure message; the record counts as incorrect.
    std::optional<std::string> error;
};

struct SeedResult {
    std::uint64_t seed = 0;
    std::size_t correct = 0;
    std::size_t total = 0;
    std::size_t parse_failures = 0;
    std::size_t backend_failures = 0;

    double accuracy() const { return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0; }
};

struct EvalReport {
    Aggregate summary;
    std::vector<SeedResult> per_seed;
    std::vector<RecordOutcome> records;
    bool aborted = false;
    std::string abort_reason;

    std::vector<double> accuracies() const;
};

// Classifies every record once per seed and aggregates accuracy. Unparseable
// replies count as incorrect. On too many backend failures the report is
// returned with aborted = true and only the finished seeds aggregated.
EvalReport evaluate_split(const Pipeline& pipeline, std::span<const ActivationRecord> records, ChatBackend& backend,
                          const EvalConfig& config, TranscriptLogger* logger = nullptr);

// Runs fn(i) for i in [0, n) on up to `workers` threads.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn);

// Records as JSON Lines {seed, example_id, label, predicted, parse_ok, correct, error}.
std::string records_to_jsonl(const std::vector<RecordOutcome>& records);

// ---------------------------------------------------------------------------
// Tables

struct TableLayout {
    std::string id;
    std::vector<std::string> rows;
    std::vector<std::string> columns;
};

struct TableCell {
    std::string row;
    std::string column;
    double mean = 0.0;
    double std = 0.0;

    friend bool operator==(const TableCell&, const TableCell&) = default;
};

struct RenderedTable {
    // Aligned plain-text table of "m.mmm ± s.sss" cells.
    std::string text;
    // "row,column,mean,std" with round-trip precision.
    std::string csv;
};

// Throws DatasetError when a layout cell has no result.
RenderedTable emit_table(const std::vector<TableCell>& cells, const TableLayout& layout);

std::vector<TableCell> parse_table_csv(const std::string& csv);

}  // namespace chatcbm
