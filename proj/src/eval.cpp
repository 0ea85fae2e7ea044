#include "chatcbm/eval.hpp"

#include <atomic>
#include <charconv>
#include <cmath>
#include <exception>
#include <iomanip>
#include <map>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "chatcbm/error.hpp"
#include "chatcbm/text.hpp"

namespace chatcbm {

Aggregate aggregate(std::span<const double> values) {
    if (values.empty()) throw ConfigError("cannot aggregate an empty list");
    Aggregate a;
    a.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
    if (values.size() > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - a.mean) * (v - a.mean);
        a.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
    }
    return a;
}

std::string format_cell(double mean, double std, int decimals) {
    return text::fixed(mean, decimals) + " ± " + text::fixed(std, decimals);
}

std::vector<double> EvalReport::accuracies() const {
    std::vector<double> out;
    for (const auto& s : per_seed) out.push_back(s.accuracy());
    return out;
}

void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn) {
    workers = std::max<std::size_t>(1, std::min(workers, n));
    if (workers == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex err_mu;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(err_mu);
                    if (!first_error) first_error = std::current_exception();
                    next = n;
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

EvalReport evaluate_split(const Pipeline& pipeline, std::span<const ActivationRecord> records, ChatBackend& backend,
                          const EvalConfig& config, TranscriptLogger* logger) {
    if (config.seeds.empty()) throw ConfigError("evaluation needs at least one seed");
    if (records.empty()) throw DatasetError("evaluation needs at least one record");
    if (!(config.max_failure_rate >= 0.0 && config.max_failure_rate <= 1.0)) {
        throw ConfigError("max_failure_rate must be in [0, 1]");
    }
    for (const auto& r : records) {
        if (!pipeline.roster().contains(r.label)) throw DatasetError("label '" + r.label + "' is not in the roster");
    }

    EvalReport report;
    for (auto seed : config.seeds) {
        Pipeline p = pipeline.with_demo_seed(seed);
        if (config.probe_reseed) {
            TrainConfig tc = config.probe_reseed->config;
            tc.seed = seed;
            p = p.with_probe(train_probe(config.probe_reseed->train_records, pipeline.roster(), tc));
        }

        std::vector<RecordOutcome> outcomes(records.size());
        parallel_for(records.size(), config.workers, [&](std::size_t i) {
            const auto& rec = records[i];
            auto& o = outcomes[i];
            o.seed = seed;
            o.example_id = rec.example_id;
            o.label = rec.label;
            try {
                auto state = p.start_session(rec.example_id, rec.activations);
                const auto c = predict(p, state, backend, logger);
                o.parse_ok = c.response.parse_ok;
                o.predicted = c.predicted_class;
                o.correct = c.predicted_class == rec.label;
            } catch (const BackendError& e) {
                o.error = e.what();
            }
        });

        SeedResult sr;
        sr.seed = seed;
        sr.total = outcomes.size();
        for (const auto& o : outcomes) {
            sr.correct += o.correct ? 1 : 0;
            sr.backend_failures += o.error ? 1 : 0;
            sr.parse_failures += (!o.error && !o.parse_ok) ? 1 : 0;
        }
        report.records.insert(report.records.end(), outcomes.begin(), outcomes.end());
        const double failure_rate = static_cast<double>(sr.backend_failures) / static_cast<double>(sr.total);
        if (failure_rate > config.max_failure_rate) {
            report.aborted = true;
            report.abort_reason = "backend failures on seed " + std::to_string(seed) + ": " +
                                  std::to_string(sr.backend_failures) + " of " + std::to_string(sr.total);
            break;
        }
        report.per_seed.push_back(sr);
    }
    if (!report.per_seed.empty()) {
        const auto acc = report.accuracies();
        report.summary = aggregate(acc);
    }
    return report;
}

std::string records_to_jsonl(const std::vector<RecordOutcome>& records) {
    std::string out;
    for (const auto& r : records) {
        nlohmann::json j{{"seed", r.seed},         {"example_id", r.example_id}, {"label", r.label},
                         {"parse_ok", r.parse_ok}, {"correct", r.correct}};
        j["predicted"] = r.predicted ? nlohmann::json(*r.predicted) : nlohmann::json(nullptr);
        j["error"] = r.error ? nlohmann::json(*r.error) : nlohmann::json(nullptr);
        out += j.dump() + "\n";
    }
    return out;
}

// ---------------------------------------------------------------------------
// Tables

namespace {

std::string round_trip(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
    return q + "\"";
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(std::move(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(std::move(cur));
    return out;
}

double parse_double(const std::string& s, std::size_t line) {
    double v = 0.0;
    const auto* end = s.data() + s.size();
    const auto [ptr, ec] = std::from_chars(s.data(), end, v);
    if (ec != std::errc() || ptr != end) {
        throw DatasetError("line " + std::to_string(line) + ": '" + s + "' is not a number");
    }
    return v;
}

// Display width in code points, so "±" counts once.
std::size_t width(const std::string& s) {
    std::size_t w = 0;
    for (unsigned char c : s) w += (c & 0xC0) != 0x80;
    return w;
}

std::string pad(const std::string& s, std::size_t w) { return s + std::string(w > width(s) ? w - width(s) : 0, ' '); }

}  // namespace

RenderedTable emit_table(const std::vector<TableCell>& cells, const TableLayout& layout) {
    std::map<std::pair<std::string, std::string>, const TableCell*> index;
    for (const auto& c : cells) index[{c.row, c.column}] = &c;

    std::vector<std::vector<std::string>> grid;
    grid.push_back({layout.id});
    for (const auto& col : layout.columns) grid[0].push_back(col);
    RenderedTable out;
    out.csv = "row,column,mean,std\n";
    for (const auto& row : layout.rows) {
        std::vector<std::string> line{row};
        for (const auto& col : layout.columns) {
            const auto it = index.find({row, col});
            if (it == index.end()) throw DatasetError("table '" + layout.id + "' is missing cell (" + row + ", " + col + ")");
            line.push_back(format_cell(it->second->mean, it->second->std));
            out.csv += csv_field(row) + "," + csv_field(col) + "," + round_trip(it->second->mean) + "," +
                       round_trip(it->second->std) + "\n";
        }
        grid.push_back(std::move(line));
    }

    std::vector<std::size_t> widths(grid[0].size(), 0);
    for (const auto& line : grid) {
        for (std::size_t i = 0; i < line.size(); ++i) widths[i] = std::max(widths[i], width(line[i]));
    }
    for (const auto& line : grid) {
        std::string l;
        for (std::size_t i = 0; i < line.size(); ++i) l += (i ? " | " : "") + pad(line[i], widths[i]);
        while (!l.empty() && l.back() == ' ') l.pop_back();
        out.text += l + "\n";
    }
    return out;
}

std::vector<TableCell> parse_table_csv(const std::string& csv) {
    std::istringstream in(csv);
    std::string line;
    std::size_t n = 0;
    std::vector<TableCell> cells;
    while (std::getline(in, line)) {
        ++n;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (n == 1) {
            if (line != "row,column,mean,std") throw DatasetError("line 1: unexpected table CSV header");
            continue;
        }
        if (line.empty()) continue;
        const auto f = split_csv_line(line);
        if (f.size() != 4) throw DatasetError("line " + std::to_string(n) + ": expected 4 fields");
        cells.push_back({f[0], f[1], parse_double(f[2], n), parse_double(f[3], n)});
    }
    return cells;
}

}  // namespace chatcbm
