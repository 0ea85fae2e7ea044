#include "chatcbm/fixtures.hpp"

#include <charconv>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "chatcbm/dataset_io.hpp"
#include "chatcbm/error.hpp"
#include "chatcbm/text.hpp"

namespace chatcbm {
namespace {

std::vector<std::string> lines_of(const std::string& csv) {
    std::vector<std::string> out;
    std::istringstream in(csv);
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        out.push_back(line);
    }
    return out;
}

double number(const std::string& s, std::size_t row, const char* field) {
    double v = 0.0;
    const auto* end = s.data() + s.size();
    const auto [ptr, ec] = std::from_chars(s.data(), end, v);
    if (s.empty() || ec != std::errc() || ptr != end || !std::isfinite(v)) {
        throw FixtureError("row " + std::to_string(row) + ": " + field + " '" + s + "' is not a number");
    }
    return v;
}

long integer(const std::string& s, std::size_t row, const char* field) {
    long v = 0;
    const auto* end = s.data() + s.size();
    const auto [ptr, ec] = std::from_chars(s.data(), end, v);
    if (s.empty() || ec != std::errc() || ptr != end) {
        throw FixtureError("row " + std::to_string(row) + ": " + field + " '" + s + "' is not an integer");
    }
    return v;
}

void check_accuracy(double v, std::size_t row) {
    if (v < 0.0 || v > 1.0) throw FixtureError("row " + std::to_string(row) + ": accuracy outside [0, 1]");
}

std::string axis_header(CurveAxis axis) {
    switch (axis) {
        case CurveAxis::ratio: return "ratio,accuracy";
        case CurveAxis::steps: return "steps,accuracy";
        case CurveAxis::concepts: return "concepts,accuracy";
    }
    return "";
}

CurveAxis parse_axis(const std::string& s) {
    if (s == "ratio") return CurveAxis::ratio;
    if (s == "steps") return CurveAxis::steps;
    if (s == "concepts") return CurveAxis::concepts;
    throw FixtureError("unknown curve axis '" + s + "'");
}

}  // namespace

std::string_view to_string(Monotonicity m) {
    switch (m) {
        case Monotonicity::none: return "none";
        case Monotonicity::non_decreasing: return "non_decreasing";
        case Monotonicity::strictly_increasing: return "strictly_increasing";
    }
    return "?";
}

Monotonicity parse_monotonicity(std::string_view s) {
    if (s == "none") return Monotonicity::none;
    if (s == "non_decreasing") return Monotonicity::non_decreasing;
    if (s == "strictly_increasing") return Monotonicity::strictly_increasing;
    throw FixtureError("unknown monotonicity '" + std::string(s) + "'");
}

bool satisfies(const std::vector<double>& values, Monotonicity m) {
    for (std::size_t i = 1; i < values.size(); ++i) {
        if (m == Monotonicity::non_decreasing && values[i] < values[i - 1]) return false;
        if (m == Monotonicity::strictly_increasing && values[i] <= values[i - 1]) return false;
    }
    return true;
}

std::vector<CurvePoint> parse_curve_csv(const std::string& csv, CurveAxis axis) {
    const auto lines = lines_of(csv);
    if (lines.empty() || lines[0] != axis_header(axis)) {
        throw FixtureError("row 1: expected header '" + axis_header(axis) + "'");
    }
    std::vector<CurvePoint> points;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const std::size_t row = i + 1;
        if (lines[i].empty()) {
            if (i + 1 == lines.size()) break;
            throw FixtureError("row " + std::to_string(row) + ": empty row");
        }
        const auto f = text::split(lines[i], ',');
        if (f.size() != 2) throw FixtureError("row " + std::to_string(row) + ": expected 2 fields, got " +
                                              std::to_string(f.size()));
        CurvePoint p;
        if (axis == CurveAxis::ratio) {
            p.x = number(f[0], row, "ratio");
            if (p.x < 0.0 || p.x > 1.0) throw FixtureError("row " + std::to_string(row) + ": ratio outside [0, 1]");
        } else {
            const long n = integer(f[0], row, axis == CurveAxis::steps ? "steps" : "concepts");
            if (n < 0) throw FixtureError("row " + std::to_string(row) + ": negative count");
            p.x = static_cast<double>(n);
        }
        p.accuracy = number(f[1], row, "accuracy");
        check_accuracy(p.accuracy, row);
        if (!points.empty() && p.x <= points.back().x) {
            throw FixtureError("row " + std::to_string(row) + ": x values must be strictly increasing");
        }
        points.push_back(p);
    }
    if (points.empty()) throw FixtureError("curve has no data rows");
    return points;
}

std::string concept_grid_to_csv(const std::vector<GridRow>& rows) {
    std::string out = "start,concepts,accuracy\n";
    for (const auto& r : rows) out += std::to_string(r.start) + "," + r.concepts + "," + text::fixed(r.accuracy, 4) + "\n";
    return out;
}

std::vector<GridRow> parse_concept_grid_csv(const std::string& csv) {
    const auto lines = lines_of(csv);
    if (lines.empty() || lines[0] != "start,concepts,accuracy") {
        throw FixtureError("row 1: expected header 'start,concepts,accuracy'");
    }
    std::vector<GridRow> rows;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const std::size_t row = i + 1;
        if (lines[i].empty()) {
            if (i + 1 == lines.size()) break;
            throw FixtureError("row " + std::to_string(row) + ": empty row");
        }
        const auto f = text::split(lines[i], ',');
        if (f.size() != 3) throw FixtureError("row " + std::to_string(row) + ": expected 3 fields");
        GridRow g;
        const long start = integer(f[0], row, "start");
        if (start < 1) throw FixtureError("row " + std::to_string(row) + ": start must be >= 1");
        g.start = static_cast<int>(start);
        g.concepts = f[1];
        if (g.concepts != "+wiki" && integer(g.concepts, row, "concepts") < 1) {
            throw FixtureError("row " + std::to_string(row) + ": concepts must be >= 1 or '+wiki'");
        }
        g.accuracy = number(f[2], row, "accuracy");
        check_accuracy(g.accuracy, row);
        rows.push_back(std::move(g));
    }
    if (rows.empty()) throw FixtureError("grid has no data rows");
    return rows;
}

bool FixtureReport::ok() const {
    if (results.empty()) return false;
    for (const auto& r : results) {
        if (!r.ok) return false;
    }
    return true;
}

namespace {

// Per start, accuracies along the concept axis ("+wiki" last).
std::vector<std::vector<double>> grid_series(const std::vector<GridRow>& rows) {
    std::map<int, std::vector<std::pair<long, double>>> by_start;
    for (const auto& r : rows) {
        const long key = r.concepts == "+wiki" ? std::numeric_limits<long>::max() : std::stol(r.concepts);
        auto& s = by_start[r.start];
        if (!s.empty() && key <= s.back().first) {
            throw FixtureError("start " + std::to_string(r.start) + ": concept counts must increase");
        }
        s.emplace_back(key, r.accuracy);
    }
    std::vector<std::vector<double>> out;
    for (const auto& [_, s] : by_start) {
        std::vector<double> v;
        for (const auto& [__, a] : s) v.push_back(a);
        out.push_back(std::move(v));
    }
    return out;
}

FixtureResult check_one(const std::filesystem::path& dir, const nlohmann::json& entry) {
    FixtureResult r;
    r.file = entry.at("file").get<std::string>();
    r.kind = entry.at("kind").get<std::string>();
    const auto mono = parse_monotonicity(entry.value("monotone", std::string("none")));
    const auto raw = io::read_file(dir / r.file);

    std::string emitted;
    std::vector<std::vector<double>> series;
    if (r.kind == "curve") {
        const auto axis = parse_axis(entry.at("axis").get<std::string>());
        const auto points = parse_curve_csv(raw, axis);
        r.rows = points.size();
        std::vector<double> acc;
        for (const auto& p : points) acc.push_back(p.accuracy);
        series.push_back(std::move(acc));
        emitted = curve_to_csv(points, axis);
    } else if (r.kind == "concept_grid") {
        const auto rows = parse_concept_grid_csv(raw);
        r.rows = rows.size();
        series = grid_series(rows);
        emitted = concept_grid_to_csv(rows);
    } else {
        throw FixtureError("unknown fixture kind '" + r.kind + "'");
    }
    for (const auto& s : series) {
        if (!satisfies(s, mono)) throw FixtureError("values are not " + std::string(to_string(mono)));
    }
    if (emitted != raw) throw FixtureError("re-emitted CSV differs from the fixture bytes");
    r.ok = true;
    return r;
}

}  // namespace

FixtureReport check_golden_fixtures(const std::filesystem::path& dir) {
    const auto manifest_path = dir / "manifest.json";
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(io::read_file(manifest_path));
    } catch (const nlohmann::json::exception& e) {
        throw FixtureError(manifest_path.string() + ": " + e.what());
    } catch (const DatasetError& e) {
        throw FixtureError(e.what());
    }
    if (!manifest.contains("fixtures") || !manifest["fixtures"].is_array()) {
        throw FixtureError(manifest_path.string() + ": missing 'fixtures' array");
    }
    FixtureReport report;
    for (const auto& entry : manifest["fixtures"]) {
        try {
            report.results.push_back(check_one(dir, entry));
        } catch (const std::exception& e) {
            FixtureResult r;
            r.file = entry.value("file", std::string("?"));
            r.kind = entry.value("kind", std::string("?"));
            r.message = e.what();
            report.results.push_back(std::move(r));
        }
    }
    return report;
}

}  // namespace chatcbm
