#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "chatcbm/intervention.hpp"

namespace chatcbm {

enum class Monotonicity { none, non_decreasing, strictly_increasing };

std::string_view to_string(Monotonicity m);
Monotonicity parse_monotonicity(std::string_view s);

// Parses a curve CSV as written by curve_to_csv. Throws FixtureError naming
// the offending row.
std::vector<CurvePoint> parse_curve_csv(const std::string& csv, CurveAxis axis);

// One cell of a concept-count grid. `concepts` is a count or "+wiki".
struct GridRow {
    int start = 0;
    std::string concepts;
    double accuracy = 0.0;

    friend bool operator==(const GridRow&, const GridRow&) = default;
};

// "start,concepts,accuracy" with 4-decimal accuracy.
std::string concept_grid_to_csv(const std::vector<GridRow>& rows);
std::vector<GridRow> parse_concept_grid_csv(const std::string& csv);

bool satisfies(const std::vector<double>& values, Monotonicity m);

struct FixtureResult {
    std::string file;
    std::string kind;
    std::size_t rows = 0;
    bool ok = false;
    std::string message;
};

struct FixtureReport {
    std::vector<FixtureResult> results;

    bool ok() const;
};

// Loads manifest.json from `dir` and checks every listed file: schema, value
// ranges, the declared monotonicity, and byte-identical re-emission through
// the curve writers. A missing or malformed manifest throws FixtureError.
FixtureReport check_golden_fixtures(const std::filesystem::path& dir);

}  // namespace chatcbm
