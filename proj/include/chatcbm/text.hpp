#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace chatcbm::text {

std::string trim(std::string_view s);

// Trim and collapse internal whitespace runs to a single space. Case is kept.
std::string collapse_whitespace(std::string_view s);

// Key used for uniqueness and matching: collapse_whitespace + ASCII case-fold.
std::string normalize_key(std::string_view s);

std::string to_lower(std::string_view s);

bool contains(std::string_view haystack, std::string_view needle);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

std::vector<std::string> split(std::string_view s, char sep);

// Replace every case-insensitive occurrence of `phrase` in `input` with
// `replacement`. Whitespace runs inside `phrase` match any whitespace run.
std::string replace_phrase_icase(std::string_view input, std::string_view phrase,
                                 std::string_view replacement);

// Number of case-insensitive, whitespace-flexible occurrences of `phrase`.
std::size_t count_phrase_icase(std::string_view input, std::string_view phrase);

// Fixed-point rendering, e.g. fixed(0.8500, 3) == "0.850".
std::string fixed(double value, int decimals);

}  // namespace chatcbm::text
