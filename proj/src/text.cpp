#include "chatcbm/text.hpp"

#include <cctype>
#include <cstdio>
#include <optional>

namespace chatcbm::text {
namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

char lower(char c) { return static_cast<char>(std::tolower(static_cast<unsigned char>(c))); }

std::vector<std::string> words(std::string_view s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (is_space(c)) {
            if (!cur.empty()) out.push_back(std::move(cur)), cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

// Length of the match of `phrase_words` starting at `pos`, if any.
std::optional<std::size_t> match_at(std::string_view input, std::size_t pos,
                                    const std::vector<std::string>& phrase_words) {
    std::size_t i = pos;
    for (std::size_t w = 0; w < phrase_words.size(); ++w) {
        if (w > 0) {
            if (i >= input.size() || !is_space(input[i])) return std::nullopt;
            while (i < input.size() && is_space(input[i])) ++i;
        }
        const auto& word = phrase_words[w];
        if (input.size() - i < word.size()) return std::nullopt;
        for (std::size_t k = 0; k < word.size(); ++k) {
            if (lower(input[i + k]) != lower(word[k])) return std::nullopt;
        }
        i += word.size();
    }
    return i - pos;
}

}  // namespace

std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && is_space(s[b])) ++b;
    while (e > b && is_space(s[e - 1])) --e;
    return std::string(s.substr(b, e - b));
}

std::string collapse_whitespace(std::string_view s) { return join(words(s), " "); }

std::string normalize_key(std::string_view s) { return to_lower(collapse_whitespace(s)); }

std::string to_lower(std::string_view s) {
    std::string out(s);
    for (auto& c : out) c = lower(c);
    return out;
}

bool contains(std::string_view haystack, std::string_view needle) {
    return haystack.find(needle) != std::string_view::npos;
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i > 0) out += sep;
        out += parts[i];
    }
    return out;
}

std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        auto pos = s.find(sep, start);
        if (pos == std::string_view::npos) {
            out.emplace_back(s.substr(start));
            break;
        }
        out.emplace_back(s.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

std::string replace_phrase_icase(std::string_view input, std::string_view phrase,
                                 std::string_view replacement) {
    const auto phrase_words = words(phrase);
    if (phrase_words.empty()) return std::string(input);
    std::string out;
    std::size_t i = 0;
    while (i < input.size()) {
        if (auto len = match_at(input, i, phrase_words)) {
            out += replacement;
            i += *len;
        } else {
            out.push_back(input[i]);
            ++i;
        }
    }
    return out;
}

std::size_t count_phrase_icase(std::string_view input, std::string_view phrase) {
    const auto phrase_words = words(phrase);
    if (phrase_words.empty()) return 0;
    std::size_t n = 0;
    std::size_t i = 0;
    while (i < input.size()) {
        if (auto len = match_at(input, i, phrase_words)) {
            ++n;
            i += *len;
        } else {
            ++i;
        }
    }
    return n;
}

std::string fixed(double value, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, value);
    std::string s(buf);
    // "-0.000" reads as a sign error in tables.
    if (s.size() > 1 && s[0] == '-' && s.find_first_not_of("-0.") == std::string::npos) s.erase(0, 1);
    return s;
}

}  // namespace chatcbm::text
