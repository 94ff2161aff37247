#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace medagent {

// Lowercase ASCII copy; bytes >= 0x80 pass through untouched.
std::string to_lower(std::string_view s);

// Collapse runs of whitespace to single spaces and trim the ends.
std::string normalize_whitespace(std::string_view s);

// Scoring normalization: lowercase, strip punctuation, collapse whitespace.
// With drop_articles, the tokens "a", "an", "the" are removed as well
// (used by diagnosis matching, not by token F1).
std::string normalize_for_match(std::string_view s, bool drop_articles = false);

// normalize_for_match followed by a whitespace split.
std::vector<std::string> tokenize(std::string_view s);

std::string trim(std::string_view s);

// Splits on '\n'; a trailing newline does not produce an empty last line.
std::vector<std::string> split_lines(std::string_view s);

bool contains_ci(std::string_view haystack, std::string_view needle);

}  // namespace medagent
