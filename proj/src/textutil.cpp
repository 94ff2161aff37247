#include "medagent/textutil.hpp"

#include <algorithm>
#include <cctype>

namespace medagent {

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

bool is_article(std::string_view token) {
  return token == "a" || token == "an" || token == "the";
}

}  // namespace

std::string to_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) {
    return c < 0x80 ? static_cast<char>(std::tolower(c)) : static_cast<char>(c);
  });
  return out;
}

std::string normalize_whitespace(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  bool pending_space = false;
  for (char c : s) {
    if (is_space(c)) {
      pending_space = !out.empty();
    } else {
      if (pending_space) out.push_back(' ');
      pending_space = false;
      out.push_back(c);
    }
  }
  return out;
}

std::string normalize_for_match(std::string_view s, bool drop_articles) {
  std::string lowered = to_lower(s);
  std::string stripped;
  stripped.reserve(lowered.size());
  for (char c : lowered) {
    unsigned char uc = static_cast<unsigned char>(c);
    if (uc >= 0x80 || std::isalnum(uc) || is_space(c)) {
      stripped.push_back(c);
    }
    // punctuation removed without inserting a space
  }
  std::string collapsed = normalize_whitespace(stripped);
  if (!drop_articles) return collapsed;

  std::string out;
  size_t pos = 0;
  while (pos < collapsed.size()) {
    size_t end = collapsed.find(' ', pos);
    if (end == std::string::npos) end = collapsed.size();
    std::string_view token(collapsed.data() + pos, end - pos);
    if (!is_article(token)) {
      if (!out.empty()) out.push_back(' ');
      out.append(token);
    }
    pos = end + 1;
  }
  return out;
}

std::vector<std::string> tokenize(std::string_view s) {
  std::string norm = normalize_for_match(s);
  std::vector<std::string> tokens;
  size_t pos = 0;
  while (pos < norm.size()) {
    size_t end = norm.find(' ', pos);
    if (end == std::string::npos) end = norm.size();
    if (end > pos) tokens.emplace_back(norm.substr(pos, end - pos));
    pos = end + 1;
  }
  return tokens;
}

std::string trim(std::string_view s) {
  size_t start = 0;
  while (start < s.size() && is_space(s[start])) ++start;
  size_t end = s.size();
  while (end > start && is_space(s[end - 1])) --end;
  return std::string(s.substr(start, end - start));
}

std::vector<std::string> split_lines(std::string_view s) {
  std::vector<std::string> lines;
  size_t pos = 0;
  while (pos <= s.size()) {
    size_t end = s.find('\n', pos);
    if (end == std::string::npos) {
      if (pos < s.size()) lines.emplace_back(s.substr(pos));
      break;
    }
    lines.emplace_back(s.substr(pos, end - pos));
    pos = end + 1;
  }
  return lines;
}

bool contains_ci(std::string_view haystack, std::string_view needle) {
  if (needle.empty()) return true;
  std::string h = to_lower(haystack);
  std::string n = to_lower(needle);
  return h.find(n) != std::string::npos;
}

}  // namespace medagent
