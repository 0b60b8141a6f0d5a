#include "protokit/source_lexer.hpp"

#include <cctype>

namespace protokit::sketch {
namespace {

bool is_digit(char c) { return c >= '0' && c <= '9'; }
bool is_alnum(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

// Length of a raw-string prefix (R, u8R, uR, LR, UR) ending right before
// the quote at `quote`, or 0.
std::size_t raw_prefix_length(std::string_view s, std::size_t quote) {
  if (quote == 0 || s[quote - 1] != 'R') return 0;
  std::size_t begin = quote - 1;
  if (begin >= 2 && s.substr(begin - 2, 2) == "u8") {
    begin -= 2;
  } else if (begin >= 1 && (s[begin - 1] == 'u' || s[begin - 1] == 'L' || s[begin - 1] == 'U')) {
    begin -= 1;
  }
  if (begin > 0 && is_ident_char(s[begin - 1])) return 0;
  return quote - begin;
}

}  // namespace

std::vector<Region> classify(std::string_view s) {
  std::vector<Region> out(s.size(), Region::code);
  const std::size_t n = s.size();
  std::size_t i = 0;
  bool in_number = false;

  while (i < n) {
    const char c = s[i];

    if (in_number) {
      if (is_ident_char(c) || c == '.') {
        ++i;
        continue;
      }
      if (c == '\'' && i + 1 < n && is_alnum(s[i + 1])) {
        i += 2;
        continue;
      }
      if ((c == '+' || c == '-') && i > 0 &&
          (s[i - 1] == 'e' || s[i - 1] == 'E' || s[i - 1] == 'p' || s[i - 1] == 'P')) {
        ++i;
        continue;
      }
      in_number = false;
    }

    if (c == '/' && i + 1 < n && s[i + 1] == '/') {
      while (i < n && s[i] != '\n') {
        if (s[i] == '\\' && i + 1 < n && s[i + 1] == '\n') {
          out[i] = out[i + 1] = Region::comment;
          i += 2;
          continue;
        }
        if (s[i] == '\\' && i + 2 < n && s[i + 1] == '\r' && s[i + 2] == '\n') {
          out[i] = out[i + 1] = out[i + 2] = Region::comment;
          i += 3;
          continue;
        }
        out[i++] = Region::comment;
      }
      continue;
    }

    if (c == '/' && i + 1 < n && s[i + 1] == '*') {
      out[i] = out[i + 1] = Region::comment;
      i += 2;
      while (i < n && !(s[i] == '*' && i + 1 < n && s[i + 1] == '/')) out[i++] = Region::comment;
      if (i < n) {
        out[i] = out[i + 1] = Region::comment;
        i += 2;
      }
      continue;
    }

    if (c == '"') {
      if (raw_prefix_length(s, i) > 0) {
        const auto open = s.find('(', i + 1);
        if (open != std::string_view::npos && open - i - 1 <= 16) {
          const auto delim = s.substr(i + 1, open - i - 1);
          if (delim.find_first_of(" \t\n\\)\"") == std::string_view::npos) {
            const std::string terminator = ")" + std::string(delim) + "\"";
            const auto close = s.find(terminator, open + 1);
            const std::size_t end = close == std::string_view::npos ? n : close + terminator.size();
            for (std::size_t k = i; k < end; ++k) out[k] = Region::string_literal;
            i = end;
            continue;
          }
        }
      }
      out[i++] = Region::string_literal;
      while (i < n && s[i] != '"' && s[i] != '\n') {
        if (s[i] == '\\' && i + 1 < n) out[i++] = Region::string_literal;
        out[i++] = Region::string_literal;
      }
      if (i < n && s[i] == '"') out[i++] = Region::string_literal;
      continue;
    }

    if (c == '\'') {
      out[i++] = Region::char_literal;
      while (i < n && s[i] != '\'' && s[i] != '\n') {
        if (s[i] == '\\' && i + 1 < n) out[i++] = Region::char_literal;
        out[i++] = Region::char_literal;
      }
      if (i < n && s[i] == '\'') out[i++] = Region::char_literal;
      continue;
    }

    if ((is_digit(c) || (c == '.' && i + 1 < n && is_digit(s[i + 1]))) && (i == 0 || !is_ident_char(s[i - 1]))) {
      in_number = true;
    }
    ++i;
  }
  return out;
}

std::string blank_non_code(std::string_view source) {
  const auto regions = classify(source);
  std::string out(source);
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (regions[i] != Region::code && out[i] != '\n') out[i] = ' ';
  }
  return out;
}

}  // namespace protokit::sketch
