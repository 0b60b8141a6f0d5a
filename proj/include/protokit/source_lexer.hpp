#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace protokit::sketch {

// Lexical class of one byte of C/C++ source.
enum class Region : unsigned char { code, comment, string_literal, char_literal };

// Per-byte classification. Handles // and /* */ comments (including
// backslash-continued line comments), escapes, raw string literals and
// digit separators. Unterminated constructs run to end of line (literals)
// or end of input (block comments).
std::vector<Region> classify(std::string_view source);

// Same length as `source`; every byte that is not code is replaced by a
// space, except newlines which are kept so line structure survives.
std::string blank_non_code(std::string_view source);

inline bool is_ident_char(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_';
}

}  // namespace protokit::sketch
