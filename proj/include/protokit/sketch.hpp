#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "protokit/error.hpp"

namespace protokit::sketch {

enum class Severity { error, warning };

struct Finding {
  Severity severity = Severity::error;
  std::string code;
  std::string message;

  bool operator==(const Finding&) const = default;
};

enum class ExtractionMethod { fenced, whole_response };

std::string_view to_string(Severity severity);
std::string_view to_string(ExtractionMethod method);

// Byte range [start, end) inside the assistant message.
struct Span {
  std::size_t start = 0;
  std::size_t end = 0;

  bool operator==(const Span&) const = default;
};

struct GeneratedSketch {
  std::string source;
  ExtractionMethod method = ExtractionMethod::fenced;
  Span origin_span;
  std::vector<Finding> findings;

  bool has_errors() const;
  bool operator==(const GeneratedSketch&) const = default;
};

class NoCodeFound : public Error {
 public:
  NoCodeFound() : Error("no-code-found", "response contains no complete sketch with setup() and loop()") {}
};

// True if `source` defines `void NAME(` outside comments and literals.
bool defines_function(std::string_view source, std::string_view name);

// Picks the sketch out of an assistant reply:
//  1. every ``` fenced block (any info string) is a candidate;
//  2. candidates defining both setup() and loop() qualify, the longest wins;
//  3. with no fences at all, the trimmed reply is used if it defines both;
//  4. otherwise there is no code.
// An unterminated fence runs to the end of the reply.
std::optional<GeneratedSketch> try_extract_sketch(std::string_view response);

// As above; throws NoCodeFound instead of returning nullopt.
GeneratedSketch extract_sketch(std::string_view response);

// Pre-compile sanity checks: missing-setup, missing-loop, unbalanced-braces
// (errors) and empty-body (warning, no code at all).
std::vector<Finding> validate_structure(std::string_view source);

}  // namespace protokit::sketch
