#include "protokit/sketch.hpp"

#include <algorithm>

#include "protokit/source_lexer.hpp"

namespace protokit::sketch {
namespace {

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

// Works on already-blanked text.
bool defines_function_blanked(std::string_view text, std::string_view name) {
  std::size_t pos = 0;
  while ((pos = text.find("void", pos)) != std::string_view::npos) {
    const std::size_t start = pos;
    pos += 4;
    if (start > 0 && is_ident_char(text[start - 1])) continue;
    std::size_t i = pos;
    if (i >= text.size() || !is_space(text[i])) continue;
    while (i < text.size() && is_space(text[i])) ++i;
    if (text.substr(i, name.size()) != name) continue;
    i += name.size();
    while (i < text.size() && is_space(text[i])) ++i;
    if (i < text.size() && text[i] == '(') return true;
  }
  return false;
}

struct Fence {
  std::size_t body_start = 0;
  std::size_t body_end = 0;
  bool terminated = false;
};

std::size_t line_end(std::string_view s, std::size_t pos) {
  const auto nl = s.find('\n', pos);
  return nl == std::string_view::npos ? s.size() : nl;
}

// Number of leading backticks after optional blanks, or 0.
std::size_t fence_run(std::string_view line, std::size_t& after) {
  std::size_t i = 0;
  while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
  std::size_t run = 0;
  while (i + run < line.size() && line[i + run] == '`') ++run;
  after = i + run;
  return run >= 3 ? run : 0;
}

bool is_closing_fence(std::string_view line, std::size_t min_run) {
  std::size_t after = 0;
  const auto run = fence_run(line, after);
  if (run < min_run) return false;
  return std::all_of(line.begin() + static_cast<std::ptrdiff_t>(after), line.end(),
                     [](char c) { return c == ' ' || c == '\t' || c == '\r'; });
}

std::vector<Fence> find_fences(std::string_view s) {
  std::vector<Fence> fences;
  std::size_t pos = 0;
  while (pos < s.size()) {
    const auto eol = line_end(s, pos);
    const auto line = s.substr(pos, eol - pos);
    std::size_t after = 0;
    const auto run = fence_run(line, after);
    if (run == 0 || line.substr(after).find('`') != std::string_view::npos) {
      pos = eol + 1;
      continue;
    }
    Fence fence;
    fence.body_start = std::min(eol + 1, s.size());
    std::size_t cursor = fence.body_start;
    bool closed = false;
    while (cursor < s.size()) {
      const auto close_eol = line_end(s, cursor);
      if (is_closing_fence(s.substr(cursor, close_eol - cursor), run)) {
        fence.body_end = cursor > fence.body_start ? cursor - 1 : fence.body_start;
        fence.terminated = true;
        pos = close_eol + 1;
        closed = true;
        break;
      }
      cursor = close_eol + 1;
    }
    if (!closed) {
      fence.body_end = s.size();
      pos = s.size();
    }
    fences.push_back(fence);
  }
  return fences;
}

}  // namespace

std::string_view to_string(Severity severity) {
  return severity == Severity::error ? "error" : "warning";
}

std::string_view to_string(ExtractionMethod method) {
  return method == ExtractionMethod::fenced ? "fenced" : "whole-response";
}

bool GeneratedSketch::has_errors() const {
  return std::any_of(findings.begin(), findings.end(), [](const auto& f) { return f.severity == Severity::error; });
}

bool defines_function(std::string_view source, std::string_view name) {
  return defines_function_blanked(blank_non_code(source), name);
}

std::optional<GeneratedSketch> try_extract_sketch(std::string_view response) {
  auto qualifies = [](std::string_view code) {
    const auto blanked = blank_non_code(code);
    return defines_function_blanked(blanked, "setup") && defines_function_blanked(blanked, "loop");
  };

  const auto fences = find_fences(response);
  GeneratedSketch sketch;
  if (!fences.empty()) {
    const Fence* best = nullptr;
    for (const auto& f : fences) {
      const auto body = response.substr(f.body_start, f.body_end - f.body_start);
      if (!qualifies(body)) continue;
      if (best == nullptr || f.body_end - f.body_start > best->body_end - best->body_start) best = &f;
    }
    if (best == nullptr) return std::nullopt;
    sketch.source = std::string(response.substr(best->body_start, best->body_end - best->body_start));
    sketch.method = ExtractionMethod::fenced;
    sketch.origin_span = {best->body_start, best->body_end};
    if (!best->terminated) {
      sketch.findings.push_back({Severity::warning, "unterminated-fence", "code fence is not closed"});
    }
  } else {
    std::size_t b = 0, e = response.size();
    while (b < e && is_space(response[b])) ++b;
    while (e > b && is_space(response[e - 1])) --e;
    const auto trimmed = response.substr(b, e - b);
    if (!qualifies(trimmed)) return std::nullopt;
    sketch.source = std::string(trimmed);
    sketch.method = ExtractionMethod::whole_response;
    sketch.origin_span = {b, e};
  }
  auto structural = validate_structure(sketch.source);
  sketch.findings.insert(sketch.findings.end(), structural.begin(), structural.end());
  return sketch;
}

GeneratedSketch extract_sketch(std::string_view response) {
  auto sketch = try_extract_sketch(response);
  if (!sketch) throw NoCodeFound();
  return std::move(*sketch);
}

std::vector<Finding> validate_structure(std::string_view source) {
  std::vector<Finding> findings;
  const auto regions = classify(source);
  std::string blanked(source);
  std::size_t open = 0, close = 0;
  for (std::size_t i = 0; i < blanked.size(); ++i) {
    if (regions[i] != Region::code) {
      if (blanked[i] != '\n') blanked[i] = ' ';
      continue;
    }
    if (blanked[i] == '{') ++open;
    if (blanked[i] == '}') ++close;
  }

  if (std::all_of(blanked.begin(), blanked.end(), is_space)) {
    findings.push_back({Severity::warning, "empty-body", "sketch contains no code"});
  }
  if (!defines_function_blanked(blanked, "setup")) {
    findings.push_back({Severity::error, "missing-setup", "no definition of void setup()"});
  }
  if (!defines_function_blanked(blanked, "loop")) {
    findings.push_back({Severity::error, "missing-loop", "no definition of void loop()"});
  }
  if (open != close) {
    findings.push_back({Severity::error, "unbalanced-braces",
                        std::to_string(open) + " '{' against " + std::to_string(close) + " '}'"});
  }
  return findings;
}

}  // namespace protokit::sketch
