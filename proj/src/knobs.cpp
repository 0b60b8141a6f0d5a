#include "protokit/knobs.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <optional>

#include "protokit/digest.hpp"
#include "protokit/source_lexer.hpp"

namespace protokit::knobs {
namespace {

using sketch::is_ident_char;

bool is_digit(char c) { return c >= '0' && c <= '9'; }
bool is_blank(char c) { return c == ' ' || c == '\t' || c == '\r'; }
bool is_ws(char c) { return is_blank(c) || c == '\n' || c == '\f' || c == '\v'; }

struct Literal {
  std::size_t start = 0;
  std::size_t end = 0;
  bool is_integer = true;
};

// Decimal literal at `pos`: [+-]? (0 | [1-9][0-9]*)? (. [0-9]*)? [fF]?
// Floats need a '.'; the suffix is only allowed on floats.
std::optional<Literal> match_literal(std::string_view s, std::size_t pos) {
  Literal lit{pos, pos, true};
  std::size_t i = pos;
  if (i < s.size() && (s[i] == '+' || s[i] == '-')) ++i;
  const std::size_t int_begin = i;
  while (i < s.size() && is_digit(s[i])) ++i;
  const std::size_t int_digits = i - int_begin;
  if (int_digits > 1 && s[int_begin] == '0') return std::nullopt;  // octal
  std::size_t frac_digits = 0;
  if (i < s.size() && s[i] == '.') {
    lit.is_integer = false;
    ++i;
    while (i < s.size() && is_digit(s[i])) {
      ++i;
      ++frac_digits;
    }
  }
  if (int_digits == 0 && frac_digits == 0) return std::nullopt;
  if (!lit.is_integer && i < s.size() && (s[i] == 'f' || s[i] == 'F')) ++i;
  if (i < s.size() && (is_ident_char(s[i]) || s[i] == '.' || s[i] == '\'')) return std::nullopt;
  lit.end = i;
  return lit;
}

std::size_t match_identifier(std::string_view s, std::size_t pos) {
  if (pos >= s.size() || is_digit(s[pos]) || !is_ident_char(s[pos])) return pos;
  while (pos < s.size() && is_ident_char(s[pos])) ++pos;
  return pos;
}

std::size_t skip(std::string_view s, std::size_t pos, bool (*pred)(char)) {
  while (pos < s.size() && pred(s[pos])) ++pos;
  return pos;
}

struct RawKnob {
  std::string name;
  Literal literal;
  KnobForm form;
};

void scan_defines(std::string_view code, std::vector<RawKnob>& out) {
  std::size_t line_start = 0;
  while (line_start < code.size()) {
    auto eol = code.find('\n', line_start);
    if (eol == std::string_view::npos) eol = code.size();
    const auto line = code.substr(0, eol);  // keep absolute offsets

    std::size_t i = skip(line, line_start, is_blank);
    if (i < eol && line[i] == '#') {
      i = skip(line, i + 1, is_blank);
      if (line.substr(i, 6) == "define" && i + 6 < eol && is_blank(line[i + 6])) {
        i = skip(line, i + 6, is_blank);
        const auto name_end = match_identifier(line, i);
        if (name_end > i && name_end < eol && is_blank(line[name_end])) {
          const auto lit_pos = skip(line, name_end, is_blank);
          if (const auto lit = match_literal(line, lit_pos)) {
            if (skip(line, lit->end, is_blank) == eol) {
              out.push_back({std::string(line.substr(i, name_end - i)), *lit, KnobForm::define});
            }
          }
        }
      }
    }
    line_start = eol + 1;
  }
}

// Type alternatives; "unsigned int" allows any whitespace between words.
std::size_t match_type(std::string_view s, std::size_t pos) {
  auto word = [&](std::size_t at, std::string_view w) -> std::size_t {
    if (s.substr(at, w.size()) != w) return std::string_view::npos;
    const auto end = at + w.size();
    if (end < s.size() && is_ident_char(s[end])) return std::string_view::npos;
    return end;
  };
  if (auto e = word(pos, "unsigned"); e != std::string_view::npos) {
    const auto next = skip(s, e, is_ws);
    if (next == e) return std::string_view::npos;
    return word(next, "int");
  }
  for (std::string_view t : {"uint8_t", "uint16_t", "uint32_t", "double", "float", "long", "int"}) {
    if (auto e = word(pos, t); e != std::string_view::npos) return e;
  }
  return std::string_view::npos;
}

void scan_const_decls(std::string_view code, std::vector<RawKnob>& out) {
  for (auto pos = code.find("const"); pos != std::string_view::npos; pos = code.find("const", pos + 1)) {
    if (pos > 0 && is_ident_char(code[pos - 1])) continue;
    std::size_t i = pos + 5;
    if (i >= code.size() || !is_ws(code[i])) continue;
    i = skip(code, i, is_ws);
    const auto type_end = match_type(code, i);
    if (type_end == std::string_view::npos) continue;
    i = skip(code, type_end, is_ws);
    if (i == type_end) continue;
    const auto name_end = match_identifier(code, i);
    if (name_end == i) continue;
    const std::string name(code.substr(i, name_end - i));
    i = skip(code, name_end, is_ws);
    if (i >= code.size() || code[i] != '=') continue;
    i = skip(code, i + 1, is_ws);
    const auto lit = match_literal(code, i);
    if (!lit) continue;
    i = skip(code, lit->end, is_ws);
    if (i >= code.size() || code[i] != ';') continue;
    out.push_back({name, *lit, KnobForm::const_decl});
  }
}

double parse_value(std::string_view text) {
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  if (!text.empty() && (text.back() == 'f' || text.back() == 'F')) text.remove_suffix(1);
  double v = 0.0;
  std::from_chars(text.data(), text.data() + text.size(), v);
  return v == 0.0 ? 0.0 : v;
}

void suggest_range(Knob& k) {
  const double v = k.value;
  if (v > 0) {
    k.suggested_min = 0.0;
    k.suggested_max = 2 * v;
  } else if (v < 0) {
    k.suggested_min = 2 * v;
    k.suggested_max = 0.0;
  } else {
    k.suggested_min = -1.0;
    k.suggested_max = 1.0;
  }
  k.suggested_step = k.is_integer ? 1.0 : std::max(std::abs(v) / 100.0, 0.01);
}

std::string version_of(std::string_view source) { return sha256_hex(source).substr(0, 16); }

}  // namespace

std::string_view to_string(KnobForm form) { return form == KnobForm::define ? "define" : "const-decl"; }

const Knob* KnobManifest::find(std::string_view id) const {
  const auto it = std::find_if(knobs.begin(), knobs.end(), [&](const auto& k) { return k.id == id; });
  return it == knobs.end() ? nullptr : &*it;
}

KnobManifest extract_knobs(std::string_view source) {
  const auto code = sketch::blank_non_code(source);
  std::vector<RawKnob> raw;
  scan_defines(code, raw);
  scan_const_decls(code, raw);
  std::sort(raw.begin(), raw.end(), [](const auto& a, const auto& b) { return a.literal.start < b.literal.start; });

  KnobManifest manifest;
  manifest.sketch_version = version_of(source);
  std::map<std::string, int> seen;
  for (const auto& r : raw) {
    Knob k;
    const int ordinal = ++seen[r.name];
    k.id = ordinal == 1 ? r.name : r.name + "." + std::to_string(ordinal);
    k.name = r.name;
    k.text = std::string(source.substr(r.literal.start, r.literal.end - r.literal.start));
    k.value = parse_value(k.text);
    k.is_integer = r.literal.is_integer;
    k.form = r.form;
    k.span_start = r.literal.start;
    k.span_end = r.literal.end;
    suggest_range(k);
    manifest.knobs.push_back(std::move(k));
  }
  return manifest;
}

std::string format_literal(const Knob& like, double value) {
  if (value == 0.0) value = 0.0;  // drop the sign of -0
  if (like.is_integer) {
    if (std::nearbyint(value) != value) {
      throw InvalidKnobValue(like.id + " is an integer constant; " + std::to_string(value) + " is not integral");
    }
    if (std::abs(value) > 9.0e18) throw InvalidKnobValue("value out of integer range");
    return std::to_string(static_cast<long long>(value));
  }
  char buf[400];
  const auto res = std::to_chars(buf, buf + sizeof buf, value, std::chars_format::fixed);
  std::string text(buf, res.ptr);
  if (text.find('.') == std::string::npos) text += ".0";
  if (!like.text.empty() && (like.text.back() == 'f' || like.text.back() == 'F')) text += like.text.back();
  return text;
}

std::pair<double, double> patch_bounds(const Knob& knob) {
  const double width = knob.suggested_max - knob.suggested_min;
  return {knob.suggested_min - width, knob.suggested_max + width};
}

PatchResult patch_knob(std::string_view source, const KnobManifest& manifest, std::string_view knob_id,
                       double new_value) {
  const Knob* knob = manifest.find(knob_id);
  if (knob == nullptr) throw UnknownKnob(std::string(knob_id));
  if (manifest.sketch_version != version_of(source) || knob->span_end > source.size() ||
      source.substr(knob->span_start, knob->span_end - knob->span_start) != knob->text) {
    throw StaleManifest("knob manifest does not match the current sketch source");
  }
  if (!std::isfinite(new_value)) throw InvalidKnobValue("value must be finite");
  const auto [lo, hi] = patch_bounds(*knob);
  if (new_value < lo || new_value > hi) {
    throw InvalidKnobValue(knob->id + " accepts values in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
  }
  if (new_value == knob->value) return {std::string(source), manifest};

  std::string patched;
  patched.reserve(source.size() + 16);
  patched.append(source.substr(0, knob->span_start));
  patched.append(format_literal(*knob, new_value));
  patched.append(source.substr(knob->span_end));
  auto next = extract_knobs(patched);
  return {std::move(patched), std::move(next)};
}

}  // namespace protokit::knobs
