#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "protokit/error.hpp"

namespace protokit::knobs {

enum class KnobForm { define, const_decl };

std::string_view to_string(KnobForm form);

// A named numeric constant in a sketch. `text` is the literal exactly as it
// appears in the source (sign and f/F suffix included); `span` addresses it.
struct Knob {
  std::string id;
  std::string name;
  std::string text;
  double value = 0.0;
  bool is_integer = true;
  KnobForm form = KnobForm::define;
  std::size_t span_start = 0;
  std::size_t span_end = 0;
  double suggested_min = 0.0;
  double suggested_max = 0.0;
  double suggested_step = 1.0;

  bool operator==(const Knob&) const = default;
};

struct KnobManifest {
  std::string sketch_version;  // content hash of the source it was extracted from
  std::vector<Knob> knobs;

  const Knob* find(std::string_view id) const;
  bool operator==(const KnobManifest&) const = default;
};

class UnknownKnob : public Error {
 public:
  explicit UnknownKnob(const std::string& id) : Error("unknown-knob", "no knob with id '" + id + "'") {}
};

class StaleManifest : public Error {
 public:
  explicit StaleManifest(const std::string& what) : Error("stale-manifest", what) {}
};

class InvalidKnobValue : public Error {
 public:
  explicit InvalidKnobValue(const std::string& what) : Error("invalid-knob-value", what) {}
};

// Matches `#define NAME LIT` and `const TYPE NAME = LIT;` outside comments
// and string literals. LIT is a decimal integer or a decimal float with an
// optional sign and optional f/F suffix.
KnobManifest extract_knobs(std::string_view source);

// Textual form of `value` in the style of `like` (integer vs decimal, suffix).
std::string format_literal(const Knob& like, double value);

// Inclusive bounds accepted by patch_knob: the suggested range widened by
// its own width on both sides.
std::pair<double, double> patch_bounds(const Knob& knob);

struct PatchResult {
  std::string source;
  KnobManifest manifest;
};

PatchResult patch_knob(std::string_view source, const KnobManifest& manifest, std::string_view knob_id,
                       double new_value);

}  // namespace protokit::knobs
