#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "protokit/error.hpp"

namespace protokit::catalog {

enum class ModuleKind { sensor, actuator, main, power };
enum class Attachment { i2c_chain, onboard, power_rail };

std::string_view to_string(ModuleKind kind);
std::string_view to_string(Attachment attachment);
std::optional<ModuleKind> parse_module_kind(std::string_view text);
std::optional<Attachment> parse_attachment(std::string_view text);

// One entry of the hardware catalog. `peripherals` is only meaningful for
// main modules and lists the ids of their onboard peripherals.
struct ModuleSpec {
  std::string id;
  std::string name;
  std::string part;
  ModuleKind kind = ModuleKind::sensor;
  Attachment attachment = Attachment::i2c_chain;
  std::string summary;
  std::string library_hint;
  std::vector<std::string> peripherals;

  bool operator==(const ModuleSpec&) const = default;
};

// Immutable after construction; safe to share between sessions.
class Catalog {
 public:
  Catalog() = default;
  // Throws SchemaError on duplicate ids.
  explicit Catalog(std::vector<ModuleSpec> modules);

  const std::vector<ModuleSpec>& modules() const { return modules_; }
  const ModuleSpec* find(std::string_view id) const;
  std::size_t count(ModuleKind kind) const;
  bool empty() const { return modules_.empty(); }

  bool operator==(const Catalog&) const = default;

 private:
  std::vector<ModuleSpec> modules_;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& message);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class SchemaError : public Error {
 public:
  explicit SchemaError(const std::string& message) : Error("schema-error", message) {}
};

// Parses the line-oriented catalog document format.
Catalog load_catalog(std::string_view document);
Catalog load_catalog_file(const std::string& path);
std::string serialize_catalog(const Catalog& catalog);

// The catalog shipped in catalog/default.cat, compiled in.
const Catalog& default_catalog();
std::string_view default_catalog_document();

struct HardwareManifest {
  std::string board;
  std::vector<std::string> chain;
  std::vector<std::string> onboard_used;
  std::optional<std::string> power;
  std::optional<std::string> freeform_note;

  bool operator==(const HardwareManifest&) const = default;
};

inline constexpr std::size_t kMaxFreeformNote = 500;

enum class Severity { error, warning };

struct Finding {
  Severity severity = Severity::error;
  std::string code;
  std::string message;
  std::string offending_id;

  bool operator==(const Finding&) const = default;
};

struct ValidationReport {
  bool ok = true;
  std::vector<Finding> findings;

  bool has(std::string_view code) const;
};

class InvalidManifest : public Error {
 public:
  explicit InvalidManifest(ValidationReport report);
  const ValidationReport& report() const { return report_; }

 private:
  ValidationReport report_;
};

ValidationReport validate_manifest(const HardwareManifest& manifest, const Catalog& catalog);

// Canonical text describing the declared hardware, fed into the system prompt.
// Throws InvalidManifest if the manifest does not validate.
std::string manifest_to_prompt_context(const HardwareManifest& manifest, const Catalog& catalog);

}  // namespace protokit::catalog
