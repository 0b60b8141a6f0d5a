#include "protokit/catalog.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <set>
#include <sstream>

#include "default_catalog_data.hpp"

namespace protokit::catalog {
namespace {

std::string_view trim(std::string_view s) {
  const auto* ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

constexpr std::array<std::string_view, 8> kKeys = {
    "id", "name", "part", "kind", "attachment", "summary", "library_hint", "peripherals"};

struct RawRecord {
  std::size_t first_line = 0;
  std::vector<std::pair<std::string, std::string>> fields;
  std::vector<std::size_t> lines;
};

std::vector<std::string> split_list(std::string_view text) {
  std::vector<std::string> out;
  while (!text.empty()) {
    const auto comma = text.find(',');
    const auto item = trim(text.substr(0, comma));
    if (!item.empty()) out.emplace_back(item);
    if (comma == std::string_view::npos) break;
    text.remove_prefix(comma + 1);
  }
  return out;
}

ModuleSpec build_module(const RawRecord& rec) {
  ModuleSpec spec;
  bool have_id = false, have_name = false, have_kind = false, have_attachment = false;
  for (std::size_t i = 0; i < rec.fields.size(); ++i) {
    const auto& [key, value] = rec.fields[i];
    const auto line = rec.lines[i];
    if (key == "id") {
      spec.id = value;
      have_id = !value.empty();
    } else if (key == "name") {
      spec.name = value;
      have_name = !value.empty();
    } else if (key == "part") {
      spec.part = value;
    } else if (key == "kind") {
      const auto kind = parse_module_kind(value);
      if (!kind) throw ParseError(line, "unknown kind '" + value + "'");
      spec.kind = *kind;
      have_kind = true;
    } else if (key == "attachment") {
      const auto att = parse_attachment(value);
      if (!att) throw ParseError(line, "unknown attachment '" + value + "'");
      spec.attachment = *att;
      have_attachment = true;
    } else if (key == "summary") {
      spec.summary = value;
    } else if (key == "library_hint") {
      spec.library_hint = value;
    } else if (key == "peripherals") {
      spec.peripherals = split_list(value);
    }
  }
  const auto where = " in record starting at line " + std::to_string(rec.first_line);
  if (!have_id) throw SchemaError("missing id" + where);
  if (!have_name) throw SchemaError("missing name" + where);
  if (!have_kind) throw SchemaError("missing kind" + where);
  if (!have_attachment) throw SchemaError("missing attachment" + where);
  return spec;
}

std::size_t utf8_length(std::string_view s) {
  return static_cast<std::size_t>(
      std::count_if(s.begin(), s.end(), [](char c) { return (static_cast<unsigned char>(c) & 0xC0) != 0x80; }));
}

}  // namespace

std::string_view to_string(ModuleKind kind) {
  switch (kind) {
    case ModuleKind::sensor: return "sensor";
    case ModuleKind::actuator: return "actuator";
    case ModuleKind::main: return "main";
    case ModuleKind::power: return "power";
  }
  return "sensor";
}

std::string_view to_string(Attachment attachment) {
  switch (attachment) {
    case Attachment::i2c_chain: return "i2c-chain";
    case Attachment::onboard: return "onboard";
    case Attachment::power_rail: return "power-rail";
  }
  return "i2c-chain";
}

std::optional<ModuleKind> parse_module_kind(std::string_view text) {
  for (auto k : {ModuleKind::sensor, ModuleKind::actuator, ModuleKind::main, ModuleKind::power}) {
    if (to_string(k) == text) return k;
  }
  return std::nullopt;
}

std::optional<Attachment> parse_attachment(std::string_view text) {
  for (auto a : {Attachment::i2c_chain, Attachment::onboard, Attachment::power_rail}) {
    if (to_string(a) == text) return a;
  }
  return std::nullopt;
}

Catalog::Catalog(std::vector<ModuleSpec> modules) : modules_(std::move(modules)) {
  std::set<std::string_view> ids;
  bool has_main = false;
  for (const auto& m : modules_) {
    if (!ids.insert(m.id).second) throw SchemaError("duplicate module id '" + m.id + "'");
    if (m.kind == ModuleKind::main) {
      has_main = true;
      if (m.attachment != Attachment::onboard) {
        throw SchemaError("main module '" + m.id + "' must use attachment onboard");
      }
    }
  }
  for (const auto& m : modules_) {
    if (m.attachment == Attachment::i2c_chain && !has_main) {
      throw SchemaError("module '" + m.id + "' is i2c-chain but the catalog has no main module");
    }
    for (const auto& p : m.peripherals) {
      const auto* spec = find(p);
      if (spec == nullptr || spec->attachment != Attachment::onboard || spec->kind == ModuleKind::main) {
        throw SchemaError("module '" + m.id + "' lists unknown onboard peripheral '" + p + "'");
      }
    }
  }
}

const ModuleSpec* Catalog::find(std::string_view id) const {
  const auto it = std::find_if(modules_.begin(), modules_.end(), [&](const auto& m) { return m.id == id; });
  return it == modules_.end() ? nullptr : &*it;
}

std::size_t Catalog::count(ModuleKind kind) const {
  return static_cast<std::size_t>(
      std::count_if(modules_.begin(), modules_.end(), [&](const auto& m) { return m.kind == kind; }));
}

ParseError::ParseError(std::size_t line, const std::string& message)
    : Error("parse-error", "line " + std::to_string(line) + ": " + message), line_(line) {}

Catalog load_catalog(std::string_view document) {
  std::vector<ModuleSpec> modules;
  RawRecord current;
  std::size_t line_no = 0;

  auto flush = [&] {
    if (!current.fields.empty()) modules.push_back(build_module(current));
    current = RawRecord{};
  };

  while (!document.empty() || line_no == 0) {
    const auto nl = document.find('\n');
    const auto raw = document.substr(0, nl);
    document = nl == std::string_view::npos ? std::string_view{} : document.substr(nl + 1);
    ++line_no;

    const auto line = trim(raw);
    if (line.empty()) {
      flush();
    } else if (line.front() != '#') {
      const auto colon = line.find(':');
      if (colon == std::string_view::npos) throw ParseError(line_no, "expected 'key: value'");
      const std::string key{trim(line.substr(0, colon))};
      const std::string value{trim(line.substr(colon + 1))};
      if (std::find(kKeys.begin(), kKeys.end(), key) == kKeys.end()) {
        throw ParseError(line_no, "unknown key '" + key + "'");
      }
      for (const auto& [k, _] : current.fields) {
        if (k == key) throw ParseError(line_no, "key '" + key + "' repeated within a record");
      }
      if (current.fields.empty()) current.first_line = line_no;
      current.fields.emplace_back(key, value);
      current.lines.push_back(line_no);
    }
    if (nl == std::string_view::npos) break;
  }
  flush();
  return Catalog(std::move(modules));
}

Catalog load_catalog_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open catalog '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return load_catalog(ss.str());
}

std::string serialize_catalog(const Catalog& catalog) {
  std::string out;
  auto field = [&](std::string_view key, std::string_view value) {
    out.append(key).append(":");
    if (!value.empty()) out.append(" ").append(value);
    out.append("\n");
  };
  bool first = true;
  for (const auto& m : catalog.modules()) {
    if (!first) out.append("\n");
    first = false;
    field("id", m.id);
    field("name", m.name);
    field("part", m.part);
    field("kind", to_string(m.kind));
    field("attachment", to_string(m.attachment));
    field("summary", m.summary);
    field("library_hint", m.library_hint);
    if (!m.peripherals.empty()) {
      std::string list;
      for (const auto& p : m.peripherals) list += (list.empty() ? "" : ", ") + p;
      field("peripherals", list);
    }
  }
  return out;
}

std::string_view default_catalog_document() { return kDefaultCatalogDocument; }

const Catalog& default_catalog() {
  static const Catalog catalog = load_catalog(kDefaultCatalogDocument);
  return catalog;
}

bool ValidationReport::has(std::string_view code) const {
  return std::any_of(findings.begin(), findings.end(), [&](const auto& f) { return f.code == code; });
}

InvalidManifest::InvalidManifest(ValidationReport report)
    : Error("invalid-manifest",
            report.findings.empty() ? std::string("invalid manifest")
                                    : "invalid manifest: " + report.findings.front().message),
      report_(std::move(report)) {}

ValidationReport validate_manifest(const HardwareManifest& manifest, const Catalog& catalog) {
  ValidationReport report;
  auto error = [&](std::string code, std::string message, std::string id) {
    report.findings.push_back({Severity::error, std::move(code), std::move(message), std::move(id)});
  };

  const ModuleSpec* board = catalog.find(manifest.board);
  if (board == nullptr) {
    error("unknown-board", "board '" + manifest.board + "' is not in the catalog", manifest.board);
  } else if (board->kind != ModuleKind::main) {
    error("board-not-main", "'" + manifest.board + "' is a " + std::string(to_string(board->kind)) +
                                ", not a main module", manifest.board);
    board = nullptr;
  }

  std::set<std::string_view> seen;
  for (const auto& id : manifest.chain) {
    if (!seen.insert(id).second) {
      error("duplicate-module", "module '" + id + "' appears more than once in the chain", id);
      continue;
    }
    const auto* spec = catalog.find(id);
    if (spec == nullptr) {
      error("unknown-module", "module '" + id + "' is not in the catalog", id);
    } else if (spec->attachment != Attachment::i2c_chain) {
      error("not-chainable", "module '" + id + "' cannot be daisy-chained (attachment " +
                                 std::string(to_string(spec->attachment)) + ")", id);
    }
  }

  std::set<std::string_view> seen_onboard;
  for (const auto& id : manifest.onboard_used) {
    if (!seen_onboard.insert(id).second) {
      error("duplicate-peripheral", "onboard peripheral '" + id + "' listed more than once", id);
      continue;
    }
    if (board != nullptr &&
        std::find(board->peripherals.begin(), board->peripherals.end(), id) == board->peripherals.end()) {
      error("unknown-peripheral", "'" + id + "' is not an onboard peripheral of '" + board->id + "'", id);
    }
  }

  if (manifest.power) {
    const auto* spec = catalog.find(*manifest.power);
    if (spec == nullptr) {
      error("unknown-module", "power module '" + *manifest.power + "' is not in the catalog", *manifest.power);
    } else if (spec->kind != ModuleKind::power) {
      error("not-power", "'" + *manifest.power + "' is not a power module", *manifest.power);
    }
  }

  if (manifest.freeform_note && utf8_length(*manifest.freeform_note) > kMaxFreeformNote) {
    error("note-too-long", "freeform note exceeds " + std::to_string(kMaxFreeformNote) + " characters", "");
  }

  report.ok = std::none_of(report.findings.begin(), report.findings.end(),
                           [](const auto& f) { return f.severity == Severity::error; });
  return report;
}

std::string manifest_to_prompt_context(const HardwareManifest& manifest, const Catalog& catalog) {
  auto report = validate_manifest(manifest, catalog);
  if (!report.ok) throw InvalidManifest(std::move(report));

  std::string out = "Board: " + catalog.find(manifest.board)->name;
  std::size_t position = 0;
  for (const auto& id : manifest.chain) {
    const auto& m = *catalog.find(id);
    out += "\nI2C chain " + std::to_string(++position) + ": " + m.id + " " + m.name;
    std::string extra;
    if (!m.part.empty()) extra += "part: " + m.part;
    if (!m.library_hint.empty()) extra += (extra.empty() ? "" : "; ") + ("library: " + m.library_hint);
    if (!extra.empty()) out += " (" + extra + ")";
  }
  for (const auto& id : manifest.onboard_used) {
    out += "\nOnboard: " + id + " " + catalog.find(id)->name;
  }
  if (manifest.power) {
    out += "\nPower: " + *manifest.power + " " + catalog.find(*manifest.power)->name;
  }
  if (manifest.freeform_note && !manifest.freeform_note->empty()) {
    out += "\nNote: " + *manifest.freeform_note;
  }
  return out;
}

}  // namespace protokit::catalog
