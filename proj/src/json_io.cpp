#include "protokit/json_io.hpp"

#include <stdexcept>

namespace protokit {
namespace {

using json = nlohmann::json;

template <typename T>
std::optional<T> opt(const json& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return it->get<T>();
}

template <typename T>
void put_opt(json& j, const char* key, const std::optional<T>& v) {
  j[key] = v ? json(*v) : json(nullptr);
}

[[noreturn]] void bad_enum(const char* what, const std::string& value) {
  throw std::invalid_argument(std::string("unknown ") + what + " '" + value + "'");
}

}  // namespace

namespace catalog {

void to_json(json& j, const ModuleSpec& m) {
  j = json{{"id", m.id},
           {"name", m.name},
           {"part", m.part},
           {"kind", to_string(m.kind)},
           {"attachment", to_string(m.attachment)},
           {"summary", m.summary},
           {"library_hint", m.library_hint},
           {"peripherals", m.peripherals}};
}

void to_json(json& j, const Catalog& c) { j = json{{"modules", c.modules()}}; }

void to_json(json& j, const HardwareManifest& m) {
  j = json{{"board", m.board}, {"chain", m.chain}, {"onboard_used", m.onboard_used}};
  put_opt(j, "power", m.power);
  put_opt(j, "freeform_note", m.freeform_note);
}

void from_json(const json& j, HardwareManifest& m) {
  m.board = j.at("board").get<std::string>();
  m.chain = j.value("chain", std::vector<std::string>{});
  m.onboard_used = j.value("onboard_used", std::vector<std::string>{});
  m.power = opt<std::string>(j, "power");
  m.freeform_note = opt<std::string>(j, "freeform_note");
}

void to_json(json& j, const Finding& f) {
  j = json{{"severity", f.severity == Severity::error ? "error" : "warning"},
           {"code", f.code},
           {"message", f.message},
           {"offending_id", f.offending_id}};
}

void to_json(json& j, const ValidationReport& r) { j = json{{"ok", r.ok}, {"findings", r.findings}}; }

}  // namespace catalog

namespace llm {

void to_json(json& j, const ChatMessage& m) { j = json{{"role", to_string(m.role)}, {"content", m.content}}; }

void from_json(const json& j, ChatMessage& m) {
  const auto role = j.at("role").get<std::string>();
  const auto parsed = parse_role(role);
  if (!parsed) bad_enum("role", role);
  m.role = *parsed;
  m.content = j.at("content").get<std::string>();
}

void to_json(json& j, const Conversation& c) { j = c.messages(); }

void from_json(const json& j, Conversation& c) {
  c = Conversation{};
  for (const auto& m : j) c.append(m.get<ChatMessage>());
}

}  // namespace llm

namespace sketch {

void to_json(json& j, const Finding& f) {
  j = json{{"severity", to_string(f.severity)}, {"code", f.code}, {"message", f.message}};
}

void from_json(const json& j, Finding& f) {
  const auto sev = j.at("severity").get<std::string>();
  if (sev != "error" && sev != "warning") bad_enum("severity", sev);
  f.severity = sev == "error" ? Severity::error : Severity::warning;
  f.code = j.at("code").get<std::string>();
  f.message = j.at("message").get<std::string>();
}

void to_json(json& j, const GeneratedSketch& s) {
  j = json{{"source", s.source},
           {"method", to_string(s.method)},
           {"origin_span", {s.origin_span.start, s.origin_span.end}},
           {"findings", s.findings}};
}

void from_json(const json& j, GeneratedSketch& s) {
  s.source = j.at("source").get<std::string>();
  const auto method = j.at("method").get<std::string>();
  if (method == "fenced") {
    s.method = ExtractionMethod::fenced;
  } else if (method == "whole-response") {
    s.method = ExtractionMethod::whole_response;
  } else {
    bad_enum("extraction method", method);
  }
  const auto& span = j.at("origin_span");
  s.origin_span = {span.at(0).get<std::size_t>(), span.at(1).get<std::size_t>()};
  s.findings = j.at("findings").get<std::vector<Finding>>();
}

}  // namespace sketch

namespace toolchain {

void to_json(json& j, const Diagnostic& d) {
  j = json{{"file", d.file}, {"line", d.line}, {"severity", to_string(d.severity)}, {"message", d.message}};
  put_opt(j, "column", d.column);
}

void from_json(const json& j, Diagnostic& d) {
  d.file = j.at("file").get<std::string>();
  d.line = j.at("line").get<int>();
  d.column = opt<int>(j, "column");
  const auto sev = j.at("severity").get<std::string>();
  const auto parsed = parse_diagnostic_severity(sev);
  if (!parsed) bad_enum("diagnostic severity", sev);
  d.severity = *parsed;
  d.message = j.at("message").get<std::string>();
}

void to_json(json& j, const CompileResult& r) {
  j = json{{"success", r.success}, {"diagnostics", r.diagnostics}, {"raw_output", r.raw_output}};
  put_opt(j, "artifact_path", r.artifact_path);
}

void from_json(const json& j, CompileResult& r) {
  r.success = j.at("success").get<bool>();
  r.diagnostics = j.at("diagnostics").get<std::vector<Diagnostic>>();
  r.raw_output = j.at("raw_output").get<std::string>();
  r.artifact_path = opt<std::string>(j, "artifact_path");
}

void to_json(json& j, const UploadResult& r) {
  j = json{{"success", r.success}, {"port", r.port}, {"raw_output", r.raw_output}};
}

void from_json(const json& j, UploadResult& r) {
  r.success = j.at("success").get<bool>();
  r.port = j.at("port").get<std::string>();
  r.raw_output = j.at("raw_output").get<std::string>();
}

void to_json(json& j, const PortInfo& p) {
  j = json{{"port", p.port}};
  put_opt(j, "board_hint", p.board_hint);
}

void from_json(const json& j, PortInfo& p) {
  p.port = j.at("port").get<std::string>();
  p.board_hint = opt<std::string>(j, "board_hint");
}

}  // namespace toolchain

namespace repair {

void to_json(json& j, const LoopPolicy& p) {
  j = json{{"max_auto_iterations", p.max_auto_iterations}, {"auto_repair", p.auto_repair}};
}

void from_json(const json& j, LoopPolicy& p) {
  p.max_auto_iterations = j.value("max_auto_iterations", 3);
  p.auto_repair = j.value("auto_repair", true);
}

void to_json(json& j, const LoopState& s) {
  j = json{{"status", to_string(s.status)}, {"iteration", s.iteration}, {"model_calls", s.model_calls}};
  put_opt(j, "current_sketch", s.current_sketch);
  put_opt(j, "last_result", s.last_result);
}

void from_json(const json& j, LoopState& s) {
  const auto status = j.at("status").get<std::string>();
  const auto parsed = parse_loop_status(status);
  if (!parsed) bad_enum("loop status", status);
  s.status = *parsed;
  s.iteration = j.at("iteration").get<int>();
  s.model_calls = j.value("model_calls", 0);
  s.current_sketch = opt<sketch::GeneratedSketch>(j, "current_sketch");
  s.last_result = opt<toolchain::CompileResult>(j, "last_result");
}

}  // namespace repair

namespace knobs {

void to_json(json& j, const Knob& k) {
  j = json{{"id", k.id},
           {"name", k.name},
           {"text", k.text},
           {"value", k.value},
           {"is_integer", k.is_integer},
           {"form", to_string(k.form)},
           {"span", {k.span_start, k.span_end}},
           {"suggested_min", k.suggested_min},
           {"suggested_max", k.suggested_max},
           {"suggested_step", k.suggested_step}};
}

void from_json(const json& j, Knob& k) {
  k.id = j.at("id").get<std::string>();
  k.name = j.at("name").get<std::string>();
  k.text = j.at("text").get<std::string>();
  k.value = j.at("value").get<double>();
  k.is_integer = j.at("is_integer").get<bool>();
  const auto form = j.at("form").get<std::string>();
  if (form == "define") {
    k.form = KnobForm::define;
  } else if (form == "const-decl") {
    k.form = KnobForm::const_decl;
  } else {
    bad_enum("knob form", form);
  }
  k.span_start = j.at("span").at(0).get<std::size_t>();
  k.span_end = j.at("span").at(1).get<std::size_t>();
  k.suggested_min = j.at("suggested_min").get<double>();
  k.suggested_max = j.at("suggested_max").get<double>();
  k.suggested_step = j.at("suggested_step").get<double>();
}

void to_json(json& j, const KnobManifest& m) {
  j = json{{"sketch_version", m.sketch_version}, {"knobs", m.knobs}};
}

void from_json(const json& j, KnobManifest& m) {
  m.sketch_version = j.at("sketch_version").get<std::string>();
  m.knobs = j.at("knobs").get<std::vector<Knob>>();
}

}  // namespace knobs

}  // namespace protokit
