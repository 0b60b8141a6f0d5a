#pragma once

// nlohmann::json adapters for the domain types. Enum values serialize as
// their kebab-case names.

#include "json.hpp"
#include "protokit/catalog.hpp"
#include "protokit/knobs.hpp"
#include "protokit/llm.hpp"
#include "protokit/repair_loop.hpp"
#include "protokit/sketch.hpp"
#include "protokit/toolchain.hpp"

namespace protokit::catalog {
void to_json(nlohmann::json& j, const ModuleSpec& m);
void to_json(nlohmann::json& j, const Catalog& c);
void to_json(nlohmann::json& j, const HardwareManifest& m);
void from_json(const nlohmann::json& j, HardwareManifest& m);
void to_json(nlohmann::json& j, const Finding& f);
void to_json(nlohmann::json& j, const ValidationReport& r);
}  // namespace protokit::catalog

namespace protokit::llm {
void to_json(nlohmann::json& j, const ChatMessage& m);
void from_json(const nlohmann::json& j, ChatMessage& m);
void to_json(nlohmann::json& j, const Conversation& c);
void from_json(const nlohmann::json& j, Conversation& c);
}  // namespace protokit::llm

namespace protokit::sketch {
void to_json(nlohmann::json& j, const Finding& f);
void from_json(const nlohmann::json& j, Finding& f);
void to_json(nlohmann::json& j, const GeneratedSketch& s);
void from_json(const nlohmann::json& j, GeneratedSketch& s);
}  // namespace protokit::sketch

namespace protokit::toolchain {
void to_json(nlohmann::json& j, const Diagnostic& d);
void from_json(const nlohmann::json& j, Diagnostic& d);
void to_json(nlohmann::json& j, const CompileResult& r);
void from_json(const nlohmann::json& j, CompileResult& r);
void to_json(nlohmann::json& j, const UploadResult& r);
void from_json(const nlohmann::json& j, UploadResult& r);
void to_json(nlohmann::json& j, const PortInfo& p);
void from_json(const nlohmann::json& j, PortInfo& p);
}  // namespace protokit::toolchain

namespace protokit::repair {
void to_json(nlohmann::json& j, const LoopPolicy& p);
void from_json(const nlohmann::json& j, LoopPolicy& p);
void to_json(nlohmann::json& j, const LoopState& s);
void from_json(const nlohmann::json& j, LoopState& s);
}  // namespace protokit::repair

namespace protokit::knobs {
void to_json(nlohmann::json& j, const Knob& k);
void from_json(const nlohmann::json& j, Knob& k);
void to_json(nlohmann::json& j, const KnobManifest& m);
void from_json(const nlohmann::json& j, KnobManifest& m);
}  // namespace protokit::knobs
