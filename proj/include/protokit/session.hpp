#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "protokit/catalog.hpp"
#include "protokit/error.hpp"
#include "protokit/knobs.hpp"
#include "protokit/llm.hpp"
#include "protokit/repair_loop.hpp"
#include "protokit/sketch.hpp"
#include "protokit/toolchain.hpp"

namespace protokit::session {

enum class EventKind {
  created,
  manifest_set,
  user_message,
  model_reply,
  sketch_extracted,
  compile_requested,
  compile_result,
  upload_requested,
  upload_result,
  knob_patched,
  port_selected,
  provider_error,
};

std::string_view to_string(EventKind kind);
std::optional<EventKind> parse_event_kind(std::string_view text);

struct SessionEvent {
  std::uint64_t seq = 0;
  std::string at;  // ISO-8601 UTC; not part of replayed state
  EventKind kind = EventKind::created;
  nlohmann::json payload = nlohmann::json::object();
};

nlohmann::json event_to_json(const SessionEvent& event);
SessionEvent event_from_json(const nlohmann::json& j);

struct SketchVersion {
  std::string version_id;
  sketch::GeneratedSketch sketch;
  knobs::KnobManifest knobs;

  bool operator==(const SketchVersion&) const = default;
};

// Everything here is a pure fold over the event log.
struct Session {
  std::string id;
  catalog::HardwareManifest manifest;
  std::string prompt_context;
  repair::LoopPolicy policy;
  llm::Conversation conversation;
  repair::LoopState loop_state;
  std::vector<SketchVersion> sketch_versions;
  std::optional<std::string> selected_port;
  std::vector<toolchain::PortInfo> known_ports;
  std::optional<toolchain::UploadResult> last_upload;
  std::optional<std::string> last_compiled_version;  // version whose compile succeeded
  std::string last_output;                           // raw toolchain output shown to the user

  // User message logged but not yet answered, and whether the loop (not
  // the user) produced it.
  std::optional<std::string> pending_message;
  bool pending_auto = false;
  // Message the loop asked to send next; becomes pending once logged.
  std::optional<std::string> queued_message;
  // A model reply produced a sketch that has not been recorded as a version.
  bool unrecorded_sketch = false;

  std::uint64_t last_seq = 0;

  const SketchVersion* current_version() const {
    return sketch_versions.empty() ? nullptr : &sketch_versions.back();
  }
  bool operator==(const Session&) const = default;
};

nlohmann::json session_to_json(const Session& session);

class ReplayError : public Error {
 public:
  explicit ReplayError(const std::string& what) : Error("replay-error", what) {}
};

// Applies one event. Throws (leaving `session` untouched) when the event is
// not valid in the current state.
void apply_event(Session& session, const SessionEvent& event);

// Rebuilds a session from its full log; checks seq density from 1.
Session replay_events(const std::vector<SessionEvent>& events);

// One JSON object per line, append-only.
class EventLog {
 public:
  explicit EventLog(std::filesystem::path path);

  const std::filesystem::path& path() const { return path_; }
  void append(const SessionEvent& event);
  std::vector<SessionEvent> read_all() const;

 private:
  std::filesystem::path path_;
};

class NotFound : public Error {
 public:
  explicit NotFound(const std::string& what) : Error("not-found", what) {}
};

class Conflict : public Error {
 public:
  Conflict(std::string code, const std::string& what) : Error(std::move(code), what) {}
};

struct ServiceConfig {
  std::filesystem::path data_dir;
  repair::LoopPolicy policy;
};

// Owns all sessions. Calls on one session are serialized; calls on
// different sessions run concurrently.
class SessionService {
 public:
  SessionService(ServiceConfig config, std::shared_ptr<const catalog::Catalog> catalog,
                 std::shared_ptr<llm::ChatProvider> provider, std::shared_ptr<toolchain::Toolchain> toolchain);

  // Rebuilds every session found in data_dir. Returns ids that failed.
  std::vector<std::string> load_existing();

  Session create_session(const catalog::HardwareManifest& manifest);
  Session get(const std::string& id) const;
  std::vector<std::string> session_ids() const;

  Session post_instruction(const std::string& id, const std::string& text);
  Session compile_current(const std::string& id);
  Session upload_current(const std::string& id, const std::string& port);
  Session compile_and_upload(const std::string& id, const std::string& port);

  knobs::KnobManifest get_knobs(const std::string& id) const;
  Session set_knob(const std::string& id, const std::string& knob_id, double value);

  // State rebuilt from the on-disk log alone.
  Session replay(const std::string& id) const;

  std::vector<toolchain::PortInfo> list_ports() const;
  const catalog::Catalog& catalog() const { return *catalog_; }
  toolchain::Toolchain& toolchain() { return *toolchain_; }

 private:
  struct Entry {
    std::mutex lease;
    Session state;
    std::unique_ptr<EventLog> log;
  };

  std::shared_ptr<Entry> entry(const std::string& id) const;
  void commit(Entry& e, EventKind kind, nlohmann::json payload);
  void drive_model(Entry& e);
  void compile_cycle(Entry& e);
  void upload_locked(Entry& e, const std::string& port);
  std::string new_session_id();
  std::filesystem::path log_path(const std::string& id) const;

  ServiceConfig config_;
  std::shared_ptr<const catalog::Catalog> catalog_;
  std::shared_ptr<llm::ChatProvider> provider_;
  std::shared_ptr<toolchain::Toolchain> toolchain_;

  mutable std::shared_mutex sessions_mutex_;
  std::map<std::string, std::shared_ptr<Entry>> sessions_;
};

// Name of the sketch directory used for a session.
std::string sketch_name_for(const std::string& session_id);

}  // namespace protokit::session
