#include "protokit/session.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <ctime>
#include <fstream>
#include <iostream>
#include <random>

#include "protokit/json_io.hpp"

namespace protokit::session {
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr std::array<std::pair<EventKind, std::string_view>, 12> kEventNames = {{
    {EventKind::created, "created"},
    {EventKind::manifest_set, "manifest-set"},
    {EventKind::user_message, "user-message"},
    {EventKind::model_reply, "model-reply"},
    {EventKind::sketch_extracted, "sketch-extracted"},
    {EventKind::compile_requested, "compile-requested"},
    {EventKind::compile_result, "compile-result"},
    {EventKind::upload_requested, "upload-requested"},
    {EventKind::upload_result, "upload-result"},
    {EventKind::knob_patched, "knob-patched"},
    {EventKind::port_selected, "port-selected"},
    {EventKind::provider_error, "provider-error"},
}};

std::string now_iso8601() {
  const auto now = std::chrono::system_clock::now();
  const auto secs = std::chrono::system_clock::to_time_t(now);
  const auto ms =
      std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&secs, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
  char out[40];
  std::snprintf(out, sizeof out, "%s.%03dZ", buf, static_cast<int>(ms));
  return out;
}

std::string next_version_id(const Session& s) { return "v" + std::to_string(s.sketch_versions.size() + 1); }

[[noreturn]] void reject(const std::string& what) { throw PreconditionError("invalid-event", what); }

// Conversation that will be sent for the pending message.
llm::Conversation outgoing_conversation(const Session& s) {
  if (!s.pending_auto && s.conversation.empty()) {
    return repair::start(*s.pending_message, s.prompt_context, s.policy).conversation;
  }
  llm::Conversation c = s.conversation;
  c.append({llm::Role::user, *s.pending_message});
  return c;
}

void apply_model_reply(Session& s, const json& payload) {
  if (!s.pending_message) reject("model-reply without a pending user message");
  const llm::ChatMessage reply{llm::Role::assistant, payload.at("content").get<std::string>()};

  if (!s.pending_auto) {
    auto started = s.conversation.empty() ? repair::start(*s.pending_message, s.prompt_context, s.policy)
                                          : repair::resume(s.loop_state, s.conversation, *s.pending_message);
    s.conversation = std::move(started.conversation);
    s.loop_state = std::move(started.state);
  } else {
    s.conversation.append({llm::Role::user, *s.pending_message});
  }
  auto t = repair::on_model_reply(s.loop_state, reply, s.policy);
  s.conversation.append(reply);
  s.loop_state = std::move(t.state);
  s.queued_message = t.outgoing ? std::optional(t.outgoing->content) : std::nullopt;
  s.pending_message.reset();
  s.pending_auto = false;
  s.unrecorded_sketch = s.loop_state.status == repair::LoopStatus::extracted;
}

void apply_sketch_extracted(Session& s, const json& payload) {
  if (!s.unrecorded_sketch || !s.loop_state.current_sketch) reject("sketch-extracted without a new sketch");
  const auto version_id = payload.at("version_id").get<std::string>();
  if (version_id != next_version_id(s)) reject("expected version " + next_version_id(s) + ", got " + version_id);
  const auto& sketch = *s.loop_state.current_sketch;
  if (payload.at("source").get<std::string>() != sketch.source) reject("sketch source does not match the reply");
  s.sketch_versions.push_back({version_id, sketch, knobs::extract_knobs(sketch.source)});
  s.unrecorded_sketch = false;
}

void apply_knob_patched(Session& s, const json& payload) {
  const auto* current = s.current_version();
  if (current == nullptr) reject("knob-patched without a sketch");
  const auto knob_id = payload.at("knob_id").get<std::string>();
  const auto value = payload.at("value").get<double>();
  auto patched = knobs::patch_knob(current->sketch.source, current->knobs, knob_id, value);
  if (patched.source != payload.at("source").get<std::string>()) reject("patched source does not match the log");
  const auto version_id = payload.at("version_id").get<std::string>();
  if (version_id != next_version_id(s)) reject("expected version " + next_version_id(s) + ", got " + version_id);

  // Patched versions keep the provenance of the reply they came from.
  sketch::GeneratedSketch sketch = current->sketch;
  sketch.source = patched.source;
  sketch.findings = sketch::validate_structure(sketch.source);
  s.loop_state = repair::from_patched_sketch(s.loop_state, sketch);
  s.sketch_versions.push_back({version_id, std::move(sketch), std::move(patched.manifest)});
  s.queued_message.reset();
}

void apply_payload(Session& s, const SessionEvent& e) {
  const auto& p = e.payload;
  if (e.kind != EventKind::created && s.last_seq == 0) reject("log must start with a created event");

  switch (e.kind) {
    case EventKind::created:
      if (s.last_seq != 0) reject("created must be the first event");
      s.id = p.at("id").get<std::string>();
      s.policy = p.at("policy").get<repair::LoopPolicy>();
      s.policy.validate();
      break;

    case EventKind::manifest_set:
      if (!s.conversation.empty()) reject("manifest cannot change once the conversation started");
      s.manifest = p.at("manifest").get<catalog::HardwareManifest>();
      s.prompt_context = p.at("prompt_context").get<std::string>();
      break;

    case EventKind::user_message: {
      const auto text = p.at("text").get<std::string>();
      const bool automatic = p.value("auto", false);
      if (text.empty()) reject("empty user message");
      if (automatic) {
        if (!s.queued_message || *s.queued_message != text) reject("automatic message was not requested by the loop");
        s.queued_message.reset();
      } else {
        const auto st = s.loop_state.status;
        if (st == repair::LoopStatus::awaiting_model || st == repair::LoopStatus::compiling) {
          reject("loop is " + std::string(repair::to_string(st)));
        }
      }
      s.pending_message = text;
      s.pending_auto = automatic;
      break;
    }

    case EventKind::model_reply:
      apply_model_reply(s, p);
      break;

    case EventKind::sketch_extracted:
      apply_sketch_extracted(s, p);
      break;

    case EventKind::compile_requested: {
      const auto* current = s.current_version();
      if (current == nullptr || s.unrecorded_sketch) reject("compile requested without a recorded sketch");
      if (p.at("version_id").get<std::string>() != current->version_id) reject("compile of a stale version");
      s.loop_state = repair::begin_compile(s.loop_state);
      break;
    }

    case EventKind::compile_result: {
      const auto result = p.at("result").get<toolchain::CompileResult>();
      auto policy = s.policy;
      // A toolchain failure is not the model's fault; hand it to the user.
      if (p.value("toolchain_error", false)) policy.auto_repair = false;
      auto t = repair::on_compile_result(s.loop_state, result, policy);
      s.loop_state = std::move(t.state);
      s.queued_message = t.outgoing ? std::optional(t.outgoing->content) : std::nullopt;
      s.last_output = result.raw_output;
      if (result.success) s.last_compiled_version = p.at("version_id").get<std::string>();
      break;
    }

    case EventKind::upload_requested:
      if (s.current_version() == nullptr) reject("upload requested without a sketch");
      break;

    case EventKind::upload_result: {
      auto result = p.at("result").get<toolchain::UploadResult>();
      s.last_output = result.raw_output;
      s.last_upload = std::move(result);
      break;
    }

    case EventKind::knob_patched:
      apply_knob_patched(s, p);
      break;

    case EventKind::port_selected: {
      auto port = p.at("port").get<std::string>();
      auto ports = p.at("ports").get<std::vector<toolchain::PortInfo>>();
      if (std::none_of(ports.begin(), ports.end(), [&](const auto& pi) { return pi.port == port; })) {
        reject("selected port " + port + " is not among the listed ports");
      }
      s.selected_port = std::move(port);
      s.known_ports = std::move(ports);
      break;
    }

    case EventKind::provider_error:
      s.pending_message.reset();
      s.pending_auto = false;
      if (s.loop_state.status == repair::LoopStatus::awaiting_model) {
        s.loop_state = repair::on_model_unavailable(s.loop_state);
      }
      break;
  }
}

std::string error_code(const std::exception& e) {
  if (const auto* pe = dynamic_cast<const Error*>(&e)) return pe->code();
  return "error";
}

}  // namespace

std::string_view to_string(EventKind kind) {
  for (const auto& [k, name] : kEventNames) {
    if (k == kind) return name;
  }
  return "created";
}

std::optional<EventKind> parse_event_kind(std::string_view text) {
  for (const auto& [k, name] : kEventNames) {
    if (name == text) return k;
  }
  return std::nullopt;
}

json event_to_json(const SessionEvent& event) {
  return json{{"seq", event.seq}, {"at", event.at}, {"kind", to_string(event.kind)}, {"payload", event.payload}};
}

SessionEvent event_from_json(const json& j) {
  SessionEvent e;
  e.seq = j.at("seq").get<std::uint64_t>();
  e.at = j.value("at", "");
  const auto kind = j.at("kind").get<std::string>();
  const auto parsed = parse_event_kind(kind);
  if (!parsed) throw std::invalid_argument("unknown event kind '" + kind + "'");
  e.kind = *parsed;
  e.payload = j.at("payload");
  return e;
}

json session_to_json(const Session& s) {
  json versions = json::array();
  for (const auto& v : s.sketch_versions) {
    versions.push_back({{"version_id", v.version_id}, {"sketch", v.sketch}, {"knobs", v.knobs}});
  }
  const auto* current = s.current_version();
  json j{{"id", s.id},
         {"manifest", s.manifest},
         {"prompt_context", s.prompt_context},
         {"policy", s.policy},
         {"conversation", s.conversation},
         {"loop_state", s.loop_state},
         {"sketch_versions", std::move(versions)},
         {"current_version", current ? json(current->version_id) : json(nullptr)},
         {"current_code", current ? json(current->sketch.source) : json(nullptr)},
         {"knobs", current ? json(current->knobs) : json(nullptr)},
         {"known_ports", s.known_ports},
         {"last_output", s.last_output},
         {"event_count", s.last_seq}};
  j["selected_port"] = s.selected_port ? json(*s.selected_port) : json(nullptr);
  j["last_upload"] = s.last_upload ? json(*s.last_upload) : json(nullptr);
  j["last_compiled_version"] = s.last_compiled_version ? json(*s.last_compiled_version) : json(nullptr);
  j["pending_message"] = s.pending_message ? json(*s.pending_message) : json(nullptr);
  return j;
}

void apply_event(Session& session, const SessionEvent& event) {
  if (event.seq != session.last_seq + 1) {
    throw ReplayError("event log gap: expected seq " + std::to_string(session.last_seq + 1) + ", found seq " +
                      std::to_string(event.seq));
  }
  Session next = session;
  apply_payload(next, event);
  next.last_seq = event.seq;
  session = std::move(next);
}

Session replay_events(const std::vector<SessionEvent>& events) {
  if (events.empty()) throw ReplayError("event log is empty");
  Session s;
  for (const auto& e : events) {
    if (e.seq != s.last_seq + 1) {
      throw ReplayError("event log gap at seq " + std::to_string(s.last_seq + 1) + " (found seq " +
                        std::to_string(e.seq) + ")");
    }
    try {
      apply_event(s, e);
    } catch (const std::exception& ex) {
      throw ReplayError("seq " + std::to_string(e.seq) + ": " + ex.what());
    }
  }
  return s;
}

EventLog::EventLog(fs::path path) : path_(std::move(path)) {}

void EventLog::append(const SessionEvent& event) {
  std::ofstream out(path_, std::ios::binary | std::ios::app);
  if (!out) throw IoError("cannot open event log " + path_.string());
  out << event_to_json(event).dump() << '\n';
  out.flush();
  if (!out) throw IoError("failed writing event log " + path_.string());
}

std::vector<SessionEvent> EventLog::read_all() const {
  std::ifstream in(path_, std::ios::binary);
  if (!in) throw NotFound("no event log at " + path_.string());
  std::vector<SessionEvent> events;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      events.push_back(event_from_json(json::parse(line)));
    } catch (const std::exception& ex) {
      throw ReplayError("seq " + std::to_string(events.size() + 1) + ": malformed event: " + ex.what());
    }
  }
  return events;
}

std::string sketch_name_for(const std::string& session_id) { return "s" + session_id; }

SessionService::SessionService(ServiceConfig config, std::shared_ptr<const catalog::Catalog> catalog,
                               std::shared_ptr<llm::ChatProvider> provider,
                               std::shared_ptr<toolchain::Toolchain> toolchain)
    : config_(std::move(config)),
      catalog_(std::move(catalog)),
      provider_(std::move(provider)),
      toolchain_(std::move(toolchain)) {
  config_.policy.validate();
  std::error_code ec;
  fs::create_directories(config_.data_dir, ec);
  if (ec) throw IoError("cannot create data directory " + config_.data_dir.string() + ": " + ec.message());
}

fs::path SessionService::log_path(const std::string& id) const { return config_.data_dir / (id + ".jsonl"); }

std::vector<std::string> SessionService::load_existing() {
  std::vector<std::string> failed;
  std::error_code ec;
  for (const auto& entry : fs::directory_iterator(config_.data_dir, ec)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".jsonl") continue;
    const auto id = entry.path().stem().string();
    try {
      auto e = std::make_shared<Entry>();
      e->log = std::make_unique<EventLog>(entry.path());
      e->state = replay_events(e->log->read_all());
      std::unique_lock lock(sessions_mutex_);
      sessions_[id] = std::move(e);
    } catch (const std::exception& ex) {
      std::cerr << "protokit: skipping session " << id << ": " << ex.what() << '\n';
      failed.push_back(id);
    }
  }
  return failed;
}

std::string SessionService::new_session_id() {
  thread_local std::mt19937_64 rng{std::random_device{}()};
  static constexpr char kHex[] = "0123456789abcdef";
  for (;;) {
    std::string id(16, '0');
    auto bits = rng();
    for (auto& c : id) {
      c = kHex[bits & 0xf];
      bits >>= 4;
    }
    std::shared_lock lock(sessions_mutex_);
    if (sessions_.count(id) == 0 && !fs::exists(log_path(id))) return id;
  }
}

std::shared_ptr<SessionService::Entry> SessionService::entry(const std::string& id) const {
  std::shared_lock lock(sessions_mutex_);
  const auto it = sessions_.find(id);
  if (it == sessions_.end()) throw NotFound("no session '" + id + "'");
  return it->second;
}

std::vector<std::string> SessionService::session_ids() const {
  std::shared_lock lock(sessions_mutex_);
  std::vector<std::string> ids;
  for (const auto& [id, _] : sessions_) ids.push_back(id);
  return ids;
}

void SessionService::commit(Entry& e, EventKind kind, json payload) {
  SessionEvent event{e.state.last_seq + 1, now_iso8601(), kind, std::move(payload)};
  Session next = e.state;
  apply_event(next, event);
  e.log->append(event);
  e.state = std::move(next);
}

Session SessionService::create_session(const catalog::HardwareManifest& manifest) {
  auto report = catalog::validate_manifest(manifest, *catalog_);
  if (!report.ok) throw catalog::InvalidManifest(std::move(report));
  const auto context = catalog::manifest_to_prompt_context(manifest, *catalog_);

  const auto id = new_session_id();
  auto e = std::make_shared<Entry>();
  e->log = std::make_unique<EventLog>(log_path(id));
  commit(*e, EventKind::created, {{"id", id}, {"policy", config_.policy}});
  commit(*e, EventKind::manifest_set, {{"manifest", manifest}, {"prompt_context", context}});

  std::unique_lock lock(sessions_mutex_);
  sessions_[id] = e;
  return e->state;
}

Session SessionService::get(const std::string& id) const {
  auto e = entry(id);
  std::lock_guard lock(e->lease);
  return e->state;
}

void SessionService::drive_model(Entry& e) {
  for (;;) {
    if (e.state.queued_message) {
      commit(e, EventKind::user_message, {{"text", *e.state.queued_message}, {"auto", true}});
    }
    if (!e.state.pending_message) return;

    llm::ChatMessage reply;
    try {
      reply = provider_->send(outgoing_conversation(e.state));
      if (reply.content.empty()) {
        throw llm::ProviderError(llm::ProviderError::Kind::bad_response, "model returned an empty message");
      }
    } catch (const std::exception& ex) {
      if (e.state.pending_auto) {
        commit(e, EventKind::provider_error, {{"code", error_code(ex)}, {"message", ex.what()}});
      }
      throw;
    }
    commit(e, EventKind::model_reply, {{"content", reply.content}});
    if (e.state.unrecorded_sketch) {
      commit(e, EventKind::sketch_extracted,
             {{"version_id", next_version_id(e.state)}, {"source", e.state.loop_state.current_sketch->source}});
    }
  }
}

Session SessionService::post_instruction(const std::string& id, const std::string& text) {
  auto e = entry(id);
  std::lock_guard lock(e->lease);
  const auto status = e->state.loop_state.status;
  if (status == repair::LoopStatus::awaiting_model || status == repair::LoopStatus::compiling) {
    throw Conflict("loop-busy", "session is " + std::string(repair::to_string(status)) + "; instruction rejected");
  }
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) throw PreconditionError("instruction must not be empty");
  commit(*e, EventKind::user_message, {{"text", text}, {"auto", false}});
  drive_model(*e);
  return e->state;
}

void SessionService::compile_cycle(Entry& e) {
  // A repair exchange cut short (e.g. by a restart) is finished first.
  if (e.state.queued_message || e.state.pending_auto) drive_model(e);
  if (e.state.current_version() == nullptr) throw PreconditionError("no-sketch", "session has no sketch yet");
  if (e.state.loop_state.terminal()) {
    throw Conflict("loop-terminal", "loop is " + std::string(repair::to_string(e.state.loop_state.status)) +
                                        "; send a new instruction or adjust a knob first");
  }
  for (;;) {
    (void)repair::begin_compile(e.state.loop_state);
    const auto version = *e.state.current_version();
    commit(e, EventKind::compile_requested, {{"version_id", version.version_id}});

    toolchain::CompileResult result;
    std::exception_ptr failure;
    try {
      const auto dir = toolchain_->prepare_sketch_dir(version.sketch.source, sketch_name_for(e.state.id));
      result = toolchain_->compile(dir);
    } catch (const std::exception& ex) {
      failure = std::current_exception();
      result = toolchain::CompileResult{false, {}, std::string("toolchain error: ") + ex.what() + "\n", std::nullopt};
      result.diagnostics = toolchain::parse_diagnostics(result.raw_output);
    }
    commit(e, EventKind::compile_result,
           {{"version_id", version.version_id}, {"result", result}, {"toolchain_error", failure != nullptr}});
    if (failure) std::rethrow_exception(failure);

    if (e.state.queued_message) drive_model(e);
    const auto& loop = e.state.loop_state;
    if (loop.status == repair::LoopStatus::extracted && !loop.current_sketch->has_errors()) continue;
    return;
  }
}

Session SessionService::compile_current(const std::string& id) {
  auto e = entry(id);
  std::lock_guard lock(e->lease);
  compile_cycle(*e);
  return e->state;
}

void SessionService::upload_locked(Entry& e, const std::string& port) {
  const auto* current = e.state.current_version();
  if (current == nullptr) throw PreconditionError("no-sketch", "session has no sketch yet");
  if (toolchain_->config().kind == toolchain::ToolchainKind::external &&
      e.state.last_compiled_version != current->version_id) {
    throw PreconditionError("compile-required", "compile " + current->version_id + " successfully before uploading");
  }
  const auto ports = toolchain_->list_ports();
  if (std::none_of(ports.begin(), ports.end(), [&](const auto& p) { return p.port == port; })) {
    throw PreconditionError("unknown-port", "port '" + port + "' is not connected");
  }
  if (e.state.selected_port != port || e.state.known_ports != ports) {
    commit(e, EventKind::port_selected, {{"port", port}, {"ports", ports}});
  }
  const auto version = *e.state.current_version();
  commit(e, EventKind::upload_requested, {{"version_id", version.version_id}, {"port", port}});

  toolchain::UploadResult result;
  std::exception_ptr failure;
  try {
    const auto dir = toolchain_->prepare_sketch_dir(version.sketch.source, sketch_name_for(e.state.id));
    result = toolchain_->upload(dir, port);
  } catch (const std::exception& ex) {
    failure = std::current_exception();
    result = toolchain::UploadResult{false, port, std::string("toolchain error: ") + ex.what() + "\n"};
  }
  commit(e, EventKind::upload_result, {{"result", result}});
  if (failure) std::rethrow_exception(failure);
}

Session SessionService::upload_current(const std::string& id, const std::string& port) {
  auto e = entry(id);
  std::lock_guard lock(e->lease);
  upload_locked(*e, port);
  return e->state;
}

Session SessionService::compile_and_upload(const std::string& id, const std::string& port) {
  auto e = entry(id);
  std::lock_guard lock(e->lease);
  const auto ports = toolchain_->list_ports();
  if (std::none_of(ports.begin(), ports.end(), [&](const auto& p) { return p.port == port; })) {
    throw PreconditionError("unknown-port", "port '" + port + "' is not connected");
  }
  const auto* current = e->state.current_version();
  const bool already_built = current != nullptr &&
                             e->state.loop_state.status == repair::LoopStatus::succeeded &&
                             e->state.last_compiled_version == current->version_id;
  if (!already_built) compile_cycle(*e);
  if (e->state.loop_state.status == repair::LoopStatus::succeeded) upload_locked(*e, port);
  return e->state;
}

knobs::KnobManifest SessionService::get_knobs(const std::string& id) const {
  auto e = entry(id);
  std::lock_guard lock(e->lease);
  const auto* current = e->state.current_version();
  if (current == nullptr) throw PreconditionError("no-sketch", "session has no sketch yet");
  return current->knobs;
}

Session SessionService::set_knob(const std::string& id, const std::string& knob_id, double value) {
  auto e = entry(id);
  std::lock_guard lock(e->lease);
  const auto* current = e->state.current_version();
  if (current == nullptr) throw PreconditionError("no-sketch", "session has no sketch yet");
  const auto patched = knobs::patch_knob(current->sketch.source, current->knobs, knob_id, value);
  if (patched.source == current->sketch.source) return e->state;
  commit(*e, EventKind::knob_patched,
         {{"knob_id", knob_id}, {"value", value}, {"version_id", next_version_id(e->state)}, {"source", patched.source}});
  return e->state;
}

Session SessionService::replay(const std::string& id) const {
  const auto path = log_path(id);
  if (!fs::exists(path)) throw NotFound("no event log for session '" + id + "'");
  return replay_events(EventLog(path).read_all());
}

std::vector<toolchain::PortInfo> SessionService::list_ports() const { return toolchain_->list_ports(); }

}  // namespace protokit::session
