#include <thread>

#include "doctest.h"
#include "protokit/json_io.hpp"
#include "protokit/session.hpp"
#include "test_support.hpp"

using namespace protokit;
using namespace protokit::session;
using protokit::testing::Concept;
using protokit::testing::ScriptedProvider;
using protokit::testing::TempDir;
using Kind = protokit::llm::ProviderError::Kind;

namespace {

const Concept& concept_named(const std::string& name) {
  for (const auto& c : testing::concepts()) {
    if (c.name == name) return c;
  }
  throw std::logic_error("no concept " + name);
}

std::filesystem::path log_of(const TempDir& dir, const std::string& id) { return dir / "data" / (id + ".jsonl"); }

std::vector<std::string> kinds(const TempDir& dir, const std::string& id) {
  std::vector<std::string> out;
  for (const auto& e : EventLog(log_of(dir, id)).read_all()) out.emplace_back(to_string(e.kind));
  return out;
}

using Kinds = std::vector<std::string>;

std::string sketch_reply(const std::string& extra = "") { return testing::fenced(testing::minimal_sketch(extra)); }

}  // namespace

TEST_CASE("create_session") {
  TempDir dir;
  auto svc = testing::make_mock_service(dir.path(), std::make_shared<ScriptedProvider>());
  const auto s = svc->create_session(concept_named("BakeHero").manifest);
  CHECK(s.conversation.empty());
  CHECK(s.prompt_context.find("SHTC3") != std::string::npos);
  CHECK(s.prompt_context.find("5x7 LED Matrix") != std::string::npos);
  CHECK(kinds(dir, s.id) == Kinds{"created", "manifest-set"});
  CHECK(svc->create_session(concept_named("BakeHero").manifest).id != s.id);

  catalog::HardwareManifest bad{"S2", {}, {}, std::nullopt, std::nullopt};
  CHECK_THROWS_AS(svc->create_session(bad), catalog::InvalidManifest);
  CHECK(svc->session_ids().size() == 2);
  std::size_t files = 0;
  for ([[maybe_unused]] const auto& f : std::filesystem::directory_iterator(dir / "data")) ++files;
  CHECK(files == 2);
}

TEST_CASE("first instruction logs message, reply and sketch") {
  TempDir dir;
  const auto& c = concept_named("GuidingSteps");
  auto svc = testing::make_mock_service(dir.path(), std::make_shared<ScriptedProvider>(
                                                        std::vector<ScriptedProvider::Step>{c.replies[0]}));
  const auto id = svc->create_session(c.manifest).id;
  const auto s = svc->post_instruction(id, c.instruction);
  CHECK(kinds(dir, id) == Kinds{"created", "manifest-set", "user-message", "model-reply", "sketch-extracted"});
  CHECK(s.loop_state.status == repair::LoopStatus::extracted);
  CHECK(s.conversation.size() == 3);
  CHECK(s.conversation.messages()[0].content.find("HARDWARE:\nBoard: Deneyap G") != std::string::npos);
  REQUIRE(s.sketch_versions.size() == 1);
  CHECK(s.sketch_versions[0].version_id == "v1");
  CHECK(s.sketch_versions[0].knobs.find("STEP_THRESHOLD") != nullptr);
  CHECK(svc->replay(id) == s);
}

TEST_CASE("provider timeout leaves the loop untouched") {
  TempDir dir;
  auto provider = std::make_shared<ScriptedProvider>(std::vector<ScriptedProvider::Step>{Kind::timeout, sketch_reply()});
  auto svc = testing::make_mock_service(dir.path(), provider);
  const auto id = svc->create_session(concept_named("FitFit").manifest).id;
  const auto before = svc->get(id).loop_state;
  CHECK_THROWS_AS(svc->post_instruction(id, "count paws"), llm::ProviderError);
  CHECK(svc->get(id).loop_state == before);
  CHECK(kinds(dir, id) == Kinds{"created", "manifest-set", "user-message"});
  CHECK(svc->replay(id) == svc->get(id));

  // The user simply tries again.
  const auto s = svc->post_instruction(id, "count paws");
  CHECK(s.loop_state.status == repair::LoopStatus::extracted);
  CHECK(s.conversation.size() == 3);
  CHECK(svc->replay(id) == s);
}

TEST_CASE("instruction while awaiting the model is rejected") {
  TempDir dir;
  std::string id;
  {
    // A prose reply queues the corrective message; the process then dies
    // before sending it.
    auto svc = testing::make_mock_service(dir.path(), std::make_shared<ScriptedProvider>(
                                                          std::vector<ScriptedProvider::Step>{"Sure!", Kind::transport}));
    id = svc->create_session(concept_named("FitFit").manifest).id;
    CHECK_THROWS_AS(svc->post_instruction(id, "count paws"), llm::ProviderError);
    auto events = EventLog(log_of(dir, id)).read_all();
    REQUIRE(events.back().kind == EventKind::provider_error);
    std::filesystem::resize_file(log_of(dir, id), 0);
    events.pop_back();
    events.pop_back();  // the automatic user-message
    EventLog log(log_of(dir, id));
    for (const auto& e : events) log.append(e);
  }
  auto provider = std::make_shared<ScriptedProvider>(std::vector<ScriptedProvider::Step>{sketch_reply()});
  auto svc = testing::make_mock_service(dir.path(), provider);
  CHECK(svc->load_existing().empty());
  const auto stuck = svc->get(id);
  REQUIRE(stuck.loop_state.status == repair::LoopStatus::awaiting_model);
  const auto size = std::filesystem::file_size(log_of(dir, id));
  try {
    svc->post_instruction(id, "another idea");
    FAIL("expected a conflict");
  } catch (const Conflict& e) {
    CHECK(e.code() == "loop-busy");
  }
  CHECK(svc->get(id) == stuck);
  CHECK(std::filesystem::file_size(log_of(dir, id)) == size);

  // Compiling finishes the interrupted exchange first.
  const auto s = svc->compile_current(id);
  CHECK(s.loop_state.status == repair::LoopStatus::succeeded);
  CHECK(s.conversation.messages()[3].content == "Return only complete code.");
  CHECK(svc->replay(id) == s);
}

TEST_CASE("compile and upload against the mock toolchain") {
  TempDir dir;
  auto svc = testing::make_mock_service(dir.path(), std::make_shared<ScriptedProvider>(
                                                        std::vector<ScriptedProvider::Step>{sketch_reply()}));
  const auto id = svc->create_session(concept_named("PedalPulse").manifest).id;
  svc->post_instruction(id, "blink");
  const auto s = svc->compile_and_upload(id, "MOCK0");
  CHECK(s.loop_state.status == repair::LoopStatus::succeeded);
  REQUIRE(s.last_upload.has_value());
  CHECK(s.last_upload->success);
  CHECK(s.selected_port == "MOCK0");
  CHECK(s.last_compiled_version == "v1");
  CHECK(kinds(dir, id) == Kinds{"created", "manifest-set", "user-message", "model-reply", "sketch-extracted",
                                "compile-requested", "compile-result", "port-selected", "upload-requested",
                                "upload-result"});
  // Already built: a second request only uploads.
  svc->compile_and_upload(id, "MOCK0");
  const auto k = kinds(dir, id);
  CHECK(Kinds(k.end() - 2, k.end()) == Kinds{"upload-requested", "upload-result"});
  CHECK(k.size() == 12);

  try {
    svc->compile_current(id);
    FAIL("expected loop-terminal");
  } catch (const Conflict& e) {
    CHECK(e.code() == "loop-terminal");
  }
  try {
    svc->upload_current(id, "NOPE");
    FAIL("expected unknown-port");
  } catch (const PreconditionError& e) {
    CHECK(e.code() == "unknown-port");
  }
  CHECK(kinds(dir, id).size() == 12);
  CHECK(svc->replay(id) == svc->get(id));
}

TEST_CASE("failing compile blocks the upload") {
  TempDir dir;
  auto svc = testing::make_mock_service(
      dir.path(), std::make_shared<ScriptedProvider>(std::vector<ScriptedProvider::Step>{sketch_reply("#error no\n")}),
      repair::LoopPolicy{3, false});
  const auto id = svc->create_session(concept_named("PedalPulse").manifest).id;
  svc->post_instruction(id, "blink");
  const auto s = svc->compile_and_upload(id, "MOCK0");
  CHECK(s.loop_state.status == repair::LoopStatus::awaiting_user);
  CHECK_FALSE(s.last_upload.has_value());
  const auto k = kinds(dir, id);
  CHECK(std::find(k.begin(), k.end(), "upload-requested") == k.end());
  CHECK(s.last_output.find("#error no") != std::string::npos);
}

TEST_CASE("automatic repair feeds diagnostics back") {
  TempDir dir;
  auto provider = std::make_shared<ScriptedProvider>(
      std::vector<ScriptedProvider::Step>{sketch_reply("#error missing library\n"), sketch_reply()});
  auto svc = testing::make_mock_service(dir.path(), provider);
  const auto id = svc->create_session(concept_named("PedalPulse").manifest).id;
  svc->post_instruction(id, "tilt colours");
  const auto s = svc->compile_current(id);
  CHECK(s.loop_state.status == repair::LoopStatus::succeeded);
  CHECK(s.loop_state.iteration == 2);
  CHECK(s.sketch_versions.size() == 2);
  int diagnostics_messages = 0;
  for (const auto& m : s.conversation.messages()) {
    if (m.content.starts_with("The code failed to compile with these errors:")) {
      ++diagnostics_messages;
      CHECK(m.content.find("line 1: #error missing library") != std::string::npos);
    }
  }
  CHECK(diagnostics_messages == 1);
  CHECK(svc->replay(id) == s);
}

TEST_CASE("provider failure during repair hands control to the user") {
  TempDir dir;
  auto provider = std::make_shared<ScriptedProvider>(
      std::vector<ScriptedProvider::Step>{sketch_reply("#error x\n"), Kind::rate_limit, sketch_reply()});
  auto svc = testing::make_mock_service(dir.path(), provider);
  const auto id = svc->create_session(concept_named("PedalPulse").manifest).id;
  svc->post_instruction(id, "tilt colours");
  CHECK_THROWS_AS(svc->compile_current(id), llm::ProviderError);
  const auto s = svc->get(id);
  CHECK(s.loop_state.status == repair::LoopStatus::awaiting_user);
  CHECK(kinds(dir, id).back() == "provider-error");
  CHECK(svc->replay(id) == s);
  const auto after = svc->post_instruction(id, "please fix it");
  CHECK(after.loop_state.status == repair::LoopStatus::extracted);
  CHECK(svc->compile_current(id).loop_state.status == repair::LoopStatus::succeeded);
  CHECK(svc->replay(id) == svc->get(id));
}

TEST_CASE("upload to a busy port is logged as a failure") {
  TempDir dir;
  auto svc = testing::make_mock_service(dir.path(), std::make_shared<ScriptedProvider>(
                                                        std::vector<ScriptedProvider::Step>{sketch_reply()}));
  const auto id = svc->create_session(concept_named("FitFit").manifest).id;
  svc->post_instruction(id, "x");
  svc->compile_current(id);
  auto lease = svc->toolchain().leases().try_acquire("MOCK0");
  REQUIRE(lease.has_value());
  const auto s = svc->upload_current(id, "MOCK0");
  REQUIRE(s.last_upload.has_value());
  CHECK_FALSE(s.last_upload->success);
  const auto events = EventLog(log_of(dir, id)).read_all();
  CHECK(events.back().kind == EventKind::upload_result);
  CHECK(events.back().payload["result"]["success"] == false);
}

TEST_CASE("knobs") {
  TempDir dir;
  const auto& fitfit = concept_named("FitFit");
  auto svc = testing::make_mock_service(dir.path(), std::make_shared<ScriptedProvider>(
                                                        std::vector<ScriptedProvider::Step>{fitfit.replies[0]}));
  const auto id = svc->create_session(fitfit.manifest).id;
  CHECK_THROWS_AS(svc->get_knobs(id), PreconditionError);
  CHECK_THROWS_AS(svc->set_knob(id, "PAW_TARGET", 30), PreconditionError);

  svc->post_instruction(id, fitfit.instruction);
  const auto m = svc->get_knobs(id);
  REQUIRE(m.find("PAW_TARGET") != nullptr);
  CHECK(m.find("PAW_TARGET")->value == 50);

  svc->compile_current(id);
  const auto before = svc->get(id);
  const auto s = svc->set_knob(id, "PAW_TARGET", 30);
  REQUIRE(s.sketch_versions.size() == 2);
  CHECK(s.sketch_versions[0] == before.sketch_versions[0]);
  CHECK(s.sketch_versions[1].sketch.source.find("const int PAW_TARGET = 30;") != std::string::npos);
  CHECK(s.sketch_versions[1].knobs.find("PAW_TARGET")->value == 30);
  CHECK(s.loop_state.status == repair::LoopStatus::extracted);
  CHECK(s.loop_state.current_sketch == s.sketch_versions[1].sketch);
  CHECK(kinds(dir, id).back() == "knob-patched");

  // Same value: nothing to log.
  CHECK(svc->set_knob(id, "PAW_TARGET", 30) == s);
  CHECK(kinds(dir, id).back() == "knob-patched");
  CHECK_THROWS_AS(svc->set_knob(id, "NOPE", 1), knobs::UnknownKnob);
  CHECK_THROWS_AS(svc->set_knob(id, "PAW_TARGET", 1000), knobs::InvalidKnobValue);

  const auto built = svc->compile_and_upload(id, "MOCK0");
  CHECK(built.last_compiled_version == "v2");
  CHECK(built.last_upload->success);
  CHECK(svc->replay(id) == built);
}

TEST_CASE("replay errors") {
  TempDir dir;
  auto svc = testing::make_mock_service(dir.path(), std::make_shared<ScriptedProvider>(
                                                        std::vector<ScriptedProvider::Step>{sketch_reply()}));
  CHECK_THROWS_AS(svc->replay("missing"), NotFound);
  CHECK_THROWS_AS(replay_events({}), ReplayError);

  const auto id = svc->create_session(concept_named("FitFit").manifest).id;
  svc->post_instruction(id, "x");
  auto events = EventLog(log_of(dir, id)).read_all();
  REQUIRE(events.size() == 5);
  events.erase(events.begin() + 3);
  try {
    replay_events(events);
    FAIL("expected a replay error");
  } catch (const ReplayError& e) {
    CHECK(std::string(e.what()).find("seq 4") != std::string::npos);
  }

  auto bad = EventLog(log_of(dir, id)).read_all();
  bad[4].payload["source"] = "tampered";
  try {
    replay_events(bad);
    FAIL("expected a replay error");
  } catch (const ReplayError& e) {
    CHECK(std::string(e.what()).find("seq 5") != std::string::npos);
  }

  std::filesystem::resize_file(log_of(dir, id), 0);
  CHECK_THROWS_AS(svc->replay(id), ReplayError);
}

TEST_CASE("apply_event rejects invalid events without side effects") {
  Session s;
  CHECK_THROWS_AS(apply_event(s, {1, "", EventKind::model_reply, {{"content", "x"}}}), PreconditionError);
  CHECK(s == Session{});
  apply_event(s, {1, "", EventKind::created, {{"id", "abc"}, {"policy", repair::LoopPolicy{}}}});
  CHECK_THROWS_AS(apply_event(s, {3, "", EventKind::upload_requested, nlohmann::json::object()}), ReplayError);
  const auto copy = s;
  CHECK_THROWS_AS(apply_event(s, {2, "", EventKind::user_message, {{"text", "hi"}, {"auto", true}}}),
                  PreconditionError);
  CHECK(s == copy);
}

TEST_CASE("event json round trip and timestamps") {
  const SessionEvent e{7, "2026-01-01T00:00:00.000Z", EventKind::knob_patched, {{"knob_id", "K"}}};
  CHECK(event_to_json(e)["kind"] == "knob-patched");
  const auto back = event_from_json(event_to_json(e));
  CHECK(back.seq == 7);
  CHECK(back.kind == EventKind::knob_patched);
  CHECK(back.payload == e.payload);
  CHECK_THROWS(event_from_json({{"seq", 1}, {"kind", "bogus"}, {"payload", {}}}));
}

TEST_CASE("sessions survive a restart") {
  TempDir dir;
  std::string id;
  Session live;
  {
    auto svc = testing::make_mock_service(dir.path(), std::make_shared<ScriptedProvider>(
                                                          std::vector<ScriptedProvider::Step>{sketch_reply()}));
    id = svc->create_session(concept_named("FitFit").manifest).id;
    svc->post_instruction(id, "x");
    live = svc->compile_and_upload(id, "MOCK0");
  }
  testing::write_text(dir / "data" / "junk.jsonl", "not json\n");
  auto svc = testing::make_mock_service(dir.path(), std::make_shared<ScriptedProvider>());
  CHECK(svc->load_existing() == std::vector<std::string>{"junk"});
  CHECK(svc->get(id) == live);
}

TEST_CASE("calls on one session are serialized") {
  TempDir dir;
  auto provider = std::make_shared<ScriptedProvider>();
  for (int i = 0; i < 8; ++i) provider->push(sketch_reply("// v" + std::to_string(i) + "\n"));
  auto svc = testing::make_mock_service(dir.path(), provider);
  const auto id = svc->create_session(concept_named("FitFit").manifest).id;
  const auto other = svc->create_session(concept_named("FitFit").manifest).id;
  std::vector<std::thread> threads;
  for (int t = 0; t < 4; ++t) {
    threads.emplace_back([&, t] { svc->post_instruction(t % 2 ? id : other, "idea " + std::to_string(t)); });
  }
  for (auto& t : threads) t.join();
  for (const auto& sid : {id, other}) {
    const auto s = svc->get(sid);
    CHECK(s.sketch_versions.size() == 2);
    CHECK(s.conversation.size() == 5);
    CHECK(svc->replay(sid) == s);
  }
}

TEST_CASE("external toolchain requires a compile before upload") {
  TempDir dir;
  auto cfg = toolchain::ToolchainConfig::external_defaults();
  const auto cli = (std::filesystem::path(PROTOKIT_TEST_DATA_DIR) / "fake_arduino_cli.sh").string();
  cfg.compile_command[0] = cfg.upload_command[0] = cfg.list_ports_command[0] = cli;
  cfg.board_id = "deneyap:esp32:dydk_g";
  cfg.work_root = dir / "work";
  auto provider = std::make_shared<ScriptedProvider>(std::vector<ScriptedProvider::Step>{sketch_reply()});
  SessionService svc({dir / "data", {}},
                     std::shared_ptr<const catalog::Catalog>(&catalog::default_catalog(), [](const auto*) {}),
                     provider, std::make_shared<toolchain::Toolchain>(cfg));
  const auto id = svc.create_session(concept_named("FitFit").manifest).id;
  svc.post_instruction(id, "x");
  try {
    svc.upload_current(id, "/dev/ttyUSB0");
    FAIL("expected compile-required");
  } catch (const PreconditionError& e) {
    CHECK(e.code() == "compile-required");
  }
  const auto s = svc.compile_and_upload(id, "/dev/ttyUSB0");
  CHECK(s.loop_state.status == repair::LoopStatus::succeeded);
  CHECK(s.last_upload->success);
  CHECK(s.known_ports.size() == 2);
  CHECK(svc.replay(id) == s);
}
