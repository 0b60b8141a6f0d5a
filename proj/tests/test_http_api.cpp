#include <thread>

#include "doctest.h"
#include "httplib.h"
#include "protokit/http_api.hpp"
#include "protokit/json_io.hpp"
#include "test_support.hpp"

using namespace protokit;
using json = nlohmann::json;
using protokit::testing::ScriptedProvider;
using protokit::testing::TempDir;

namespace {

// Serves the API on an ephemeral loopback port for the lifetime of the object.
class ApiServer {
 public:
  ApiServer(session::SessionService& svc, std::optional<std::filesystem::path> static_dir = std::nullopt) {
    install_routes(server_, svc, static_dir);
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~ApiServer() {
    server_.stop();
    thread_.join();
  }
  httplib::Client client() const {
    httplib::Client c("127.0.0.1", port_);
    c.set_read_timeout(10, 0);
    return c;
  }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

json manifest_json() {
  return {{"board", "DeneyapG"}, {"chain", {"S5"}}, {"onboard_used", {"A1"}}};
}

json body(const httplib::Result& r) {
  REQUIRE(r);
  return json::parse(r->body);
}

void check_error(const httplib::Result& r, int status, const std::string& code) {
  REQUIRE(r);
  CHECK(r->status == status);
  const auto j = json::parse(r->body);
  REQUIRE(j.contains("error"));
  CHECK(j["error"]["code"] == code);
  CHECK(j["error"]["message"].is_string());
}

std::string fitfit_reply() { return testing::fenced(testing::minimal_sketch("const int PAW_TARGET = 50;\n")); }

}  // namespace

TEST_CASE("http: session lifecycle") {
  TempDir dir;
  auto provider = std::make_shared<ScriptedProvider>(std::vector<ScriptedProvider::Step>{fitfit_reply()});
  auto svc = testing::make_mock_service(dir.path(), provider);
  ApiServer server(*svc);
  auto cli = server.client();

  auto r = cli.Post("/api/sessions", json{{"manifest", manifest_json()}}.dump(), "application/json");
  REQUIRE(r);
  CHECK(r->status == 201);
  const auto created = body(r)["session"];
  const std::string id = created["id"];
  CHECK(id.size() == 16);
  CHECK(created["conversation"].empty());
  CHECK(created["loop_state"]["status"] == "idle");

  CHECK(body(cli.Get("/api/sessions"))["sessions"] == json::array({id}));
  CHECK(body(cli.Get(("/api/sessions/" + id).c_str()))["session"]["id"] == id);

  r = cli.Post(("/api/sessions/" + id + "/message").c_str(), R"({"text":"count paws"})", "application/json");
  REQUIRE(r);
  CHECK(r->status == 200);
  CHECK(body(r)["session"]["loop_state"]["status"] == "extracted");

  const auto knobs = body(cli.Get(("/api/sessions/" + id + "/knobs").c_str()))["knobs"];
  CHECK(knobs["sketch_version"] == body(cli.Get(("/api/sessions/" + id).c_str()))["session"]["knobs"]["sketch_version"]);
  REQUIRE(knobs["knobs"].size() == 1);
  CHECK(knobs["knobs"][0]["id"] == "PAW_TARGET");

  r = cli.Patch(("/api/sessions/" + id + "/knobs/PAW_TARGET").c_str(), R"({"value":30})", "application/json");
  REQUIRE(r);
  CHECK(r->status == 200);
  CHECK(body(r)["session"]["current_version"] == "v2");
  check_error(cli.Patch(("/api/sessions/" + id + "/knobs/NOPE").c_str(), R"({"value":1})", "application/json"), 404,
              "unknown-knob");
  check_error(cli.Patch(("/api/sessions/" + id + "/knobs/PAW_TARGET").c_str(), R"({"value":99999})",
                        "application/json"),
              400, "invalid-knob-value");
  check_error(cli.Patch(("/api/sessions/" + id + "/knobs/PAW_TARGET").c_str(), R"({"value":"x"})",
                        "application/json"),
              400, "precondition");

  r = cli.Post(("/api/sessions/" + id + "/compile-upload").c_str(), R"({"port":"MOCK0"})", "application/json");
  REQUIRE(r);
  CHECK(r->status == 200);
  const auto done = body(r)["session"];
  CHECK(done["loop_state"]["status"] == "succeeded");
  CHECK(done["last_upload"]["success"] == true);

  check_error(cli.Post(("/api/sessions/" + id + "/compile").c_str(), "", "application/json"), 409, "loop-terminal");
  check_error(cli.Post(("/api/sessions/" + id + "/upload").c_str(), R"({"port":"COM9"})", "application/json"), 400,
              "unknown-port");
  r = cli.Post(("/api/sessions/" + id + "/upload").c_str(), R"({"port":"MOCK0"})", "application/json");
  REQUIRE(r);
  CHECK(r->status == 200);
}

TEST_CASE("http: errors") {
  TempDir dir;
  auto provider = std::make_shared<ScriptedProvider>(
      std::vector<ScriptedProvider::Step>{llm::ProviderError::Kind::timeout});
  auto svc = testing::make_mock_service(dir.path(), provider);
  ApiServer server(*svc);
  auto cli = server.client();

  check_error(cli.Get("/api/sessions/0000000000000000"), 404, "not-found");
  check_error(cli.Post("/api/sessions", "{not json", "application/json"), 400, "bad-request");
  check_error(cli.Post("/api/sessions", "[]", "application/json"), 400, "precondition");

  auto r = cli.Post("/api/sessions", json{{"manifest", {{"board", "Nope"}, {"chain", {"S2"}}}}}.dump(),
                    "application/json");
  check_error(r, 400, "invalid-manifest");
  CHECK(body(r)["error"]["details"]["findings"].is_array());
  CHECK(svc->session_ids().empty());

  r = cli.Post("/api/sessions", json{{"manifest", manifest_json()}}.dump(), "application/json");
  const std::string id = body(r)["session"]["id"];
  check_error(cli.Post(("/api/sessions/" + id + "/message").c_str(), "{}", "application/json"), 400, "precondition");
  check_error(cli.Post(("/api/sessions/" + id + "/message").c_str(), R"({"text":"go"})", "application/json"), 502,
              "provider-timeout");
  check_error(cli.Get(("/api/sessions/" + id + "/knobs").c_str()), 409, "no-sketch");
  check_error(cli.Post(("/api/sessions/" + id + "/compile").c_str(), "", "application/json"), 409, "no-sketch");
}

TEST_CASE("http: catalog, ports and static files") {
  TempDir dir;
  testing::write_text(dir / "index.html", "<h1>hi</h1>");
  auto svc = testing::make_mock_service(dir.path(), std::make_shared<ScriptedProvider>());
  ApiServer server(*svc, dir.path());
  auto cli = server.client();

  const auto cat = body(cli.Get("/api/catalog"))["catalog"];
  CHECK(cat["modules"].size() == 17);
  const auto ports = body(cli.Get("/api/ports"))["ports"];
  REQUIRE(ports.size() == 1);
  CHECK(ports[0]["port"] == "MOCK0");
  const auto page = cli.Get("/index.html");
  REQUIRE(page);
  CHECK(page->status == 200);
  CHECK(page->body == "<h1>hi</h1>");
}
