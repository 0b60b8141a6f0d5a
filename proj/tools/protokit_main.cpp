// protokit command-line entry point: HTTP service plus one-shot commands
// operating on the same data directory.

#include <csignal>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "protokit/config.hpp"
#include "protokit/http_api.hpp"
#include "protokit/json_io.hpp"

namespace {

using json = nlohmann::json;
using namespace protokit;

httplib::Server* g_server = nullptr;

void on_signal(int) {
  if (g_server != nullptr) g_server->stop();
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path);
  return json::parse(in);
}

void print_session(const session::Session& s) { std::cout << session::session_to_json(s).dump(2) << '\n'; }

int serve(const AppConfig& config) {
  auto service = make_service(config);
  httplib::Server server;
  install_routes(server, *service, config.static_dir);
  g_server = &server;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  std::cerr << "protokit: listening on http://" << config.listen_host << ':' << config.listen_port << '\n';
  if (!server.listen(config.listen_host, config.listen_port)) {
    std::cerr << "protokit: cannot listen on " << config.listen_host << ':' << config.listen_port << '\n';
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"protokit: model-assisted Arduino sketch generation, repair and upload"};
  app.require_subcommand(1);

  std::string config_path = "protokit.json";
  app.add_option("-c,--config", config_path, "JSON configuration file")->capture_default_str();

  std::string session_id, manifest_path, instruction, port, knob_id;
  double knob_value = 0;

  auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP API");

  auto* chat = app.add_subcommand("chat", "Send an instruction, creating a session when --session is absent");
  chat->add_option("--manifest", manifest_path, "Hardware manifest JSON (new sessions)");
  chat->add_option("--instruction", instruction, "Instruction text")->required();
  chat->add_option("--session", session_id, "Existing session id");

  auto* compile = app.add_subcommand("compile", "Compile the current sketch (runs the repair loop)");
  compile->add_option("--session", session_id)->required();

  auto* upload = app.add_subcommand("upload", "Upload the current sketch");
  upload->add_option("--session", session_id)->required();
  upload->add_option("--port", port)->required();

  auto* knobs_cmd = app.add_subcommand("knobs", "List or set tunable constants");
  knobs_cmd->require_subcommand(1);
  auto* knobs_list = knobs_cmd->add_subcommand("list");
  knobs_list->add_option("--session", session_id)->required();
  auto* knobs_set = knobs_cmd->add_subcommand("set");
  knobs_set->add_option("--session", session_id)->required();
  knobs_set->add_option("--id", knob_id)->required();
  knobs_set->add_option("--value", knob_value)->required();

  auto* replay = app.add_subcommand("replay", "Rebuild a session from its event log");
  replay->add_option("--session", session_id)->required();

  auto* ports = app.add_subcommand("ports", "List serial ports seen by the toolchain");

  CLI11_PARSE(app, argc, argv);

  try {
    const auto config = load_config(config_path);
    if (serve_cmd->parsed()) return serve(config);

    auto service = make_service(config);
    if (chat->parsed()) {
      if (session_id.empty()) {
        if (manifest_path.empty()) throw PreconditionError("chat needs --manifest when --session is absent");
        session_id = service->create_session(read_json_file(manifest_path).get<catalog::HardwareManifest>()).id;
      }
      print_session(service->post_instruction(session_id, instruction));
    } else if (compile->parsed()) {
      print_session(service->compile_current(session_id));
    } else if (upload->parsed()) {
      print_session(service->upload_current(session_id, port));
    } else if (knobs_list->parsed()) {
      std::cout << json(service->get_knobs(session_id)).dump(2) << '\n';
    } else if (knobs_set->parsed()) {
      print_session(service->set_knob(session_id, knob_id, knob_value));
    } else if (replay->parsed()) {
      const auto rebuilt = service->replay(session_id);
      const bool same = rebuilt == service->get(session_id);
      print_session(rebuilt);
      std::cerr << "replay " << (same ? "matches" : "DIFFERS FROM") << " live state\n";
      return same ? 0 : 3;
    } else if (ports->parsed()) {
      std::cout << json(service->list_ports()).dump(2) << '\n';
    }
  } catch (const catalog::InvalidManifest& e) {
    std::cerr << "error [" << e.code() << "]: " << e.what() << '\n' << json(e.report()).dump(2) << '\n';
    return 2;
  } catch (const Error& e) {
    std::cerr << "error [" << e.code() << "]: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
