#include "protokit/http_api.hpp"

#include "protokit/json_io.hpp"

namespace protokit {
namespace {

using json = nlohmann::json;

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& code, const std::string& message,
                json extra = nullptr) {
  json err{{"code", code}, {"message", message}};
  if (!extra.is_null()) err["details"] = std::move(extra);
  send_json(res, status, {{"error", err}});
}

int status_for(const Error& e) {
  const auto& code = e.code();
  if (code == "not-found") return 404;
  if (code == "invalid-manifest" || code == "invalid-knob-value" || code == "precondition" ||
      code == "unknown-port") {
    return 400;
  }
  if (code == "unknown-knob") return 404;
  return 409;
}

json body_of(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  auto j = json::parse(req.body);
  if (!j.is_object()) throw PreconditionError("request body must be a JSON object");
  return j;
}

// Runs `fn`, mapping domain failures onto HTTP statuses.
template <typename Fn>
httplib::Server::Handler guarded(Fn fn) {
  return [fn](const httplib::Request& req, httplib::Response& res) {
    try {
      fn(req, res);
    } catch (const json::exception& e) {
      send_error(res, 400, "bad-request", e.what());
    } catch (const catalog::InvalidManifest& e) {
      send_error(res, 400, e.code(), e.what(), e.report());
    } catch (const llm::ProviderError& e) {
      send_error(res, 502, e.code(), e.what());
    } catch (const toolchain::ToolchainTimeout& e) {
      send_error(res, 504, e.code(), e.what());
    } catch (const Error& e) {
      send_error(res, status_for(e), e.code(), e.what());
    } catch (const std::exception& e) {
      send_error(res, 500, "internal", e.what());
    }
  };
}

std::string required_string(const json& body, const char* key) {
  const auto it = body.find(key);
  if (it == body.end() || !it->is_string()) {
    throw PreconditionError(std::string("field '") + key + "' (string) is required");
  }
  return it->get<std::string>();
}

}  // namespace

void install_routes(httplib::Server& server, session::SessionService& service,
                    const std::optional<std::filesystem::path>& static_dir) {
  auto& svc = service;
  auto session_reply = [](httplib::Response& res, const session::Session& s, int status = 200) {
    send_json(res, status, {{"session", session::session_to_json(s)}});
  };

  server.Post("/api/sessions", guarded([&svc, session_reply](const auto& req, auto& res) {
                const auto body = body_of(req);
                if (!body.contains("manifest")) throw PreconditionError("field 'manifest' is required");
                session_reply(res, svc.create_session(body.at("manifest").template get<catalog::HardwareManifest>()),
                              201);
              }));

  server.Get("/api/sessions", guarded([&svc](const auto&, auto& res) {
               send_json(res, 200, {{"sessions", svc.session_ids()}});
             }));

  server.Get(R"(/api/sessions/([^/]+))", guarded([&svc, session_reply](const auto& req, auto& res) {
               session_reply(res, svc.get(req.matches[1]));
             }));

  server.Post(R"(/api/sessions/([^/]+)/message)", guarded([&svc, session_reply](const auto& req, auto& res) {
                session_reply(res, svc.post_instruction(req.matches[1], required_string(body_of(req), "text")));
              }));

  server.Post(R"(/api/sessions/([^/]+)/compile)", guarded([&svc, session_reply](const auto& req, auto& res) {
                session_reply(res, svc.compile_current(req.matches[1]));
              }));

  server.Post(R"(/api/sessions/([^/]+)/upload)", guarded([&svc, session_reply](const auto& req, auto& res) {
                session_reply(res, svc.upload_current(req.matches[1], required_string(body_of(req), "port")));
              }));

  server.Post(R"(/api/sessions/([^/]+)/compile-upload)",
              guarded([&svc, session_reply](const auto& req, auto& res) {
                session_reply(res, svc.compile_and_upload(req.matches[1], required_string(body_of(req), "port")));
              }));

  server.Get(R"(/api/sessions/([^/]+)/knobs)", guarded([&svc](const auto& req, auto& res) {
               send_json(res, 200, {{"knobs", svc.get_knobs(req.matches[1])}});
             }));

  server.Patch(R"(/api/sessions/([^/]+)/knobs/([^/]+))", guarded([&svc, session_reply](const auto& req, auto& res) {
                 const auto body = body_of(req);
                 const auto it = body.find("value");
                 if (it == body.end() || !it->is_number()) throw PreconditionError("field 'value' (number) is required");
                 session_reply(res, svc.set_knob(req.matches[1], req.matches[2], it->template get<double>()));
               }));

  server.Get("/api/ports", guarded([&svc](const auto&, auto& res) {
               send_json(res, 200, {{"ports", svc.list_ports()}});
             }));

  server.Get("/api/catalog", guarded([&svc](const auto&, auto& res) {
               send_json(res, 200, {{"catalog", svc.catalog()}});
             }));

  if (static_dir) server.set_mount_point("/", static_dir->string());
}

}  // namespace protokit
