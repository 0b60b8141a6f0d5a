#include "protokit/config.hpp"

#include <fstream>

namespace protokit {
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_relative() && !base.empty() ? base / path : path;
}

std::vector<std::string> string_list(const json& j, const char* key, std::vector<std::string> fallback) {
  const auto it = j.find(key);
  if (it == j.end() || it->is_null()) return fallback;
  return it->get<std::vector<std::string>>();
}

}  // namespace

AppConfig parse_config(const json& j, const fs::path& base_dir) {
  AppConfig c;
  try {
    c.data_dir = resolve(base_dir, j.value("data_dir", std::string("data")));
    if (j.contains("catalog") && !j["catalog"].is_null()) {
      c.catalog_path = resolve(base_dir, j["catalog"].get<std::string>());
    }

    const json p = j.value("provider", json::object());
    const auto kind = p.value("kind", std::string("replay"));
    if (kind == "live") {
      c.provider.kind = llm::ProviderKind::live;
    } else if (kind == "replay") {
      c.provider.kind = llm::ProviderKind::replay;
    } else {
      throw PreconditionError("bad-config", "provider.kind must be live or replay, got '" + kind + "'");
    }
    c.provider.endpoint = p.value("endpoint", "");
    c.provider.credential_ref = p.value("credential_env", "");
    c.provider.model_name = p.value("model", "");
    if (p.contains("fixture_path")) c.provider.fixture_path = resolve(base_dir, p["fixture_path"].get<std::string>()).string();
    c.provider.timeout = std::chrono::seconds(p.value("timeout_s", 60));
    c.provider.parameters = p.value("params", json::object());

    const json t = j.value("toolchain", json::object());
    const auto tkind = t.value("kind", std::string("mock"));
    if (tkind == "external") {
      c.toolchain = toolchain::ToolchainConfig::external_defaults();
    } else if (tkind != "mock") {
      throw PreconditionError("bad-config", "toolchain.kind must be external or mock, got '" + tkind + "'");
    }
    c.toolchain.board_id = t.value("board_id", "");
    c.toolchain.work_root = resolve(base_dir, t.value("work_root", std::string("work")));
    c.toolchain.timeout = std::chrono::seconds(t.value("timeout_s", 120));
    const json tmpl = t.value("templates", json::object());
    c.toolchain.compile_command = string_list(tmpl, "compile", c.toolchain.compile_command);
    c.toolchain.upload_command = string_list(tmpl, "upload", c.toolchain.upload_command);
    c.toolchain.list_ports_command = string_list(tmpl, "ports", c.toolchain.list_ports_command);

    const json l = j.value("loop", json::object());
    c.policy.max_auto_iterations = l.value("max_auto_iterations", c.policy.max_auto_iterations);
    c.policy.auto_repair = l.value("auto_repair", c.policy.auto_repair);

    const json listen = j.value("listen", json::object());
    c.listen_host = listen.value("host", c.listen_host);
    c.listen_port = listen.value("port", c.listen_port);
    if (j.contains("static_dir") && !j["static_dir"].is_null()) {
      c.static_dir = resolve(base_dir, j["static_dir"].get<std::string>());
    }
  } catch (const json::exception& e) {
    throw PreconditionError("bad-config", std::string("malformed config: ") + e.what());
  }
  c.provider.validate();
  c.toolchain.validate();
  c.policy.validate();
  return c;
}

AppConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw PreconditionError("bad-config", path.string() + ": " + e.what());
  }
  return parse_config(j, fs::absolute(path).parent_path());
}

std::unique_ptr<session::SessionService> make_service(const AppConfig& config) {
  std::shared_ptr<const catalog::Catalog> cat;
  if (config.catalog_path) {
    cat = std::make_shared<catalog::Catalog>(catalog::load_catalog_file(config.catalog_path->string()));
  } else {
    cat = std::shared_ptr<const catalog::Catalog>(&catalog::default_catalog(), [](const catalog::Catalog*) {});
  }
  std::shared_ptr<llm::ChatProvider> provider = llm::make_provider(config.provider);
  auto tc = std::make_shared<toolchain::Toolchain>(config.toolchain);
  auto service = std::make_unique<session::SessionService>(
      session::ServiceConfig{config.data_dir, config.policy}, std::move(cat), std::move(provider), std::move(tc));
  service->load_existing();
  return service;
}

}  // namespace protokit
