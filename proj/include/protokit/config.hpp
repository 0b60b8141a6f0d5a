#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "json.hpp"
#include "protokit/catalog.hpp"
#include "protokit/llm.hpp"
#include "protokit/repair_loop.hpp"
#include "protokit/session.hpp"
#include "protokit/toolchain.hpp"

namespace protokit {

// Service configuration, read from a JSON file. Relative paths resolve
// against the file's directory.
struct AppConfig {
  std::filesystem::path data_dir = "data";
  std::optional<std::filesystem::path> catalog_path;  // built-in catalog when absent
  llm::ProviderConfig provider;
  toolchain::ToolchainConfig toolchain;
  repair::LoopPolicy policy;
  std::string listen_host = "127.0.0.1";
  int listen_port = 8080;
  std::optional<std::filesystem::path> static_dir;
};

AppConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
AppConfig load_config(const std::filesystem::path& path);

// Catalog, provider and toolchain wired into a service.
std::unique_ptr<session::SessionService> make_service(const AppConfig& config);

}  // namespace protokit
