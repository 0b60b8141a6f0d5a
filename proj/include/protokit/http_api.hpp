#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "httplib.h"
#include "protokit/session.hpp"

namespace protokit {

// Registers the JSON API routes (and optionally a static file mount) on
// `server`. The service must outlive the server.
void install_routes(httplib::Server& server, session::SessionService& service,
                    const std::optional<std::filesystem::path>& static_dir = std::nullopt);

}  // namespace protokit
