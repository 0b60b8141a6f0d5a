#include "protokit/llm.hpp"

#include <cstdlib>
#include <fstream>
#include <thread>

#include "httplib.h"
#include "protokit/digest.hpp"

namespace protokit::llm {
namespace {

using json = nlohmann::json;

struct FixtureEntry {
  std::string digest;
  std::string response_content;
};

// Missing file reads as empty.
std::vector<FixtureEntry> read_fixtures(const std::string& path) {
  std::vector<FixtureEntry> entries;
  std::ifstream in(path, std::ios::binary);
  if (!in) return entries;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = json::parse(line);
      entries.push_back({j.at("digest").get<std::string>(), j.at("response_content").get<std::string>()});
    } catch (const json::exception& e) {
      throw ProviderError(ProviderError::Kind::bad_response,
                          "fixture " + path + " line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return entries;
}

struct Endpoint {
  std::string base;  // scheme://host[:port]
  std::string path;
};

Endpoint split_endpoint(const std::string& url) {
  const auto scheme_end = url.find("://");
  const auto host_begin = scheme_end == std::string::npos ? 0 : scheme_end + 3;
  const auto slash = url.find('/', host_begin);
  if (slash == std::string::npos) return {url, "/"};
  return {url.substr(0, slash), url.substr(slash)};
}

std::optional<std::chrono::milliseconds> parse_retry_after(const httplib::Response& res) {
  if (!res.has_header("Retry-After")) return std::nullopt;
  const auto value = res.get_header_value("Retry-After");
  char* end = nullptr;
  const double seconds = std::strtod(value.c_str(), &end);
  if (end == value.c_str() || seconds < 0) return std::nullopt;
  return std::chrono::milliseconds(static_cast<long long>(seconds * 1000.0));
}

}  // namespace

std::string_view to_string(Role role) {
  switch (role) {
    case Role::system: return "system";
    case Role::user: return "user";
    case Role::assistant: return "assistant";
  }
  return "user";
}

std::optional<Role> parse_role(std::string_view text) {
  for (auto r : {Role::system, Role::user, Role::assistant}) {
    if (to_string(r) == text) return r;
  }
  return std::nullopt;
}

void Conversation::append(ChatMessage message) {
  if (message.content.empty()) throw PreconditionError("chat message content must not be empty");
  if (messages_.empty()) {
    if (message.role != Role::system) throw PreconditionError("conversation must start with a system message");
  } else {
    const auto expected = messages_.back().role == Role::user ? Role::assistant : Role::user;
    if (message.role != expected) {
      throw PreconditionError("expected a " + std::string(to_string(expected)) + " message, got " +
                              std::string(to_string(message.role)));
    }
  }
  messages_.push_back(std::move(message));
}

std::string Conversation::digest() const {
  // role \n byte-length \n content \n, per message
  std::string canonical;
  for (const auto& m : messages_) {
    canonical.append(to_string(m.role)).append("\n");
    canonical.append(std::to_string(m.content.size())).append("\n");
    canonical.append(m.content).append("\n");
  }
  return sha256_hex(canonical);
}

ChatMessage build_system_prompt(const std::optional<std::string>& context) {
  std::string content{kSystemPrompt};
  if (context) content += "\n\nHARDWARE:\n" + *context;
  return {Role::system, std::move(content)};
}

void ProviderConfig::validate() const {
  if (kind == ProviderKind::live) {
    if (endpoint.empty()) throw PreconditionError("live provider requires an endpoint");
    if (credential_ref.empty()) throw PreconditionError("live provider requires credential_ref");
  } else if (fixture_path.empty()) {
    throw PreconditionError("replay provider requires fixture_path");
  }
  if (timeout.count() <= 0) throw PreconditionError("provider timeout must be positive");
}

namespace {
std::string_view kind_code(ProviderError::Kind kind) {
  switch (kind) {
    case ProviderError::Kind::timeout: return "provider-timeout";
    case ProviderError::Kind::authentication: return "provider-authentication";
    case ProviderError::Kind::rate_limit: return "provider-rate-limit";
    case ProviderError::Kind::replay_miss: return "replay-miss";
    case ProviderError::Kind::transport: return "provider-transport";
    case ProviderError::Kind::bad_response: return "provider-bad-response";
  }
  return "provider-error";
}
}  // namespace

ProviderError::ProviderError(Kind kind, const std::string& message,
                             std::optional<std::chrono::milliseconds> retry_after)
    : Error(std::string(kind_code(kind)), message), kind_(kind), retry_after_(retry_after) {}

ReplayProvider::ReplayProvider(std::string fixture_path) : fixture_path_(std::move(fixture_path)) {}

ChatMessage ReplayProvider::send(const Conversation& conversation) {
  const auto digest = conversation.digest();
  const auto entries = read_fixtures(fixture_path_);
  for (auto it = entries.rbegin(); it != entries.rend(); ++it) {
    if (it->digest == digest) return {Role::assistant, it->response_content};
  }
  throw ProviderError(ProviderError::Kind::replay_miss,
                      "no recorded response for conversation digest " + digest);
}

LiveProvider::LiveProvider(ProviderConfig config) : config_(std::move(config)) { config_.validate(); }

json LiveProvider::request_body(const Conversation& conversation) const {
  json body = config_.parameters.is_object() ? config_.parameters : json::object();
  if (!config_.model_name.empty()) body["model"] = config_.model_name;
  json messages = json::array();
  for (const auto& m : conversation.messages()) {
    messages.push_back({{"role", to_string(m.role)}, {"content", m.content}});
  }
  body["messages"] = std::move(messages);
  return body;
}

ChatMessage LiveProvider::send(const Conversation& conversation) {
  const char* credential = std::getenv(config_.credential_ref.c_str());
  if (credential == nullptr || *credential == '\0') {
    throw ProviderError(ProviderError::Kind::authentication,
                        "environment variable " + config_.credential_ref + " is not set");
  }
  try {
    return send_once(conversation, credential);
  } catch (const ProviderError& e) {
    if (e.kind() != ProviderError::Kind::rate_limit) throw;
    auto delay = e.retry_after().value_or(std::chrono::milliseconds(1000));
    delay = std::min<std::chrono::milliseconds>(delay, config_.timeout);
    std::this_thread::sleep_for(delay);
    return send_once(conversation, credential);
  }
}

ChatMessage LiveProvider::send_once(const Conversation& conversation, const std::string& credential) {
  const auto endpoint = split_endpoint(config_.endpoint);
  httplib::Client client(endpoint.base);
  const auto secs = static_cast<time_t>(config_.timeout.count());
  client.set_connection_timeout(secs, 0);
  client.set_read_timeout(secs, 0);
  client.set_write_timeout(secs, 0);
  client.set_bearer_token_auth(credential);

  const auto res = client.Post(endpoint.path, request_body(conversation).dump(), "application/json");
  if (!res) {
    const auto err = res.error();
    if (err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read) {
      throw ProviderError(ProviderError::Kind::timeout,
                          "no response from " + config_.endpoint + " within " +
                              std::to_string(config_.timeout.count()) + " s");
    }
    throw ProviderError(ProviderError::Kind::transport,
                        "request to " + config_.endpoint + " failed: " + httplib::to_string(err));
  }
  if (res->status == 401 || res->status == 403) {
    throw ProviderError(ProviderError::Kind::authentication,
                        "credential rejected (HTTP " + std::to_string(res->status) + ")");
  }
  if (res->status == 429) {
    throw ProviderError(ProviderError::Kind::rate_limit, "rate limited (HTTP 429)", parse_retry_after(*res));
  }
  if (res->status < 200 || res->status >= 300) {
    throw ProviderError(ProviderError::Kind::transport,
                        "HTTP " + std::to_string(res->status) + " from " + config_.endpoint);
  }
  try {
    const auto body = json::parse(res->body);
    auto content = body.at("choices").at(0).at("message").at("content").get<std::string>();
    if (content.empty()) throw ProviderError(ProviderError::Kind::bad_response, "empty completion");
    return {Role::assistant, std::move(content)};
  } catch (const json::exception& e) {
    throw ProviderError(ProviderError::Kind::bad_response, std::string("unexpected response body: ") + e.what());
  }
}

std::unique_ptr<ChatProvider> make_provider(const ProviderConfig& config) {
  config.validate();
  if (config.kind == ProviderKind::live) return std::make_unique<LiveProvider>(config);
  return std::make_unique<ReplayProvider>(config.fixture_path);
}

void record_fixture(const Conversation& conversation, const ChatMessage& response,
                    const std::string& fixture_path) {
  if (response.role != Role::assistant) throw PreconditionError("fixture response must be an assistant message");
  const auto digest = conversation.digest();
  for (const auto& e : read_fixtures(fixture_path)) {
    if (e.digest == digest && e.response_content == response.content) return;
  }
  std::ofstream out(fixture_path, std::ios::binary | std::ios::app);
  if (!out) throw IoError("cannot open fixture file '" + fixture_path + "' for append");
  out << json{{"digest", digest}, {"response_content", response.content}}.dump() << '\n';
  if (!out) throw IoError("failed writing fixture file '" + fixture_path + "'");
}

}  // namespace protokit::llm
