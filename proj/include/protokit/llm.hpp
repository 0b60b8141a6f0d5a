#pragma once

#include <chrono>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "protokit/error.hpp"

namespace protokit::llm {

enum class Role { system, user, assistant };

std::string_view to_string(Role role);
std::optional<Role> parse_role(std::string_view text);

struct ChatMessage {
  Role role = Role::user;
  std::string content;

  bool operator==(const ChatMessage&) const = default;
};

// Append-only message list: one leading system message, then strictly
// alternating user/assistant turns.
class Conversation {
 public:
  Conversation() = default;

  // Throws PreconditionError if `message` would break the invariants.
  void append(ChatMessage message);

  const std::vector<ChatMessage>& messages() const { return messages_; }
  std::size_t size() const { return messages_.size(); }
  bool empty() const { return messages_.empty(); }
  const ChatMessage& back() const { return messages_.back(); }

  // Hex SHA-256 over the ordered (role, content) pairs.
  std::string digest() const;

  bool operator==(const Conversation&) const = default;

 private:
  std::vector<ChatMessage> messages_;
};

inline constexpr std::string_view kSystemPrompt =
    "You are an expert Arduino programmer. Only return valid and complete Arduino code, "
    "without any explanations or comments.";

ChatMessage build_system_prompt(const std::optional<std::string>& context = std::nullopt);

enum class ProviderKind { live, replay };

struct ProviderConfig {
  ProviderKind kind = ProviderKind::replay;
  std::string endpoint;
  std::string credential_ref;
  std::string model_name;
  std::string fixture_path;
  std::chrono::seconds timeout{60};
  // Passed through verbatim into the live request body.
  nlohmann::json parameters = nlohmann::json::object();

  // Throws PreconditionError when required fields for `kind` are missing.
  void validate() const;
};

class ProviderError : public Error {
 public:
  enum class Kind { timeout, authentication, rate_limit, replay_miss, transport, bad_response };

  ProviderError(Kind kind, const std::string& message,
                std::optional<std::chrono::milliseconds> retry_after = std::nullopt);

  Kind kind() const { return kind_; }
  std::optional<std::chrono::milliseconds> retry_after() const { return retry_after_; }

 private:
  Kind kind_;
  std::optional<std::chrono::milliseconds> retry_after_;
};

// A chat-completion backend. Implementations must not mutate the
// conversation and must be callable from several sessions at once.
class ChatProvider {
 public:
  virtual ~ChatProvider() = default;
  virtual ChatMessage send(const Conversation& conversation) = 0;
};

// Answers from a JSON Lines fixture file of {digest, response_content}
// records. The last record for a digest wins.
class ReplayProvider final : public ChatProvider {
 public:
  explicit ReplayProvider(std::string fixture_path);
  ChatMessage send(const Conversation& conversation) override;

 private:
  std::string fixture_path_;
};

// HTTP chat-completion provider. The credential is read from the
// environment variable named by `credential_ref` on every call.
class LiveProvider final : public ChatProvider {
 public:
  explicit LiveProvider(ProviderConfig config);
  ChatMessage send(const Conversation& conversation) override;

  // Body sent to the endpoint; exposed for tests.
  nlohmann::json request_body(const Conversation& conversation) const;

 private:
  ChatMessage send_once(const Conversation& conversation, const std::string& credential);

  ProviderConfig config_;
};

std::unique_ptr<ChatProvider> make_provider(const ProviderConfig& config);

// Appends {digest, response_content} to the fixture file unless an identical
// record is already present.
void record_fixture(const Conversation& conversation, const ChatMessage& response,
                    const std::string& fixture_path);

}  // namespace protokit::llm
