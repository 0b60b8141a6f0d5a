#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "protokit/error.hpp"
#include "protokit/llm.hpp"
#include "protokit/sketch.hpp"
#include "protokit/toolchain.hpp"

namespace protokit::repair {

struct LoopPolicy {
  int max_auto_iterations = 3;
  bool auto_repair = true;

  void validate() const;
  bool operator==(const LoopPolicy&) const = default;
};

enum class LoopStatus {
  idle,
  awaiting_model,
  extracted,
  compiling,
  failed_compile,
  succeeded,
  failed_final,
  awaiting_user,
};

std::string_view to_string(LoopStatus status);
std::optional<LoopStatus> parse_loop_status(std::string_view text);

// One run of the generate/compile/repair cycle, started by a user
// instruction. `iteration` counts replies that carried code; `model_calls`
// counts every reply, so prose-only replies also consume budget.
struct LoopState {
  LoopStatus status = LoopStatus::idle;
  int iteration = 0;
  int model_calls = 0;
  std::optional<sketch::GeneratedSketch> current_sketch;
  std::optional<toolchain::CompileResult> last_result;

  bool terminal() const { return status == LoopStatus::succeeded || status == LoopStatus::failed_final; }
  bool operator==(const LoopState&) const = default;
};

// The state after an event, plus a user message to send to the model next
// (set exactly when the new status is awaiting-model because of a repair or
// correction).
struct Transition {
  LoopState state;
  std::optional<llm::ChatMessage> outgoing;
};

class InvalidTransition : public Error {
 public:
  InvalidTransition(LoopStatus from, std::string_view event);
};

inline constexpr std::string_view kResendCodeMessage = "Return only complete code.";
inline constexpr std::string_view kDiagnosticsHeader = "The code failed to compile with these errors:";
inline constexpr std::string_view kDiagnosticsFooter = "Return the corrected, complete code only.";
inline constexpr std::size_t kMaxRenderedErrors = 10;
inline constexpr std::size_t kRawTailLines = 20;

struct StartResult {
  LoopState state;
  llm::Conversation conversation;
};

// New conversation [system prompt with hardware context, instruction].
StartResult start(std::string_view instruction, const std::string& manifest_context, const LoopPolicy& policy);

// New run on an existing conversation: appends the instruction, keeps the
// previous sketch as current.
StartResult resume(const LoopState& previous, llm::Conversation conversation, std::string_view instruction);

// Fresh run whose current sketch was edited outside the model (knob patch).
LoopState from_patched_sketch(const LoopState& previous, sketch::GeneratedSketch sketch);

Transition on_model_reply(const LoopState& state, const llm::ChatMessage& reply, const LoopPolicy& policy);

// extracted / awaiting-user -> compiling.
LoopState begin_compile(const LoopState& state);

Transition on_compile_result(const LoopState& state, const toolchain::CompileResult& result,
                             const LoopPolicy& policy);

// The provider failed while the loop was waiting for a repair reply; control
// returns to the user.
LoopState on_model_unavailable(const LoopState& state);

// Requires !result.success.
llm::ChatMessage diagnostics_to_prompt(const toolchain::CompileResult& result);

}  // namespace protokit::repair
