#include "protokit/repair_loop.hpp"

#include <algorithm>
#include <deque>

namespace protokit::repair {
namespace {

bool blank(std::string_view s) { return s.find_first_not_of(" \t\r\n") == std::string_view::npos; }

void require_not_in_flight(const LoopState& previous) {
  if (previous.status == LoopStatus::awaiting_model || previous.status == LoopStatus::compiling) {
    throw PreconditionError("loop-busy", "loop is " + std::string(to_string(previous.status)));
  }
}

}  // namespace

void LoopPolicy::validate() const {
  if (max_auto_iterations < 1) throw PreconditionError("max_auto_iterations must be at least 1");
}

std::string_view to_string(LoopStatus status) {
  switch (status) {
    case LoopStatus::idle: return "idle";
    case LoopStatus::awaiting_model: return "awaiting-model";
    case LoopStatus::extracted: return "extracted";
    case LoopStatus::compiling: return "compiling";
    case LoopStatus::failed_compile: return "failed-compile";
    case LoopStatus::succeeded: return "succeeded";
    case LoopStatus::failed_final: return "failed-final";
    case LoopStatus::awaiting_user: return "awaiting-user";
  }
  return "idle";
}

std::optional<LoopStatus> parse_loop_status(std::string_view text) {
  for (auto s : {LoopStatus::idle, LoopStatus::awaiting_model, LoopStatus::extracted, LoopStatus::compiling,
                 LoopStatus::failed_compile, LoopStatus::succeeded, LoopStatus::failed_final,
                 LoopStatus::awaiting_user}) {
    if (to_string(s) == text) return s;
  }
  return std::nullopt;
}

InvalidTransition::InvalidTransition(LoopStatus from, std::string_view event)
    : Error("invalid-transition",
            "cannot apply " + std::string(event) + " in state " + std::string(to_string(from))) {}

StartResult start(std::string_view instruction, const std::string& manifest_context, const LoopPolicy& policy) {
  policy.validate();
  if (blank(instruction)) throw PreconditionError("instruction must not be empty");
  StartResult out;
  out.conversation.append(
      llm::build_system_prompt(manifest_context.empty() ? std::nullopt : std::optional(manifest_context)));
  out.conversation.append({llm::Role::user, std::string(instruction)});
  out.state.status = LoopStatus::awaiting_model;
  return out;
}

StartResult resume(const LoopState& previous, llm::Conversation conversation, std::string_view instruction) {
  if (blank(instruction)) throw PreconditionError("instruction must not be empty");
  require_not_in_flight(previous);
  conversation.append({llm::Role::user, std::string(instruction)});
  StartResult out{LoopState{}, std::move(conversation)};
  out.state.status = LoopStatus::awaiting_model;
  out.state.current_sketch = previous.current_sketch;
  return out;
}

LoopState from_patched_sketch(const LoopState& previous, sketch::GeneratedSketch sketch) {
  require_not_in_flight(previous);
  LoopState next;
  next.status = LoopStatus::extracted;
  next.current_sketch = std::move(sketch);
  return next;
}

Transition on_model_reply(const LoopState& state, const llm::ChatMessage& reply, const LoopPolicy& policy) {
  if (state.status != LoopStatus::awaiting_model) throw InvalidTransition(state.status, "model-reply");
  if (reply.role != llm::Role::assistant) throw PreconditionError("model reply must have role assistant");

  Transition t{state, std::nullopt};
  t.state.model_calls = state.model_calls + 1;
  if (auto sketch = sketch::try_extract_sketch(reply.content)) {
    t.state.status = LoopStatus::extracted;
    t.state.iteration = state.iteration + 1;
    t.state.current_sketch = std::move(*sketch);
    return t;
  }
  if (t.state.model_calls >= policy.max_auto_iterations || state.iteration >= policy.max_auto_iterations) {
    t.state.status = LoopStatus::failed_final;
    return t;
  }
  t.outgoing = llm::ChatMessage{llm::Role::user, std::string(kResendCodeMessage)};
  return t;
}

LoopState begin_compile(const LoopState& state) {
  switch (state.status) {
    case LoopStatus::extracted:
    case LoopStatus::awaiting_user:
    case LoopStatus::failed_compile:
      break;
    default:
      throw InvalidTransition(state.status, "compile");
  }
  if (!state.current_sketch) throw PreconditionError("no sketch to compile");
  LoopState next = state;
  next.status = LoopStatus::compiling;
  return next;
}

Transition on_compile_result(const LoopState& state, const toolchain::CompileResult& result,
                             const LoopPolicy& policy) {
  if (state.status != LoopStatus::compiling) throw InvalidTransition(state.status, "compile-result");
  Transition t{state, std::nullopt};
  t.state.last_result = result;
  if (result.success) {
    t.state.status = LoopStatus::succeeded;
  } else if (!policy.auto_repair) {
    t.state.status = LoopStatus::awaiting_user;
  } else if (state.iteration < policy.max_auto_iterations && state.model_calls < policy.max_auto_iterations) {
    t.state.status = LoopStatus::awaiting_model;
    t.outgoing = diagnostics_to_prompt(result);
  } else {
    t.state.status = LoopStatus::failed_final;
  }
  return t;
}

LoopState on_model_unavailable(const LoopState& state) {
  if (state.status != LoopStatus::awaiting_model) throw InvalidTransition(state.status, "provider-error");
  LoopState next = state;
  next.status = LoopStatus::awaiting_user;
  return next;
}

llm::ChatMessage diagnostics_to_prompt(const toolchain::CompileResult& result) {
  if (result.success) throw PreconditionError("diagnostics_to_prompt requires a failed compile");

  std::string text{kDiagnosticsHeader};
  std::vector<const toolchain::Diagnostic*> errors;
  for (const auto& d : result.diagnostics) {
    if (d.severity == toolchain::DiagnosticSeverity::error) errors.push_back(&d);
  }

  if (!errors.empty()) {
    const auto shown = std::min(errors.size(), kMaxRenderedErrors);
    for (std::size_t i = 0; i < shown; ++i) {
      text += "\nline " + std::to_string(errors[i]->line) + ": " + errors[i]->message;
    }
    if (errors.size() > shown) {
      text += "\n…and " + std::to_string(errors.size() - shown) + " more errors.";
    }
  } else {
    std::deque<std::string_view> tail;
    std::string_view rest = result.raw_output;
    while (!rest.empty()) {
      const auto nl = rest.find('\n');
      auto line = rest.substr(0, nl);
      rest = nl == std::string_view::npos ? std::string_view{} : rest.substr(nl + 1);
      if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
      if (blank(line)) continue;
      tail.push_back(line);
      if (tail.size() > kRawTailLines) tail.pop_front();
    }
    for (const auto line : tail) text.append("\n").append(line);
  }
  text += "\n";
  text += kDiagnosticsFooter;
  return {llm::Role::user, std::move(text)};
}

}  // namespace protokit::repair
