#pragma once

#include <chrono>
#include <filesystem>
#include <span>
#include <string>

#include "protokit/error.hpp"

namespace protokit {

struct ProcessResult {
  int exit_code = -1;
  std::string output;  // stdout and stderr, interleaved as written
  bool timed_out = false;
};

class CommandNotFound : public Error {
 public:
  explicit CommandNotFound(const std::string& command)
      : Error("toolchain-not-found", "command not found: " + command) {}
};

// Runs argv[0] (PATH lookup) with the remaining arguments, capturing both
// output streams. The child is killed once `timeout` elapses.
ProcessResult run_process(std::span<const std::string> argv, std::chrono::milliseconds timeout,
                          const std::filesystem::path& working_dir = {});

}  // namespace protokit
