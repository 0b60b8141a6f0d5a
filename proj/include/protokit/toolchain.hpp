#pragma once

#include <chrono>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "protokit/error.hpp"

namespace protokit::toolchain {

enum class ToolchainKind { external, mock };

// Command templates are argument vectors; each argument may contain
// {sketch_dir}, {board_id}, {build_dir} or {port}.
struct ToolchainConfig {
  ToolchainKind kind = ToolchainKind::mock;
  std::vector<std::string> compile_command;
  std::vector<std::string> upload_command;
  std::vector<std::string> list_ports_command;
  std::string board_id;
  std::filesystem::path work_root;
  std::chrono::seconds timeout{120};

  // Templates targeting arduino-cli; board_id is left for the caller.
  static ToolchainConfig external_defaults();

  // Throws PreconditionError when a template lacks a required placeholder
  // or board_id/work_root is missing. Mock only needs work_root.
  void validate() const;
};

enum class DiagnosticSeverity { error, warning, note, raw };

std::string_view to_string(DiagnosticSeverity severity);
std::optional<DiagnosticSeverity> parse_diagnostic_severity(std::string_view text);

struct Diagnostic {
  std::string file;
  int line = 0;
  std::optional<int> column;
  DiagnosticSeverity severity = DiagnosticSeverity::raw;
  std::string message;

  bool operator==(const Diagnostic&) const = default;
};

struct CompileResult {
  bool success = false;
  std::vector<Diagnostic> diagnostics;
  std::string raw_output;
  std::optional<std::string> artifact_path;

  bool operator==(const CompileResult&) const = default;
};

struct UploadResult {
  bool success = false;
  std::string port;
  std::string raw_output;

  bool operator==(const UploadResult&) const = default;
};

struct PortInfo {
  std::string port;
  std::optional<std::string> board_hint;

  bool operator==(const PortInfo&) const = default;
};

class ToolchainTimeout : public Error {
 public:
  explicit ToolchainTimeout(const std::string& what) : Error("toolchain-timeout", what) {}
};

// Parses GCC-style `FILE:LINE[:COL]: SEVERITY: MESSAGE` lines. Unmatched
// non-empty lines directly following a diagnostic extend its message; any
// other unmatched line is kept as a raw diagnostic. Blank lines end a
// continuation.
std::vector<Diagnostic> parse_diagnostics(std::string_view raw_output);

// Parses port-list output: one port per line, optional board name after it.
std::vector<PortInfo> parse_port_list(std::string_view output);

// Substitutes {key} placeholders in every argument.
std::vector<std::string> expand_template(const std::vector<std::string>& tmpl,
                                         const std::vector<std::pair<std::string, std::string>>& values);

bool is_valid_sketch_name(std::string_view name);

class PortLeases;

// Exclusive hold on one serial port; released on destruction.
class PortLease {
 public:
  PortLease(PortLease&& other) noexcept;
  PortLease& operator=(PortLease&&) = delete;
  PortLease(const PortLease&) = delete;
  ~PortLease();

  const std::string& port() const { return port_; }

 private:
  friend class PortLeases;
  PortLease(std::shared_ptr<PortLeases> owner, std::string port);

  std::shared_ptr<PortLeases> owner_;
  std::string port_;
};

class PortLeases : public std::enable_shared_from_this<PortLeases> {
 public:
  std::optional<PortLease> try_acquire(const std::string& port);
  bool held(const std::string& port) const;

 private:
  friend class PortLease;
  void release(const std::string& port);

  mutable std::mutex mutex_;
  std::set<std::string> held_;
};

// Drives the board toolchain. Thread-safe: distinct sketch directories may
// compile concurrently; uploads to one port are serialized by a lease.
class Toolchain {
 public:
  explicit Toolchain(ToolchainConfig config);

  const ToolchainConfig& config() const { return config_; }
  PortLeases& leases() { return *leases_; }

  // Writes work_root/NAME/NAME.ino and returns the directory.
  std::filesystem::path prepare_sketch_dir(std::string_view source, std::string_view name) const;

  CompileResult compile(const std::filesystem::path& sketch_dir) const;
  UploadResult upload(const std::filesystem::path& sketch_dir, const std::string& port);
  std::vector<PortInfo> list_ports() const;

 private:
  std::filesystem::path build_dir_for(const std::filesystem::path& sketch_dir) const;
  CompileResult compile_mock(const std::filesystem::path& sketch_dir) const;

  ToolchainConfig config_;
  std::shared_ptr<PortLeases> leases_;
};

inline constexpr std::string_view kMockPort = "MOCK0";
inline constexpr std::string_view kMockBoard = "Mock Board";

}  // namespace protokit::toolchain
