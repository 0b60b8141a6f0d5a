#include "protokit/toolchain.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "protokit/process.hpp"

namespace protokit::toolchain {
namespace fs = std::filesystem;

namespace {

std::string_view trim(std::string_view s) {
  const auto* ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

bool contains_placeholder(const std::vector<std::string>& tmpl, std::string_view placeholder) {
  return std::any_of(tmpl.begin(), tmpl.end(),
                     [&](const auto& arg) { return arg.find(placeholder) != std::string::npos; });
}

bool iequals(std::string_view a, std::string_view b) {
  return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
           return std::tolower(static_cast<unsigned char>(x)) == std::tolower(static_cast<unsigned char>(y));
         });
}

// Reads a positive decimal at `pos`, advancing it. Returns -1 if absent.
long read_number(std::string_view s, std::size_t& pos) {
  const auto start = pos;
  long value = 0;
  while (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos])) && pos - start < 9) {
    value = value * 10 + (s[pos] - '0');
    ++pos;
  }
  return pos == start ? -1 : value;
}

std::optional<Diagnostic> parse_line(std::string_view line) {
  for (auto colon = line.find(':'); colon != std::string_view::npos; colon = line.find(':', colon + 1)) {
    if (colon == 0) continue;
    std::size_t pos = colon + 1;
    const long line_no = read_number(line, pos);
    if (line_no <= 0 || pos >= line.size() || line[pos] != ':') continue;
    ++pos;
    std::optional<int> column;
    {
      std::size_t p = pos;
      const long col = read_number(line, p);
      if (col >= 0 && p < line.size() && line[p] == ':') {
        if (col > 0) column = static_cast<int>(col);
        pos = p + 1;
      }
    }
    while (pos < line.size() && line[pos] == ' ') ++pos;
    const auto sev_end = line.find(':', pos);
    if (sev_end == std::string_view::npos) continue;
    const auto word = trim(line.substr(pos, sev_end - pos));
    std::optional<DiagnosticSeverity> severity = parse_diagnostic_severity(word);
    if (!severity && iequals(word, "fatal error")) severity = DiagnosticSeverity::error;
    if (!severity || *severity == DiagnosticSeverity::raw) continue;

    auto message = line.substr(sev_end + 1);
    if (!message.empty() && message.front() == ' ') message.remove_prefix(1);
    while (!message.empty() && (message.back() == ' ' || message.back() == '\t')) message.remove_suffix(1);
    return Diagnostic{std::string(line.substr(0, colon)), static_cast<int>(line_no), column, *severity,
                      std::string(message)};
  }
  return std::nullopt;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path sketch_file(const fs::path& sketch_dir) {
  return sketch_dir / (sketch_dir.filename().string() + ".ino");
}

std::optional<std::string> find_artifact(const fs::path& build_dir) {
  std::error_code ec;
  if (!fs::is_directory(build_dir, ec)) return std::nullopt;
  for (const auto* ext : {".bin", ".hex", ".elf"}) {
    std::vector<fs::path> hits;
    for (const auto& entry : fs::directory_iterator(build_dir, ec)) {
      if (entry.is_regular_file() && entry.path().extension() == ext) hits.push_back(entry.path());
    }
    if (!hits.empty()) {
      std::sort(hits.begin(), hits.end());
      return hits.front().string();
    }
  }
  return build_dir.string();
}

}  // namespace

ToolchainConfig ToolchainConfig::external_defaults() {
  ToolchainConfig c;
  c.kind = ToolchainKind::external;
  c.compile_command = {"arduino-cli", "compile", "--fqbn", "{board_id}", "--output-dir", "{build_dir}",
                       "{sketch_dir}"};
  c.upload_command = {"arduino-cli", "upload", "--fqbn", "{board_id}", "--port", "{port}", "{sketch_dir}"};
  c.list_ports_command = {"arduino-cli", "board", "list"};
  return c;
}

void ToolchainConfig::validate() const {
  if (work_root.empty()) throw PreconditionError("toolchain work_root is required");
  if (timeout.count() <= 0) throw PreconditionError("toolchain timeout must be positive");
  if (kind == ToolchainKind::mock) return;
  if (board_id.empty()) throw PreconditionError("toolchain board_id is required for the external toolchain");
  for (const auto* p : {"{sketch_dir}", "{board_id}"}) {
    if (!contains_placeholder(compile_command, p)) {
      throw PreconditionError(std::string("compile_command lacks placeholder ") + p);
    }
  }
  for (const auto* p : {"{sketch_dir}", "{board_id}", "{port}"}) {
    if (!contains_placeholder(upload_command, p)) {
      throw PreconditionError(std::string("upload_command lacks placeholder ") + p);
    }
  }
  if (list_ports_command.empty()) throw PreconditionError("list_ports_command is empty");
}

std::string_view to_string(DiagnosticSeverity severity) {
  switch (severity) {
    case DiagnosticSeverity::error: return "error";
    case DiagnosticSeverity::warning: return "warning";
    case DiagnosticSeverity::note: return "note";
    case DiagnosticSeverity::raw: return "raw";
  }
  return "raw";
}

std::optional<DiagnosticSeverity> parse_diagnostic_severity(std::string_view text) {
  for (auto s : {DiagnosticSeverity::error, DiagnosticSeverity::warning, DiagnosticSeverity::note,
                 DiagnosticSeverity::raw}) {
    if (iequals(to_string(s), text)) return s;
  }
  return std::nullopt;
}

std::vector<Diagnostic> parse_diagnostics(std::string_view raw_output) {
  std::vector<Diagnostic> out;
  bool continuing = false;
  while (!raw_output.empty()) {
    const auto nl = raw_output.find('\n');
    auto line = raw_output.substr(0, nl);
    raw_output = nl == std::string_view::npos ? std::string_view{} : raw_output.substr(nl + 1);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);

    if (trim(line).empty()) {
      continuing = false;
      continue;
    }
    if (auto d = parse_line(line)) {
      out.push_back(std::move(*d));
      continuing = true;
    } else if (continuing) {
      out.back().message += "\n";
      out.back().message += line;
    } else {
      out.push_back(Diagnostic{"", 0, std::nullopt, DiagnosticSeverity::raw, std::string(line)});
    }
  }
  return out;
}

std::vector<PortInfo> parse_port_list(std::string_view output) {
  std::vector<PortInfo> ports;
  while (!output.empty()) {
    const auto nl = output.find('\n');
    const auto line = trim(output.substr(0, nl));
    output = nl == std::string_view::npos ? std::string_view{} : output.substr(nl + 1);
    if (line.empty() || line.starts_with("No boards found")) continue;
    const auto split = line.find_first_of(" \t");
    const auto port = line.substr(0, split);
    if (port == "Port") continue;  // table header
    PortInfo info{std::string(port), std::nullopt};
    if (split != std::string_view::npos) {
      const auto hint = trim(line.substr(split));
      if (!hint.empty()) info.board_hint = std::string(hint);
    }
    ports.push_back(std::move(info));
  }
  return ports;
}

std::vector<std::string> expand_template(const std::vector<std::string>& tmpl,
                                         const std::vector<std::pair<std::string, std::string>>& values) {
  std::vector<std::string> out;
  out.reserve(tmpl.size());
  for (auto arg : tmpl) {
    for (const auto& [key, value] : values) {
      const std::string placeholder = "{" + key + "}";
      for (auto pos = arg.find(placeholder); pos != std::string::npos;
           pos = arg.find(placeholder, pos + value.size())) {
        arg.replace(pos, placeholder.size(), value);
      }
    }
    out.push_back(std::move(arg));
  }
  return out;
}

bool is_valid_sketch_name(std::string_view name) {
  if (name.empty() || !std::isalpha(static_cast<unsigned char>(name.front()))) return false;
  return std::all_of(name.begin(), name.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '_';
  });
}

PortLease::PortLease(std::shared_ptr<PortLeases> owner, std::string port)
    : owner_(std::move(owner)), port_(std::move(port)) {}

PortLease::PortLease(PortLease&& other) noexcept
    : owner_(std::move(other.owner_)), port_(std::move(other.port_)) {}

PortLease::~PortLease() {
  if (owner_) owner_->release(port_);
}

std::optional<PortLease> PortLeases::try_acquire(const std::string& port) {
  std::lock_guard lock(mutex_);
  if (!held_.insert(port).second) return std::nullopt;
  return PortLease(shared_from_this(), port);
}

bool PortLeases::held(const std::string& port) const {
  std::lock_guard lock(mutex_);
  return held_.count(port) != 0;
}

void PortLeases::release(const std::string& port) {
  std::lock_guard lock(mutex_);
  held_.erase(port);
}

Toolchain::Toolchain(ToolchainConfig config)
    : config_(std::move(config)), leases_(std::make_shared<PortLeases>()) {
  config_.validate();
}

fs::path Toolchain::prepare_sketch_dir(std::string_view source, std::string_view name) const {
  if (!is_valid_sketch_name(name)) {
    throw PreconditionError("invalid-sketch-name", "sketch name '" + std::string(name) +
                                                       "' must match [A-Za-z][A-Za-z0-9_]*");
  }
  const auto dir = config_.work_root / std::string(name);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  const auto file = dir / (std::string(name) + ".ino");
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + file.string());
  out.write(source.data(), static_cast<std::streamsize>(source.size()));
  if (!out) throw IoError("failed writing " + file.string());
  return dir;
}

fs::path Toolchain::build_dir_for(const fs::path& sketch_dir) const {
  return config_.work_root / ".build" / sketch_dir.filename();
}

CompileResult Toolchain::compile_mock(const fs::path& sketch_dir) const {
  const auto path = sketch_file(sketch_dir);
  const auto source = read_file(path);
  CompileResult result;
  std::string_view rest = source;
  int line_no = 0;
  while (!rest.empty()) {
    const auto nl = rest.find('\n');
    auto line = rest.substr(0, nl);
    rest = nl == std::string_view::npos ? std::string_view{} : rest.substr(nl + 1);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    const auto marker = line.find("#error");
    if (marker == std::string_view::npos) continue;
    result.raw_output += path.string() + ":" + std::to_string(line_no) + ":" + std::to_string(marker + 1) +
                         ": error: " + std::string(trim(line.substr(marker))) + "\n";
  }
  if (result.raw_output.empty()) {
    result.success = true;
    result.raw_output = "Sketch uses " + std::to_string(source.size()) + " bytes (mock toolchain).\n";
  } else {
    result.diagnostics = parse_diagnostics(result.raw_output);
  }
  return result;
}

CompileResult Toolchain::compile(const fs::path& sketch_dir) const {
  if (config_.kind == ToolchainKind::mock) return compile_mock(sketch_dir);

  const auto build_dir = build_dir_for(sketch_dir);
  std::error_code ec;
  fs::create_directories(build_dir, ec);
  if (ec) throw IoError("cannot create " + build_dir.string() + ": " + ec.message());

  const auto argv = expand_template(config_.compile_command, {{"sketch_dir", sketch_dir.string()},
                                                              {"board_id", config_.board_id},
                                                              {"build_dir", build_dir.string()}});
  const auto proc = run_process(argv, config_.timeout);
  if (proc.timed_out) {
    throw ToolchainTimeout("compile did not finish within " + std::to_string(config_.timeout.count()) + " s");
  }
  CompileResult result;
  result.raw_output = proc.output;
  result.diagnostics = parse_diagnostics(proc.output);
  result.success = proc.exit_code == 0;
  if (result.success) {
    result.artifact_path = find_artifact(build_dir);
  } else if (result.raw_output.empty()) {
    result.raw_output = "compile command exited with status " + std::to_string(proc.exit_code) + "\n";
    result.diagnostics = parse_diagnostics(result.raw_output);
  }
  return result;
}

UploadResult Toolchain::upload(const fs::path& sketch_dir, const std::string& port) {
  auto lease = leases_->try_acquire(port);
  if (!lease) return {false, port, "port " + port + " is busy: another upload is in progress\n"};

  if (config_.kind == ToolchainKind::mock) {
    if (port == kMockPort) return {true, port, "Uploading to " + port + " (mock toolchain)... done.\n"};
    return {false, port, "No device found on " + port + "\n"};
  }

  const auto argv = expand_template(config_.upload_command, {{"sketch_dir", sketch_dir.string()},
                                                             {"board_id", config_.board_id},
                                                             {"build_dir", build_dir_for(sketch_dir).string()},
                                                             {"port", port}});
  const auto proc = run_process(argv, config_.timeout);
  UploadResult result{proc.exit_code == 0 && !proc.timed_out, port, proc.output};
  if (proc.timed_out) {
    result.raw_output += "upload did not finish within " + std::to_string(config_.timeout.count()) + " s\n";
  } else if (!result.success && result.raw_output.empty()) {
    result.raw_output = "upload command exited with status " + std::to_string(proc.exit_code) + "\n";
  }
  return result;
}

std::vector<PortInfo> Toolchain::list_ports() const {
  if (config_.kind == ToolchainKind::mock) {
    return {PortInfo{std::string(kMockPort), std::string(kMockBoard)}};
  }
  const auto proc = run_process(config_.list_ports_command, config_.timeout);
  if (proc.timed_out) throw ToolchainTimeout("port listing did not finish");
  if (proc.exit_code != 0) {
    throw Error("toolchain-failed", "port listing exited with status " + std::to_string(proc.exit_code) +
                                        ": " + proc.output);
  }
  return parse_port_list(proc.output);
}

}  // namespace protokit::toolchain
