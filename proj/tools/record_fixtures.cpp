// Regenerates the replay fixture for the case-study concepts by running each
// concept's scripted replies through a mock-toolchain session and recording
// every exchange.

#include <filesystem>
#include <iostream>

#include "CLI11.hpp"
#include "protokit/session.hpp"
#include "test_support.hpp"

namespace fs = std::filesystem;
using namespace protokit;

int main(int argc, char** argv) {
  CLI::App app{"Record replay fixtures for the case-study concepts"};
  std::string out = testing::concepts_fixture_path().string();
  app.add_option("-o,--output", out, "Fixture file to (re)write")->capture_default_str();
  CLI11_PARSE(app, argc, argv);

  fs::remove(out);
  int failures = 0;
  for (const auto& c : testing::concepts()) {
    testing::TempDir dir;
    std::vector<testing::ScriptedProvider::Step> steps(c.replies.begin(), c.replies.end());
    auto scripted = std::make_shared<testing::ScriptedProvider>(std::move(steps));
    auto service = testing::make_mock_service(dir.path(), std::make_shared<testing::RecordingProvider>(scripted, out));

    const auto id = service->create_session(c.manifest).id;
    service->post_instruction(id, c.instruction);
    const auto s = service->compile_current(id);
    const bool ok = s.loop_state.status == repair::LoopStatus::succeeded && scripted->remaining() == 0;
    std::cout << c.name << ": " << repair::to_string(s.loop_state.status) << " at iteration "
              << s.loop_state.iteration << " (" << scripted->sent().size() << " exchanges)\n";
    if (!ok) ++failures;
  }
  std::cout << "wrote " << out << '\n';
  return failures == 0 ? 0 : 1;
}
