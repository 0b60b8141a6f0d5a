#include <random>

#include "doctest.h"
#include "protokit/knobs.hpp"
#include "test_support.hpp"

using namespace protokit;
using namespace protokit::knobs;

namespace {

// Positions where two strings differ, as a [first, last] pair in `a`.
std::pair<std::size_t, std::size_t> diff_window(const std::string& a, const std::string& b) {
  std::size_t front = 0;
  while (front < a.size() && front < b.size() && a[front] == b[front]) ++front;
  std::size_t back = 0;
  while (back < a.size() - front && back < b.size() - front && a[a.size() - 1 - back] == b[b.size() - 1 - back]) {
    ++back;
  }
  return {front, a.size() - back};
}

}  // namespace

TEST_CASE("extract_knobs examples") {
  const auto paw = extract_knobs("const int PAW_TARGET = 50;");
  REQUIRE(paw.knobs.size() == 1);
  const auto& k = paw.knobs[0];
  CHECK(k.id == "PAW_TARGET");
  CHECK(k.name == "PAW_TARGET");
  CHECK(k.value == 50);
  CHECK(k.is_integer);
  CHECK(k.form == KnobForm::const_decl);
  CHECK(k.suggested_min == 0);
  CHECK(k.suggested_max == 100);
  CHECK(k.suggested_step == 1);

  const auto temp = extract_knobs("#define TEMP_MAX 42.5f\n");
  REQUIRE(temp.knobs.size() == 1);
  CHECK(temp.knobs[0].value == 42.5);
  CHECK_FALSE(temp.knobs[0].is_integer);
  CHECK(temp.knobs[0].form == KnobForm::define);
  CHECK(temp.knobs[0].suggested_step == doctest::Approx(0.425).epsilon(1e-12));
  CHECK(temp.knobs[0].text == "42.5f");

  CHECK(extract_knobs("int x = foo(); // const int FAKE = 9;").knobs.empty());
}

TEST_CASE("ranges, steps and ids") {
  const auto m = extract_knobs(
      "#define NEG -4\n#define ZERO 0\n#define TINY 0.5\nconst float SMALL = .25;\n#define NEG 7\n"
      "const unsigned   int U = 3;\nconst uint16_t W = 9 ;\n");
  REQUIRE(m.knobs.size() == 7);
  CHECK(m.knobs[0].suggested_min == -8);
  CHECK(m.knobs[0].suggested_max == 0);
  CHECK(m.knobs[1].suggested_min == -1);
  CHECK(m.knobs[1].suggested_max == 1);
  CHECK(m.knobs[2].suggested_step == 0.01);
  CHECK(m.knobs[3].value == 0.25);
  CHECK(m.knobs[4].id == "NEG.2");
  CHECK(m.knobs[5].name == "U");
  CHECK(m.knobs[6].name == "W");
  for (std::size_t i = 1; i < m.knobs.size(); ++i) CHECK(m.knobs[i - 1].span_end <= m.knobs[i].span_start);
}

TEST_CASE("literal grammar exclusions") {
  for (const char* src : {"#define H 0x10\n", "#define B 0b101\n", "#define O 017\n", "#define C 'a'\n",
                          "#define E 1e5\n", "#define U 10u\n", "#define X (5)\n", "#define S \"5\"\n",
                          "const int A = 1 + 2;\n", "const short S = 3;\n", "int plain = 4;\n",
                          "#define F 5f\n", "#define D 1'000\n", "#define\tT 3 4\n"}) {
    CAPTURE(src);
    CHECK(extract_knobs(src).knobs.empty());
  }
  CHECK(extract_knobs("const long L=-12;").knobs.size() == 1);
  CHECK(extract_knobs("#define P +3\n").knobs.at(0).value == 3);
}

TEST_CASE("patch examples") {
  const std::string src = "const int PAW_TARGET = 50;\nvoid setup(){}\nvoid loop(){}\n";
  const auto m = extract_knobs(src);
  const auto r = patch_knob(src, m, "PAW_TARGET", 30);
  CHECK(r.source.size() == src.size());
  std::size_t changed = 0;
  for (std::size_t i = 0; i < src.size(); ++i) changed += src[i] != r.source[i];
  CHECK(changed == 1);  // only the tens digit differs
  CHECK(r.source.substr(23, 2) == "30");
  CHECK(r.manifest == extract_knobs(r.source));
  CHECK(r.manifest.knobs[0].value == 30);

  CHECK(patch_knob(src, m, "PAW_TARGET", 50).source == src);

  const std::string edited = "const int PAW_TARGET = 55;\nvoid setup(){}\nvoid loop(){}\n";
  CHECK_THROWS_AS(patch_knob(edited, m, "PAW_TARGET", 30), StaleManifest);
  CHECK_THROWS_AS(patch_knob(src, m, "NOPE", 30), UnknownKnob);
}

TEST_CASE("patch bounds and value forms") {
  const std::string src = "#define LEVEL 2.5f\nconst int N = 10;\n";
  const auto m = extract_knobs(src);
  CHECK(patch_bounds(*m.find("N")) == std::pair<double, double>{-20, 40});
  CHECK_NOTHROW(patch_knob(src, m, "N", -20));
  CHECK_NOTHROW(patch_knob(src, m, "N", 40));
  CHECK_THROWS_AS(patch_knob(src, m, "N", 41), InvalidKnobValue);
  CHECK_THROWS_AS(patch_knob(src, m, "N", 3.5), InvalidKnobValue);
  CHECK(patch_knob(src, m, "LEVEL", 3).source == "#define LEVEL 3.0f\nconst int N = 10;\n");
  CHECK(patch_knob(src, m, "LEVEL", 0.1).source == "#define LEVEL 0.1f\nconst int N = 10;\n");
  CHECK(patch_knob(src, m, "N", -7).source == "#define LEVEL 2.5f\nconst int N = -7;\n");
}

TEST_CASE("round trip and locality over generated sketches") {
  std::mt19937 rng(17);
  for (int n = 0; n < 200; ++n) {
    const auto g = testing::generate_knob_sketch(rng);
    const auto m = extract_knobs(g.source);
    REQUIRE(m.knobs.size() == g.planted.size());
    for (std::size_t i = 0; i < m.knobs.size(); ++i) {
      CHECK(m.knobs[i].name == g.planted[i].name);
      CHECK(m.knobs[i].text == g.planted[i].text);
      CHECK(m.knobs[i].value == g.planted[i].value);
    }
    for (const auto& k : m.knobs) {
      const auto [lo, hi] = patch_bounds(k);
      double v = lo + (hi - lo) * std::uniform_real_distribution<double>(0, 1)(rng);
      if (k.is_integer) v = std::round(v);
      v = std::clamp(v, lo, hi);
      const auto r = patch_knob(g.source, m, k.id, v);
      const auto again = extract_knobs(r.source);
      CHECK(again == r.manifest);
      REQUIRE(again.knobs.size() == m.knobs.size());
      for (std::size_t i = 0; i < m.knobs.size(); ++i) {
        CHECK(again.knobs[i].value == (m.knobs[i].id == k.id ? v : m.knobs[i].value));
      }
      if (r.source != g.source) {
        const auto [first, last] = diff_window(g.source, r.source);
        CHECK(first >= k.span_start);
        CHECK(last <= k.span_end);
      }
    }
  }
}
