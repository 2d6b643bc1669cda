#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>
#include <sstream>

#include "test_support.hpp"
#include "tokrep/errors.hpp"
#include "tokrep/trace.hpp"
#include "tokrep/uncertainty.hpp"

using namespace tokrep;

namespace {

TokenStep step_with_top2(double p1, double p2) {
  TokenStep s;
  s.position = 1;
  s.chosen = {"a", p1};
  s.alternatives = {{"a", p1}, {"b", p2}};
  return s;
}

}  // namespace

TEST_CASE("uncertainty is one minus the top-2 gap") {
  CHECK(compute_uncertainty(step_with_top2(0.9, 0.05)) == doctest::Approx(0.15).epsilon(1e-12));
  CHECK(compute_uncertainty(step_with_top2(0.6, 0.3)) == doctest::Approx(0.7).epsilon(1e-12));
}

TEST_CASE("a one-hot distribution is perfectly certain") {
  CHECK(compute_uncertainty(step_with_top2(1.0, 0.0)) == 0.0);
}

TEST_CASE("a top-2 tie is maximally uncertain") {
  CHECK(compute_uncertainty(step_with_top2(0.5, 0.5)) == 1.0);
  CHECK(compute_uncertainty(step_with_top2(0.25, 0.25)) == 1.0);
}

TEST_CASE("uncertainty reads the distribution, not the sampled token") {
  // The chosen token is not the argmax; the measurement must not change.
  TokenStep s;
  s.position = 1;
  s.chosen = {"b", 0.05};
  s.alternatives = {{"a", 0.9}, {"b", 0.05}};
  CHECK(compute_uncertainty(s) == doctest::Approx(0.15).epsilon(1e-12));
}

TEST_CASE("fewer than two alternatives cannot be measured") {
  TokenStep s;
  s.position = 7;
  s.chosen = {"a", 1.0};
  s.alternatives = {{"a", 1.0}};
  CHECK_THROWS_AS(compute_uncertainty(s), InsufficientLogprobDepth);
  try {
    compute_uncertainty(s);
  } catch (const InsufficientLogprobDepth& e) {
    CHECK(e.position == 7);
  }
}

TEST_CASE("fuzz: uncertainty stays in [0,1] and equals 1-(p1-p2)") {
  std::mt19937_64 gen(7);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  for (int i = 0; i < 10000; ++i) {
    double a = uni(gen), b = uni(gen);
    if (a + b > 1.0) {
      a /= 2.0;
      b /= 2.0;
    }
    const double p1 = std::max(a, b), p2 = std::min(a, b);
    const double u = compute_uncertainty(step_with_top2(p1, p2));
    CHECK(u >= 0.0);
    CHECK(u <= 1.0);
    CHECK(u == 1.0 - (p1 - p2));
  }
}

TEST_CASE("profile and first-token helpers") {
  const GenerationTrace t = ts::make_trace("p", {0.1, 0.4, 0.3});
  const std::vector<double> prof = uncertainty_profile(t);
  REQUIRE(prof.size() == 3);
  CHECK(prof[0] == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(prof[1] == doctest::Approx(0.4).epsilon(1e-12));
  CHECK(prof[2] == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(first_token_uncertainty(t) == doctest::Approx(0.1).epsilon(1e-12));

  GenerationTrace empty;
  empty.prompt_id = "e";
  CHECK_THROWS_AS(first_token_uncertainty(empty), EmptyTrace);
}

TEST_CASE("step validation rejects malformed distributions") {
  TokenStep s = step_with_top2(0.9, 0.05);
  s.position = 1;
  CHECK_NOTHROW(validate_step(s));

  TokenStep unsorted = s;
  std::swap(unsorted.alternatives[0], unsorted.alternatives[1]);
  CHECK_THROWS_AS(validate_step(unsorted), std::invalid_argument);

  TokenStep heavy = s;
  heavy.alternatives = {{"a", 0.8}, {"b", 0.7}};
  CHECK_THROWS_AS(validate_step(heavy), std::invalid_argument);

  TokenStep negative = s;
  negative.alternatives = {{"a", 0.5}, {"b", -0.1}};
  CHECK_THROWS_AS(validate_step(negative), std::invalid_argument);

  TokenStep no_alts = s;
  no_alts.alternatives.clear();
  CHECK_THROWS_AS(validate_step(no_alts), std::invalid_argument);
}

TEST_CASE("trace validation checks positions and decoded text") {
  GenerationTrace t = ts::make_trace("p", {0.1, 0.2});
  CHECK_NOTHROW(validate_trace(t));

  GenerationTrace gap = t;
  gap.steps[1].position = 3;
  CHECK_THROWS_AS(validate_trace(gap), std::invalid_argument);

  GenerationTrace wrong_text = t;
  wrong_text.decoded_text = "something else";
  CHECK_THROWS_AS(validate_trace(wrong_text), std::invalid_argument);
}

TEST_CASE("JSONL round trip preserves traces") {
  const GenerationTrace a = ts::make_trace("alpha", {0.1, 0.4, 0.3, 0.5});
  const GenerationTrace b = ts::make_trace("beta", {0.9});

  std::ostringstream out;
  write_trace_jsonl(out, a);
  write_trace_jsonl(out, b);

  std::istringstream in(out.str());
  const std::vector<GenerationTrace> back = read_traces_jsonl(in);
  REQUIRE(back.size() == 2);
  CHECK(back[0].prompt_id == "alpha");
  CHECK(back[1].prompt_id == "beta");
  CHECK(back[0].decoded_text == a.decoded_text);
  REQUIRE(back[0].steps.size() == a.steps.size());
  for (size_t i = 0; i < a.steps.size(); ++i) {
    CHECK(back[0].steps[i].position == a.steps[i].position);
    CHECK(back[0].steps[i].chosen.token == a.steps[i].chosen.token);
    CHECK(back[0].steps[i].chosen.prob == a.steps[i].chosen.prob);
    REQUIRE(back[0].steps[i].alternatives.size() == a.steps[i].alternatives.size());
    CHECK(back[0].steps[i].alternatives[1].prob == a.steps[i].alternatives[1].prob);
  }
}

TEST_CASE("JSONL reader accepts shuffled records and rejects gaps") {
  const GenerationTrace a = ts::make_trace("alpha", {0.1, 0.4});
  std::ostringstream out;
  write_trace_jsonl(out, a);

  // Reverse the record order; grouping must still reassemble the trace.
  std::vector<std::string> lines;
  std::istringstream split(out.str());
  for (std::string line; std::getline(split, line);) lines.push_back(line);
  REQUIRE(lines.size() == 2);
  std::istringstream shuffled(lines[1] + "\n" + lines[0] + "\n");
  const auto back = read_traces_jsonl(shuffled);
  REQUIRE(back.size() == 1);
  CHECK(back[0].steps[0].position == 1);
  CHECK(back[0].decoded_text == a.decoded_text);

  std::istringstream gap(lines[1] + "\n");  // position 2 without position 1
  CHECK_THROWS_AS(read_traces_jsonl(gap), ConfigError);

  std::istringstream garbage("not json\n");
  CHECK_THROWS_AS(read_traces_jsonl(garbage), ConfigError);
}
