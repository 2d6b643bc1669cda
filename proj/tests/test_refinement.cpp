#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "test_support.hpp"
#include "tokrep/localization.hpp"
#include "tokrep/mock_backend.hpp"
#include "tokrep/mockgen.hpp"
#include "tokrep/refinement.hpp"

using namespace tokrep;

namespace {

PatchCandidate decode_parent(Backend& backend, const std::string& prompt) {
  GenerationRequest req;
  req.prompt = prompt;
  req.temperature = 0.0;
  req.max_tokens = 32;
  GenerationTrace t = backend.greedy_continue(req);
  t.prompt_id = "parent";
  Provenance prov;
  prov.kind = Provenance::Kind::Initial;
  return make_candidate("parent", prompt, std::move(t), prov);
}

int serial = 0;
std::string next_id() { return "r" + std::to_string(++serial); }

}  // namespace

TEST_CASE("refinement splices replacements over a shared prefix") {
  MockBackend backend(ts::fig_script(), 1);
  const PatchCandidate parent = decode_parent(backend, "fix");
  RefineOptions opts;

  const auto children = refine_at_token(parent, 2, 3, backend, opts, next_id);
  REQUIRE(children.size() == 2);  // the node offers two alternatives to "!="

  const PatchCandidate& eq = children[0];
  CHECK(eq.trace.decoded_text == "if (x == null)");
  CHECK(eq.provenance.kind == Provenance::Kind::Refined);
  CHECK(eq.provenance.parent_id == "parent");
  CHECK(eq.provenance.position == 2);
  CHECK(eq.provenance.replacement == "==");
  CHECK(eq.prompt == parent.prompt);

  // Steps before the edit are byte-identical to the parent's.
  REQUIRE(eq.trace.steps.size() == 3);
  CHECK(eq.trace.steps[0].chosen.token == parent.trace.steps[0].chosen.token);
  CHECK(eq.trace.steps[0].chosen.prob == parent.trace.steps[0].chosen.prob);
  REQUIRE(eq.trace.steps[0].alternatives.size() ==
          parent.trace.steps[0].alternatives.size());

  // The edited step carries the replacement with the parent's distribution.
  CHECK(eq.trace.steps[1].chosen.token == "==");
  CHECK(eq.trace.steps[1].chosen.prob == doctest::Approx(0.40));
  CHECK(eq.trace.steps[1].alternatives[0].token ==
        parent.trace.steps[1].alternatives[0].token);

  CHECK(children[1].provenance.replacement == "<");
  CHECK(children[1].trace.decoded_text == "if (x < null)");
}

TEST_CASE("refinement rejects positions without a predecessor") {
  MockBackend backend(ts::fig_script(), 1);
  const PatchCandidate parent = decode_parent(backend, "fix");
  RefineOptions opts;
  CHECK_THROWS_AS(refine_at_token(parent, 1, 2, backend, opts, next_id),
                  std::invalid_argument);
  CHECK_THROWS_AS(refine_at_token(parent, 4, 2, backend, opts, next_id),
                  std::invalid_argument);
}

TEST_CASE("refine_candidate dedups on decoded text and charges nominally") {
  MockBackend backend(ts::maze_script(), 1);
  const PatchCandidate parent = decode_parent(backend, "fix");
  REQUIRE(parent.trace.decoded_text == "ABCDE");

  const auto ftokens = select_top_k(parent.profile, 0.5, 3);
  REQUIRE(ftokens.size() == 3);

  RefineOptions opts;
  const RefinedSet rs =
      refine_candidate(parent, ftokens, 3, backend, opts, 3, next_id);
  CHECK(rs.budget_cost == 9);  // TopK * m, independent of actual children
  REQUIRE(rs.children.size() == 9);
  CHECK(rs.duplicates_dropped.empty());

  std::set<std::string> texts;
  for (const PatchCandidate& c : rs.children) {
    texts.insert(c.trace.decoded_text);
    CHECK(c.provenance.kind == Provenance::Kind::Refined);
    CHECK(c.provenance.parent_id == "parent");
    // Prefix fidelity at every edit position.
    for (int i = 0; i + 1 < c.provenance.position; ++i) {
      CHECK(c.trace.steps[i].chosen.token == parent.trace.steps[i].chosen.token);
      CHECK(c.trace.steps[i].chosen.prob == parent.trace.steps[i].chosen.prob);
    }
    CHECK(c.trace.steps[c.provenance.position - 1].chosen.token ==
          c.provenance.replacement);
  }
  CHECK(texts.size() == 9);  // this trie yields nine distinct texts
}

TEST_CASE("no suspicious tokens means no children and no charge") {
  MockBackend backend(ts::fig_script(), 1);
  const PatchCandidate parent = decode_parent(backend, "fix");
  RefineOptions opts;
  const RefinedSet rs = refine_candidate(parent, {}, 3, backend, opts, 3, next_id);
  CHECK(rs.children.empty());
  CHECK(rs.budget_cost == 0);
  CHECK(rs.duplicates_dropped.empty());
}

TEST_CASE("duplicate decoded texts collapse to the first child") {
  // Decoded text concatenates raw tokens, so "b"+"cd" and "bc"+"d" collide.
  // Parent decodes "x a q"; position 2 offers replacements "b" and "bc"
  // whose one-hot continuations both spell "xbcd".
  MockModelScript s;
  s.vocab = {"x", "a", "b", "bc", "cd", "d", "q", "<eos>"};
  s.eos = "<eos>";
  s.nodes[ts::node_key({})] = {{"x", 0.9}, {"b", 0.05}, {"q", 0.05}};
  s.nodes[ts::node_key({"x"})] = {{"a", 0.5}, {"b", 0.3}, {"bc", 0.2}};
  s.nodes[ts::node_key({"x", "a"})] = {{"q", 1.0}};
  s.nodes[ts::node_key({"x", "a", "q"})] = {{"<eos>", 1.0}};
  s.nodes[ts::node_key({"x", "b"})] = {{"cd", 1.0}};
  s.nodes[ts::node_key({"x", "b", "cd"})] = {{"<eos>", 1.0}};
  s.nodes[ts::node_key({"x", "bc"})] = {{"d", 1.0}};
  s.nodes[ts::node_key({"x", "bc", "d"})] = {{"<eos>", 1.0}};
  s.validate();

  MockBackend backend(s, 1);
  const PatchCandidate parent = decode_parent(backend, "fix");
  REQUIRE(parent.trace.decoded_text == "xaq");

  // u = [0.15, 0.8, 0]: only position 2 is suspicious.
  const auto ftokens = select_top_k(parent.profile, 0.5, 3);
  REQUIRE(ftokens.size() == 1);

  RefineOptions opts;
  const RefinedSet rs =
      refine_candidate(parent, ftokens, 2, backend, opts, 3, next_id);
  REQUIRE(rs.children.size() == 1);
  CHECK(rs.children[0].trace.decoded_text == "xbcd");
  // Replacements rank by probability, so "b" wins and "bc" is the dropped
  // duplicate.
  CHECK(rs.children[0].provenance.replacement == "b");
  REQUIRE(rs.duplicates_dropped.size() == 1);
  CHECK(rs.duplicates_dropped[0] == "xbcd");
  CHECK(rs.budget_cost == 6);  // nominal TopK=3 times m=2
}

TEST_CASE("randomized sweep: two hundred refinements, zero violations") {
  int runs = 0;
  for (uint64_t seed = 1; runs < 200; ++seed) {
    const SyntheticScript synth =
        make_synthetic_script(10, 3, 4 + static_cast<int>(seed % 3), seed);
    MockBackend backend(synth.script, seed);

    GenerationRequest req;
    req.prompt = "p";
    req.temperature = 1.0;
    req.max_tokens = 16;
    GenerationTrace t = backend.sample(req).front();
    t.prompt_id = "parent";
    if (t.steps.size() < 2) continue;  // nothing refinable in this draw
    Provenance prov;
    prov.kind = Provenance::Kind::Initial;
    const PatchCandidate parent =
        make_candidate("parent", "p", std::move(t), prov);

    const auto ftokens = select_top_k(parent.profile, 0.5, 3);
    if (ftokens.empty()) continue;
    ++runs;

    int child_serial = 0;
    const RefinedSet rs = refine_candidate(
        parent, ftokens, 3, backend, RefineOptions{},
        3, [&] { return "s" + std::to_string(seed) + "c" + std::to_string(++child_serial); });

    CHECK(rs.budget_cost == 9);
    CHECK(rs.children.size() <= ftokens.size() * 3);

    std::set<std::string> texts;
    for (const PatchCandidate& c : rs.children) {
      // Dedup produced unique texts, none equal to the parent's prefix trick.
      CHECK(texts.insert(c.trace.decoded_text).second);
      REQUIRE(c.provenance.position >= 2);
      REQUIRE(c.provenance.position <= static_cast<int>(parent.trace.steps.size()));
      // Replacement differs from what the parent chose there.
      CHECK(c.provenance.replacement !=
            parent.trace.steps[c.provenance.position - 1].chosen.token);
      // Prefix fidelity, including recorded probabilities.
      for (int i = 0; i + 1 < c.provenance.position; ++i) {
        CHECK(c.trace.steps[i].chosen.token ==
              parent.trace.steps[i].chosen.token);
        CHECK(c.trace.steps[i].chosen.prob ==
              parent.trace.steps[i].chosen.prob);
      }
      const TokenStep& edited = c.trace.steps[c.provenance.position - 1];
      CHECK(edited.chosen.token == c.provenance.replacement);
      REQUIRE(edited.alternatives.size() ==
              parent.trace.steps[c.provenance.position - 1].alternatives.size());
      CHECK(edited.alternatives[0].prob ==
            parent.trace.steps[c.provenance.position - 1].alternatives[0].prob);
      CHECK_NOTHROW(validate_trace(c.trace));
    }
  }
  CHECK(runs == 200);
}
