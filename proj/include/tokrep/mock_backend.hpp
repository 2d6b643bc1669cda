#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <random>
#include <string>
#include <vector>

#include "tokrep/backend.hpp"

namespace tokrep {

// ============================================================================
// Scripted mock model
//
// A probability trie: (prompt selector, token prefix) -> full next-token
// distribution over a small vocabulary. Deterministic under a fixed seed,
// cheap enough for property tests, and expressive enough to stage every
// repair scenario the engine tests need.
//
// On disk:
//   {"vocab": ["if", "==", ...], "eos": "<eos>",
//    "nodes": {"<path-key>": {"dist": {"if": 0.9, ...}}, ...}}
//
// A path key is the prompt selector followed by the prefix tokens, joined
// with the unit separator (0x1F). The selector is either a literal prompt
// text or "*" matching any prompt; exact matches win over the wildcard.
// ============================================================================

/** Joins a prompt selector and prefix tokens into a node key. */
std::string mock_path_key(const std::string& prompt_selector,
                          const std::vector<std::string>& prefix);

struct MockModelScript {
  std::vector<std::string> vocab;  // 2..64 tokens, eos included
  std::string eos;
  // path key -> next-token distribution (token -> prob, each summing to 1).
  std::map<std::string, std::map<std::string, double>> nodes;

  /** Parses and validates. @throws ConfigError on any violation. */
  static MockModelScript from_json_text(const std::string& text);
  static MockModelScript load_file(const std::filesystem::path& path);
  std::string to_json_text() const;

  /** @throws ConfigError on vocab size, eos membership, unknown tokens,
   * non-positive probs, or a node distribution not summing to 1. */
  void validate() const;
};

class MockBackend : public Backend {
 public:
  MockBackend(MockModelScript script, uint64_t seed);

  BackendCapabilities capabilities() const override;
  std::vector<GenerationTrace> sample(const GenerationRequest& request) override;
  GenerationTrace greedy_continue(const GenerationRequest& request) override;
  AlternativesResult top_alternatives(const std::string& prompt,
                                      const std::vector<std::string>& prefix,
                                      int m,
                                      const std::string& excluded) override;

  /** Total API calls served (sampling, greedy, alternatives). The engine's
   * early-exit tests assert on this. */
  int call_count() const;

  const MockModelScript& script() const { return script_; }

 private:
  // Distribution for (prompt, prefix): exact prompt selector first, then
  // the wildcard. Null when the trie has no node, which ends decoding.
  const std::map<std::string, double>* node_for(
      const std::string& prompt, const std::vector<std::string>& prefix) const;

  // Top `depth` of a node's distribution over the full vocab, zero-filled
  // past the scripted entries so every step records at least two
  // alternatives. Order: prob descending, token ascending.
  std::vector<ProbEntry> top_of(const std::map<std::string, double>& dist,
                                int depth) const;

  // One decode: forces request.forced_prefix, then continues greedily
  // (greedy == true) or by sampling until eos, a dead end, or max_tokens.
  GenerationTrace decode(const GenerationRequest& request, bool greedy,
                         const std::string& trace_id);

  const MockModelScript script_;
  std::mt19937_64 rng_;
  mutable std::mutex mu_;
  int calls_ = 0;
  int decodes_ = 0;
};

}  // namespace tokrep
