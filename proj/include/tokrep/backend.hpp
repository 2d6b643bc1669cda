#pragma once

#include <string>
#include <vector>

#include "tokrep/trace.hpp"

namespace tokrep {

// ============================================================================
// Generation backends
//
// The repair loop is backend-agnostic: it needs seeded sampling, greedy
// continuation under a forced token prefix, and top-m alternative queries
// at a prefix. Everything else (transport, scripts, retries) is the
// backend's business. Every trace handed out is validated first.
// ============================================================================

struct BackendCapabilities {
  int max_logprob_depth = 0;
  bool supports_prefix_forcing = false;
  bool deterministic = false;
  // Non-empty when a capability is honoured approximately (for example
  // text-level prefix forcing over HTTP).
  std::string warning;
};

struct GenerationRequest {
  std::string prompt;
  int sample_count = 1;     // number of independent samples
  double temperature = 1.0; // 0 means greedy
  int max_tokens = 256;     // cap per continuation
  int logprob_depth = 5;    // alternatives recorded per step (K)
  // When non-empty, every continuation starts with exactly these tokens.
  std::vector<std::string> forced_prefix;
};

struct AlternativesResult {
  // Positive-probability tokens only, probability descending, the excluded
  // token removed, at most m entries.
  std::vector<ProbEntry> entries;
  // True when fewer than m alternatives were available after exclusion.
  // Non-fatal by design; callers refine with what exists.
  bool truncated = false;
};

class Backend {
 public:
  virtual ~Backend() = default;

  virtual BackendCapabilities capabilities() const = 0;

  /**
   * Draws request.sample_count independent continuations of request.prompt,
   * honouring forced_prefix when present.
   *
   * @throws BackendUnavailable on transport failure (after retries)
   * @throws std::invalid_argument on a malformed request
   */
  virtual std::vector<GenerationTrace> sample(const GenerationRequest& request) = 0;

  /**
   * Greedy continuation of prompt under request.forced_prefix. Steps
   * 1..|prefix| carry the forced tokens; later steps are argmax decodes.
   * Temperature and sample_count in the request are ignored.
   *
   * @throws PrefixForcingUnsupported when the backend cannot force at all
   */
  virtual GenerationTrace greedy_continue(const GenerationRequest& request) = 0;

  /**
   * Top-m next-token alternatives at (prompt, prefix), with `excluded`
   * removed. Ordering: probability descending, token ascending on ties.
   *
   * @pre m >= 1 and m <= capabilities().max_logprob_depth - 1
   */
  virtual AlternativesResult top_alternatives(
      const std::string& prompt, const std::vector<std::string>& prefix,
      int m, const std::string& excluded) = 0;
};

}  // namespace tokrep
