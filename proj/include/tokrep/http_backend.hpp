#pragma once

#include <memory>
#include <string>

#include "tokrep/backend.hpp"

namespace tokrep {

// ============================================================================
// HTTP completion backend
//
// Speaks the classic completions shape: POST {prompt, n, temperature,
// max_tokens, logprobs, echo:false}, read {choices: [{text, logprobs:
// {tokens, token_logprobs, top_logprobs}, finish_reason}]}. Probabilities
// are exp(logprob) of the raw response values.
//
// Prefix forcing is approximated by appending the detokenized prefix to the
// prompt and asking for a greedy continuation. The provider reports no
// distributions for prompt-side text, so forced steps carry single-entry
// alternative lists; measuring uncertainty on one raises
// InsufficientLogprobDepth, the documented truncation behaviour. The repair
// loop never needs those values because refinement reuses the parent's
// recorded distributions for spliced prefixes.
// ============================================================================

struct HttpBackendConfig {
  // Full endpoint URL, e.g. "http://host:8000/v1/completions". Read from
  // TOKREP_API_URL when empty. Plain http only; https raises ConfigError.
  std::string api_url;
  // Bearer token; read from TOKREP_API_KEY when empty. Optional.
  std::string api_key;
  // Reported as capabilities().max_logprob_depth. Hosted APIs usually cap
  // top-logprob lists at 5.
  int logprob_depth_limit = 5;
  // Retry policy for transport failures: total attempts and the first
  // backoff delay, doubled per retry.
  int attempts = 3;
  int initial_backoff_ms = 500;
  // Per-request timeouts.
  int connect_timeout_s = 5;
  int read_timeout_s = 120;
};

class HttpBackend : public Backend {
 public:
  /** @throws ConfigError when no URL is configured or it is not http://. */
  explicit HttpBackend(HttpBackendConfig config);
  ~HttpBackend() override;

  BackendCapabilities capabilities() const override;
  std::vector<GenerationTrace> sample(const GenerationRequest& request) override;
  GenerationTrace greedy_continue(const GenerationRequest& request) override;
  AlternativesResult top_alternatives(const std::string& prompt,
                                      const std::vector<std::string>& prefix,
                                      int m,
                                      const std::string& excluded) override;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace tokrep
