#pragma once

#include <stdexcept>
#include <string>

namespace tokrep {

// Root of every tokrep-specific failure. Catching tokrep::Error at a
// boundary (CLI, engine) is sufficient; catching a derived type is for
// callers that can actually do something about that one condition.
struct Error : std::runtime_error {
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// A token step carries fewer than the required number of alternatives.
// `position` is 1-based when known, -1 otherwise.
struct InsufficientLogprobDepth : Error {
  int position = -1;
  explicit InsufficientLogprobDepth(const std::string& what, int pos = -1)
      : Error(what), position(pos) {}
};

// An operation that needs at least one token was handed an empty trace.
struct EmptyTrace : Error {
  using Error::Error;
};

// Local suspiciousness is undefined when the preceding uncertainty is zero:
// the log ratio has no value there.
struct DegenerateUncertainty : Error {
  using Error::Error;
};

// Decay factor outside (0, 1].
struct InvalidDecayFactor : Error {
  using Error::Error;
};

// Voting over zero candidates.
struct EmptyCandidatePool : Error {
  using Error::Error;
};

// Backend transport failure that survived the retry policy.
struct BackendUnavailable : Error {
  using Error::Error;
};

// Backend cannot honour a forced prefix at all.
struct PrefixForcingUnsupported : Error {
  using Error::Error;
};

// A completion contained no usable patch text.
struct NoPatchInCompletion : Error {
  using Error::Error;
};

// Harness infrastructure failure outside the child process (tree copy,
// temp dir creation). Subprocess-level anomalies are reported in-band as
// Feedback kind HarnessError instead.
struct HarnessError : Error {
  using Error::Error;
};

// Malformed or inconsistent input artifacts: manifests, datasets,
// unknown templates, unparseable config files.
struct ConfigError : Error {
  using Error::Error;
};

// Semantically invalid configuration values (budget < 1, alpha out of
// range). Distinct from ConfigError: the file parsed, the values are bad.
struct InvalidConfig : Error {
  using Error::Error;
};

// Analysis over an empty dataset.
struct EmptyDataset : Error {
  using Error::Error;
};

}  // namespace tokrep
