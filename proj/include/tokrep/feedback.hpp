#pragma once

#include <string>

namespace tokrep {

// Total classification of one test-run outcome. Every process result maps
// to exactly one kind; HarnessError covers spawn-level anomalies so the
// mapping never has to throw.
enum class FeedbackKind { Pass, CompileError, TestFailure, Timeout, HarnessError };

struct Feedback {
  FeedbackKind kind = FeedbackKind::HarnessError;
  // Raw exit code; negated signal number when the process died on a signal.
  int exit_code = 0;
  // First failing test name / assertion / compiler message, truncated to
  // the harness byte limit. Empty for Pass.
  std::string summary;
  // Wall-clock duration of the run in seconds. Timing metadata only; kept
  // out of deterministic report bodies.
  double duration_s = 0.0;
};

const char* to_string(FeedbackKind kind);

}  // namespace tokrep
