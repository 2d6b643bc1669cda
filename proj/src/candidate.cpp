#include "tokrep/candidate.hpp"

#include <stdexcept>

#include "tokrep/errors.hpp"
#include "tokrep/uncertainty.hpp"

namespace tokrep {

void set_status(PatchCandidate& candidate, CandidateStatus next) {
  const CandidateStatus cur = candidate.status;
  bool ok = false;
  switch (cur) {
    case CandidateStatus::Untested:
      ok = next == CandidateStatus::Plausible ||
           next == CandidateStatus::Implausible ||
           next == CandidateStatus::Discarded;
      break;
    case CandidateStatus::Implausible:
      ok = next == CandidateStatus::LowQuality ||
           next == CandidateStatus::Discarded;
      break;
    default:
      ok = false;  // terminal states
  }
  if (!ok) {
    throw std::logic_error(std::string("illegal status transition ") +
                           to_string(cur) + " -> " + to_string(next) +
                           " for candidate " + candidate.id);
  }
  candidate.status = next;
}

std::string first_patch_token(const GenerationTrace& trace,
                              const std::string& patch_text) {
  if (trace.steps.empty())
    throw EmptyTrace("trace '" + trace.prompt_id +
                     "' has no steps, no first patch token");
  size_t offset = std::string::npos;
  if (!patch_text.empty()) offset = trace.decoded_text.find(patch_text);
  if (offset == std::string::npos) return trace.steps.front().chosen.token;

  size_t pos = 0;
  for (const TokenStep& step : trace.steps) {
    const size_t end = pos + step.chosen.token.size();
    // The step whose span covers the patch start carries the vote. Spans of
    // empty tokens cannot occur (validate_step rejects empty tokens).
    if (offset < end) return step.chosen.token;
    pos = end;
  }
  return trace.steps.back().chosen.token;
}

PatchCandidate make_candidate(std::string id, std::string prompt,
                              GenerationTrace trace, Provenance provenance) {
  PatchCandidate c;
  c.id = std::move(id);
  c.prompt = std::move(prompt);
  c.trace = std::move(trace);
  c.provenance = std::move(provenance);
  c.patch = extract_patch(c.trace.decoded_text, c.id);
  c.profile = uncertainty_profile(c.trace);
  c.first_u = first_token_uncertainty(c.trace);
  c.vote_token = first_patch_token(c.trace, c.patch.text);
  return c;
}

const char* to_string(CandidateStatus status) {
  switch (status) {
    case CandidateStatus::Untested: return "untested";
    case CandidateStatus::Plausible: return "plausible";
    case CandidateStatus::Implausible: return "implausible";
    case CandidateStatus::LowQuality: return "low_quality";
    case CandidateStatus::Discarded: return "discarded";
  }
  return "unknown";
}

const char* to_string(Provenance::Kind kind) {
  switch (kind) {
    case Provenance::Kind::Initial: return "initial";
    case Provenance::Kind::Refined: return "refined";
    case Provenance::Kind::FeedbackChild: return "feedback_child";
  }
  return "unknown";
}

const char* to_string(FeedbackKind kind) {
  switch (kind) {
    case FeedbackKind::Pass: return "pass";
    case FeedbackKind::CompileError: return "compile_error";
    case FeedbackKind::TestFailure: return "test_failure";
    case FeedbackKind::Timeout: return "timeout";
    case FeedbackKind::HarnessError: return "harness_error";
  }
  return "unknown";
}

}  // namespace tokrep
