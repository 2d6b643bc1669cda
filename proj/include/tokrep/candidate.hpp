#pragma once

#include <optional>
#include <string>
#include <vector>

#include "tokrep/feedback.hpp"
#include "tokrep/patch.hpp"
#include "tokrep/trace.hpp"

namespace tokrep {

// ============================================================================
// Patch candidates
//
// The unit that flows through the repair loop: a generation trace, the patch
// text extracted from it, and the bookkeeping the loop needs (status,
// provenance, cached uncertainty data).
// ============================================================================

enum class CandidateStatus {
  Untested,    // created, not yet evaluated
  Plausible,   // passed the bug's tests (terminal)
  Implausible, // failed the bug's tests; may still enter the pool
  LowQuality,  // implausible and rejected by the quality gate (terminal)
  Discarded,   // lost a majority vote or yielded no patch text (terminal)
};

struct Provenance {
  enum class Kind { Initial, Refined, FeedbackChild };
  Kind kind = Kind::Initial;
  std::string parent_id;    // Refined, FeedbackChild
  int position = 0;         // Refined: 1-based replaced position
  std::string replacement;  // Refined: the substituted token
};

struct PatchCandidate {
  std::string id;
  std::string prompt;  // prompt text this candidate was generated from
  GenerationTrace trace;
  PatchText patch;
  CandidateStatus status = CandidateStatus::Untested;
  Provenance provenance;

  // Cached at creation; the loop never recomputes these.
  std::vector<double> profile;  // per-position uncertainty
  double first_u = 0.0;         // uncertainty at trace position 1
  std::string vote_token;       // first token of the patch region

  std::optional<Feedback> feedback;  // set by evaluation
};

/**
 * Transitions a candidate's status, enforcing the legal moves:
 * Untested -> Plausible | Implausible | Discarded, and
 * Implausible -> LowQuality | Discarded. Plausible, LowQuality and
 * Discarded are terminal.
 *
 * @throws std::logic_error on an illegal transition
 */
void set_status(PatchCandidate& candidate, CandidateStatus next);

/**
 * The token whose text begins the extracted patch region inside the trace.
 * Votes count this token rather than trace position 1 so that completion
 * scaffolding (fence markers, prose) cannot dominate a vote. Falls back to
 * the first trace token when the patch text cannot be located.
 *
 * @throws EmptyTrace when the trace has no steps
 */
std::string first_patch_token(const GenerationTrace& trace,
                              const std::string& patch_text);

/**
 * Builds a candidate from a fresh trace: extracts the patch, caches the
 * uncertainty profile and first-token uncertainty, resolves the vote token.
 *
 * @throws NoPatchInCompletion when the completion has no patch text
 * @throws InsufficientLogprobDepth when a step lacks a top-2
 * @throws EmptyTrace when the trace has no steps
 */
PatchCandidate make_candidate(std::string id, std::string prompt,
                              GenerationTrace trace, Provenance provenance);

const char* to_string(CandidateStatus status);
const char* to_string(Provenance::Kind kind);

}  // namespace tokrep
