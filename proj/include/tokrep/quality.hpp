#pragma once

#include "tokrep/candidate.hpp"
#include "tokrep/trace.hpp"
#include "tokrep/uncertainty.hpp"

namespace tokrep {

// Quality gate for feedback-generated candidates: a child is worth keeping
// only when the model is strictly more certain about its first token than
// it was about the parent's. Equality is not an improvement.

enum class Verdict { High, Low };

struct QualityVerdict {
  Verdict verdict = Verdict::Low;
  double parent_u1 = 0.0;
  double child_u1 = 0.0;
};

/**
 * Compares first-token uncertainties. High iff child < parent, strictly.
 * Later positions never participate.
 *
 * @throws EmptyTrace when either trace has no steps
 */
inline QualityVerdict measure_trace_quality(const GenerationTrace& parent,
                                            const GenerationTrace& child) {
  QualityVerdict q;
  q.parent_u1 = first_token_uncertainty(parent);
  q.child_u1 = first_token_uncertainty(child);
  q.verdict = q.child_u1 < q.parent_u1 ? Verdict::High : Verdict::Low;
  return q;
}

/** Candidate overload using the uncertainties cached at creation. */
inline QualityVerdict measure_trace_quality(const PatchCandidate& parent,
                                            const PatchCandidate& child) {
  QualityVerdict q;
  q.parent_u1 = parent.first_u;
  q.child_u1 = child.first_u;
  q.verdict = q.child_u1 < q.parent_u1 ? Verdict::High : Verdict::Low;
  return q;
}

inline const char* to_string(Verdict v) {
  return v == Verdict::High ? "high" : "low";
}

}  // namespace tokrep
