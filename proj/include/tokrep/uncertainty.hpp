#pragma once

#include <sstream>
#include <vector>

#include "tokrep/errors.hpp"
#include "tokrep/trace.hpp"

namespace tokrep {

// ============================================================================
// Token-level decoding uncertainty
//
// The margin between the two most probable next tokens is the whole signal:
// a step where the model strongly prefers one token is certain, a step where
// the top two probabilities tie is maximally uncertain. Everything downstream
// (suspiciousness scoring, the refinement quality gate) is built on this
// scalar, so it stays a pure kernel over recorded distributions.
// ============================================================================

/**
 * Uncertainty of one decoding step.
 *
 * Defined as 1 - (p_top1 - p_top2) over the recorded distribution, where
 * p_top1 and p_top2 are the probabilities of the two highest-ranked
 * alternatives. A one-hot step scores 0, a tied top pair scores 1.
 *
 * @param step  recorded step; needs at least two alternatives
 * @returns value in [0, 1]
 * @throws InsufficientLogprobDepth when fewer than two alternatives were
 *         recorded (carries the step position)
 */
inline double compute_uncertainty(const TokenStep& step) {
  if (step.alternatives.size() < 2) {
    std::ostringstream os;
    os << "step at position " << step.position << " has "
       << step.alternatives.size()
       << " recorded alternatives, need at least 2 to measure the top-2 gap";
    throw InsufficientLogprobDepth(os.str(), step.position);
  }
  return 1.0 - (step.alternatives[0].prob - step.alternatives[1].prob);
}

/**
 * Per-position uncertainty profile of a whole trace.
 *
 * @returns one value per step, index i holding position i + 1
 * @throws InsufficientLogprobDepth from the first offending step
 */
inline std::vector<double> uncertainty_profile(const GenerationTrace& trace) {
  std::vector<double> profile;
  profile.reserve(trace.steps.size());
  for (const TokenStep& step : trace.steps)
    profile.push_back(compute_uncertainty(step));
  return profile;
}

/**
 * Uncertainty at position 1. The quality gate compares exactly this value
 * between a candidate and its children.
 *
 * @throws EmptyTrace when the trace has no steps
 */
inline double first_token_uncertainty(const GenerationTrace& trace) {
  if (trace.steps.empty())
    throw EmptyTrace("trace '" + trace.prompt_id +
                     "' has no steps, first-token uncertainty undefined");
  return compute_uncertainty(trace.steps.front());
}

}  // namespace tokrep
