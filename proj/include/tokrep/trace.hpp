#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace tokrep {

// ============================================================================
// Generation traces
//
// A trace is the unit every other module consumes: one recorded step per
// generated token, carrying the top-K slice of the model's next-token
// distribution at that point. Positions are 1-based everywhere in this
// codebase; std::vector indices are position - 1.
// ============================================================================

/** One (token, probability) pair from a next-token distribution. */
struct ProbEntry {
  std::string token;
  double prob = 0.0;

  friend bool operator==(const ProbEntry& a, const ProbEntry& b) {
    return a.token == b.token && a.prob == b.prob;
  }
};

/**
 * One decoding step.
 *
 * `alternatives` is the top-K of the model distribution at this step,
 * sorted by prob descending (ties broken by token ascending so that
 * serialization is stable). `chosen` is the token that actually continued
 * the sequence. For greedy steps chosen.token == alternatives[0].token;
 * sampled and forced steps may deviate, and the scoring kernels always
 * read the distribution (alternatives), never the choice.
 */
struct TokenStep {
  int position = 0;  // 1-based
  ProbEntry chosen;
  std::vector<ProbEntry> alternatives;
};

/**
 * A full generation: prompt identity, per-step records, decoded text.
 *
 * Invariants (checked by validate_trace):
 *  - steps[i].position == i + 1
 *  - decoded_text == concatenation of steps[i].chosen.token
 *  - each step passes validate_step
 */
struct GenerationTrace {
  std::string prompt_id;
  std::vector<TokenStep> steps;
  std::string decoded_text;
  // True when decoding stopped at the token cap instead of end-of-sequence.
  // Not part of the serialized record; replayed traces default to false.
  bool truncated = false;
};

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

// Slack allowed on the probability mass of a truncated top-K list.
inline constexpr double kMassEpsilon = 1e-6;

/**
 * Checks a single step: non-empty tokens, probs within [0, 1], alternatives
 * sorted non-increasing by prob, total alternative mass <= 1 + epsilon.
 * Throws std::invalid_argument naming the offence. Does not require
 * chosen == alternatives[0]; see TokenStep.
 */
void validate_step(const TokenStep& step);

/**
 * Checks positions 1..L, decoded_text agreement, and every step.
 * Backends call this on every trace they hand out.
 */
void validate_trace(const GenerationTrace& trace);

// ---------------------------------------------------------------------------
// JSONL trace logs
//
// One JSON object per line, one line per position:
//   {"prompt_id": "...", "position": 3, "token": "...", "prob": 0.42,
//    "alternatives": [{"token": "...", "prob": 0.42}, ...]}
// The same shape is read back for replay, grouped by prompt_id.
// ---------------------------------------------------------------------------

/** Appends one line per step of `trace` to `out`. */
void write_trace_jsonl(std::ostream& out, const GenerationTrace& trace);

/**
 * Reads every record from `in` and reassembles traces grouped by prompt_id,
 * in first-appearance order. Records of one trace may interleave with
 * others; within a trace they are sorted by position and must then form
 * 1..L. decoded_text is reconstructed by concatenation. Malformed JSON or
 * position gaps raise ConfigError.
 */
std::vector<GenerationTrace> read_traces_jsonl(std::istream& in);

}  // namespace tokrep
