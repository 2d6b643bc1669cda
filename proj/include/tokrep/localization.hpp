#pragma once

#include <string>
#include <vector>

#include "tokrep/candidate.hpp"
#include "tokrep/trace.hpp"

namespace tokrep {

// ============================================================================
// Faulty-token localization
//
// A position is suspicious when its uncertainty strictly rises over the
// previous position. The local score weighs the rise by its magnitude on a
// log-ratio scale and the global score decays it by absolute position, so
// early rises outrank equally sharp late ones. Natural log is used; any
// base only rescales every score by the same constant and leaves the
// ranking untouched.
// ============================================================================

/** One ranked suspicious position. Positions are 1-based. */
struct SuspiciousToken {
  int position = 0;
  double local_score = 0.0;
  double global_score = 0.0;
  int rank = 0;  // 1 = most suspicious
};

/**
 * Positions whose uncertainty strictly rises.
 *
 * @param profile  per-position uncertainties, index i holding position i+1
 * @returns ascending 1-based positions n >= 2 with profile[n] > profile[n-1];
 *          empty for monotone non-increasing profiles
 */
std::vector<int> find_suspicious_positions(const std::vector<double>& profile);

/**
 * Local suspiciousness u_n * ln(u_n / u_prev).
 *
 * @pre both arguments in [0, 1]
 * @returns 0 when u_n == 0
 * @throws DegenerateUncertainty when u_prev == 0 (the ratio is undefined)
 */
double local_score(double u_n, double u_prev);

/**
 * Positional decay: local * alpha^position with the absolute 1-based
 * position as the exponent.
 *
 * @pre position >= 1
 * @throws InvalidDecayFactor when alpha is outside (0, 1]
 */
double global_score(double local, int position, double alpha);

/** Positions select_top_k had to skip because the preceding uncertainty
 * was zero; surfaced so callers can log them. */
struct SelectionDiagnostics {
  std::vector<int> skipped_degenerate;
};

/**
 * Full localization: find suspicious positions, score them, rank by global
 * score descending with ties broken toward the smaller position, truncate
 * to k. Positions whose predecessor uncertainty is zero cannot be scored
 * and are skipped (collected in `diag` when given).
 *
 * @pre k >= 1, alpha in (0, 1]
 * @returns at most k entries with rank fields 1..size
 */
std::vector<SuspiciousToken> select_top_k(const std::vector<double>& profile,
                                          double alpha, int k,
                                          SelectionDiagnostics* diag = nullptr);

/** Convenience overload computing the profile from a trace. */
std::vector<SuspiciousToken> select_top_k(const GenerationTrace& trace,
                                          double alpha, int k,
                                          SelectionDiagnostics* diag = nullptr);

// ----------------------------------------------------------------------------
// First-token majority voting
// ----------------------------------------------------------------------------

struct VoteTally {
  std::string token;
  int count = 0;
};

struct VotingResult {
  std::string winner;
  // All tallies, sorted by count descending then token ascending.
  std::vector<VoteTally> tallies;
};

/**
 * Counts candidates by vote token and elects the plurality winner.
 * Ties are broken toward the token whose holders have the lower mean
 * first-token uncertainty, then toward the lexicographically smallest
 * token.
 *
 * @throws EmptyCandidatePool when `candidates` is empty
 */
VotingResult majority_vote_first_token(
    const std::vector<const PatchCandidate*>& candidates);
VotingResult majority_vote_first_token(
    const std::vector<PatchCandidate>& candidates);

/** Keeps, in order, the candidates whose vote token equals `winner`. */
std::vector<const PatchCandidate*> filter_by_first_token(
    const std::vector<const PatchCandidate*>& candidates,
    const std::string& winner);
std::vector<PatchCandidate> filter_by_first_token(
    const std::vector<PatchCandidate>& candidates, const std::string& winner);

}  // namespace tokrep
