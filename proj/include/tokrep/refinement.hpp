#pragma once

#include <functional>
#include <string>
#include <vector>

#include "tokrep/backend.hpp"
#include "tokrep/candidate.hpp"
#include "tokrep/localization.hpp"

namespace tokrep {

// ============================================================================
// Token-guided refinement
//
// For each suspicious position p: query the top-m alternatives to the
// parent's token at p (original excluded), then decode each replacement
// greedily to a full candidate. The prefix before p is copied from the
// parent rather than re-queried: the conditioning context is identical, so
// the recorded distributions are too, and backends that cannot report
// distributions for forced text (HTTP) stay exact.
// ============================================================================

/** Allocates candidate ids; owned by the caller so ids stay globally
 * unique and deterministic across the whole run. */
using IdAllocator = std::function<std::string()>;

struct RefineOptions {
  int max_tokens = 256;
  int logprob_depth = 5;
};

struct RefinedSet {
  // Deduplicated children in (position rank, replacement rank) order.
  std::vector<PatchCandidate> children;
  // Decoded texts dropped because an earlier child already produced them.
  std::vector<std::string> duplicates_dropped;
  // Nominal ledger charge: top_k * m when refinement ran, 0 when there was
  // nothing to refine. Deduplication does not reduce it.
  int budget_cost = 0;
};

/**
 * All replacement children at one position.
 *
 * @pre 2 <= position <= parent trace length
 * @returns at most m children, replacement-rank order; fewer when the
 *          distribution offers fewer alternatives (non-fatal truncation)
 */
std::vector<PatchCandidate> refine_at_token(const PatchCandidate& parent,
                                            int position, int m,
                                            Backend& backend,
                                            const RefineOptions& opts,
                                            const IdAllocator& next_id);

/**
 * Union of refine_at_token over the ranked suspicious tokens, deduplicated
 * on decoded text (first occurrence wins).
 *
 * @param nominal_top_k  the configured TopK, used only for the reported
 *                       budget cost
 * @pre ftokens came from select_top_k on this parent
 */
RefinedSet refine_candidate(const PatchCandidate& parent,
                            const std::vector<SuspiciousToken>& ftokens, int m,
                            Backend& backend, const RefineOptions& opts,
                            int nominal_top_k, const IdAllocator& next_id);

}  // namespace tokrep
