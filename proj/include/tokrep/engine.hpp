#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "tokrep/backend.hpp"
#include "tokrep/candidate.hpp"
#include "tokrep/errors.hpp"
#include "tokrep/harness.hpp"

namespace tokrep {

// ============================================================================
// Repair engine
//
// Breadth-first search over patch candidates under a generation budget.
// One level per popped candidate: localize suspicious tokens, spawn
// replacement children, and for every still-failing child run one external
// feedback iteration whose offspring pass a quality gate and a majority
// vote before joining the pool. Every sampling call charges n, every
// refinement charges TopK*m; the budget condition is only checked at level
// boundaries, so a level may overshoot the cap. That matches the search
// procedure this implements and is reported, not corrected.
// ============================================================================

struct RepairConfig {
  int n = 2;           // samples per generation call
  int m = 3;           // replacements per suspicious token
  int top_k = 3;       // suspicious tokens ranked per candidate
  double alpha = 0.5;  // positional decay factor
  int budget = 50;     // generation budget (ledger units)
  double temperature = 1.0;
  int max_tokens = 256;
  int logprob_depth = 5;  // alternatives recorded per step
  std::uint64_t seed = 1;

  /** @throws InvalidConfig on out-of-range values. */
  void validate() const;
};

/**
 * Parses a flat key=value config file ('#' comments, blank lines ignored).
 * Keys match the RepairConfig field names. Unknown keys or unparseable
 * values raise ConfigError.
 */
RepairConfig load_config_file(const std::filesystem::path& path);

enum class RepairOutcome { PlausibleFound, BudgetExhausted, PoolExhausted };

struct RepairReport {
  std::string bug_id;
  RepairOutcome outcome = RepairOutcome::PoolExhausted;
  int budget = 0;
  int budget_used = 0;
  // Ordered deterministic event log: generations, charges, evaluations,
  // localizations, refinements, quality verdicts, votes, pool moves.
  nlohmann::json events = nlohmann::json::array();
  // Candidates that passed the bug's tests (empty unless PlausibleFound).
  std::vector<PatchCandidate> patches;
  // Every candidate created during the run, in creation order. Trace
  // prompt_id equals the candidate id, so the JSONL log groups cleanly.
  std::vector<PatchCandidate> candidates;
  // Wall-clock data only. Excluded from the canonical serialization, which
  // is the surface the determinism guarantee covers.
  nlohmann::json meta = nlohmann::json::object();
};

/** Full JSON form; include_meta=false yields the canonical deterministic
 * body (identical bytes for identical seeds). */
nlohmann::json report_to_json(const RepairReport& report, bool include_meta = true);

/** Writes report.json and traces.jsonl under out_dir. */
void write_report_files(const RepairReport& report,
                        const std::filesystem::path& out_dir);

const char* to_string(RepairOutcome outcome);

// Fatal backend or harness failure mid-run. Carries whatever the run had
// logged so the caller can still persist a partial report.
struct RepairAborted : Error {
  RepairReport partial;
  RepairAborted(const std::string& what, RepairReport report)
      : Error(what), partial(std::move(report)) {}
};

/**
 * Runs the full repair loop for one bug.
 *
 * @pre config validates; backend and config logprob depths cover
 *      max(2, m + 1)
 * @returns report with outcome PlausibleFound, BudgetExhausted, or
 *          PoolExhausted
 * @throws InvalidConfig on config/capability violations
 * @throws ConfigError when the unpatched tree already passes its tests
 * @throws RepairAborted on fatal backend or harness errors mid-run
 */
RepairReport repair(const BugCase& bug, const RepairConfig& config,
                    Backend& backend, const RepairHarness& harness);

}  // namespace tokrep
