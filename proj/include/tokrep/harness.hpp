#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "tokrep/feedback.hpp"
#include "tokrep/patch.hpp"

namespace tokrep {

// ============================================================================
// Evaluation harness
//
// Applies single-hunk patches to an isolated copy of the bug's working
// tree, runs the bug's test command in a scrubbed environment with a hard
// timeout, and classifies the outcome. Also owns prompt construction.
// ============================================================================

/** One repairable unit, loaded from a JSON manifest:
 *  {"id", "source_path", "hunk_start", "hunk_end", "buggy_hunk",
 *   "context_radius", "test_command", "timeout_s"}
 * plus an optional "workdir" (default: the manifest's directory).
 */
struct BugCase {
  std::string id;
  std::filesystem::path workdir;
  std::filesystem::path source_path;  // relative to workdir
  int hunk_start = 0;  // 1-based, inclusive
  int hunk_end = 0;    // 1-based, inclusive
  std::string buggy_hunk;  // hunk lines joined with \n, no trailing newline
  int context_radius = 3;
  std::string test_command;  // run via /bin/sh -c in the tree root
  double timeout_s = 10.0;
};

/**
 * Loads and validates a manifest. The file's lines hunk_start..hunk_end
 * must equal buggy_hunk at load time.
 *
 * @throws ConfigError on missing keys, bad ranges, or hunk mismatch
 * @throws HarnessError when the source file cannot be read
 */
BugCase load_bug_manifest(const std::filesystem::path& manifest_path);

struct HarnessConfig {
  // Where isolated trees are materialized. Empty: the system temp dir.
  std::filesystem::path sandbox_root;
  // Directory holding <template_id>.txt prompt templates. Empty: built-ins.
  std::filesystem::path template_dir;
  // A nonzero exit classifies as CompileError when stderr contains any of
  // these substrings; otherwise it is a TestFailure.
  std::vector<std::string> compile_error_patterns = {
      "error:", "compilation terminated", "cannot find symbol",
      "undefined reference"};
  // Lines containing any of these substrings are pulled into the feedback
  // summary (stderr scanned before stdout).
  std::vector<std::string> summary_patterns = {
      "FAIL", "FAILED", "error:", "Error", "assert", "Assert", "Exception",
      "expected"};
  size_t summary_limit_bytes = 2048;
  // Environment variables forwarded into the test process; all else is
  // scrubbed.
  std::vector<std::string> env_allowlist = {"PATH", "HOME", "LANG", "LC_ALL",
                                            "TMPDIR"};
  // Keep patched trees after evaluation (debugging aid).
  bool keep_trees = false;
};

struct PatchedTree {
  // Root of the isolated copy; the bug's source file inside it is patched.
  std::filesystem::path root;
  std::string patched_source;
};

class RepairHarness {
 public:
  explicit RepairHarness(HarnessConfig config = {});

  /**
   * Copies the bug's workdir into a fresh directory and replaces lines
   * hunk_start..hunk_end of the source file with the patch text. Applying
   * a patch equal to buggy_hunk reproduces the original file byte for
   * byte. Concurrent calls never share a tree.
   *
   * @throws HarnessError on filesystem failure
   */
  PatchedTree apply_patch(const BugCase& bug, const PatchText& patch) const;

  /**
   * Runs the bug's test command in tree_root with a scrubbed environment.
   * The process group is killed once timeout_s elapses. Classification is
   * total: exit 0 is Pass; nonzero is CompileError or TestFailure by
   * stderr pattern; the deadline is Timeout; a spawn failure is
   * HarnessError. The summary carries matched failure lines, truncated to
   * the configured byte limit.
   */
  Feedback run_tests(const BugCase& bug,
                     const std::filesystem::path& tree_root) const;

  /** apply_patch + run_tests + cleanup. */
  Feedback evaluate(const BugCase& bug, const PatchText& patch) const;

  /** Runs the tests on an unpatched copy (the original buggy tree). */
  Feedback evaluate_original(const BugCase& bug) const;

  /**
   * Instantiates a prompt template. Placeholders: {code} (the hunk or a
   * failed patch), {feedback} (kind plus summary), {context} (the source
   * window context_radius lines around the hunk). Template ids: "initial",
   * "iteration", or any <id>.txt in the template dir.
   *
   * @throws ConfigError on an unknown template id
   * @throws std::logic_error when called with passing feedback
   */
  std::string build_prompt(const BugCase& bug, const std::string& code,
                           const Feedback& feedback,
                           const std::string& template_id) const;

  const HarnessConfig& config() const { return cfg_; }

  /** Removes a tree created by apply_patch (parent staging dir included).
   * No-op when keep_trees is set. */
  void cleanup(const PatchedTree& tree) const;

 private:
  HarnessConfig cfg_;
};

}  // namespace tokrep
