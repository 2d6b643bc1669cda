#pragma once

#include <string>

namespace tokrep {

// Which extraction rule produced the patch text.
enum class ExtractionRule {
  FencedBlock,      // content of the first ``` fenced block
  WholeCompletion,  // no fence found, whole completion stripped
};

/** A patch in plain text plus where it came from. */
struct PatchText {
  std::string text;
  std::string origin_candidate;  // candidate id, empty for ad-hoc patches
  ExtractionRule rule = ExtractionRule::WholeCompletion;
};

/**
 * Pulls patch text out of a model completion.
 *
 * Rule 1: the content of the first fenced code block (``` lines excluded,
 * an unclosed fence runs to the end of the text). Rule 2, when no fence
 * opens: the whole completion stripped of leading/trailing whitespace.
 * The applied rule is recorded on the result.
 *
 * @throws NoPatchInCompletion when the selected content is empty after
 *         stripping
 */
PatchText extract_patch(const std::string& completion,
                        const std::string& origin_candidate = "");

const char* to_string(ExtractionRule rule);

}  // namespace tokrep
