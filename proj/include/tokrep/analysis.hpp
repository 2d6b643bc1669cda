#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tokrep/errors.hpp"
#include "tokrep/trace.hpp"

namespace tokrep {

/**
 * Offline evaluation over recorded traces. None of this touches a backend:
 * the inputs are JSONL files produced by earlier runs (or written by hand)
 * and the outputs are plain tables plus JSON for downstream tooling.
 */

/** A generation trace plus ground-truth annotations. */
struct AnnotatedTrace {
  GenerationTrace trace;
  std::vector<int> faulty_positions;        // 1-based, may be empty
  std::optional<bool> first_token_correct;  // ground truth for voting
  std::optional<std::string> group;         // voting pool this trace belongs to
};

/**
 * Localization accuracy swept over decay factors (rows) and selection sizes
 * (columns). A trace counts as a hit for a cell when any selected position
 * is among its annotated faulty positions.
 */
struct GridResult {
  std::vector<double> alphas;
  std::vector<int> ks;
  std::vector<std::vector<double>> cells;  // cells[alpha][k] in [0, 1]
  std::vector<double> row_avg;             // mean across ks per alpha
};

GridResult localization_accuracy_grid(const std::vector<AnnotatedTrace>& traces,
                                      const std::vector<double>& alphas,
                                      const std::vector<int>& ks);

/**
 * Confusion counts for voting treated as a binary classifier: a trace is
 * predicted correct when its first token matches its group's vote winner,
 * and the annotation says whether it actually was. Ratios are NaN when the
 * denominator is zero; the *_defined flags make that explicit.
 */
struct VotingMetrics {
  int tp = 0, fp = 0, fn = 0, tn = 0;
  double precision = 0.0, recall = 0.0, f1 = 0.0;
  bool precision_defined = false, recall_defined = false, f1_defined = false;
};

VotingMetrics voting_classifier_metrics(const std::vector<AnnotatedTrace>& traces);

/** Uncertainty sequence of one repair attempt across feedback rounds. */
enum class PathLabel { Plausible, Incorrect };

struct RepairPath {
  std::vector<double> uncertainties;
  PathLabel label = PathLabel::Incorrect;
};

/**
 * Direction of consecutive uncertainty transitions, split by outcome label.
 * Percentages are over strict moves only; ties are counted but excluded
 * from the normalization (NaN when every transition is a tie).
 */
struct TendencyRow {
  int down = 0, up = 0, ties = 0;
  double down_pct = 0.0, up_pct = 0.0;
  bool pct_defined = false;
};

struct TendencyResult {
  TendencyRow plausible;
  TendencyRow incorrect;
};

TendencyResult uncertainty_tendency(const std::vector<RepairPath>& paths);

/**
 * Reads trace JSONL where any record of a trace may additionally carry
 * "faulty_positions" (array of 1-based ints), "first_token_correct" (bool)
 * or "group" (string). Repeated annotations must agree. Throws ConfigError
 * on malformed input.
 */
std::vector<AnnotatedTrace> read_annotated_traces(const std::filesystem::path& path);

/**
 * Reads repair paths, one JSON object per line:
 *   {"label": "plausible" | "incorrect", "uncertainties": [0.4, 0.2, ...]}
 * Throws ConfigError on malformed input.
 */
std::vector<RepairPath> read_repair_paths(const std::filesystem::path& path);

const char* to_string(PathLabel label);

nlohmann::json grid_to_json(const GridResult& grid);
nlohmann::json metrics_to_json(const VotingMetrics& m);
nlohmann::json tendency_to_json(const TendencyResult& t);

std::string render_grid_table(const GridResult& grid);
std::string render_voting_table(const VotingMetrics& m);
std::string render_tendency_table(const TendencyResult& t);

}  // namespace tokrep
