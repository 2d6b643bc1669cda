// Command line front end: repair a bug case, replay analyses over recorded
// traces, rank suspicious tokens, or generate synthetic model scripts.
//
// Exit codes: 0 success (for `repair`: a plausible patch was found),
// 1 repair ended without a plausible patch, 2 usage or input errors,
// 3 runtime failures (backend outages, aborted runs).

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "tokrep/analysis.hpp"
#include "tokrep/engine.hpp"
#include "tokrep/errors.hpp"
#include "tokrep/harness.hpp"
#include "tokrep/http_backend.hpp"
#include "tokrep/localization.hpp"
#include "tokrep/mock_backend.hpp"
#include "tokrep/mockgen.hpp"

namespace fs = std::filesystem;

namespace {

void print_indented(std::ostream& os, const std::string& text) {
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) os << "    " << line << '\n';
}

struct RepairArgs {
  std::string manifest;
  std::string mock_script;
  std::string api_url;
  std::string config_file;
  std::string out_dir = "tokrep-out";
  std::string template_dir;
  std::string sandbox;
  bool keep_trees = false;

  tokrep::RepairConfig overrides;
  CLI::Option* n_opt = nullptr;
  CLI::Option* m_opt = nullptr;
  CLI::Option* k_opt = nullptr;
  CLI::Option* alpha_opt = nullptr;
  CLI::Option* budget_opt = nullptr;
  CLI::Option* temp_opt = nullptr;
  CLI::Option* maxtok_opt = nullptr;
  CLI::Option* depth_opt = nullptr;
  CLI::Option* seed_opt = nullptr;
};

tokrep::RepairConfig resolve_config(const RepairArgs& a) {
  tokrep::RepairConfig cfg;
  if (!a.config_file.empty()) cfg = tokrep::load_config_file(a.config_file);
  if (a.n_opt->count()) cfg.n = a.overrides.n;
  if (a.m_opt->count()) cfg.m = a.overrides.m;
  if (a.k_opt->count()) cfg.top_k = a.overrides.top_k;
  if (a.alpha_opt->count()) cfg.alpha = a.overrides.alpha;
  if (a.budget_opt->count()) cfg.budget = a.overrides.budget;
  if (a.temp_opt->count()) cfg.temperature = a.overrides.temperature;
  if (a.maxtok_opt->count()) cfg.max_tokens = a.overrides.max_tokens;
  if (a.depth_opt->count()) cfg.logprob_depth = a.overrides.logprob_depth;
  if (a.seed_opt->count()) cfg.seed = a.overrides.seed;
  return cfg;
}

int run_repair(const RepairArgs& a) {
  const tokrep::BugCase bug = tokrep::load_bug_manifest(a.manifest);
  const tokrep::RepairConfig cfg = resolve_config(a);

  std::unique_ptr<tokrep::Backend> backend;
  if (!a.mock_script.empty()) {
    backend = std::make_unique<tokrep::MockBackend>(
        tokrep::MockModelScript::load_file(a.mock_script), cfg.seed);
  } else {
    tokrep::HttpBackendConfig hc;
    hc.api_url = a.api_url;  // falls back to TOKREP_API_URL when empty
    hc.logprob_depth_limit = cfg.logprob_depth;
    backend = std::make_unique<tokrep::HttpBackend>(std::move(hc));
  }

  tokrep::HarnessConfig hcfg;
  if (!a.template_dir.empty()) hcfg.template_dir = a.template_dir;
  if (!a.sandbox.empty()) hcfg.sandbox_root = a.sandbox;
  hcfg.keep_trees = a.keep_trees;
  const tokrep::RepairHarness harness(hcfg);

  const fs::path out_dir(a.out_dir);
  try {
    const tokrep::RepairReport report =
        tokrep::repair(bug, cfg, *backend, harness);
    tokrep::write_report_files(report, out_dir);

    std::cout << "bug " << report.bug_id << ": " << to_string(report.outcome)
              << " (budget " << report.budget_used << "/" << report.budget
              << ", " << report.candidates.size() << " candidates)\n";
    for (const tokrep::PatchCandidate& p : report.patches) {
      std::cout << "  plausible patch " << p.id << ":\n";
      print_indented(std::cout, p.patch.text);
    }
    std::cout << "report written to " << (out_dir / "report.json").string()
              << '\n';
    return report.outcome == tokrep::RepairOutcome::PlausibleFound ? 0 : 1;
  } catch (const tokrep::RepairAborted& e) {
    tokrep::write_report_files(e.partial, out_dir);
    std::cerr << "error: repair aborted: " << e.what() << '\n'
              << "partial report written to "
              << (out_dir / "report.json").string() << '\n';
    return 3;
  }
}

int run_localize(const std::string& traces_path, double alpha, int top_k) {
  const std::vector<tokrep::AnnotatedTrace> traces =
      tokrep::read_annotated_traces(traces_path);
  if (traces.empty()) throw tokrep::EmptyDataset("no traces in file");

  for (const tokrep::AnnotatedTrace& a : traces) {
    const std::vector<tokrep::SuspiciousToken> picked =
        tokrep::select_top_k(a.trace, alpha, top_k);
    std::cout << "trace " << a.trace.prompt_id << ": " << picked.size()
              << " suspicious of " << a.trace.steps.size() << " positions\n";
    if (picked.empty()) {
      std::cout << "  (uncertainty never rises after the first token)\n";
      continue;
    }
    for (const tokrep::SuspiciousToken& t : picked) {
      const tokrep::TokenStep& step = a.trace.steps[t.position - 1];
      std::cout << "  rank " << t.rank << "  position " << t.position
                << "  token '" << step.chosen.token << "'  local "
                << t.local_score << "  global " << t.global_score << '\n';
    }
  }
  return 0;
}

int run_analyze(const std::string& traces_path, const std::string& paths_path,
                std::vector<double> alphas, std::vector<int> ks,
                const std::string& out_dir) {
  const std::vector<tokrep::AnnotatedTrace> traces =
      tokrep::read_annotated_traces(traces_path);
  nlohmann::json out;

  std::vector<tokrep::AnnotatedTrace> with_faulty;
  for (const tokrep::AnnotatedTrace& a : traces)
    if (!a.faulty_positions.empty()) with_faulty.push_back(a);
  if (!with_faulty.empty()) {
    const tokrep::GridResult grid =
        tokrep::localization_accuracy_grid(with_faulty, alphas, ks);
    std::cout << "localization accuracy (" << with_faulty.size()
              << " annotated traces)\n"
              << tokrep::render_grid_table(grid) << '\n';
    out["localization"] = tokrep::grid_to_json(grid);
  } else {
    std::cout << "localization: no traces carry faulty_positions, skipped\n\n";
  }

  try {
    const tokrep::VotingMetrics m = tokrep::voting_classifier_metrics(traces);
    std::cout << "voting as a correctness classifier\n"
              << tokrep::render_voting_table(m) << '\n';
    out["voting"] = tokrep::metrics_to_json(m);
  } catch (const tokrep::EmptyDataset&) {
    std::cout << "voting: no traces carry a group, skipped\n\n";
  }

  if (!paths_path.empty()) {
    const std::vector<tokrep::RepairPath> paths =
        tokrep::read_repair_paths(paths_path);
    const tokrep::TendencyResult t = tokrep::uncertainty_tendency(paths);
    std::cout << "uncertainty direction across feedback rounds\n"
              << tokrep::render_tendency_table(t) << '\n';
    out["tendency"] = tokrep::tendency_to_json(t);
  }

  fs::create_directories(out_dir);
  const fs::path out_path = fs::path(out_dir) / "analysis.json";
  std::ofstream f(out_path, std::ios::binary);
  if (!f) throw tokrep::ConfigError("cannot write " + out_path.string());
  f << out.dump(2) << '\n';
  std::cout << "analysis written to " << out_path.string() << '\n';
  return 0;
}

int run_mockgen(int vocab, int branching, int depth, std::uint64_t seed,
                const std::string& out_path) {
  const tokrep::SyntheticScript synth =
      tokrep::make_synthetic_script(vocab, branching, depth, seed);
  std::ofstream f(out_path, std::ios::binary);
  if (!f) throw tokrep::ConfigError("cannot write " + out_path);
  f << synth.script.to_json_text() << '\n';

  std::cout << "script written to " << out_path << "\nplanted path:";
  for (const std::string& tok : synth.planted_path) std::cout << ' ' << tok;
  std::cout << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Uncertainty-guided token-level program repair"};
  app.require_subcommand(1);

  RepairArgs ra;
  CLI::App* rep = app.add_subcommand("repair", "Run the repair loop on a bug case");
  rep->add_option("--manifest", ra.manifest, "Bug case manifest (JSON)")
      ->required()
      ->check(CLI::ExistingFile);
  auto* mock_opt =
      rep->add_option("--mock", ra.mock_script,
                      "Scripted-model JSON; omit to use an HTTP backend")
          ->check(CLI::ExistingFile);
  rep->add_option("--api-url", ra.api_url,
                  "Completion endpoint (default: $TOKREP_API_URL)")
      ->excludes(mock_opt);
  rep->add_option("--config", ra.config_file, "key = value config file")
      ->check(CLI::ExistingFile);
  rep->add_option("--out", ra.out_dir, "Report directory (default tokrep-out)");
  rep->add_option("--template-dir", ra.template_dir,
                  "Directory with <id>.txt prompt templates")
      ->check(CLI::ExistingDirectory);
  rep->add_option("--sandbox", ra.sandbox, "Root for staged work trees");
  rep->add_flag("--keep-trees", ra.keep_trees,
                "Keep staged trees instead of deleting after evaluation");
  ra.n_opt = rep->add_option("-n,--samples", ra.overrides.n,
                             "Patches sampled per prompt");
  ra.m_opt = rep->add_option("-m,--refine-width", ra.overrides.m,
                             "Replacement tokens tried per suspicious position");
  ra.k_opt = rep->add_option("-k,--top-k", ra.overrides.top_k,
                             "Suspicious positions refined per candidate");
  ra.alpha_opt = rep->add_option("--alpha", ra.overrides.alpha,
                                 "Positional decay factor in (0, 1]");
  ra.budget_opt = rep->add_option("--budget", ra.overrides.budget,
                                  "Total sampling budget");
  ra.temp_opt = rep->add_option("--temperature", ra.overrides.temperature,
                                "Sampling temperature (0 = greedy)");
  ra.maxtok_opt = rep->add_option("--max-tokens", ra.overrides.max_tokens,
                                  "Generation length cap");
  ra.depth_opt = rep->add_option("--logprob-depth", ra.overrides.logprob_depth,
                                 "Alternatives recorded per step");
  ra.seed_opt = rep->add_option("--seed", ra.overrides.seed, "Sampling seed");

  std::string loc_traces;
  double loc_alpha = 0.5;
  int loc_k = 3;
  CLI::App* loc = app.add_subcommand(
      "localize", "Rank suspicious token positions in recorded traces");
  loc->add_option("--traces", loc_traces, "Trace JSONL file")
      ->required()
      ->check(CLI::ExistingFile);
  loc->add_option("--alpha", loc_alpha, "Positional decay factor in (0, 1]");
  loc->add_option("-k,--top-k", loc_k, "Positions to report per trace");

  std::string an_traces, an_paths, an_out = "tokrep-out";
  std::vector<double> an_alphas = {0.2, 0.5, 0.8};
  std::vector<int> an_ks = {1, 2, 3};
  CLI::App* an = app.add_subcommand(
      "analyze", "Replay localization, voting and uncertainty-direction "
                 "analyses over annotated traces");
  an->add_option("--traces", an_traces, "Annotated trace JSONL file")
      ->required()
      ->check(CLI::ExistingFile);
  an->add_option("--paths", an_paths,
                 "Repair-path JSONL file for the direction analysis")
      ->check(CLI::ExistingFile);
  an->add_option("--alphas", an_alphas, "Decay factors to sweep")
      ->delimiter(',');
  an->add_option("--ks", an_ks, "Selection sizes to sweep")->delimiter(',');
  an->add_option("--out", an_out, "Output directory (default tokrep-out)");

  int mg_vocab = 12, mg_branching = 3, mg_depth = 6;
  std::uint64_t mg_seed = 1;
  std::string mg_out;
  CLI::App* mg = app.add_subcommand(
      "mock-gen", "Generate a synthetic scripted model for offline runs");
  mg->add_option("--vocab", mg_vocab, "Word tokens in the vocabulary (2..63)");
  mg->add_option("--branching", mg_branching, "Alternatives per node (>= 2)");
  mg->add_option("--depth", mg_depth, "Planted path length (>= 1)");
  mg->add_option("--seed", mg_seed, "Generator seed");
  mg->add_option("--out", mg_out, "Output script path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (rep->parsed()) return run_repair(ra);
    if (loc->parsed()) return run_localize(loc_traces, loc_alpha, loc_k);
    if (an->parsed())
      return run_analyze(an_traces, an_paths, an_alphas, an_ks, an_out);
    if (mg->parsed())
      return run_mockgen(mg_vocab, mg_branching, mg_depth, mg_seed, mg_out);
  } catch (const tokrep::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const tokrep::EmptyDataset& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 2;
}
