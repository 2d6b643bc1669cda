#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "test_support.hpp"
#include "tokrep/mock_backend.hpp"
#include "tokrep/trace.hpp"

using namespace tokrep;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CliResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

CliResult run_cli(const std::string& args, const fs::path& scratch) {
  const fs::path out_file = scratch / "cli-stdout.txt";
  const fs::path err_file = scratch / "cli-stderr.txt";
  const std::string cmd = std::string("\"") + TOKREP_CLI_BIN + "\" " + args +
                          " >\"" + out_file.string() + "\" 2>\"" +
                          err_file.string() + "\"";
  const int raw = std::system(cmd.c_str());
  CliResult r;
  r.exit_code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  r.out = ts::read_file(out_file);
  r.err = ts::read_file(err_file);
  return r;
}

void append_trace_jsonl(std::ostream& os, const GenerationTrace& tr,
                        const json& extra_on_first = json::object()) {
  for (size_t i = 0; i < tr.steps.size(); ++i) {
    const TokenStep& s = tr.steps[i];
    json alts = json::array();
    for (const ProbEntry& a : s.alternatives)
      alts.push_back({{"token", a.token}, {"prob", a.prob}});
    json rec{{"prompt_id", tr.prompt_id},
             {"position", s.position},
             {"token", s.chosen.token},
             {"prob", s.chosen.prob},
             {"alternatives", std::move(alts)}};
    if (i == 0)
      for (const auto& [key, value] : extra_on_first.items()) rec[key] = value;
    os << rec.dump() << '\n';
  }
}

void append_voter(std::ostream& os, const std::string& id,
                  const std::string& token, const std::string& group,
                  bool correct) {
  GenerationTrace tr;
  tr.prompt_id = id;
  tr.steps.push_back(ts::make_step(1, token, 0.5));
  tr.decoded_text = token;
  append_trace_jsonl(os, tr,
                     {{"group", group}, {"first_token_correct", correct}});
}

}  // namespace

TEST_CASE("repair over a scripted model finds and prints the patch") {
  ts::TempDir dir;
  const fs::path work = dir.path() / "work";
  fs::create_directories(work);
  fs::create_directories(dir.path() / "sandbox");

  const BugCase bug = ts::grep_bug(work, "if (x != null)", "if (x == null)");
  const fs::path manifest = dir.path() / "bug.json";
  ts::write_manifest(manifest, bug);
  const fs::path script = dir.path() / "model.json";
  ts::write_file(script, ts::fig_script().to_json_text());
  const fs::path out = dir.path() / "out";

  const CliResult r = run_cli(
      "repair --manifest \"" + manifest.string() + "\" --mock \"" +
          script.string() + "\" --out \"" + out.string() + "\" --sandbox \"" +
          (dir.path() / "sandbox").string() + "\" --temperature 0",
      dir.path());

  CHECK(r.exit_code == 0);
  CHECK(r.out.find("bug grep-bug: plausible_found") != std::string::npos);
  CHECK(r.out.find("budget 11/50") != std::string::npos);
  CHECK(r.out.find("4 candidates") != std::string::npos);
  CHECK(r.out.find("plausible patch c3") != std::string::npos);
  CHECK(r.out.find("if (x == null)") != std::string::npos);

  const json report = json::parse(ts::read_file(out / "report.json"));
  CHECK(report.at("outcome") == "plausible_found");
  CHECK(report.at("budget_used") == 11);
  CHECK(fs::exists(out / "traces.jsonl"));
}

TEST_CASE("repair without a plausible patch exits 1 but still reports") {
  ts::TempDir dir;
  const fs::path work = dir.path() / "work";
  fs::create_directories(work);

  const BugCase bug = ts::grep_bug(work, "ABCDE", "no-such-line");
  const fs::path manifest = dir.path() / "bug.json";
  ts::write_manifest(manifest, bug);
  const fs::path script = dir.path() / "model.json";
  ts::write_file(script, ts::maze_script().to_json_text());
  const fs::path out = dir.path() / "out";

  const CliResult r = run_cli(
      "repair --manifest \"" + manifest.string() + "\" --mock \"" +
          script.string() + "\" --out \"" + out.string() +
          "\" --temperature 0",
      dir.path());

  CHECK(r.exit_code == 1);
  CHECK(r.out.find("budget_exhausted") != std::string::npos);
  CHECK(r.out.find("budget 56/50") != std::string::npos);
  const json report = json::parse(ts::read_file(out / "report.json"));
  CHECK(report.at("outcome") == "budget_exhausted");
}

TEST_CASE("usage errors exit 2") {
  ts::TempDir dir;
  const fs::path work = dir.path() / "work";
  fs::create_directories(work);
  const BugCase bug = ts::grep_bug(work, "x", "y");
  const fs::path manifest = dir.path() / "bug.json";
  ts::write_manifest(manifest, bug);
  const fs::path script = dir.path() / "model.json";
  ts::write_file(script, ts::fig_script().to_json_text());

  // Nonexistent manifest fails option validation.
  CHECK(run_cli("repair --manifest \"" + (dir.path() / "absent.json").string() +
                    "\" --mock \"" + script.string() + "\"",
                dir.path())
            .exit_code == 2);

  // Mock script and API URL are mutually exclusive.
  CHECK(run_cli("repair --manifest \"" + manifest.string() + "\" --mock \"" +
                    script.string() + "\" --api-url http://localhost:1/v1",
                dir.path())
            .exit_code == 2);

  // A config file with an unknown key is rejected after parsing.
  const fs::path conf = dir.path() / "bad.conf";
  ts::write_file(conf, "frobnicate = 1\n");
  const CliResult r = run_cli(
      "repair --manifest \"" + manifest.string() + "\" --mock \"" +
          script.string() + "\" --config \"" + conf.string() + "\"",
      dir.path());
  CHECK(r.exit_code == 2);
  CHECK(r.err.find("error:") != std::string::npos);

  // Missing subcommand.
  CHECK(run_cli("", dir.path()).exit_code == 2);
}

TEST_CASE("localize prints ranked positions per trace") {
  ts::TempDir dir;
  const fs::path traces = dir.path() / "traces.jsonl";
  {
    std::ofstream f(traces, std::ios::binary);
    append_trace_jsonl(f, ts::make_trace("fig", {0.1, 0.4, 0.3, 0.5}));
    append_trace_jsonl(f, ts::make_trace("flat", {0.5, 0.3}));
  }

  const CliResult r =
      run_cli("localize --traces \"" + traces.string() + "\"", dir.path());
  CHECK(r.exit_code == 0);
  CHECK(r.out.find("trace fig: 2 suspicious of 4 positions") !=
        std::string::npos);
  CHECK(r.out.find("rank 1") != std::string::npos);
  CHECK(r.out.find("position 2") != std::string::npos);
  CHECK(r.out.find("rank 2") != std::string::npos);
  CHECK(r.out.find("position 4") != std::string::npos);
  CHECK(r.out.find("trace flat: 0 suspicious of 2 positions") !=
        std::string::npos);
  CHECK(r.out.find("uncertainty never rises") != std::string::npos);

  CHECK(run_cli("localize --traces \"" + (dir.path() / "nope.jsonl").string() +
                    "\"",
                dir.path())
            .exit_code == 2);
}

TEST_CASE("analyze replays all three studies and writes analysis.json") {
  ts::TempDir dir;
  const fs::path traces = dir.path() / "traces.jsonl";
  {
    std::ofstream f(traces, std::ios::binary);
    // Localization block: 5 hits at top-1, one at top-2, one at top-3,
    // three misses.
    for (int i = 0; i < 5; ++i)
      append_trace_jsonl(f, ts::make_trace("top1-" + std::to_string(i),
                                           {0.1, 0.4, 0.3, 0.5}),
                         {{"faulty_positions", {2}}});
    append_trace_jsonl(f, ts::make_trace("top2", {0.1, 0.4, 0.3, 0.5}),
                       {{"faulty_positions", {4}}});
    append_trace_jsonl(f,
                       ts::make_trace("top3", {0.1, 0.8, 0.2, 0.5, 0.4, 0.45}),
                       {{"faulty_positions", {6}}});
    for (int i = 0; i < 3; ++i)
      append_trace_jsonl(f, ts::make_trace("miss-" + std::to_string(i),
                                           {0.5, 0.3, 0.2}),
                         {{"faulty_positions", {2}}});
    // Voting block: the frozen two-group confusion matrix.
    append_voter(f, "v1", "x", "g1", true);
    append_voter(f, "v2", "x", "g1", true);
    append_voter(f, "v3", "x", "g1", true);
    append_voter(f, "v4", "y", "g1", true);
    append_voter(f, "v5", "z", "g2", false);
    append_voter(f, "v6", "z", "g2", false);
    append_voter(f, "v7", "z", "g2", false);
    append_voter(f, "v8", "w", "g2", false);
  }
  const fs::path paths = dir.path() / "paths.jsonl";
  ts::write_file(paths,
                 "{\"label\":\"incorrect\",\"uncertainties\":[0.9,0.5,0.2]}\n"
                 "{\"label\":\"incorrect\",\"uncertainties\":[0.4,0.6,0.3]}\n"
                 "{\"label\":\"plausible\",\"uncertainties\":[0.5,0.5]}\n");
  const fs::path out = dir.path() / "out";

  const CliResult r = run_cli(
      "analyze --traces \"" + traces.string() + "\" --paths \"" +
          paths.string() + "\" --alphas 0.2,0.5,0.8 --ks 1,2,3 --out \"" +
          out.string() + "\"",
      dir.path());

  CHECK(r.exit_code == 0);
  CHECK(r.out.find("decay") != std::string::npos);
  CHECK(r.out.find("0.700") != std::string::npos);
  CHECK(r.out.find("precision") != std::string::npos);
  CHECK(r.out.find("0.600") != std::string::npos);
  CHECK(r.out.find("75.0%") != std::string::npos);

  const json a = json::parse(ts::read_file(out / "analysis.json"));
  CHECK(a.at("localization").at("cells")[0][2] == doctest::Approx(0.7));
  CHECK(a.at("localization").at("row_avg")[1] == doctest::Approx(0.6));
  CHECK(a.at("voting").at("precision") == doctest::Approx(0.5));
  CHECK(a.at("voting").at("recall") == doctest::Approx(0.75));
  CHECK(a.at("voting").at("f1") == doctest::Approx(0.6));
  CHECK(a.at("tendency").at("incorrect").at("down_pct") ==
        doctest::Approx(75.0));
}

TEST_CASE("analyze without annotations still succeeds with notes") {
  ts::TempDir dir;
  const fs::path traces = dir.path() / "traces.jsonl";
  {
    std::ofstream f(traces, std::ios::binary);
    append_trace_jsonl(f, ts::make_trace("bare", {0.5, 0.2}));
  }
  const fs::path out = dir.path() / "out";
  const CliResult r = run_cli("analyze --traces \"" + traces.string() +
                                  "\" --out \"" + out.string() + "\"",
                              dir.path());
  CHECK(r.exit_code == 0);
  CHECK(r.out.find("skipped") != std::string::npos);
  const json a = json::parse(ts::read_file(out / "analysis.json"));
  CHECK_FALSE(a.contains("localization"));
  CHECK_FALSE(a.contains("voting"));
  CHECK_FALSE(a.contains("tendency"));
}

TEST_CASE("mock-gen emits a loadable script and names the planted path") {
  ts::TempDir dir;
  const fs::path out = dir.path() / "synthetic.json";
  const CliResult r = run_cli(
      "mock-gen --vocab 8 --branching 3 --depth 4 --seed 5 --out \"" +
          out.string() + "\"",
      dir.path());
  CHECK(r.exit_code == 0);
  CHECK(r.out.find("planted path:") != std::string::npos);

  const MockModelScript script = MockModelScript::load_file(out);
  CHECK(script.vocab.size() == 9);  // 8 word tokens plus end-of-sequence
  CHECK(script.eos == "<eos>");
  CHECK_FALSE(script.nodes.empty());

  // Bad bounds surface as usage errors.
  CHECK(run_cli("mock-gen --vocab 1 --out \"" + out.string() + "\"",
                dir.path())
            .exit_code == 2);
}
