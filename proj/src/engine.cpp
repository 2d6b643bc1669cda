#include "tokrep/engine.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <deque>
#include <fstream>
#include <memory>
#include <sstream>

#include "tokrep/localization.hpp"
#include "tokrep/quality.hpp"
#include "tokrep/refinement.hpp"
#include "tokrep/uncertainty.hpp"

namespace tokrep {

using nlohmann::json;

void RepairConfig::validate() const {
  auto bad = [](const std::string& what) { throw InvalidConfig(what); };
  if (n < 1) bad("n must be >= 1");
  if (m < 1) bad("m must be >= 1");
  if (top_k < 1) bad("top_k must be >= 1");
  if (!(alpha > 0.0) || alpha > 1.0) bad("alpha must lie in (0, 1]");
  if (budget < 1) bad("budget must be positive");
  if (temperature < 0.0) bad("temperature must be >= 0");
  if (max_tokens < 1) bad("max_tokens must be >= 1");
  if (logprob_depth < 2) bad("logprob_depth must be >= 2");
}

const char* to_string(RepairOutcome outcome) {
  switch (outcome) {
    case RepairOutcome::PlausibleFound: return "plausible_found";
    case RepairOutcome::BudgetExhausted: return "budget_exhausted";
    case RepairOutcome::PoolExhausted: return "pool_exhausted";
  }
  return "unknown";
}

namespace {

// Stable 64-bit FNV-1a so prompts can be referenced in events without
// embedding kilobytes of text.
std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  std::ostringstream os;
  os << std::hex << h;
  return os.str();
}

std::string iso8601_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

json candidate_to_json(const PatchCandidate& c) {
  json j{{"id", c.id},
         {"status", to_string(c.status)},
         {"provenance",
          {{"kind", to_string(c.provenance.kind)},
           {"parent", c.provenance.parent_id},
           {"position", c.provenance.position},
           {"replacement", c.provenance.replacement}}},
         {"vote_token", c.vote_token},
         {"first_u", c.first_u},
         {"patch", nullptr},
         {"feedback", nullptr}};
  if (!c.patch.text.empty()) {
    j["patch"] = {{"text", c.patch.text}, {"rule", to_string(c.patch.rule)}};
  }
  if (c.feedback) {
    j["feedback"] = {{"kind", to_string(c.feedback->kind)},
                     {"exit_code", c.feedback->exit_code},
                     {"summary", c.feedback->summary}};
  }
  return j;
}

using CandidatePtr = std::shared_ptr<PatchCandidate>;

struct RepairRun {
  const BugCase& bug;
  const RepairConfig& cfg;
  Backend& backend;
  const RepairHarness& harness;

  RepairReport report;
  std::vector<CandidatePtr> registry;  // creation order
  std::deque<CandidatePtr> pool;       // FIFO: breadth-first levels
  int next_id = 1;
  int total = 0;
  json eval_seconds = json::object();  // candidate id -> wall seconds (meta)

  RepairRun(const BugCase& b, const RepairConfig& c, Backend& be,
            const RepairHarness& h)
      : bug(b), cfg(c), backend(be), harness(h) {
    report.bug_id = b.id;
    report.budget = c.budget;
  }

  std::string alloc_id() { return "c" + std::to_string(next_id++); }

  void emit(json event) { report.events.push_back(std::move(event)); }

  void charge(const std::string& what, int amount) {
    total += amount;
    report.budget_used = total;
    emit({{"kind", "charge"}, {"what", what}, {"amount", amount},
          {"total", total}});
  }

  // One sampling call: n traces -> n candidates. Completions that yield no
  // patch text become Discarded shells that never reach evaluation.
  std::vector<CandidatePtr> generate(const std::string& prompt,
                                     Provenance prov) {
    GenerationRequest req;
    req.prompt = prompt;
    req.sample_count = cfg.n;
    req.temperature = cfg.temperature;
    req.max_tokens = cfg.max_tokens;
    req.logprob_depth = cfg.logprob_depth;
    std::vector<GenerationTrace> traces = backend.sample(req);

    std::vector<CandidatePtr> batch;
    json ids = json::array();
    for (GenerationTrace& trace : traces) {
      const std::string id = alloc_id();
      trace.prompt_id = id;
      CandidatePtr c;
      try {
        c = std::make_shared<PatchCandidate>(
            make_candidate(id, prompt, std::move(trace), prov));
      } catch (const NoPatchInCompletion&) {
        c = std::make_shared<PatchCandidate>();
        c->id = id;
        c->prompt = prompt;
        c->provenance = prov;
        set_status(*c, CandidateStatus::Discarded);
        emit({{"kind", "extraction_failed"}, {"candidate", id}});
      }
      registry.push_back(c);
      batch.push_back(c);
      ids.push_back(id);
    }
    emit({{"kind", "sample"},
          {"prompt_fnv", fnv1a_hex(prompt)},
          {"parent", prov.parent_id},
          {"requested", cfg.n},
          {"candidates", std::move(ids)}});
    charge("sample", cfg.n);
    return batch;
  }

  // Evaluates in generation order; returns every passing candidate of the
  // batch. Discarded shells are skipped.
  std::vector<CandidatePtr> evaluate_batch(const std::vector<CandidatePtr>& batch) {
    std::vector<CandidatePtr> passing;
    for (const CandidatePtr& c : batch) {
      if (c->status == CandidateStatus::Discarded) continue;
      Feedback fb = harness.evaluate(bug, c->patch);
      eval_seconds[c->id] = fb.duration_s;
      c->feedback = fb;
      set_status(*c, fb.kind == FeedbackKind::Pass
                         ? CandidateStatus::Plausible
                         : CandidateStatus::Implausible);
      emit({{"kind", "evaluate"},
            {"candidate", c->id},
            {"feedback", to_string(fb.kind)},
            {"exit_code", fb.exit_code},
            {"summary", fb.summary}});
      if (c->status == CandidateStatus::Plausible) passing.push_back(c);
    }
    return passing;
  }

  // Majority vote over the implausible members; losers are Discarded,
  // winners enter the pool in batch order.
  void vote_and_pool(const std::vector<CandidatePtr>& batch,
                     const std::string& scope) {
    std::vector<CandidatePtr> eligible;
    for (const CandidatePtr& c : batch)
      if (c->status == CandidateStatus::Implausible) eligible.push_back(c);
    if (eligible.empty()) return;

    std::vector<const PatchCandidate*> ptrs;
    for (const CandidatePtr& c : eligible) ptrs.push_back(c.get());
    const VotingResult vote = majority_vote_first_token(ptrs);

    json tallies = json::array();
    for (const VoteTally& t : vote.tallies)
      tallies.push_back({{"token", t.token}, {"count", t.count}});
    json kept = json::array();
    json discarded = json::array();
    for (const CandidatePtr& c : eligible) {
      if (c->vote_token == vote.winner) {
        pool.push_back(c);
        kept.push_back(c->id);
        emit({{"kind", "pool_push"}, {"candidate", c->id}});
      } else {
        set_status(*c, CandidateStatus::Discarded);
        discarded.push_back(c->id);
      }
    }
    emit({{"kind", "vote"},
          {"scope", scope},
          {"winner", vote.winner},
          {"tallies", std::move(tallies)},
          {"kept", std::move(kept)},
          {"discarded", std::move(discarded)}});
  }

  RepairReport finish(RepairOutcome outcome,
                      const std::vector<CandidatePtr>& passing) {
    report.outcome = outcome;
    json patch_ids = json::array();
    for (const CandidatePtr& c : passing) {
      report.patches.push_back(*c);
      patch_ids.push_back(c->id);
    }
    emit({{"kind", "exit"},
          {"outcome", to_string(outcome)},
          {"budget_used", total},
          {"patches", std::move(patch_ids)}});
    for (const CandidatePtr& c : registry) report.candidates.push_back(*c);
    return std::move(report);
  }

  RepairReport run() {
    // Original tree first: its failure seeds the first prompt.
    Feedback f0 = harness.evaluate_original(bug);
    eval_seconds["original"] = f0.duration_s;
    emit({{"kind", "evaluate"},
          {"candidate", "original"},
          {"feedback", to_string(f0.kind)},
          {"exit_code", f0.exit_code},
          {"summary", f0.summary}});
    if (f0.kind == FeedbackKind::Pass)
      throw ConfigError("bug case '" + bug.id +
                        "' already passes its tests unpatched; nothing to repair");

    const std::string prompt0 =
        harness.build_prompt(bug, bug.buggy_hunk, f0, "initial");

    Provenance initial;
    initial.kind = Provenance::Kind::Initial;
    std::vector<CandidatePtr> batch = generate(prompt0, initial);
    std::vector<CandidatePtr> passing = evaluate_batch(batch);
    if (!passing.empty()) return finish(RepairOutcome::PlausibleFound, passing);
    vote_and_pool(batch, "initial");

    RefineOptions ropts;
    ropts.max_tokens = cfg.max_tokens;
    ropts.logprob_depth = cfg.logprob_depth;

    for (;;) {
      // Level boundary: the only place the ledger gates the loop.
      if (total > cfg.budget) return finish(RepairOutcome::BudgetExhausted, {});
      if (pool.empty()) return finish(RepairOutcome::PoolExhausted, {});

      CandidatePtr parent = pool.front();
      pool.pop_front();
      emit({{"kind", "pool_pop"}, {"candidate", parent->id}});

      SelectionDiagnostics diag;
      std::vector<SuspiciousToken> ftokens =
          select_top_k(parent->profile, cfg.alpha, cfg.top_k, &diag);

      std::vector<CandidatePtr> refined;
      if (ftokens.empty()) {
        // Unlocalizable: the candidate re-enters the feedback branch as its
        // own refined child. No refinement charge.
        emit({{"kind", "localization_skipped"},
              {"candidate", parent->id},
              {"skipped_degenerate", diag.skipped_degenerate}});
        refined.push_back(parent);
      } else {
        json selected = json::array();
        for (const SuspiciousToken& t : ftokens)
          selected.push_back({{"position", t.position},
                              {"local", t.local_score},
                              {"global", t.global_score},
                              {"rank", t.rank}});
        emit({{"kind", "localize"},
              {"candidate", parent->id},
              {"selected", std::move(selected)},
              {"skipped_degenerate", diag.skipped_degenerate}});

        RefinedSet rs =
            refine_candidate(*parent, ftokens, cfg.m, backend, ropts,
                             cfg.top_k, [this] { return alloc_id(); });
        charge("refinement", rs.budget_cost);
        json child_ids = json::array();
        for (PatchCandidate& child : rs.children) {
          auto ptr = std::make_shared<PatchCandidate>(std::move(child));
          registry.push_back(ptr);
          refined.push_back(ptr);
          child_ids.push_back(ptr->id);
        }
        emit({{"kind", "refine"},
              {"parent", parent->id},
              {"children", std::move(child_ids)},
              {"duplicates_dropped",
               static_cast<int>(rs.duplicates_dropped.size())}});

        passing = evaluate_batch(refined);
        if (!passing.empty())
          return finish(RepairOutcome::PlausibleFound, passing);
      }

      // External feedback iteration for every still-failing refined child.
      std::vector<CandidatePtr> temp;
      for (const CandidatePtr& child : refined) {
        if (child->status != CandidateStatus::Implausible) continue;
        const std::string prompt = harness.build_prompt(
            bug, child->patch.text, *child->feedback, "iteration");
        Provenance prov;
        prov.kind = Provenance::Kind::FeedbackChild;
        prov.parent_id = child->id;
        std::vector<CandidatePtr> furthers = generate(prompt, prov);
        passing = evaluate_batch(furthers);
        if (!passing.empty())
          return finish(RepairOutcome::PlausibleFound, passing);

        for (const CandidatePtr& f : furthers) {
          if (f->status != CandidateStatus::Implausible) continue;
          const QualityVerdict q = measure_trace_quality(*child, *f);
          emit({{"kind", "quality"},
                {"parent", child->id},
                {"child", f->id},
                {"verdict", to_string(q.verdict)},
                {"parent_u1", q.parent_u1},
                {"child_u1", q.child_u1}});
          if (q.verdict == Verdict::High) {
            temp.push_back(f);
          } else {
            set_status(*f, CandidateStatus::LowQuality);
          }
        }
      }
      if (!temp.empty()) vote_and_pool(temp, "feedback");
    }
  }
};

}  // namespace

RepairReport repair(const BugCase& bug, const RepairConfig& config,
                    Backend& backend, const RepairHarness& harness) {
  config.validate();
  const int needed = std::max(2, config.m + 1);
  const BackendCapabilities caps = backend.capabilities();
  if (caps.max_logprob_depth < needed) {
    throw InvalidConfig("backend records at most " +
                        std::to_string(caps.max_logprob_depth) +
                        " alternatives per step, need " + std::to_string(needed));
  }
  if (config.logprob_depth < needed) {
    throw InvalidConfig("logprob_depth " + std::to_string(config.logprob_depth) +
                        " cannot cover m + 1 = " + std::to_string(needed));
  }

  RepairRun run(bug, config, backend, harness);
  const auto t0 = std::chrono::steady_clock::now();
  const std::string started = iso8601_now();
  auto fill_meta = [&](RepairReport& r) {
    r.meta = {{"started_at", started},
              {"finished_at", iso8601_now()},
              {"duration_s",
               std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                   .count()},
              {"evaluation_seconds", run.eval_seconds},
              {"backend_warning", backend.capabilities().warning}};
  };

  try {
    RepairReport report = run.run();
    fill_meta(report);
    report.meta["config"] = {{"n", config.n},
                             {"m", config.m},
                             {"top_k", config.top_k},
                             {"alpha", config.alpha},
                             {"budget", config.budget},
                             {"temperature", config.temperature},
                             {"max_tokens", config.max_tokens},
                             {"logprob_depth", config.logprob_depth},
                             {"seed", config.seed}};
    return report;
  } catch (const ConfigError&) {
    throw;  // usage problem, not a mid-run abort
  } catch (const std::exception& e) {
    run.emit({{"kind", "abort"}, {"reason", e.what()}});
    RepairReport partial = std::move(run.report);
    for (const auto& c : run.registry) partial.candidates.push_back(*c);
    fill_meta(partial);
    partial.meta["abort_reason"] = e.what();
    throw RepairAborted(e.what(), std::move(partial));
  }
}

json report_to_json(const RepairReport& report, bool include_meta) {
  json candidates = json::array();
  for (const PatchCandidate& c : report.candidates)
    candidates.push_back(candidate_to_json(c));
  json patches = json::array();
  for (const PatchCandidate& c : report.patches)
    patches.push_back(candidate_to_json(c));
  json j{{"schema_version", 1},
         {"bug_id", report.bug_id},
         {"outcome", to_string(report.outcome)},
         {"budget", report.budget},
         {"budget_used", report.budget_used},
         {"patches", std::move(patches)},
         {"candidates", std::move(candidates)},
         {"events", report.events}};
  if (include_meta) j["meta"] = report.meta;
  return j;
}

void write_report_files(const RepairReport& report,
                        const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  {
    std::ofstream out(out_dir / "report.json", std::ios::binary);
    if (!out) throw HarnessError("cannot write report.json in " + out_dir.string());
    out << report_to_json(report, true).dump(2) << '\n';
  }
  {
    std::ofstream out(out_dir / "traces.jsonl", std::ios::binary);
    if (!out) throw HarnessError("cannot write traces.jsonl in " + out_dir.string());
    for (const PatchCandidate& c : report.candidates)
      write_trace_jsonl(out, c.trace);
  }
}

RepairConfig load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path.string());

  RepairConfig cfg;
  std::string line;
  size_t lineno = 0;
  auto trim = [](std::string s) {
    const char* ws = " \t\r";
    const size_t b = s.find_first_not_of(ws);
    if (b == std::string::npos) return std::string();
    const size_t e = s.find_last_not_of(ws);
    return s.substr(b, e - b + 1);
  };

  while (std::getline(in, line)) {
    ++lineno;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    const size_t eq = stripped.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path.string() + ":" + std::to_string(lineno) +
                        ": expected key = value");
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));

    try {
      size_t used = 0;
      if (key == "n") cfg.n = std::stoi(value, &used);
      else if (key == "m") cfg.m = std::stoi(value, &used);
      else if (key == "top_k") cfg.top_k = std::stoi(value, &used);
      else if (key == "alpha") cfg.alpha = std::stod(value, &used);
      else if (key == "budget") cfg.budget = std::stoi(value, &used);
      else if (key == "temperature") cfg.temperature = std::stod(value, &used);
      else if (key == "max_tokens") cfg.max_tokens = std::stoi(value, &used);
      else if (key == "logprob_depth") cfg.logprob_depth = std::stoi(value, &used);
      else if (key == "seed") cfg.seed = std::stoull(value, &used);
      else
        throw ConfigError(path.string() + ":" + std::to_string(lineno) +
                          ": unknown key '" + key + "'");
      if (used != value.size()) throw std::invalid_argument("trailing characters");
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception&) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) +
                        ": cannot parse value for '" + key + "'");
    }
  }
  return cfg;
}

}  // namespace tokrep
