#include "tokrep/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include "tokrep/candidate.hpp"
#include "tokrep/localization.hpp"
#include "tokrep/uncertainty.hpp"

namespace tokrep {

using nlohmann::json;

GridResult localization_accuracy_grid(const std::vector<AnnotatedTrace>& traces,
                                      const std::vector<double>& alphas,
                                      const std::vector<int>& ks) {
  if (traces.empty()) throw EmptyDataset("no traces to score");
  if (alphas.empty() || ks.empty())
    throw std::invalid_argument("grid needs at least one decay factor and one k");

  std::vector<std::vector<double>> profiles;
  profiles.reserve(traces.size());
  for (const AnnotatedTrace& a : traces) {
    if (a.faulty_positions.empty())
      throw ConfigError("trace '" + a.trace.prompt_id +
                        "' has no faulty positions annotated");
    profiles.push_back(uncertainty_profile(a.trace));
  }

  GridResult grid;
  grid.alphas = alphas;
  grid.ks = ks;
  for (double alpha : alphas) {
    std::vector<double> row;
    for (int k : ks) {
      int hits = 0;
      for (size_t i = 0; i < traces.size(); ++i) {
        const std::vector<SuspiciousToken> picked =
            select_top_k(profiles[i], alpha, k);
        const auto& faulty = traces[i].faulty_positions;
        const bool hit = std::any_of(
            picked.begin(), picked.end(), [&](const SuspiciousToken& t) {
              return std::find(faulty.begin(), faulty.end(), t.position) !=
                     faulty.end();
            });
        if (hit) ++hits;
      }
      row.push_back(static_cast<double>(hits) / traces.size());
    }
    grid.row_avg.push_back(
        std::accumulate(row.begin(), row.end(), 0.0) / row.size());
    grid.cells.push_back(std::move(row));
  }
  return grid;
}

VotingMetrics voting_classifier_metrics(const std::vector<AnnotatedTrace>& traces) {
  // Pools keyed by group name; iteration order does not affect the counts.
  std::map<std::string, std::vector<const AnnotatedTrace*>> groups;
  for (const AnnotatedTrace& a : traces) {
    if (!a.group) continue;
    if (!a.first_token_correct)
      throw ConfigError("trace '" + a.trace.prompt_id +
                        "' is grouped for voting but lacks first_token_correct");
    groups[*a.group].push_back(&a);
  }
  if (groups.empty()) throw EmptyDataset("no traces carry a voting group");

  VotingMetrics m;
  for (const auto& [name, members] : groups) {
    // Reuse the engine's exact tie-break chain by voting over shells that
    // carry just the fields the vote reads.
    std::vector<PatchCandidate> shells(members.size());
    for (size_t i = 0; i < members.size(); ++i) {
      const GenerationTrace& tr = members[i]->trace;
      if (tr.steps.empty())
        throw ConfigError("trace '" + tr.prompt_id + "' in group '" + name +
                          "' is empty");
      shells[i].id = tr.prompt_id;
      shells[i].vote_token = tr.steps.front().chosen.token;
      shells[i].first_u = compute_uncertainty(tr.steps.front());
    }
    const VotingResult vote = majority_vote_first_token(shells);

    for (size_t i = 0; i < members.size(); ++i) {
      const bool predicted = shells[i].vote_token == vote.winner;
      const bool actual = *members[i]->first_token_correct;
      if (predicted && actual) ++m.tp;
      else if (predicted && !actual) ++m.fp;
      else if (!predicted && actual) ++m.fn;
      else ++m.tn;
    }
  }

  const double nan = std::numeric_limits<double>::quiet_NaN();
  m.precision_defined = m.tp + m.fp > 0;
  m.recall_defined = m.tp + m.fn > 0;
  m.precision = m.precision_defined
                    ? static_cast<double>(m.tp) / (m.tp + m.fp) : nan;
  m.recall = m.recall_defined
                 ? static_cast<double>(m.tp) / (m.tp + m.fn) : nan;
  m.f1_defined = m.precision_defined && m.recall_defined &&
                 m.precision + m.recall > 0.0;
  m.f1 = m.f1_defined
             ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : nan;
  return m;
}

TendencyResult uncertainty_tendency(const std::vector<RepairPath>& paths) {
  if (paths.empty()) throw EmptyDataset("no repair paths");

  TendencyResult result;
  for (const RepairPath& p : paths) {
    TendencyRow& row =
        p.label == PathLabel::Plausible ? result.plausible : result.incorrect;
    for (size_t i = 0; i + 1 < p.uncertainties.size(); ++i) {
      const double a = p.uncertainties[i];
      const double b = p.uncertainties[i + 1];
      if (b < a) ++row.down;
      else if (b > a) ++row.up;
      else ++row.ties;
    }
  }

  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (TendencyRow* row : {&result.plausible, &result.incorrect}) {
    const int strict = row->down + row->up;
    row->pct_defined = strict > 0;
    row->down_pct = row->pct_defined ? 100.0 * row->down / strict : nan;
    row->up_pct = row->pct_defined ? 100.0 * row->up / strict : nan;
  }
  return result;
}

namespace {

json parse_line(const std::string& line, const std::filesystem::path& path,
                size_t lineno) {
  json rec = json::parse(line, nullptr, false);
  if (rec.is_discarded() || !rec.is_object())
    throw ConfigError(path.string() + ":" + std::to_string(lineno) +
                      ": expected a JSON object per line");
  return rec;
}

}  // namespace

std::vector<AnnotatedTrace> read_annotated_traces(
    const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open trace file: " + path.string());

  std::vector<GenerationTrace> traces = read_traces_jsonl(in);

  struct Notes {
    std::optional<std::vector<int>> faulty;
    std::optional<bool> correct;
    std::optional<std::string> group;
  };
  std::map<std::string, Notes> notes;

  // Second pass collects annotations; the structural checks already ran.
  in.clear();
  in.seekg(0);
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const json rec = parse_line(line, path, lineno);
    Notes& n = notes[rec.at("prompt_id").get<std::string>()];
    auto conflict = [&](const char* field) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) +
                        ": conflicting values for " + std::string(field));
    };
    try {
      if (rec.contains("faulty_positions")) {
        auto v = rec["faulty_positions"].get<std::vector<int>>();
        std::sort(v.begin(), v.end());
        for (int pos : v)
          if (pos < 1)
            throw ConfigError(path.string() + ":" + std::to_string(lineno) +
                              ": faulty positions are 1-based");
        if (n.faulty && *n.faulty != v) conflict("faulty_positions");
        n.faulty = std::move(v);
      }
      if (rec.contains("first_token_correct")) {
        const bool v = rec["first_token_correct"].get<bool>();
        if (n.correct && *n.correct != v) conflict("first_token_correct");
        n.correct = v;
      }
      if (rec.contains("group")) {
        const auto v = rec["group"].get<std::string>();
        if (n.group && *n.group != v) conflict("group");
        n.group = v;
      }
    } catch (const json::exception& e) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": " +
                        e.what());
    }
  }

  std::vector<AnnotatedTrace> out;
  out.reserve(traces.size());
  for (GenerationTrace& tr : traces) {
    AnnotatedTrace a;
    const Notes& n = notes[tr.prompt_id];
    if (n.faulty) a.faulty_positions = *n.faulty;
    a.first_token_correct = n.correct;
    a.group = n.group;
    a.trace = std::move(tr);
    out.push_back(std::move(a));
  }
  return out;
}

std::vector<RepairPath> read_repair_paths(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open path file: " + path.string());

  std::vector<RepairPath> out;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const json rec = parse_line(line, path, lineno);
    auto fail = [&](const std::string& why) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": " + why);
    };
    RepairPath p;
    try {
      const auto label = rec.at("label").get<std::string>();
      if (label == "plausible") p.label = PathLabel::Plausible;
      else if (label == "incorrect") p.label = PathLabel::Incorrect;
      else fail("label must be 'plausible' or 'incorrect'");
      p.uncertainties = rec.at("uncertainties").get<std::vector<double>>();
    } catch (const json::exception& e) {
      fail(e.what());
    }
    if (p.uncertainties.empty()) fail("uncertainties must be non-empty");
    for (double u : p.uncertainties)
      if (!(u >= 0.0 && u <= 1.0)) fail("uncertainties must lie in [0, 1]");
    out.push_back(std::move(p));
  }
  return out;
}

const char* to_string(PathLabel label) {
  return label == PathLabel::Plausible ? "plausible" : "incorrect";
}

json grid_to_json(const GridResult& grid) {
  return json{{"alphas", grid.alphas},
              {"ks", grid.ks},
              {"cells", grid.cells},
              {"row_avg", grid.row_avg}};
}

namespace {

json ratio_or_null(double value, bool defined) {
  if (!defined) return nullptr;
  return value;
}

}  // namespace

json metrics_to_json(const VotingMetrics& m) {
  return json{{"tp", m.tp},
              {"fp", m.fp},
              {"fn", m.fn},
              {"tn", m.tn},
              {"precision", ratio_or_null(m.precision, m.precision_defined)},
              {"recall", ratio_or_null(m.recall, m.recall_defined)},
              {"f1", ratio_or_null(m.f1, m.f1_defined)}};
}

json tendency_to_json(const TendencyResult& t) {
  auto row = [](const TendencyRow& r) {
    return json{{"down", r.down},
                {"up", r.up},
                {"ties", r.ties},
                {"down_pct", ratio_or_null(r.down_pct, r.pct_defined)},
                {"up_pct", ratio_or_null(r.up_pct, r.pct_defined)}};
  };
  return json{{"plausible", row(t.plausible)}, {"incorrect", row(t.incorrect)}};
}

namespace {

std::string fixed(double v, int prec) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(prec) << v;
  return os.str();
}

std::string cell(const std::string& text, size_t width) {
  if (text.size() >= width) return text;
  return std::string(width - text.size(), ' ') + text;
}

}  // namespace

std::string render_grid_table(const GridResult& grid) {
  constexpr size_t kW = 8;
  std::ostringstream os;
  os << cell("decay", kW);
  for (int k : grid.ks) os << cell("top-" + std::to_string(k), kW);
  os << cell("avg", kW) << '\n';
  for (size_t r = 0; r < grid.alphas.size(); ++r) {
    os << cell(fixed(grid.alphas[r], 2), kW);
    for (double v : grid.cells[r]) os << cell(fixed(v, 3), kW);
    os << cell(fixed(grid.row_avg[r], 3), kW) << '\n';
  }
  return os.str();
}

std::string render_voting_table(const VotingMetrics& m) {
  constexpr size_t kW = 10;
  auto ratio = [](double v, bool defined) {
    return defined ? fixed(v, 3) : std::string("n/a");
  };
  std::ostringstream os;
  os << cell("tp", kW) << cell("fp", kW) << cell("fn", kW) << cell("tn", kW)
     << cell("precision", kW) << cell("recall", kW) << cell("f1", kW) << '\n';
  os << cell(std::to_string(m.tp), kW) << cell(std::to_string(m.fp), kW)
     << cell(std::to_string(m.fn), kW) << cell(std::to_string(m.tn), kW)
     << cell(ratio(m.precision, m.precision_defined), kW)
     << cell(ratio(m.recall, m.recall_defined), kW)
     << cell(ratio(m.f1, m.f1_defined), kW) << '\n';
  return os.str();
}

std::string render_tendency_table(const TendencyResult& t) {
  constexpr size_t kW = 11;
  auto pct = [](double v, bool defined) {
    return defined ? fixed(v, 1) + "%" : std::string("n/a");
  };
  std::ostringstream os;
  os << cell("outcome", kW) << cell("down", kW) << cell("up", kW)
     << cell("ties", kW) << cell("down%", kW) << cell("up%", kW) << '\n';
  const std::pair<const char*, const TendencyRow*> rows[] = {
      {"plausible", &t.plausible}, {"incorrect", &t.incorrect}};
  for (const auto& [name, row] : rows) {
    os << cell(name, kW) << cell(std::to_string(row->down), kW)
       << cell(std::to_string(row->up), kW) << cell(std::to_string(row->ties), kW)
       << cell(pct(row->down_pct, row->pct_defined), kW)
       << cell(pct(row->up_pct, row->pct_defined), kW) << '\n';
  }
  return os.str();
}

}  // namespace tokrep
