#include "tokrep/trace.hpp"

#include <algorithm>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "tokrep/errors.hpp"

namespace tokrep {

using nlohmann::json;

void validate_step(const TokenStep& step) {
  auto fail = [&](const std::string& why) {
    std::ostringstream os;
    os << "invalid token step at position " << step.position << ": " << why;
    throw std::invalid_argument(os.str());
  };

  if (step.position < 1) fail("position must be >= 1");
  if (step.chosen.token.empty()) fail("chosen token is empty");
  if (step.chosen.prob < 0.0 || step.chosen.prob > 1.0)
    fail("chosen prob outside [0, 1]");
  if (step.alternatives.empty()) fail("no recorded distribution");

  double mass = 0.0;
  for (size_t i = 0; i < step.alternatives.size(); ++i) {
    const ProbEntry& e = step.alternatives[i];
    if (e.token.empty()) fail("alternative token is empty");
    if (e.prob < 0.0 || e.prob > 1.0) fail("alternative prob outside [0, 1]");
    if (i > 0 && step.alternatives[i - 1].prob < e.prob)
      fail("alternatives not sorted by prob descending");
    mass += e.prob;
  }
  if (mass > 1.0 + kMassEpsilon) fail("alternative mass exceeds 1");
}

void validate_trace(const GenerationTrace& trace) {
  std::string concat;
  for (size_t i = 0; i < trace.steps.size(); ++i) {
    const TokenStep& step = trace.steps[i];
    if (step.position != static_cast<int>(i) + 1) {
      std::ostringstream os;
      os << "trace '" << trace.prompt_id << "': step " << i
         << " has position " << step.position << ", expected " << i + 1;
      throw std::invalid_argument(os.str());
    }
    validate_step(step);
    concat += step.chosen.token;
  }
  if (concat != trace.decoded_text) {
    throw std::invalid_argument("trace '" + trace.prompt_id +
                                "': decoded_text does not equal the "
                                "concatenation of chosen tokens");
  }
}

void write_trace_jsonl(std::ostream& out, const GenerationTrace& trace) {
  for (const TokenStep& step : trace.steps) {
    json alts = json::array();
    for (const ProbEntry& e : step.alternatives)
      alts.push_back({{"token", e.token}, {"prob", e.prob}});
    json rec{{"prompt_id", trace.prompt_id},
             {"position", step.position},
             {"token", step.chosen.token},
             {"prob", step.chosen.prob},
             {"alternatives", std::move(alts)}};
    out << rec.dump() << '\n';
  }
}

namespace {

ProbEntry parse_prob_entry(const json& j) {
  ProbEntry e;
  e.token = j.at("token").get<std::string>();
  e.prob = j.at("prob").get<double>();
  return e;
}

}  // namespace

std::vector<GenerationTrace> read_traces_jsonl(std::istream& in) {
  // Keyed storage plus first-appearance order.
  std::map<std::string, GenerationTrace> by_id;
  std::vector<std::string> order;

  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::exception& e) {
      std::ostringstream os;
      os << "trace log line " << lineno << ": " << e.what();
      throw ConfigError(os.str());
    }
    try {
      std::string id = rec.at("prompt_id").get<std::string>();
      auto [it, inserted] = by_id.try_emplace(id);
      if (inserted) {
        it->second.prompt_id = id;
        order.push_back(id);
      }
      TokenStep step;
      step.position = rec.at("position").get<int>();
      step.chosen.token = rec.at("token").get<std::string>();
      step.chosen.prob = rec.at("prob").get<double>();
      for (const json& a : rec.at("alternatives"))
        step.alternatives.push_back(parse_prob_entry(a));
      it->second.steps.push_back(std::move(step));
    } catch (const json::exception& e) {
      std::ostringstream os;
      os << "trace log line " << lineno << ": " << e.what();
      throw ConfigError(os.str());
    }
  }

  std::vector<GenerationTrace> traces;
  traces.reserve(order.size());
  for (const std::string& id : order) {
    GenerationTrace& t = by_id[id];
    std::sort(t.steps.begin(), t.steps.end(),
              [](const TokenStep& a, const TokenStep& b) {
                return a.position < b.position;
              });
    for (size_t i = 0; i < t.steps.size(); ++i) {
      if (t.steps[i].position != static_cast<int>(i) + 1) {
        throw ConfigError("trace '" + id +
                          "': positions do not form 1..L without gaps");
      }
      t.decoded_text += t.steps[i].chosen.token;
    }
    traces.push_back(std::move(t));
  }
  return traces;
}

}  // namespace tokrep
