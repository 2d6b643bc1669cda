#include "tokrep/mock_backend.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "tokrep/errors.hpp"

namespace tokrep {

using nlohmann::json;

namespace {
constexpr char kUnitSep = '\x1f';
constexpr char kWildcard[] = "*";
}  // namespace

std::string mock_path_key(const std::string& prompt_selector,
                          const std::vector<std::string>& prefix) {
  std::string key = prompt_selector;
  for (const std::string& tok : prefix) {
    key += kUnitSep;
    key += tok;
  }
  return key;
}

MockModelScript MockModelScript::from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("mock script: ") + e.what());
  }
  MockModelScript s;
  try {
    s.vocab = j.at("vocab").get<std::vector<std::string>>();
    s.eos = j.at("eos").get<std::string>();
    for (const auto& [key, node] : j.at("nodes").items()) {
      std::map<std::string, double> dist;
      for (const auto& [tok, p] : node.at("dist").items())
        dist[tok] = p.get<double>();
      s.nodes[key] = std::move(dist);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("mock script: ") + e.what());
  }
  s.validate();
  return s;
}

MockModelScript MockModelScript::load_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open mock script: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_json_text(buf.str());
}

std::string MockModelScript::to_json_text() const {
  json nodes = json::object();
  for (const auto& [key, dist] : this->nodes) {
    json d = json::object();
    for (const auto& [tok, p] : dist) d[tok] = p;
    nodes[key] = json{{"dist", std::move(d)}};
  }
  json j{{"vocab", vocab}, {"eos", eos}, {"nodes", std::move(nodes)}};
  return j.dump(2);
}

void MockModelScript::validate() const {
  if (vocab.size() < 2 || vocab.size() > 64)
    throw ConfigError("mock script: vocab must hold 2..64 tokens");
  std::map<std::string, bool> in_vocab;
  for (const std::string& t : vocab) {
    if (t.empty()) throw ConfigError("mock script: empty vocab token");
    if (in_vocab.count(t)) throw ConfigError("mock script: duplicate vocab token '" + t + "'");
    in_vocab[t] = true;
  }
  if (eos.empty() || !in_vocab.count(eos))
    throw ConfigError("mock script: eos must be a vocab token");
  for (const auto& [key, dist] : nodes) {
    if (dist.empty())
      throw ConfigError("mock script: node '" + key + "' has an empty distribution");
    double sum = 0.0;
    for (const auto& [tok, p] : dist) {
      if (!in_vocab.count(tok))
        throw ConfigError("mock script: node '" + key + "' uses token '" + tok +
                          "' outside the vocab");
      if (!(p > 0.0) || p > 1.0)
        throw ConfigError("mock script: node '" + key + "' has a probability outside (0, 1]");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-6)
      throw ConfigError("mock script: node '" + key + "' distribution sums to " +
                        std::to_string(sum) + ", expected 1");
  }
}

MockBackend::MockBackend(MockModelScript script, uint64_t seed)
    : script_(std::move(script)), rng_(seed) {
  script_.validate();
}

BackendCapabilities MockBackend::capabilities() const {
  BackendCapabilities caps;
  caps.max_logprob_depth = static_cast<int>(script_.vocab.size());
  caps.supports_prefix_forcing = true;
  caps.deterministic = true;
  return caps;
}

const std::map<std::string, double>* MockBackend::node_for(
    const std::string& prompt, const std::vector<std::string>& prefix) const {
  auto it = script_.nodes.find(mock_path_key(prompt, prefix));
  if (it != script_.nodes.end()) return &it->second;
  it = script_.nodes.find(mock_path_key(kWildcard, prefix));
  if (it != script_.nodes.end()) return &it->second;
  return nullptr;
}

std::vector<ProbEntry> MockBackend::top_of(
    const std::map<std::string, double>& dist, int depth) const {
  std::vector<ProbEntry> ranked;
  ranked.reserve(script_.vocab.size());
  for (const auto& [tok, p] : dist) ranked.push_back({tok, p});
  // Zero-fill with the rest of the vocab so a one-hot node still exposes a
  // top-2 gap (second prob 0). Vocab order after sort: token ascending.
  for (const std::string& tok : script_.vocab)
    if (!dist.count(tok)) ranked.push_back({tok, 0.0});
  std::sort(ranked.begin(), ranked.end(),
            [](const ProbEntry& a, const ProbEntry& b) {
              if (a.prob != b.prob) return a.prob > b.prob;
              return a.token < b.token;
            });
  if (ranked.size() > static_cast<size_t>(depth)) ranked.resize(depth);
  return ranked;
}

GenerationTrace MockBackend::decode(const GenerationRequest& request,
                                    bool greedy, const std::string& trace_id) {
  GenerationTrace trace;
  trace.prompt_id = trace_id;
  std::vector<std::string> path;

  auto record = [&](const std::map<std::string, double>& dist,
                    const std::string& token) {
    TokenStep step;
    step.position = static_cast<int>(trace.steps.size()) + 1;
    auto it = dist.find(token);
    step.chosen = {token, it == dist.end() ? 0.0 : it->second};
    step.alternatives = top_of(dist, request.logprob_depth);
    trace.steps.push_back(std::move(step));
    trace.decoded_text += token;
    path.push_back(token);
  };

  // Forced prefix: tokens are taken as given, probabilities read from the
  // distribution the model would have had at each step.
  for (const std::string& tok : request.forced_prefix) {
    const auto* dist = node_for(request.prompt, path);
    if (!dist) {
      throw std::invalid_argument(
          "forced prefix leaves the scripted trie at token '" + tok + "'");
    }
    record(*dist, tok);
  }

  while (static_cast<int>(trace.steps.size()) < request.max_tokens) {
    const auto* dist = node_for(request.prompt, path);
    if (!dist) break;  // dead end: treat as end of sequence

    std::string token;
    if (greedy || request.temperature == 0.0) {
      token = top_of(*dist, 2).front().token;
    } else {
      // Temperature reshapes the draw only; recorded probabilities stay the
      // raw scripted distribution.
      std::vector<std::pair<std::string, double>> weights;
      double total = 0.0;
      for (const auto& [tok, p] : *dist) {
        const double w = std::pow(p, 1.0 / request.temperature);
        weights.emplace_back(tok, w);
        total += w;
      }
      double draw;
      {
        std::uniform_real_distribution<double> uni(0.0, 1.0);
        draw = uni(rng_) * total;
      }
      double cum = 0.0;
      token = weights.back().first;
      for (const auto& [tok, w] : weights) {
        cum += w;
        if (draw < cum) {
          token = tok;
          break;
        }
      }
    }

    if (token == script_.eos) break;  // eos ends decoding, unrecorded
    record(*dist, token);
  }

  if (static_cast<int>(trace.steps.size()) >= request.max_tokens &&
      node_for(request.prompt, path) != nullptr) {
    trace.truncated = true;
  }

  validate_trace(trace);
  return trace;
}

std::vector<GenerationTrace> MockBackend::sample(
    const GenerationRequest& request) {
  if (request.sample_count < 1)
    throw std::invalid_argument("sample_count must be >= 1");
  if (request.logprob_depth < 2)
    throw std::invalid_argument("logprob_depth must be >= 2");
  std::lock_guard<std::mutex> lock(mu_);
  ++calls_;
  std::vector<GenerationTrace> traces;
  traces.reserve(request.sample_count);
  for (int i = 0; i < request.sample_count; ++i) {
    std::ostringstream id;
    id << "s" << decodes_++;
    traces.push_back(decode(request, /*greedy=*/false, id.str()));
  }
  return traces;
}

GenerationTrace MockBackend::greedy_continue(const GenerationRequest& request) {
  if (request.logprob_depth < 2)
    throw std::invalid_argument("logprob_depth must be >= 2");
  std::lock_guard<std::mutex> lock(mu_);
  ++calls_;
  std::ostringstream id;
  id << "g" << decodes_++;
  return decode(request, /*greedy=*/true, id.str());
}

AlternativesResult MockBackend::top_alternatives(
    const std::string& prompt, const std::vector<std::string>& prefix, int m,
    const std::string& excluded) {
  if (m < 1) throw std::invalid_argument("m must be >= 1");
  std::lock_guard<std::mutex> lock(mu_);
  ++calls_;

  AlternativesResult result;
  const auto* dist = node_for(prompt, prefix);
  if (!dist) {
    result.truncated = true;
    return result;
  }
  std::vector<ProbEntry> ranked;
  for (const auto& [tok, p] : *dist) ranked.push_back({tok, p});
  std::sort(ranked.begin(), ranked.end(),
            [](const ProbEntry& a, const ProbEntry& b) {
              if (a.prob != b.prob) return a.prob > b.prob;
              return a.token < b.token;
            });
  for (const ProbEntry& e : ranked) {
    if (static_cast<int>(result.entries.size()) == m) break;
    if (e.token == excluded) continue;
    // A replacement has to be a content token; eos would splice "end of
    // sequence" into the middle of a patch.
    if (e.token == script_.eos) continue;
    result.entries.push_back(e);
  }
  result.truncated = static_cast<int>(result.entries.size()) < m;
  return result;
}

int MockBackend::call_count() const {
  std::lock_guard<std::mutex> lock(mu_);
  return calls_;
}

}  // namespace tokrep
