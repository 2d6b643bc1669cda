#include "tokrep/http_backend.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "tokrep/errors.hpp"

namespace tokrep {

using nlohmann::json;

namespace {

std::string env_or_empty(const char* name) {
  const char* v = std::getenv(name);
  return v ? std::string(v) : std::string();
}

struct ParsedUrl {
  std::string host_port;  // "http://host:port"
  std::string path;       // "/v1/completions"
};

ParsedUrl parse_url(const std::string& url) {
  if (url.rfind("https://", 0) == 0)
    throw ConfigError(
        "backend URL uses https, which this build does not speak; "
        "use an http endpoint");
  if (url.rfind("http://", 0) != 0)
    throw ConfigError("backend URL must start with http://, got '" + url + "'");
  const size_t host_begin = 7;
  const size_t slash = url.find('/', host_begin);
  ParsedUrl p;
  if (slash == std::string::npos) {
    p.host_port = url;
    p.path = "/v1/completions";
  } else {
    p.host_port = url.substr(0, slash);
    p.path = url.substr(slash);
  }
  return p;
}

}  // namespace

struct HttpBackend::Impl {
  HttpBackendConfig cfg;
  ParsedUrl url;

  json post_completion(const json& body) {
    int backoff_ms = cfg.initial_backoff_ms;
    std::string last_error;
    for (int attempt = 1; attempt <= cfg.attempts; ++attempt) {
      if (attempt > 1) {
        std::this_thread::sleep_for(std::chrono::milliseconds(backoff_ms));
        backoff_ms *= 2;
      }
      httplib::Client client(url.host_port);
      client.set_connection_timeout(cfg.connect_timeout_s, 0);
      client.set_read_timeout(cfg.read_timeout_s, 0);
      httplib::Headers headers;
      if (!cfg.api_key.empty())
        headers.emplace("Authorization", "Bearer " + cfg.api_key);
      auto res = client.Post(url.path, headers, body.dump(), "application/json");
      if (!res) {
        last_error = "connection failed: " + httplib::to_string(res.error());
        continue;  // transport failure: retry
      }
      if (res->status == 429 || res->status >= 500) {
        last_error = "server returned status " + std::to_string(res->status);
        continue;  // transient: retry
      }
      if (res->status != 200) {
        // Client-side errors will not improve with retries.
        throw BackendUnavailable("completion endpoint returned status " +
                                 std::to_string(res->status) + ": " +
                                 res->body.substr(0, 256));
      }
      try {
        return json::parse(res->body);
      } catch (const json::exception& e) {
        throw BackendUnavailable(std::string("unparseable completion response: ") +
                                 e.what());
      }
    }
    std::ostringstream os;
    os << "completion endpoint unreachable after " << cfg.attempts
       << " attempts (" << last_error << ")";
    throw BackendUnavailable(os.str());
  }

  // One response choice -> trace steps starting at `first_position`.
  static void append_choice_steps(const json& choice, GenerationTrace& trace,
                                  int first_position) {
    const json& lp = choice.at("logprobs");
    const json& tokens = lp.at("tokens");
    const json& token_lps = lp.at("token_logprobs");
    const json& top_lps = lp.at("top_logprobs");
    if (tokens.size() != token_lps.size() || tokens.size() != top_lps.size())
      throw BackendUnavailable("completion response: logprob arrays disagree in length");

    for (size_t i = 0; i < tokens.size(); ++i) {
      TokenStep step;
      step.position = first_position + static_cast<int>(i);
      step.chosen.token = tokens[i].get<std::string>();
      step.chosen.prob = std::exp(token_lps[i].get<double>());
      for (const auto& [tok, lpv] : top_lps[i].items())
        step.alternatives.push_back({tok, std::exp(lpv.get<double>())});
      std::sort(step.alternatives.begin(), step.alternatives.end(),
                [](const ProbEntry& a, const ProbEntry& b) {
                  if (a.prob != b.prob) return a.prob > b.prob;
                  return a.token < b.token;
                });
      trace.decoded_text += step.chosen.token;
      trace.steps.push_back(std::move(step));
    }
    if (choice.value("finish_reason", "") == "length") trace.truncated = true;
  }
};

HttpBackend::HttpBackend(HttpBackendConfig config)
    : impl_(std::make_unique<Impl>()) {
  if (config.api_url.empty()) config.api_url = env_or_empty("TOKREP_API_URL");
  if (config.api_key.empty()) config.api_key = env_or_empty("TOKREP_API_KEY");
  if (config.api_url.empty())
    throw ConfigError("no backend URL: set TOKREP_API_URL or pass --api-url");
  impl_->url = parse_url(config.api_url);
  impl_->cfg = std::move(config);
}

HttpBackend::~HttpBackend() = default;

BackendCapabilities HttpBackend::capabilities() const {
  BackendCapabilities caps;
  caps.max_logprob_depth = impl_->cfg.logprob_depth_limit;
  caps.supports_prefix_forcing = true;
  caps.deterministic = false;
  caps.warning =
      "prefix forcing is approximated by text concatenation; token "
      "boundaries may differ from the provider's tokenizer";
  return caps;
}

std::vector<GenerationTrace> HttpBackend::sample(
    const GenerationRequest& request) {
  if (request.sample_count < 1)
    throw std::invalid_argument("sample_count must be >= 1");

  std::string prompt = request.prompt;
  for (const std::string& tok : request.forced_prefix) prompt += tok;

  json body{{"prompt", prompt},
            {"n", request.sample_count},
            {"temperature", request.temperature},
            {"max_tokens", request.max_tokens},
            {"logprobs", request.logprob_depth},
            {"echo", false}};
  json response = impl_->post_completion(body);

  std::vector<GenerationTrace> traces;
  try {
    const json& choices = response.at("choices");
    for (size_t c = 0; c < choices.size(); ++c) {
      GenerationTrace trace;
      trace.prompt_id = "http-s" + std::to_string(c);
      int pos = 1;
      // Forced tokens are prompt text to the provider; represent them as
      // explicit steps so the trace still starts with the prefix.
      for (const std::string& tok : request.forced_prefix) {
        TokenStep step;
        step.position = pos++;
        step.chosen = {tok, 1.0};
        step.alternatives = {{tok, 1.0}};
        trace.decoded_text += tok;
        trace.steps.push_back(std::move(step));
      }
      Impl::append_choice_steps(choices[c], trace, pos);
      validate_trace(trace);
      traces.push_back(std::move(trace));
    }
  } catch (const json::exception& e) {
    throw BackendUnavailable(std::string("malformed completion response: ") +
                             e.what());
  }
  if (traces.empty())
    throw BackendUnavailable("completion response carried no choices");
  return traces;
}

GenerationTrace HttpBackend::greedy_continue(const GenerationRequest& request) {
  GenerationRequest greedy = request;
  greedy.sample_count = 1;
  greedy.temperature = 0.0;
  auto traces = sample(greedy);
  GenerationTrace trace = std::move(traces.front());
  trace.prompt_id = "http-g";
  return trace;
}

AlternativesResult HttpBackend::top_alternatives(
    const std::string& prompt, const std::vector<std::string>& prefix, int m,
    const std::string& excluded) {
  if (m < 1) throw std::invalid_argument("m must be >= 1");
  if (m > impl_->cfg.logprob_depth_limit - 1)
    throw InvalidConfig("m = " + std::to_string(m) +
                        " exceeds the provider's logprob depth minus one");

  std::string full = prompt;
  for (const std::string& tok : prefix) full += tok;
  json body{{"prompt", full}, {"n", 1},       {"temperature", 0.0},
            {"max_tokens", 1}, {"logprobs", impl_->cfg.logprob_depth_limit},
            {"echo", false}};
  json response = impl_->post_completion(body);

  AlternativesResult result;
  try {
    const json& top = response.at("choices").at(0).at("logprobs")
                          .at("top_logprobs").at(0);
    std::vector<ProbEntry> ranked;
    for (const auto& [tok, lpv] : top.items())
      ranked.push_back({tok, std::exp(lpv.get<double>())});
    std::sort(ranked.begin(), ranked.end(),
              [](const ProbEntry& a, const ProbEntry& b) {
                if (a.prob != b.prob) return a.prob > b.prob;
                return a.token < b.token;
              });
    for (const ProbEntry& e : ranked) {
      if (static_cast<int>(result.entries.size()) == m) break;
      if (e.token == excluded) continue;
      result.entries.push_back(e);
    }
  } catch (const json::exception& e) {
    throw BackendUnavailable(std::string("malformed completion response: ") +
                             e.what());
  }
  result.truncated = static_cast<int>(result.entries.size()) < m;
  return result;
}

}  // namespace tokrep
