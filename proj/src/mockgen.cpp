#include "tokrep/mockgen.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <random>

#include "tokrep/errors.hpp"

namespace tokrep {

namespace {

// Explicit draws instead of <random> distributions: mt19937_64 output is
// standardized, the distributions are not, and generated scripts are
// compared byte for byte across toolchains.
double unit_draw(std::mt19937_64& gen) {
  return static_cast<double>(gen() >> 11) * (1.0 / 9007199254740992.0);
}

void fisher_yates(std::vector<int>& v, std::mt19937_64& gen) {
  for (size_t i = v.size(); i > 1; --i)
    std::swap(v[i - 1], v[gen() % i]);
}

}  // namespace

SyntheticScript make_synthetic_script(int vocab_size, int branching, int depth,
                                      std::uint64_t seed) {
  if (branching < 2) throw ConfigError("branching must be >= 2");
  if (vocab_size < branching)
    throw ConfigError("vocab_size must be >= branching");
  if (vocab_size > 63)
    throw ConfigError("vocab_size must be <= 63 (end token included, 64 cap)");
  if (depth < 1) throw ConfigError("depth must be >= 1");

  SyntheticScript out;
  MockModelScript& script = out.script;
  script.eos = "<eos>";
  for (int i = 0; i < vocab_size; ++i) {
    char buf[8];
    std::snprintf(buf, sizeof buf, "w%02d", i);
    script.vocab.push_back(buf);
  }
  script.vocab.push_back(script.eos);

  std::mt19937_64 gen(seed);
  std::vector<std::string> path;
  for (int level = 0; level < depth; ++level) {
    std::vector<int> indices(vocab_size);
    for (int i = 0; i < vocab_size; ++i) indices[i] = i;
    fisher_yates(indices, gen);

    // Weights in [0.5, 1.5) keep every probability positive and the ratios
    // tame; normalization makes the node sum exactly one up to rounding.
    std::vector<double> weights(branching);
    double sum = 0.0;
    for (double& w : weights) {
      w = 0.5 + unit_draw(gen);
      sum += w;
    }
    const size_t best =
        std::max_element(weights.begin(), weights.end()) - weights.begin();

    std::map<std::string, double> dist;
    for (int i = 0; i < branching; ++i)
      dist[script.vocab[indices[i]]] = weights[i] / sum;
    script.nodes[mock_path_key("*", path)] = std::move(dist);

    path.push_back(script.vocab[indices[best]]);
  }
  script.nodes[mock_path_key("*", path)] = {{script.eos, 1.0}};

  script.validate();
  out.planted_path = std::move(path);
  return out;
}

}  // namespace tokrep
