#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tokrep/mock_backend.hpp"

namespace tokrep {

/** A generated script plus the path a greedy decode will follow. */
struct SyntheticScript {
  MockModelScript script;
  std::vector<std::string> planted_path;
};

/**
 * Builds a deterministic branching script for offline experiments. Every
 * node on the planted path offers `branching` alternatives whose
 * probabilities sum to one, with a unique maximum so greedy decoding walks
 * the path end to end and then hits a terminal node that emits only the
 * end-of-sequence token. Identical arguments produce byte-identical
 * scripts on every platform. Throws ConfigError on out-of-range arguments
 * (vocab_size in [branching, 63], branching >= 2, depth >= 1).
 */
SyntheticScript make_synthetic_script(int vocab_size, int branching, int depth,
                                      std::uint64_t seed);

}  // namespace tokrep
