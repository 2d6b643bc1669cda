#include "tokrep/refinement.hpp"

#include <set>
#include <sstream>
#include <stdexcept>

namespace tokrep {

std::vector<PatchCandidate> refine_at_token(const PatchCandidate& parent,
                                            int position, int m,
                                            Backend& backend,
                                            const RefineOptions& opts,
                                            const IdAllocator& next_id) {
  const int len = static_cast<int>(parent.trace.steps.size());
  if (position < 2 || position > len) {
    std::ostringstream os;
    os << "refinement position " << position << " outside 2.." << len;
    throw std::invalid_argument(os.str());
  }
  if (m < 1) throw std::invalid_argument("m must be >= 1");

  std::vector<std::string> prefix;
  prefix.reserve(position - 1);
  for (int i = 0; i < position - 1; ++i)
    prefix.push_back(parent.trace.steps[i].chosen.token);
  const std::string& original = parent.trace.steps[position - 1].chosen.token;

  AlternativesResult alts =
      backend.top_alternatives(parent.prompt, prefix, m, original);

  std::vector<PatchCandidate> children;
  children.reserve(alts.entries.size());
  for (const ProbEntry& replacement : alts.entries) {
    GenerationRequest req;
    req.prompt = parent.prompt;
    req.max_tokens = opts.max_tokens;
    req.logprob_depth = opts.logprob_depth;
    req.forced_prefix = prefix;
    req.forced_prefix.push_back(replacement.token);

    GenerationTrace trace = backend.greedy_continue(req);

    // Splice the parent's recorded steps over the forced region: identical
    // conditioning context, identical distribution, and exact even when the
    // backend cannot report distributions for forced text.
    for (int i = 0; i < position - 1; ++i) {
      trace.steps[i].chosen = parent.trace.steps[i].chosen;
      trace.steps[i].alternatives = parent.trace.steps[i].alternatives;
    }
    trace.steps[position - 1].chosen = replacement;
    trace.steps[position - 1].alternatives =
        parent.trace.steps[position - 1].alternatives;

    const std::string id = next_id();
    trace.prompt_id = id;
    validate_trace(trace);

    Provenance prov;
    prov.kind = Provenance::Kind::Refined;
    prov.parent_id = parent.id;
    prov.position = position;
    prov.replacement = replacement.token;
    children.push_back(
        make_candidate(id, parent.prompt, std::move(trace), std::move(prov)));
  }
  return children;
}

RefinedSet refine_candidate(const PatchCandidate& parent,
                            const std::vector<SuspiciousToken>& ftokens, int m,
                            Backend& backend, const RefineOptions& opts,
                            int nominal_top_k, const IdAllocator& next_id) {
  RefinedSet set;
  if (ftokens.empty()) return set;  // nothing to refine, nothing charged

  set.budget_cost = nominal_top_k * m;
  std::set<std::string> seen;
  for (const SuspiciousToken& t : ftokens) {
    for (PatchCandidate& child :
         refine_at_token(parent, t.position, m, backend, opts, next_id)) {
      if (!seen.insert(child.trace.decoded_text).second) {
        set.duplicates_dropped.push_back(child.trace.decoded_text);
        continue;
      }
      set.children.push_back(std::move(child));
    }
  }
  return set;
}

}  // namespace tokrep
