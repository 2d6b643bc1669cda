#include "tokrep/localization.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <stdexcept>

#include "tokrep/errors.hpp"
#include "tokrep/uncertainty.hpp"

namespace tokrep {

std::vector<int> find_suspicious_positions(const std::vector<double>& profile) {
  std::vector<int> positions;
  for (size_t i = 1; i < profile.size(); ++i) {
    if (profile[i] > profile[i - 1]) positions.push_back(static_cast<int>(i) + 1);
  }
  return positions;
}

double local_score(double u_n, double u_prev) {
  if (u_n < 0.0 || u_n > 1.0 || u_prev < 0.0 || u_prev > 1.0)
    throw std::invalid_argument("uncertainties must lie in [0, 1]");
  if (u_prev == 0.0)
    throw DegenerateUncertainty(
        "local score undefined: preceding uncertainty is zero");
  if (u_n == 0.0) return 0.0;
  return u_n * std::log(u_n / u_prev);
}

double global_score(double local, int position, double alpha) {
  if (!(alpha > 0.0) || alpha > 1.0) {
    std::ostringstream os;
    os << "decay factor must lie in (0, 1], got " << alpha;
    throw InvalidDecayFactor(os.str());
  }
  if (position < 1) throw std::invalid_argument("position must be >= 1");
  return local * std::pow(alpha, position);
}

std::vector<SuspiciousToken> select_top_k(const std::vector<double>& profile,
                                          double alpha, int k,
                                          SelectionDiagnostics* diag) {
  if (k < 1) throw std::invalid_argument("k must be >= 1");
  if (!(alpha > 0.0) || alpha > 1.0) {
    std::ostringstream os;
    os << "decay factor must lie in (0, 1], got " << alpha;
    throw InvalidDecayFactor(os.str());
  }

  std::vector<SuspiciousToken> scored;
  for (int pos : find_suspicious_positions(profile)) {
    const double u_n = profile[pos - 1];
    const double u_prev = profile[pos - 2];
    if (u_prev == 0.0) {
      // The log ratio is undefined here. The position stays unranked and
      // the caller decides what to do with the diagnostic.
      if (diag) diag->skipped_degenerate.push_back(pos);
      continue;
    }
    SuspiciousToken t;
    t.position = pos;
    t.local_score = local_score(u_n, u_prev);
    t.global_score = global_score(t.local_score, pos, alpha);
    scored.push_back(t);
  }

  std::stable_sort(scored.begin(), scored.end(),
                   [](const SuspiciousToken& a, const SuspiciousToken& b) {
                     if (a.global_score != b.global_score)
                       return a.global_score > b.global_score;
                     return a.position < b.position;
                   });
  if (scored.size() > static_cast<size_t>(k)) scored.resize(k);
  for (size_t i = 0; i < scored.size(); ++i)
    scored[i].rank = static_cast<int>(i) + 1;
  return scored;
}

std::vector<SuspiciousToken> select_top_k(const GenerationTrace& trace,
                                          double alpha, int k,
                                          SelectionDiagnostics* diag) {
  return select_top_k(uncertainty_profile(trace), alpha, k, diag);
}

namespace {

struct TallyAccum {
  int count = 0;
  double first_u_sum = 0.0;
};

}  // namespace

VotingResult majority_vote_first_token(
    const std::vector<const PatchCandidate*>& candidates) {
  if (candidates.empty())
    throw EmptyCandidatePool("majority vote over zero candidates");

  std::map<std::string, TallyAccum> tally;
  for (const PatchCandidate* c : candidates) {
    TallyAccum& acc = tally[c->vote_token];
    acc.count += 1;
    acc.first_u_sum += c->first_u;
  }

  VotingResult result;
  for (const auto& [token, acc] : tally)
    result.tallies.push_back({token, acc.count});
  std::stable_sort(result.tallies.begin(), result.tallies.end(),
                   [](const VoteTally& a, const VoteTally& b) {
                     if (a.count != b.count) return a.count > b.count;
                     return a.token < b.token;
                   });

  // Plurality first; mean first-token uncertainty breaks count ties
  // (steadier groups win); lexicographic order settles exact dead heats.
  const std::string* best = nullptr;
  double best_mean = 0.0;
  int best_count = 0;
  for (const auto& [token, acc] : tally) {
    const double mean = acc.first_u_sum / acc.count;
    bool take = false;
    if (!best) {
      take = true;
    } else if (acc.count != best_count) {
      take = acc.count > best_count;
    } else if (mean != best_mean) {
      take = mean < best_mean;
    } else {
      take = token < *best;
    }
    if (take) {
      best = &token;
      best_mean = mean;
      best_count = acc.count;
    }
  }
  result.winner = *best;
  return result;
}

VotingResult majority_vote_first_token(
    const std::vector<PatchCandidate>& candidates) {
  std::vector<const PatchCandidate*> ptrs;
  ptrs.reserve(candidates.size());
  for (const PatchCandidate& c : candidates) ptrs.push_back(&c);
  return majority_vote_first_token(ptrs);
}

std::vector<const PatchCandidate*> filter_by_first_token(
    const std::vector<const PatchCandidate*>& candidates,
    const std::string& winner) {
  std::vector<const PatchCandidate*> kept;
  for (const PatchCandidate* c : candidates)
    if (c->vote_token == winner) kept.push_back(c);
  return kept;
}

std::vector<PatchCandidate> filter_by_first_token(
    const std::vector<PatchCandidate>& candidates, const std::string& winner) {
  std::vector<PatchCandidate> kept;
  for (const PatchCandidate& c : candidates)
    if (c.vote_token == winner) kept.push_back(c);
  return kept;
}

}  // namespace tokrep
