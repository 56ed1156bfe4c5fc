#ifndef SENTGRAPH_BOOTSTRAP_HPP
#define SENTGRAPH_BOOTSTRAP_HPP

#include <cstdint>
#include <vector>

#include "sentgraph/data.hpp"

namespace sentgraph {

struct BootstrapConfig {
  long long b_joint = 1000000;
  long long b_pair = 100000;
  double alpha = 0.05;
  int pair_wins_required = 15;  // out of the 25 pairwise tests
  uint64_t seed = 1;
  int threads = 1;
};

// Per-sentence micro-average contributions of one prediction set against the
// gold: weighted true positives and tuple counts on both denominators.
struct SentenceContrib {
  double tp_p = 0.0;
  double n_p = 0.0;
  double tp_g = 0.0;
  double n_g = 0.0;
};

std::vector<SentenceContrib> sentence_contributions(const Dataset& gold, const Dataset& pred);

// Sentence-level bootstrap of the SF1 difference (system A − system B). The
// five runs per system are pooled per sentence, then sentences are resampled
// with replacement b_joint times. Returns the fraction of resamples whose
// difference is ≤ 0 (one-sided; small p favours A when the observed
// difference is positive). Deterministic given cfg.seed, independent of
// cfg.threads.
double bootstrap_joint(const Dataset& gold, const std::vector<Dataset>& runs_a,
                       const std::vector<Dataset>& runs_b, const BootstrapConfig& cfg);

enum class SignificanceDecision { SignificantlyBetter, NotSignificant };

struct SignificanceResult {
  double observed_diff = 0.0;  // pooled SF1(A) − pooled SF1(B)
  double joint_p = 1.0;
  std::vector<double> pairwise_p;  // 25 entries, row-major over (run_a, run_b)
  int pairwise_wins = 0;
  SignificanceDecision decision = SignificanceDecision::NotSignificant;
};

// Full two-level procedure: one single-run bootstrap per (run_a, run_b) pair
// with b_pair resamples each, plus the pooled joint test. A is declared
// significantly better iff at least cfg.pair_wins_required pairwise tests
// reject at alpha and the joint test rejects at alpha (both require a
// positive observed difference).
SignificanceResult significance_test(const Dataset& gold, const std::vector<Dataset>& runs_a,
                                     const std::vector<Dataset>& runs_b,
                                     const BootstrapConfig& cfg);

}  // namespace sentgraph

#endif  // SENTGRAPH_BOOTSTRAP_HPP
