#include "sentgraph/bootstrap.hpp"

#include <stdexcept>
#include <thread>

#include "sentgraph/eval.hpp"

namespace sentgraph {

namespace {

uint64_t mix64(uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Stateless per-resample substream: every resample owns an independent
// generator derived from (seed, test, resample index), so the resample loop
// can be split across threads in any order without changing a single draw.
struct Substream {
  uint64_t state;
  Substream(uint64_t seed, uint64_t test_index, uint64_t resample)
      : state(mix64(seed ^ mix64(test_index * 0x9e3779b97f4a7c15ULL + 0x2545f4914f6cdd1dULL) ^
                    mix64(resample + 0x632be59bd9b4e019ULL))) {}
  uint64_t next() {
    state += 0x9e3779b97f4a7c15ULL;
    return mix64(state);
  }
};

double sf1_from_totals(double tp_p, double n_p, double tp_g, double n_g) {
  double p = n_p > 0 ? tp_p / n_p : 0.0;
  double r = n_g > 0 ? tp_g / n_g : 0.0;
  return p + r > 0 ? 2.0 * p * r / (p + r) : 0.0;
}

double observed_sf1(const std::vector<SentenceContrib>& contrib) {
  double tp_p = 0, n_p = 0, tp_g = 0, n_g = 0;
  for (const auto& c : contrib) {
    tp_p += c.tp_p;
    n_p += c.n_p;
    tp_g += c.tp_g;
    n_g += c.n_g;
  }
  return sf1_from_totals(tp_p, n_p, tp_g, n_g);
}

std::vector<SentenceContrib> pooled_contributions(const Dataset& gold,
                                                  const std::vector<Dataset>& runs) {
  std::vector<SentenceContrib> pooled(gold.size());
  for (const Dataset& run : runs) {
    std::vector<SentenceContrib> c = sentence_contributions(gold, run);
    for (size_t i = 0; i < pooled.size(); ++i) {
      pooled[i].tp_p += c[i].tp_p;
      pooled[i].n_p += c[i].n_p;
      pooled[i].tp_g += c[i].tp_g;
      pooled[i].n_g += c[i].n_g;
    }
  }
  return pooled;
}

// Count resamples whose SF1 difference (A − B) is ≤ 0.
long long count_nonpositive(const std::vector<SentenceContrib>& a,
                            const std::vector<SentenceContrib>& b, long long resamples,
                            uint64_t seed, uint64_t test_index, int threads) {
  const uint64_t n = a.size();
  if (n == 0) throw std::invalid_argument("bootstrap needs a non-empty corpus");
  auto run_range = [&](long long lo, long long hi) {
    long long count = 0;
    for (long long r = lo; r < hi; ++r) {
      Substream rng(seed, test_index, static_cast<uint64_t>(r));
      double a_tp_p = 0, a_n_p = 0, a_tp_g = 0, a_n_g = 0;
      double b_tp_p = 0, b_n_p = 0, b_tp_g = 0, b_n_g = 0;
      for (uint64_t k = 0; k < n; ++k) {
        uint64_t idx = rng.next() % n;
        a_tp_p += a[idx].tp_p;
        a_n_p += a[idx].n_p;
        a_tp_g += a[idx].tp_g;
        a_n_g += a[idx].n_g;
        b_tp_p += b[idx].tp_p;
        b_n_p += b[idx].n_p;
        b_tp_g += b[idx].tp_g;
        b_n_g += b[idx].n_g;
      }
      double diff = sf1_from_totals(a_tp_p, a_n_p, a_tp_g, a_n_g) -
                    sf1_from_totals(b_tp_p, b_n_p, b_tp_g, b_n_g);
      if (diff <= 0.0) ++count;
    }
    return count;
  };

  int workers = threads > 1 ? threads : 1;
  if (workers == 1) return run_range(0, resamples);

  std::vector<long long> partial(workers, 0);
  std::vector<std::thread> pool;
  long long chunk = (resamples + workers - 1) / workers;
  for (int w = 0; w < workers; ++w) {
    long long lo = w * chunk;
    long long hi = std::min<long long>(resamples, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([&, w, lo, hi] { partial[w] = run_range(lo, hi); });
  }
  for (auto& t : pool) t.join();
  long long total = 0;
  for (long long c : partial) total += c;
  return total;
}

void check_runs(const Dataset& gold, const std::vector<Dataset>& runs, const char* side) {
  for (const Dataset& run : runs) {
    if (run.size() != gold.size())
      throw std::invalid_argument(std::string("bootstrap: run of system ") + side +
                                  " is not aligned with gold");
  }
}

}  // namespace

std::vector<SentenceContrib> sentence_contributions(const Dataset& gold, const Dataset& pred) {
  if (gold.size() != pred.size())
    throw std::invalid_argument("sentence_contributions: datasets differ in size");
  std::vector<SentenceContrib> out(gold.size());
  for (size_t i = 0; i < gold.size(); ++i) {
    for (const MatchedPair& m : greedy_match(gold[i], pred[i], /*require_polarity=*/true)) {
      out[i].tp_p += m.weight_pred;
      out[i].tp_g += m.weight_gold;
    }
    out[i].n_p = static_cast<double>(pred[i].opinions.size());
    out[i].n_g = static_cast<double>(gold[i].opinions.size());
  }
  return out;
}

double bootstrap_joint(const Dataset& gold, const std::vector<Dataset>& runs_a,
                       const std::vector<Dataset>& runs_b, const BootstrapConfig& cfg) {
  check_runs(gold, runs_a, "A");
  check_runs(gold, runs_b, "B");
  std::vector<SentenceContrib> a = pooled_contributions(gold, runs_a);
  std::vector<SentenceContrib> b = pooled_contributions(gold, runs_b);
  long long le = count_nonpositive(a, b, cfg.b_joint, cfg.seed, /*test_index=*/0, cfg.threads);
  return static_cast<double>(le) / static_cast<double>(cfg.b_joint);
}

SignificanceResult significance_test(const Dataset& gold, const std::vector<Dataset>& runs_a,
                                     const std::vector<Dataset>& runs_b,
                                     const BootstrapConfig& cfg) {
  check_runs(gold, runs_a, "A");
  check_runs(gold, runs_b, "B");
  SignificanceResult result;

  std::vector<SentenceContrib> pooled_a = pooled_contributions(gold, runs_a);
  std::vector<SentenceContrib> pooled_b = pooled_contributions(gold, runs_b);
  result.observed_diff = observed_sf1(pooled_a) - observed_sf1(pooled_b);
  long long joint_le =
      count_nonpositive(pooled_a, pooled_b, cfg.b_joint, cfg.seed, /*test_index=*/0, cfg.threads);
  result.joint_p = static_cast<double>(joint_le) / static_cast<double>(cfg.b_joint);
  bool joint_rejects = result.observed_diff > 0 && result.joint_p < cfg.alpha;

  result.pairwise_p.reserve(runs_a.size() * runs_b.size());
  uint64_t test_index = 1;
  for (const Dataset& run_a : runs_a) {
    std::vector<SentenceContrib> a = sentence_contributions(gold, run_a);
    for (const Dataset& run_b : runs_b) {
      std::vector<SentenceContrib> b = sentence_contributions(gold, run_b);
      long long le = count_nonpositive(a, b, cfg.b_pair, cfg.seed, test_index, cfg.threads);
      double p = static_cast<double>(le) / static_cast<double>(cfg.b_pair);
      result.pairwise_p.push_back(p);
      double diff = observed_sf1(a) - observed_sf1(b);
      if (diff > 0 && p < cfg.alpha) ++result.pairwise_wins;
      ++test_index;
    }
  }

  result.decision = (result.pairwise_wins >= cfg.pair_wins_required && joint_rejects)
                        ? SignificanceDecision::SignificantlyBetter
                        : SignificanceDecision::NotSignificant;
  return result;
}

}  // namespace sentgraph
