#pragma once

// Deterministic random sentiment-graph generators for property tests.
// Everything is driven by std::mt19937_64 through the two helpers below so a
// fixed seed reproduces the same corpus on every platform (the std::*
// distribution classes are not bit-portable, the raw engine is).

#include <cstdint>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "sentgraph/data.hpp"

namespace gen {

inline int rand_int(std::mt19937_64& rng, int lo, int hi) {
  return lo + static_cast<int>(rng() % static_cast<uint64_t>(hi - lo + 1));
}

inline double rand_double(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline const std::vector<std::string>& word_list() {
  static const std::vector<std::string> words = {
      "the",    "film",  "was",   "truly", "great",  "awful",   "plot",
      "acting", "score", "but",   "never", "boring", "critics", "loved",
      "hated",  "它",    "很好",  "ええ",  "café",   "naïve",   "I",
      "we",     "they",  "ending"};
  return words;
}

// unique_tokens draws words without replacement. The desk-scale model has no
// positional signal, so repeated words in one sentence are indistinguishable
// to it; corpora meant to be exactly fittable must avoid them.
inline sentgraph::Sentence random_sentence(std::mt19937_64& rng, int index,
                                           bool unique_tokens = false) {
  const auto& words = word_list();
  int n = rand_int(rng, 1, 12);
  std::vector<int> picks(words.size());
  for (size_t i = 0; i < picks.size(); ++i) picks[i] = static_cast<int>(i);
  std::string text;
  for (int i = 0; i < n; ++i) {
    if (i > 0) text += ' ';
    if (unique_tokens) {
      std::swap(picks[i], picks[rand_int(rng, i, static_cast<int>(picks.size()) - 1)]);
      text += words[picks[i]];
    } else {
      text += words[rand_int(rng, 0, static_cast<int>(words.size()) - 1)];
    }
  }
  sentgraph::Sentence s;
  s.sent_id = "rnd-" + std::to_string(index);
  s.text = text;
  s.tokens = sentgraph::tokenize(text);
  return s;
}

// Random token subset of the sentence; may be discontiguous. min_size=0 allows
// the empty span (used for holders and targets, never for expressions).
inline std::set<int> random_token_set(std::mt19937_64& rng, int num_tokens, int min_size) {
  int size = rand_int(rng, min_size, num_tokens);
  std::set<int> out;
  while (static_cast<int>(out.size()) < size) out.insert(rand_int(rng, 0, num_tokens - 1));
  return out;
}

struct GraphOptions {
  int max_opinions = 4;
  // When set, expression token-sets are pairwise distinct within a sentence.
  // The span-node encodings key nodes on spans, so two opinions sharing an
  // expression span cannot be told apart after a round trip; the generator
  // for their losslessness tests must not produce that collision.
  bool distinct_expressions = false;
  bool unique_tokens = false;  // see random_sentence
};

inline sentgraph::SentimentGraph random_graph(std::mt19937_64& rng, int index,
                                              const GraphOptions& opt = {}) {
  sentgraph::SentimentGraph g;
  g.sentence = random_sentence(rng, index, opt.unique_tokens);
  int n = g.sentence.num_tokens();
  int num_ops = rand_int(rng, 0, opt.max_opinions);
  std::set<std::set<int>> used_expressions;
  for (int k = 0; k < num_ops; ++k) {
    std::set<int> expr;
    bool found = true;
    if (opt.distinct_expressions) {
      found = false;
      for (int attempt = 0; attempt < 32; ++attempt) {
        expr = random_token_set(rng, n, 1);
        if (!used_expressions.count(expr)) {
          used_expressions.insert(expr);
          found = true;
          break;
        }
      }
    } else {
      expr = random_token_set(rng, n, 1);
    }
    if (!found) break;  // tiny sentence, expression space exhausted
    sentgraph::Opinion op;
    op.expression = sentgraph::span_set_from_tokens(g.sentence, expr);
    op.holder = sentgraph::span_set_from_tokens(g.sentence, random_token_set(rng, n, 0));
    op.target = sentgraph::span_set_from_tokens(g.sentence, random_token_set(rng, n, 0));
    int p = rand_int(rng, 0, 2);
    op.polarity = p == 0   ? sentgraph::Polarity::Positive
                  : p == 1 ? sentgraph::Polarity::Neutral
                           : sentgraph::Polarity::Negative;
    g.opinions.push_back(std::move(op));
  }
  return g;
}

inline sentgraph::Dataset random_dataset(uint64_t seed, int size,
                                         const GraphOptions& opt = {}) {
  std::mt19937_64 rng(seed);
  sentgraph::Dataset out;
  out.reserve(size);
  for (int i = 0; i < size; ++i) out.push_back(random_graph(rng, i, opt));
  return out;
}

// Gold graph whose opinions carry pairwise-disjoint expressions: shuffle the
// token indices and hand out disjoint chunks. Holders and targets are free
// subsets. Disjoint expressions force the pred/gold matching below to be
// unambiguous, which the metric property tests rely on.
inline sentgraph::SentimentGraph random_graph_disjoint_expr(std::mt19937_64& rng, int index) {
  sentgraph::SentimentGraph g;
  g.sentence = random_sentence(rng, index);
  int n = g.sentence.num_tokens();
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  for (int i = n - 1; i > 0; --i) std::swap(order[i], order[rand_int(rng, 0, i)]);
  int num_ops = rand_int(rng, 0, std::min(3, n));
  int cursor = 0;
  for (int k = 0; k < num_ops; ++k) {
    int remaining = n - cursor;
    int slots_needed = num_ops - k - 1;  // leave ≥1 token per later opinion
    if (remaining - slots_needed < 1) break;
    int size = rand_int(rng, 1, std::max(1, std::min(3, remaining - slots_needed)));
    std::set<int> expr(order.begin() + cursor, order.begin() + cursor + size);
    cursor += size;
    sentgraph::Opinion op;
    op.expression = sentgraph::span_set_from_tokens(g.sentence, expr);
    op.holder = sentgraph::span_set_from_tokens(g.sentence, random_token_set(rng, n, 0));
    op.target = sentgraph::span_set_from_tokens(g.sentence, random_token_set(rng, n, 0));
    int p = rand_int(rng, 0, 2);
    op.polarity = p == 0   ? sentgraph::Polarity::Positive
                  : p == 1 ? sentgraph::Polarity::Neutral
                           : sentgraph::Polarity::Negative;
    g.opinions.push_back(std::move(op));
  }
  return g;
}

inline std::set<int> random_subset(std::mt19937_64& rng, const std::set<int>& base,
                                   int min_size) {
  std::vector<int> items(base.begin(), base.end());
  std::set<int> out;
  if (items.empty()) return out;
  int size = rand_int(rng, std::min<int>(min_size, items.size()),
                      static_cast<int>(items.size()));
  while (static_cast<int>(out.size()) < size)
    out.insert(items[rand_int(rng, 0, static_cast<int>(items.size()) - 1)]);
  return out;
}

// Graph whose spans are pairwise disjoint across all roles and opinions.
// This is the domain where the bi-lexical dependency encoding is exactly
// invertible: no span nests or overlaps another, no two spans share a head
// token, and no head token sits inside a foreign span.
inline sentgraph::SentimentGraph random_graph_disjoint_spans(std::mt19937_64& rng, int index) {
  sentgraph::SentimentGraph g;
  g.sentence = random_sentence(rng, index);
  int n = g.sentence.num_tokens();
  std::vector<int> pool(n);
  for (int i = 0; i < n; ++i) pool[i] = i;
  for (int i = n - 1; i > 0; --i) std::swap(pool[i], pool[rand_int(rng, 0, i)]);
  size_t cursor = 0;
  auto take = [&](int min_size, int max_size) {
    int available = static_cast<int>(pool.size() - cursor);
    int size = std::min(available, rand_int(rng, min_size, max_size));
    std::set<int> out(pool.begin() + cursor, pool.begin() + cursor + std::max(0, size));
    cursor += std::max(0, size);
    return out;
  };
  int num_ops = rand_int(rng, 0, 2);
  for (int k = 0; k < num_ops; ++k) {
    std::set<int> expr = take(1, 2);
    if (expr.empty()) break;
    sentgraph::Opinion op;
    op.expression = sentgraph::span_set_from_tokens(g.sentence, expr);
    op.target = sentgraph::span_set_from_tokens(g.sentence, take(0, 2));
    op.holder = sentgraph::span_set_from_tokens(g.sentence, take(0, 1));
    int p = rand_int(rng, 0, 2);
    op.polarity = p == 0   ? sentgraph::Polarity::Positive
                  : p == 1 ? sentgraph::Polarity::Neutral
                           : sentgraph::Polarity::Negative;
    g.opinions.push_back(std::move(op));
  }
  return g;
}

// Noisy prediction for a disjoint-expression gold graph. Each gold opinion is
// either dropped or reproduced with shrunken spans and an occasional polarity
// flip; extra noise opinions use expressions disjoint from every gold
// expression. Under this construction each pred can only ever match its own
// gold, so relaxing the polarity constraint can only add matches.
inline sentgraph::SentimentGraph derive_prediction(const sentgraph::SentimentGraph& gold,
                                                   std::mt19937_64& rng) {
  sentgraph::SentimentGraph pred;
  pred.sentence = gold.sentence;
  std::set<int> gold_expr_tokens;
  for (const auto& op : gold.opinions)
    gold_expr_tokens.insert(op.expression.token_indices.begin(),
                            op.expression.token_indices.end());
  for (const auto& op : gold.opinions) {
    if (rand_double(rng) < 0.2) continue;  // dropped opinion
    sentgraph::Opinion p;
    p.expression = sentgraph::span_set_from_tokens(
        pred.sentence, random_subset(rng, op.expression.token_indices, 1));
    p.holder = sentgraph::span_set_from_tokens(
        pred.sentence, random_subset(rng, op.holder.token_indices, 0));
    p.target = sentgraph::span_set_from_tokens(
        pred.sentence, random_subset(rng, op.target.token_indices, 0));
    p.polarity = op.polarity;
    if (rand_double(rng) < 0.2) {
      p.polarity = op.polarity == sentgraph::Polarity::Positive
                       ? sentgraph::Polarity::Negative
                       : sentgraph::Polarity::Positive;
    }
    pred.opinions.push_back(std::move(p));
  }
  // Noise opinions over tokens no gold expression uses.
  std::set<int> free_tokens;
  for (int t = 0; t < pred.sentence.num_tokens(); ++t)
    if (!gold_expr_tokens.count(t)) free_tokens.insert(t);
  int extra = rand_int(rng, 0, 2);
  for (int k = 0; k < extra && !free_tokens.empty(); ++k) {
    sentgraph::Opinion p;
    p.expression =
        sentgraph::span_set_from_tokens(pred.sentence, random_subset(rng, free_tokens, 1));
    p.holder = sentgraph::span_set_from_tokens(
        pred.sentence, random_token_set(rng, pred.sentence.num_tokens(), 0));
    p.target = sentgraph::span_set_from_tokens(
        pred.sentence, random_token_set(rng, pred.sentence.num_tokens(), 0));
    p.polarity = rand_int(rng, 0, 1) ? sentgraph::Polarity::Positive
                                     : sentgraph::Polarity::Negative;
    pred.opinions.push_back(std::move(p));
  }
  return pred;
}

}  // namespace gen
