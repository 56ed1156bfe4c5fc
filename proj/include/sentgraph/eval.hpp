#ifndef SENTGRAPH_EVAL_HPP
#define SENTGRAPH_EVAL_HPP

#include <string>
#include <vector>

#include "sentgraph/data.hpp"

namespace sentgraph {

struct PRF {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  // Micro-average bookkeeping: weighted true positives and denominators on
  // the precision and recall sides.
  double tp_p = 0.0;
  double tp_r = 0.0;
  double denom_p = 0.0;
  double denom_r = 0.0;
};

enum class Denominator { Pred, Gold };
enum class Role { Holder, Target, Expression };

// Per-element span-overlap weight, averaged over holder/target/expression.
// An element empty on both sides scores 1; empty on the denominator side only
// scores 0; otherwise |gold ∩ pred| / |denominator side|.
double tuple_weight(const Opinion& gold, const Opinion& pred, Denominator denom);

// A pred/gold pair may be matched iff their expressions share a token, their
// holders overlap or are both empty, their targets overlap or are both empty,
// and (when required) their polarities agree.
bool tuples_eligible(const Opinion& gold, const Opinion& pred, bool require_polarity);

struct MatchedPair {
  int gold_index = -1;
  int pred_index = -1;
  double weight_pred = 0.0;  // tuple_weight with denominator = Pred
  double weight_gold = 0.0;  // tuple_weight with denominator = Gold
};

// Greedy one-to-one matching over eligible pairs, by descending mean of the
// two directed weights; ties broken by gold index, then pred index.
std::vector<MatchedPair> greedy_match(const SentimentGraph& gold,
                                      const SentimentGraph& pred,
                                      bool require_polarity);

// Sentiment graph F1, micro-averaged over the corpus. require_polarity=true
// gives SF1, false gives NSF1. Gold and pred must be aligned by sent_id;
// misalignment throws std::invalid_argument.
PRF sent_graph_f1(const Dataset& gold, const Dataset& pred, bool require_polarity);

// Token-level span F1 for one role: per sentence, the union of the role's
// token indices over all opinions on each side, micro-averaged.
PRF span_f1(const Dataset& gold, const Dataset& pred, Role role);

struct MetricsReport {
  PRF sf1;
  PRF nsf1;
  PRF span_holder;
  PRF span_target;
  PRF span_expression;
};

MetricsReport evaluate(const Dataset& gold, const Dataset& pred);

// Line-oriented "key value" text (six decimals), and a JSON object with keys
// sf1/nsf1/spans.{holder,target,expression}.{p,r,f1}.
std::string report_to_text(const MetricsReport& report);
std::string report_to_json(const MetricsReport& report);

}  // namespace sentgraph

#endif  // SENTGRAPH_EVAL_HPP
