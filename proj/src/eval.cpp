#include "sentgraph/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <set>
#include <sstream>

#include <json.hpp>

namespace sentgraph {

namespace {

int intersection_size(const std::set<int>& a, const std::set<int>& b) {
  int n = 0;
  for (int x : a)
    if (b.count(x)) ++n;
  return n;
}

double element_weight(const std::set<int>& gold, const std::set<int>& pred,
                      Denominator denom) {
  const std::set<int>& d = denom == Denominator::Pred ? pred : gold;
  if (gold.empty() && pred.empty()) return 1.0;
  if (d.empty()) return 0.0;
  return static_cast<double>(intersection_size(gold, pred)) / static_cast<double>(d.size());
}

bool spans_compatible(const std::set<int>& gold, const std::set<int>& pred) {
  if (gold.empty() && pred.empty()) return true;
  return intersection_size(gold, pred) > 0;
}

double finish_f1(PRF& prf) {
  prf.precision = prf.denom_p > 0 ? prf.tp_p / prf.denom_p : 0.0;
  prf.recall = prf.denom_r > 0 ? prf.tp_r / prf.denom_r : 0.0;
  double pr = prf.precision + prf.recall;
  prf.f1 = pr > 0 ? 2.0 * prf.precision * prf.recall / pr : 0.0;
  return prf.f1;
}

void check_aligned(const Dataset& gold, const Dataset& pred) {
  if (gold.size() != pred.size())
    throw std::invalid_argument("gold and pred datasets differ in size: " +
                                std::to_string(gold.size()) + " vs " +
                                std::to_string(pred.size()));
  for (size_t i = 0; i < gold.size(); ++i) {
    if (gold[i].sentence.sent_id != pred[i].sentence.sent_id)
      throw std::invalid_argument("gold/pred sent_id mismatch at index " + std::to_string(i) +
                                  ": '" + gold[i].sentence.sent_id + "' vs '" +
                                  pred[i].sentence.sent_id + "'");
  }
}

}  // namespace

double tuple_weight(const Opinion& gold, const Opinion& pred, Denominator denom) {
  double w = element_weight(gold.holder.token_indices, pred.holder.token_indices, denom) +
             element_weight(gold.target.token_indices, pred.target.token_indices, denom) +
             element_weight(gold.expression.token_indices, pred.expression.token_indices, denom);
  return w / 3.0;
}

bool tuples_eligible(const Opinion& gold, const Opinion& pred, bool require_polarity) {
  if (require_polarity && gold.polarity != pred.polarity) return false;
  if (intersection_size(gold.expression.token_indices, pred.expression.token_indices) == 0)
    return false;
  return spans_compatible(gold.holder.token_indices, pred.holder.token_indices) &&
         spans_compatible(gold.target.token_indices, pred.target.token_indices);
}

std::vector<MatchedPair> greedy_match(const SentimentGraph& gold, const SentimentGraph& pred,
                                      bool require_polarity) {
  struct Candidate {
    double weight;
    MatchedPair pair;
  };
  std::vector<Candidate> candidates;
  for (int gi = 0; gi < static_cast<int>(gold.opinions.size()); ++gi) {
    for (int pi = 0; pi < static_cast<int>(pred.opinions.size()); ++pi) {
      if (!tuples_eligible(gold.opinions[gi], pred.opinions[pi], require_polarity)) continue;
      MatchedPair pair;
      pair.gold_index = gi;
      pair.pred_index = pi;
      pair.weight_pred = tuple_weight(gold.opinions[gi], pred.opinions[pi], Denominator::Pred);
      pair.weight_gold = tuple_weight(gold.opinions[gi], pred.opinions[pi], Denominator::Gold);
      candidates.push_back({0.5 * (pair.weight_pred + pair.weight_gold), pair});
    }
  }
  std::stable_sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
    if (a.weight != b.weight) return a.weight > b.weight;
    if (a.pair.gold_index != b.pair.gold_index) return a.pair.gold_index < b.pair.gold_index;
    return a.pair.pred_index < b.pair.pred_index;
  });

  std::vector<bool> gold_used(gold.opinions.size(), false);
  std::vector<bool> pred_used(pred.opinions.size(), false);
  std::vector<MatchedPair> matches;
  for (const auto& c : candidates) {
    if (gold_used[c.pair.gold_index] || pred_used[c.pair.pred_index]) continue;
    gold_used[c.pair.gold_index] = true;
    pred_used[c.pair.pred_index] = true;
    matches.push_back(c.pair);
  }
  return matches;
}

PRF sent_graph_f1(const Dataset& gold, const Dataset& pred, bool require_polarity) {
  check_aligned(gold, pred);
  PRF prf;
  for (size_t i = 0; i < gold.size(); ++i) {
    for (const MatchedPair& m : greedy_match(gold[i], pred[i], require_polarity)) {
      prf.tp_p += m.weight_pred;
      prf.tp_r += m.weight_gold;
    }
    prf.denom_p += static_cast<double>(pred[i].opinions.size());
    prf.denom_r += static_cast<double>(gold[i].opinions.size());
  }
  finish_f1(prf);
  return prf;
}

PRF span_f1(const Dataset& gold, const Dataset& pred, Role role) {
  check_aligned(gold, pred);
  auto role_union = [role](const SentimentGraph& g) {
    std::set<int> u;
    for (const Opinion& op : g.opinions) {
      const SpanSet& span = role == Role::Holder   ? op.holder
                            : role == Role::Target ? op.target
                                                   : op.expression;
      u.insert(span.token_indices.begin(), span.token_indices.end());
    }
    return u;
  };
  PRF prf;
  for (size_t i = 0; i < gold.size(); ++i) {
    std::set<int> g = role_union(gold[i]);
    std::set<int> p = role_union(pred[i]);
    double tp = intersection_size(g, p);
    prf.tp_p += tp;
    prf.tp_r += tp;
    prf.denom_p += static_cast<double>(p.size());
    prf.denom_r += static_cast<double>(g.size());
  }
  finish_f1(prf);
  return prf;
}

MetricsReport evaluate(const Dataset& gold, const Dataset& pred) {
  MetricsReport report;
  report.sf1 = sent_graph_f1(gold, pred, true);
  report.nsf1 = sent_graph_f1(gold, pred, false);
  report.span_holder = span_f1(gold, pred, Role::Holder);
  report.span_target = span_f1(gold, pred, Role::Target);
  report.span_expression = span_f1(gold, pred, Role::Expression);
  return report;
}

namespace {

void append_prf_text(std::ostringstream& out, const std::string& key, const PRF& prf) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s.p %.6f\n", key.c_str(), prf.precision);
  out << buf;
  std::snprintf(buf, sizeof(buf), "%s.r %.6f\n", key.c_str(), prf.recall);
  out << buf;
  std::snprintf(buf, sizeof(buf), "%s.f1 %.6f\n", key.c_str(), prf.f1);
  out << buf;
}

nlohmann::ordered_json prf_json(const PRF& prf) {
  nlohmann::ordered_json j;
  j["p"] = prf.precision;
  j["r"] = prf.recall;
  j["f1"] = prf.f1;
  return j;
}

}  // namespace

std::string report_to_text(const MetricsReport& report) {
  std::ostringstream out;
  append_prf_text(out, "sf1", report.sf1);
  append_prf_text(out, "nsf1", report.nsf1);
  append_prf_text(out, "spans.holder", report.span_holder);
  append_prf_text(out, "spans.target", report.span_target);
  append_prf_text(out, "spans.expression", report.span_expression);
  return out.str();
}

std::string report_to_json(const MetricsReport& report) {
  nlohmann::ordered_json j;
  j["sf1"] = prf_json(report.sf1);
  j["nsf1"] = prf_json(report.nsf1);
  j["spans"]["holder"] = prf_json(report.span_holder);
  j["spans"]["target"] = prf_json(report.span_target);
  j["spans"]["expression"] = prf_json(report.span_expression);
  return j.dump(2);
}

}  // namespace sentgraph
