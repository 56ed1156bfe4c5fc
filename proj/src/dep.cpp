#include "sentgraph/dep.hpp"

#include <algorithm>
#include <map>
#include <sstream>
#include <tuple>

namespace sentgraph {

namespace {

int span_head(const SpanSet& span, HeadRule rule) {
  return rule == HeadRule::Last ? *span.token_indices.rbegin() : *span.token_indices.begin();
}

struct ArcSink {
  DepGraph& graph;
  ArcLossStats& loss;
  std::map<std::pair<int, int>, std::string> seen;  // (head, dependent) → first label

  void emit(int head, int dependent, const std::string& label) {
    ++loss.arcs_total;
    auto [it, inserted] = seen.emplace(std::make_pair(head, dependent), label);
    if (!inserted) {
      // Duplicate or conflicting arc on this head/dependent pair: lost either
      // way, the first emitted arc wins.
      ++loss.arcs_lost;
      return;
    }
    graph.arcs.push_back({head, dependent, label});
  }

  void emit_span(const SpanSet& span, HeadRule rule, const char* in_label) {
    int head = span_head(span, rule);
    for (int t : span.token_indices)
      if (t != head) emit(head, t, in_label);
  }
};

}  // namespace

const char* to_string(HeadRule r) { return r == HeadRule::First ? "first" : "last"; }

std::optional<HeadRule> head_rule_from_string(const std::string& s) {
  if (s == "first") return HeadRule::First;
  if (s == "last") return HeadRule::Last;
  return std::nullopt;
}

DepEncodeResult encode_dep(const SentimentGraph& g, HeadRule rule) {
  DepEncodeResult result;
  result.graph.sentence = g.sentence;
  ArcSink sink{result.graph, result.loss, {}};
  for (const Opinion& op : g.opinions) {
    int e = span_head(op.expression, rule);
    sink.emit(kRoot, e, std::string("exp:") + to_string(op.polarity));
    sink.emit_span(op.expression, rule, "IN:exp");
    if (!op.target.empty()) {
      sink.emit(e, span_head(op.target, rule), "targ");
      sink.emit_span(op.target, rule, "IN:targ");
    }
    if (!op.holder.empty()) {
      sink.emit(e, span_head(op.holder, rule), "hold");
      sink.emit_span(op.holder, rule, "IN:hold");
    }
  }
  result.loss.percent_lost = result.loss.arcs_total > 0
                                 ? 100.0 * result.loss.arcs_lost / result.loss.arcs_total
                                 : 0.0;
  return result;
}

DepDecodeResult decode_dep(const DepGraph& d, HeadRule rule) {
  (void)rule;  // decoding reads spans off the arcs; the rule shaped them at encode time
  DepDecodeResult result;
  result.graph.sentence = d.sentence;

  // Role-span members per head token, and the role arcs seeding opinions.
  std::map<std::pair<int, std::string>, std::set<int>> in_members;
  std::vector<const DepArc*> root_arcs;
  std::map<int, std::vector<int>> targ_heads, hold_heads;  // expression head → role heads
  for (const DepArc& arc : d.arcs) {
    if (arc.label.rfind("IN:", 0) == 0) {
      in_members[{arc.head, arc.label.substr(3)}].insert(arc.dependent);
    } else if (arc.label.rfind("exp:", 0) == 0) {
      root_arcs.push_back(&arc);
    } else if (arc.label == "targ") {
      targ_heads[arc.head].push_back(arc.dependent);
    } else if (arc.label == "hold") {
      hold_heads[arc.head].push_back(arc.dependent);
    } else {
      throw std::invalid_argument("unknown dependency label '" + arc.label + "'");
    }
  }

  std::set<std::pair<int, std::string>> consumed;
  auto role_span = [&](int head, const char* role) {
    std::set<int> tokens{head};
    auto it = in_members.find({head, role});
    if (it != in_members.end()) {
      consumed.insert({head, role});
      tokens.insert(it->second.begin(), it->second.end());
    }
    return span_set_from_tokens(d.sentence, tokens);
  };

  for (const DepArc* root_arc : root_arcs) {
    auto polarity = polarity_from_string(root_arc->label.substr(4));
    if (!polarity)
      throw std::invalid_argument("unknown polarity in arc label '" + root_arc->label + "'");
    int e = root_arc->dependent;
    SpanSet expression = role_span(e, "exp");
    std::vector<SpanSet> targets, holders;
    if (auto it = targ_heads.find(e); it != targ_heads.end())
      for (int t : it->second) targets.push_back(role_span(t, "targ"));
    if (auto it = hold_heads.find(e); it != hold_heads.end())
      for (int h : it->second) holders.push_back(role_span(h, "hold"));
    if (targets.empty()) targets.push_back(SpanSet{});
    if (holders.empty()) holders.push_back(SpanSet{});
    for (const SpanSet& h : holders) {
      for (const SpanSet& t : targets) {
        Opinion op;
        op.expression = expression;
        op.holder = h;
        op.target = t;
        op.polarity = *polarity;
        result.graph.opinions.push_back(std::move(op));
      }
    }
  }

  for (const auto& [key, members] : in_members)
    if (!consumed.count(key)) result.dangling_in_arcs += static_cast<int>(members.size());
  return result;
}

PRF roundtrip_sf1(const Dataset& dataset, HeadRule rule) {
  Dataset decoded;
  decoded.reserve(dataset.size());
  for (const SentimentGraph& g : dataset)
    decoded.push_back(decode_dep(encode_dep(g, rule).graph, rule).graph);
  return sent_graph_f1(dataset, decoded, /*require_polarity=*/true);
}

namespace {

void count_role(const std::vector<const SpanSet*>& spans, RoleNesting& stats) {
  for (size_t i = 0; i < spans.size(); ++i) {
    if (spans[i]->empty()) continue;
    ++stats.total;
    for (size_t j = 0; j < spans.size(); ++j) {
      if (i == j || spans[j]->empty()) continue;
      const auto& a = spans[i]->token_indices;
      const auto& b = spans[j]->token_indices;
      if (a.size() < b.size() && std::includes(b.begin(), b.end(), a.begin(), a.end())) {
        ++stats.nested;
        break;
      }
    }
  }
}

}  // namespace

NestingStats nesting_stats(const Dataset& dataset) {
  NestingStats stats;
  for (const SentimentGraph& g : dataset) {
    std::vector<const SpanSet*> holders, targets, expressions;
    for (const Opinion& op : g.opinions) {
      holders.push_back(&op.holder);
      targets.push_back(&op.target);
      expressions.push_back(&op.expression);
    }
    count_role(holders, stats.holder);
    count_role(targets, stats.target);
    count_role(expressions, stats.expression);
  }
  for (RoleNesting* r : {&stats.holder, &stats.target, &stats.expression})
    r->percent = r->total > 0 ? 100.0 * r->nested / r->total : 0.0;
  return stats;
}

DatasetStats dataset_stats(const Dataset& dataset) {
  DatasetStats stats;
  stats.sentences = static_cast<long long>(dataset.size());
  for (const SentimentGraph& g : dataset) {
    for (const Opinion& op : g.opinions) {
      if (!op.holder.empty()) ++stats.holders;
      if (!op.target.empty()) ++stats.targets;
      ++stats.expressions;
      switch (op.polarity) {
        case Polarity::Positive: ++stats.positive; break;
        case Polarity::Neutral: ++stats.neutral; break;
        case Polarity::Negative: ++stats.negative; break;
      }
    }
  }
  return stats;
}

std::string dump_dep(const std::vector<DepGraph>& graphs) {
  std::ostringstream out;
  for (const DepGraph& g : graphs) {
    out << "# sent_id = " << g.sentence.sent_id << '\n';
    out << "# text = " << g.sentence.text << '\n';
    // Arcs grouped per dependent, ordered by (head, label).
    std::vector<std::vector<std::pair<int, std::string>>> by_dep(g.sentence.num_tokens());
    for (const DepArc& arc : g.arcs)
      by_dep[arc.dependent].emplace_back(arc.head + 1, arc.label);  // ROOT (−1) → 0
    for (int t = 0; t < g.sentence.num_tokens(); ++t) {
      std::sort(by_dep[t].begin(), by_dep[t].end());
      out << t + 1 << '\t' << g.sentence.tokens[t].text << '\t';
      if (by_dep[t].empty()) {
        out << "_\t_";
      } else {
        for (size_t k = 0; k < by_dep[t].size(); ++k)
          out << (k ? "|" : "") << by_dep[t][k].first;
        out << '\t';
        for (size_t k = 0; k < by_dep[t].size(); ++k)
          out << (k ? "|" : "") << by_dep[t][k].second;
      }
      out << '\n';
    }
    out << '\n';
  }
  return out.str();
}

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  size_t pos = 0;
  while (true) {
    size_t next = s.find(sep, pos);
    if (next == std::string::npos) {
      out.push_back(s.substr(pos));
      return out;
    }
    out.push_back(s.substr(pos, next - pos));
    pos = next + 1;
  }
}

}  // namespace

std::vector<DepGraph> parse_dep_dump(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::vector<DepGraph> graphs;
  DepGraph current;
  bool in_block = false;
  int expected_index = 1;

  auto flush = [&]() {
    if (in_block) {
      current.sentence.tokens = tokenize(current.sentence.text);
      graphs.push_back(std::move(current));
      current = DepGraph{};
      in_block = false;
      expected_index = 1;
    }
  };

  while (std::getline(in, line)) {
    if (line.empty()) {
      flush();
      continue;
    }
    if (line.rfind("# sent_id = ", 0) == 0) {
      flush();
      current.sentence.sent_id = line.substr(12);
      in_block = true;
      continue;
    }
    if (line.rfind("# text = ", 0) == 0) {
      current.sentence.text = line.substr(9);
      continue;
    }
    std::vector<std::string> cols = split(line, '\t');
    if (cols.size() != 4 || !in_block)
      throw std::invalid_argument("malformed dependency line: " + line);
    int index = std::stoi(cols[0]);
    if (index != expected_index)
      throw std::invalid_argument("non-consecutive token index in: " + line);
    ++expected_index;
    if (cols[2] == "_") continue;
    std::vector<std::string> heads = split(cols[2], '|');
    std::vector<std::string> labels = split(cols[3], '|');
    if (heads.size() != labels.size())
      throw std::invalid_argument("head/label count mismatch in: " + line);
    for (size_t k = 0; k < heads.size(); ++k)
      current.arcs.push_back({std::stoi(heads[k]) - 1, index - 1, labels[k]});
  }
  flush();

  for (DepGraph& g : graphs) {
    for (const DepArc& arc : g.arcs) {
      if (arc.dependent < 0 || arc.dependent >= g.sentence.num_tokens() || arc.head < kRoot ||
          arc.head >= g.sentence.num_tokens())
        throw std::invalid_argument("dependency arc out of range in sentence " +
                                    g.sentence.sent_id);
    }
  }
  return graphs;
}

}  // namespace sentgraph
