#include "sentgraph/encodings.hpp"

#include <algorithm>
#include <climits>
#include <sstream>
#include <tuple>

namespace sentgraph {

namespace {

const char kAnchor[] = "anchor";

std::string exp_label(Polarity p) { return std::string("Exp:") + to_string(p); }

std::optional<Polarity> polarity_from_exp_label(const std::string& label) {
  if (label.rfind("Exp:", 0) != 0) return std::nullopt;
  return polarity_from_string(label.substr(4));
}

SpanSet span_from_tokens_checked(const Sentence& s, const std::set<int>& tokens) {
  return span_set_from_tokens(s, tokens);
}

struct NodeKey {
  std::string label;
  std::set<int> tokens;
  bool operator<(const NodeKey& o) const {
    return std::tie(label, tokens) < std::tie(o.label, o.tokens);
  }
};

using EdgeKey = std::tuple<int, int, std::string>;

GeneralGraph encode_opinion_tuple(const SentimentGraph& g) {
  GeneralGraph out;
  out.encoding = Encoding::OpinionTuple;
  out.sentence = g.sentence;
  for (const Opinion& op : g.opinions) {
    GeneralNode node;
    node.label = to_string(op.polarity);
    node.anchors["holder"] = op.holder.token_indices;
    node.anchors["target"] = op.target.token_indices;
    node.anchors["expression"] = op.expression.token_indices;
    out.nodes.push_back(std::move(node));
  }
  return out;
}

GeneralGraph encode_node_centric(const SentimentGraph& g) {
  GeneralGraph out;
  out.encoding = Encoding::NodeCentric;
  out.sentence = g.sentence;
  std::map<NodeKey, int> node_ids;
  std::set<EdgeKey> edge_keys;
  auto intern = [&](const std::string& label, const std::set<int>& tokens) {
    NodeKey key{label, tokens};
    auto it = node_ids.find(key);
    if (it != node_ids.end()) return it->second;
    int id = static_cast<int>(out.nodes.size());
    GeneralNode node;
    node.label = label;
    node.anchors[kAnchor] = tokens;
    out.nodes.push_back(std::move(node));
    node_ids.emplace(std::move(key), id);
    return id;
  };
  for (const Opinion& op : g.opinions) {
    int expr = intern(exp_label(op.polarity), op.expression.token_indices);
    if (!op.holder.empty()) {
      int holder = intern("Holder", op.holder.token_indices);
      if (edge_keys.insert({expr, holder, ""}).second)
        out.edges.push_back({expr, holder, ""});
    }
    if (!op.target.empty()) {
      int target = intern("Target", op.target.token_indices);
      if (edge_keys.insert({expr, target, ""}).second)
        out.edges.push_back({expr, target, ""});
    }
  }
  return out;
}

GeneralGraph encode_labeled_edge(const SentimentGraph& g) {
  GeneralGraph out;
  out.encoding = Encoding::LabeledEdge;
  out.sentence = g.sentence;
  GeneralNode root;
  root.label = "Root";
  root.anchors[kAnchor] = {};
  out.nodes.push_back(std::move(root));
  std::map<std::set<int>, int> span_ids;  // one node per unique text span
  std::set<EdgeKey> edge_keys;
  auto intern = [&](const std::set<int>& tokens) {
    auto it = span_ids.find(tokens);
    if (it != span_ids.end()) return it->second;
    int id = static_cast<int>(out.nodes.size());
    GeneralNode node;
    node.label = "Span";
    node.anchors[kAnchor] = tokens;
    out.nodes.push_back(std::move(node));
    span_ids.emplace(tokens, id);
    return id;
  };
  auto add_edge = [&](int from, int to, const std::string& label) {
    if (edge_keys.insert({from, to, label}).second) out.edges.push_back({from, to, label});
  };
  for (const Opinion& op : g.opinions) {
    int expr = intern(op.expression.token_indices);
    add_edge(0, expr, exp_label(op.polarity));
    if (!op.target.empty()) add_edge(expr, intern(op.target.token_indices), "Target");
    if (!op.holder.empty()) add_edge(expr, intern(op.holder.token_indices), "Holder");
  }
  return out;
}

DecodeResult decode_opinion_tuple(const GeneralGraph& g) {
  DecodeResult result;
  result.graph.sentence = g.sentence;
  for (const GeneralNode& node : g.nodes) {
    auto pol = polarity_from_string(node.label);
    if (!pol) throw EncodingError("opinion-tuple node with non-polarity label '" + node.label + "'");
    auto channel = [&](const char* name) -> std::set<int> {
      auto it = node.anchors.find(name);
      return it == node.anchors.end() ? std::set<int>{} : it->second;
    };
    std::set<int> expr = channel("expression");
    if (expr.empty()) {
      ++result.dropped_opinions;
      continue;
    }
    Opinion op;
    op.expression = span_from_tokens_checked(g.sentence, expr);
    op.holder = span_from_tokens_checked(g.sentence, channel("holder"));
    op.target = span_from_tokens_checked(g.sentence, channel("target"));
    op.polarity = *pol;
    result.graph.opinions.push_back(std::move(op));
  }
  return result;
}

const std::set<int>& anchor_of(const GeneralNode& node) {
  static const std::set<int> kEmpty;
  auto it = node.anchors.find(kAnchor);
  return it == node.anchors.end() ? kEmpty : it->second;
}

// Shared cross-product expansion: one opinion per (holder choice, target
// choice), with a single empty choice when a role has no neighbors.
void expand_opinions(const GeneralGraph& g, int expr_node, Polarity polarity,
                     const std::vector<int>& holders, const std::vector<int>& targets,
                     DecodeResult& result) {
  const std::set<int>& expr = anchor_of(g.nodes[expr_node]);
  if (expr.empty()) {
    ++result.dropped_opinions;
    return;
  }
  std::vector<std::set<int>> holder_choices, target_choices;
  if (holders.empty()) holder_choices.push_back({});
  for (int h : holders) holder_choices.push_back(anchor_of(g.nodes[h]));
  if (targets.empty()) target_choices.push_back({});
  for (int t : targets) target_choices.push_back(anchor_of(g.nodes[t]));
  for (const auto& h : holder_choices) {
    for (const auto& t : target_choices) {
      Opinion op;
      op.expression = span_from_tokens_checked(g.sentence, expr);
      op.holder = span_from_tokens_checked(g.sentence, h);
      op.target = span_from_tokens_checked(g.sentence, t);
      op.polarity = polarity;
      result.graph.opinions.push_back(std::move(op));
    }
  }
}

DecodeResult decode_node_centric(const GeneralGraph& g) {
  DecodeResult result;
  result.graph.sentence = g.sentence;
  int n = static_cast<int>(g.nodes.size());
  std::vector<std::vector<int>> holders(n), targets(n);
  for (const GeneralEdge& e : g.edges) {
    if (!polarity_from_exp_label(g.nodes[e.from].label))
      throw EncodingError("node-centric edge from non-expression node " +
                          std::to_string(e.from) + " ('" + g.nodes[e.from].label + "')");
    if (!e.label.empty())
      throw EncodingError("node-centric edges are unlabeled, found '" + e.label + "'");
    const std::string& to_label = g.nodes[e.to].label;
    if (to_label == "Holder") {
      holders[e.from].push_back(e.to);
    } else if (to_label == "Target") {
      targets[e.from].push_back(e.to);
    } else {
      throw EncodingError("node-centric edge to node labeled '" + to_label +
                          "' (expected Holder or Target)");
    }
  }
  for (int i = 0; i < n; ++i) {
    auto pol = polarity_from_exp_label(g.nodes[i].label);
    if (pol) {
      expand_opinions(g, i, *pol, holders[i], targets[i], result);
    } else if (g.nodes[i].label != "Holder" && g.nodes[i].label != "Target") {
      throw EncodingError("node-centric node with unknown label '" + g.nodes[i].label + "'");
    }
  }
  return result;
}

DecodeResult decode_labeled_edge(const GeneralGraph& g) {
  DecodeResult result;
  result.graph.sentence = g.sentence;
  int root = -1;
  for (int i = 0; i < static_cast<int>(g.nodes.size()); ++i) {
    const std::string& label = g.nodes[i].label;
    if (label == "Root") {
      if (root >= 0) throw EncodingError("labeled-edge graph with more than one root");
      root = i;
    } else if (label != "Span") {
      throw EncodingError("labeled-edge node with unknown label '" + label + "'");
    }
  }
  if (root < 0) throw EncodingError("labeled-edge graph without a root");

  int n = static_cast<int>(g.nodes.size());
  std::vector<std::vector<int>> holders(n), targets(n);
  std::vector<std::pair<int, Polarity>> expressions;  // (node, polarity) per root edge
  std::set<int> is_expression;
  for (const GeneralEdge& e : g.edges) {
    if (auto pol = polarity_from_exp_label(e.label)) {
      if (e.from != root)
        throw EncodingError("polarity edge from non-root node " + std::to_string(e.from));
      expressions.emplace_back(e.to, *pol);
      is_expression.insert(e.to);
    }
  }
  for (const GeneralEdge& e : g.edges) {
    if (polarity_from_exp_label(e.label)) continue;
    if (e.label != "Target" && e.label != "Holder")
      throw EncodingError("labeled-edge edge with unknown label '" + e.label + "'");
    if (!is_expression.count(e.from))
      throw EncodingError(std::string(e.label == "Target" ? "Target" : "Holder") +
                          " edge from non-expression node " + std::to_string(e.from));
    (e.label == "Holder" ? holders : targets)[e.from].push_back(e.to);
  }
  for (const auto& [node, polarity] : expressions)
    expand_opinions(g, node, polarity, holders[node], targets[node], result);
  return result;
}

}  // namespace

const char* to_string(Encoding e) {
  switch (e) {
    case Encoding::OpinionTuple: return "opinion-tuple";
    case Encoding::NodeCentric: return "node-centric";
    case Encoding::LabeledEdge: return "labeled-edge";
  }
  return "?";
}

std::optional<Encoding> encoding_from_string(const std::string& s) {
  if (s == "opinion-tuple") return Encoding::OpinionTuple;
  if (s == "node-centric") return Encoding::NodeCentric;
  if (s == "labeled-edge") return Encoding::LabeledEdge;
  return std::nullopt;
}

GeneralGraph encode_graph(const SentimentGraph& g, Encoding encoding) {
  switch (encoding) {
    case Encoding::OpinionTuple: return encode_opinion_tuple(g);
    case Encoding::NodeCentric: return encode_node_centric(g);
    case Encoding::LabeledEdge: return encode_labeled_edge(g);
  }
  throw EncodingError("unknown encoding");
}

DecodeResult decode_graph(const GeneralGraph& graph) {
  switch (graph.encoding) {
    case Encoding::OpinionTuple: return decode_opinion_tuple(graph);
    case Encoding::NodeCentric: return decode_node_centric(graph);
    case Encoding::LabeledEdge: return decode_labeled_edge(graph);
  }
  throw EncodingError("unknown encoding");
}

void validate_graph(const GeneralGraph& g) {
  int n = static_cast<int>(g.nodes.size());
  int num_tokens = g.sentence.num_tokens();
  for (int i = 0; i < n; ++i) {
    const GeneralNode& node = g.nodes[i];
    bool label_ok = false;
    switch (g.encoding) {
      case Encoding::OpinionTuple:
        label_ok = polarity_from_string(node.label).has_value();
        break;
      case Encoding::NodeCentric:
        label_ok = node.label == "Holder" || node.label == "Target" ||
                   polarity_from_exp_label(node.label).has_value();
        break;
      case Encoding::LabeledEdge:
        label_ok = node.label == "Span" || node.label == "Root";
        break;
    }
    if (!label_ok)
      throw EncodingError("node " + std::to_string(i) + " label '" + node.label +
                          "' is outside the encoding vocabulary");
    for (const auto& [channel, tokens] : node.anchors) {
      for (int t : tokens) {
        if (t < 0 || t >= num_tokens)
          throw EncodingError("node " + std::to_string(i) + " channel " + channel +
                              " anchors out-of-range token " + std::to_string(t));
      }
    }
  }
  for (const GeneralEdge& e : g.edges) {
    if (e.from < 0 || e.from >= n || e.to < 0 || e.to >= n)
      throw EncodingError("edge endpoint out of range");
    bool labeled = !e.label.empty();
    if (labeled != (g.encoding == Encoding::LabeledEdge))
      throw EncodingError(labeled ? "unexpected edge label '" + e.label + "'"
                                  : "missing edge label");
    if (g.encoding == Encoding::OpinionTuple)
      throw EncodingError("opinion-tuple graphs carry no edges");
  }
}

RoundtripReport roundtrip_check(const SentimentGraph& g, Encoding encoding) {
  DecodeResult decoded = decode_graph(encode_graph(g, encoding));
  RoundtripReport report;
  std::vector<std::string> gold_keys, back_keys;
  for (const Opinion& op : g.opinions) gold_keys.push_back(opinion_key(op));
  for (const Opinion& op : decoded.graph.opinions) back_keys.push_back(opinion_key(op));
  std::sort(gold_keys.begin(), gold_keys.end());
  std::sort(back_keys.begin(), back_keys.end());
  std::set_difference(gold_keys.begin(), gold_keys.end(), back_keys.begin(), back_keys.end(),
                      std::back_inserter(report.missing));
  std::set_difference(back_keys.begin(), back_keys.end(), gold_keys.begin(), gold_keys.end(),
                      std::back_inserter(report.extra));
  report.ok = report.missing.empty() && report.extra.empty() && decoded.dropped_opinions == 0;
  return report;
}

namespace {

std::string format_tokens(const std::set<int>& tokens) {
  std::string out;
  for (int t : tokens) {
    if (!out.empty()) out += ',';
    out += std::to_string(t);
  }
  return out;
}

std::set<int> parse_tokens(const std::string& text) {
  std::set<int> out;
  size_t pos = 0;
  while (pos < text.size()) {
    size_t comma = text.find(',', pos);
    if (comma == std::string::npos) comma = text.size();
    out.insert(std::stoi(text.substr(pos, comma - pos)));
    pos = comma + 1;
  }
  return out;
}

int first_anchor(const GeneralNode& node) {
  int best = INT_MAX;
  for (const auto& [channel, tokens] : node.anchors)
    if (!tokens.empty()) best = std::min(best, *tokens.begin());
  return best;
}

}  // namespace

std::string dump_graphs(const std::vector<GeneralGraph>& graphs) {
  std::ostringstream out;
  if (graphs.empty()) return out.str();
  out << "# encoding = " << to_string(graphs.front().encoding) << "\n";
  for (const GeneralGraph& g : graphs) {
    if (g.encoding != graphs.front().encoding)
      throw EncodingError("dump_graphs: mixed encodings in one dump");
    out << "S " << g.sentence.sent_id << '\t' << g.sentence.text << '\n';

    // Stable order: first anchor index, then label, then original id.
    std::vector<int> order(g.nodes.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      int fa = first_anchor(g.nodes[a]), fb = first_anchor(g.nodes[b]);
      if (fa != fb) return fa < fb;
      if (g.nodes[a].label != g.nodes[b].label) return g.nodes[a].label < g.nodes[b].label;
      return a < b;
    });
    std::vector<int> new_id(g.nodes.size());
    for (size_t pos = 0; pos < order.size(); ++pos) new_id[order[pos]] = static_cast<int>(pos);

    for (size_t pos = 0; pos < order.size(); ++pos) {
      const GeneralNode& node = g.nodes[order[pos]];
      out << 'N' << pos << ' ' << node.label;
      if (g.encoding == Encoding::OpinionTuple) {
        auto channel = [&](const char* name) -> const std::set<int>& {
          static const std::set<int> kEmpty;
          auto it = node.anchors.find(name);
          return it == node.anchors.end() ? kEmpty : it->second;
        };
        out << " holder=" << format_tokens(channel("holder"))
            << " target=" << format_tokens(channel("target"))
            << " expression=" << format_tokens(channel("expression"));
      } else {
        out << " anchor=" << format_tokens(anchor_of(node));
      }
      out << '\n';
    }

    std::vector<GeneralEdge> edges = g.edges;
    for (GeneralEdge& e : edges) {
      e.from = new_id[e.from];
      e.to = new_id[e.to];
    }
    std::sort(edges.begin(), edges.end(), [](const GeneralEdge& a, const GeneralEdge& b) {
      return std::tie(a.from, a.to, a.label) < std::tie(b.from, b.to, b.label);
    });
    for (const GeneralEdge& e : edges)
      out << "E " << e.from << ' ' << e.to << ' ' << (e.label.empty() ? "_" : e.label) << '\n';
    out << '\n';
  }
  return out.str();
}

std::vector<GeneralGraph> parse_graph_dump(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::optional<Encoding> encoding;
  std::vector<GeneralGraph> graphs;
  GeneralGraph current;
  bool in_block = false;

  auto flush = [&]() {
    if (in_block) {
      graphs.push_back(std::move(current));
      current = GeneralGraph{};
      in_block = false;
    }
  };

  while (std::getline(in, line)) {
    if (line.empty()) {
      flush();
      continue;
    }
    if (line.rfind("# encoding = ", 0) == 0) {
      encoding = encoding_from_string(line.substr(13));
      if (!encoding) throw EncodingError("graph dump with unknown encoding header: " + line);
      continue;
    }
    if (line.rfind("S ", 0) == 0) {
      flush();
      if (!encoding) throw EncodingError("graph dump is missing the encoding header");
      size_t tab = line.find('\t');
      if (tab == std::string::npos) throw EncodingError("malformed sentence line: " + line);
      current.encoding = *encoding;
      current.sentence.sent_id = line.substr(2, tab - 2);
      current.sentence.text = line.substr(tab + 1);
      current.sentence.tokens = tokenize(current.sentence.text);
      in_block = true;
      continue;
    }
    if (!in_block) throw EncodingError("graph dump line outside a sentence block: " + line);
    std::istringstream fields(line);
    std::string head;
    fields >> head;
    if (head == "E") {
      GeneralEdge e;
      std::string label;
      if (!(fields >> e.from >> e.to >> label))
        throw EncodingError("malformed edge line: " + line);
      e.label = label == "_" ? "" : label;
      current.edges.push_back(std::move(e));
    } else if (!head.empty() && head[0] == 'N') {
      if (std::stoi(head.substr(1)) != static_cast<int>(current.nodes.size()))
        throw EncodingError("non-consecutive node id in dump: " + line);
      GeneralNode node;
      if (!(fields >> node.label)) throw EncodingError("malformed node line: " + line);
      std::string part;
      while (fields >> part) {
        size_t eq = part.find('=');
        if (eq == std::string::npos) throw EncodingError("malformed anchor field: " + part);
        node.anchors[part.substr(0, eq)] = parse_tokens(part.substr(eq + 1));
      }
      current.nodes.push_back(std::move(node));
    } else {
      throw EncodingError("unrecognized graph dump line: " + line);
    }
  }
  flush();
  for (const GeneralGraph& g : graphs) validate_graph(g);
  return graphs;
}

}  // namespace sentgraph
