#include "sentgraph/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>
#include <stdexcept>

namespace sentgraph::model {

namespace {

double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

int argmax_row(const nn::Mat& m, int row) {
  int best = 0;
  for (int j = 1; j < m.cols; ++j) {
    if (m.at(row, j) > m.at(row, best)) best = j;
  }
  return best;
}

}  // namespace

void ModelConfig::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("config: " + what); };
  if (hidden_size <= 0) fail("hidden_size must be positive");
  if (query_length < 1) fail("query_length must be at least 1");
  if (n_layers < 0) fail("n_layers must be non-negative");
  if (n_attention_heads < 1) fail("n_attention_heads must be at least 1");
  if (hidden_size % n_attention_heads != 0) fail("n_attention_heads must divide hidden_size");
  if (hidden_size_ff <= 0 || hidden_size_anchor <= 0 || hidden_size_edge_label <= 0 ||
      hidden_size_edge_presence <= 0) {
    fail("all hidden sizes must be positive");
  }
  if (char_embedding && char_embedding_size <= 0) fail("char_embedding_size must be positive");
  for (double p : {dropout_anchor, dropout_edge_label, dropout_edge_presence, dropout_label,
                   dropout_transformer, dropout_transformer_attention, dropout_word}) {
    if (p < 0.0 || p >= 1.0) fail("dropout rates must lie in [0, 1)");
  }
  if (focal_gamma < 0.0) fail("focal_gamma must be non-negative");
  if (batch_size < 1) fail("batch_size must be at least 1");
  if (epochs < 1) fail("epochs must be at least 1");
  if (beta_1 < 0.0 || beta_1 >= 1.0 || beta_2 < 0.0 || beta_2 >= 1.0) {
    fail("betas must lie in [0, 1)");
  }
  if (encoder_learning_rate <= 0.0 || decoder_learning_rate <= 0.0) {
    fail("learning rates must be positive");
  }
  if (encoder_weight_decay < 0.0 || decoder_weight_decay < 0.0) {
    fail("weight decay must be non-negative");
  }
  if (warmup_proportion < 0.0 || warmup_proportion > 1.0) {
    fail("warmup_proportion must lie in [0, 1]");
  }
  if (!pre_norm) fail("only pre-norm transformer blocks are implemented");
}

Vocabulary Vocabulary::build(const Dataset& train) {
  std::set<std::string> forms, cps;
  for (const SentimentGraph& g : train) {
    for (const Token& tok : g.sentence.tokens) {
      forms.insert(tok.text);
      for (uint32_t cp : decode_utf8(tok.text)) cps.insert(encode_utf8(cp));
    }
  }
  Vocabulary v;
  v.tokens.push_back("<unk>");
  v.chars.push_back("<unk>");
  for (const std::string& f : forms) v.tokens.push_back(f);
  for (const std::string& c : cps) v.chars.push_back(c);
  v.rebuild_index();
  return v;
}

void Vocabulary::rebuild_index() {
  token_index_.clear();
  char_index_.clear();
  for (size_t i = 1; i < tokens.size(); ++i) token_index_[tokens[i]] = static_cast<int>(i);
  for (size_t i = 1; i < chars.size(); ++i) char_index_[chars[i]] = static_cast<int>(i);
}

int Vocabulary::token_id(const std::string& form) const {
  auto it = token_index_.find(form);
  return it == token_index_.end() ? 0 : it->second;
}

std::vector<int> Vocabulary::char_ids(const std::string& form) const {
  std::vector<int> out;
  for (uint32_t cp : decode_utf8(form)) {
    auto it = char_index_.find(encode_utf8(cp));
    out.push_back(it == char_index_.end() ? 0 : it->second);
  }
  return out;
}

LabelSpace LabelSpace::for_encoding(Encoding e) {
  LabelSpace ls;
  switch (e) {
    case Encoding::OpinionTuple:
      ls.node_labels = {"<null>", "Negative", "Neutral", "Positive"};
      ls.channels = {"expression", "holder", "target"};
      break;
    case Encoding::NodeCentric:
      ls.node_labels = {"<null>", "Exp:Negative", "Exp:Neutral", "Exp:Positive",
                        "Holder", "Target"};
      ls.channels = {"anchor"};
      ls.has_edges = true;
      break;
    case Encoding::LabeledEdge:
      ls.node_labels = {"<null>", "Root", "Span"};
      ls.channels = {"anchor"};
      ls.has_edges = true;
      ls.has_edge_labels = true;
      ls.edge_labels = {"Exp:Negative", "Exp:Neutral", "Exp:Positive", "Holder", "Target"};
      break;
  }
  return ls;
}

int LabelSpace::node_label_id(const std::string& label) const {
  for (size_t i = 0; i < node_labels.size(); ++i) {
    if (node_labels[i] == label) return static_cast<int>(i);
  }
  throw std::invalid_argument("unknown node label '" + label + "'");
}

int LabelSpace::edge_label_id(const std::string& label) const {
  for (size_t i = 0; i < edge_labels.size(); ++i) {
    if (edge_labels[i] == label) return static_cast<int>(i);
  }
  throw std::invalid_argument("unknown edge label '" + label + "'");
}

ModelState ModelState::init(const ModelConfig& config, Vocabulary vocab) {
  config.validate();
  ModelState s;
  s.config = config;
  s.vocab = std::move(vocab);
  s.vocab.rebuild_index();
  s.labels = LabelSpace::for_encoding(config.encoding);

  nn::Rng rng(config.seed);
  auto add = [&](const std::string& name, nn::Mat value, bool encoder) {
    s.names.push_back(name);
    s.grads.emplace_back(value.rows, value.cols);
    s.values.push_back(std::move(value));
    s.encoder_group.push_back(encoder ? 1 : 0);
  };
  auto xavier = [&](int r, int c) { return nn::xavier_init(r, c, rng); };

  const int h = config.hidden_size;
  add("token_embedding", nn::normal_init(static_cast<int>(s.vocab.tokens.size()), h, 0.1, rng),
      /*encoder=*/true);

  if (config.char_embedding) {
    const int ce = config.char_embedding_size;  // also the GRU state size
    add("char_embedding", nn::normal_init(static_cast<int>(s.vocab.chars.size()), ce, 0.1, rng),
        false);
    for (const char* dir : {"fwd", "bwd"}) {
      for (const char* gate : {"update", "reset", "cand"}) {
        std::string p = std::string("char_") + dir + "." + gate;
        add(p + ".w", xavier(ce, ce), false);
        add(p + ".u", xavier(ce, ce), false);
        add(p + ".b", nn::Mat(1, ce), false);
      }
    }
    add("char_out.weight", xavier(2 * ce, h), false);
    add("char_out.bias", nn::Mat(1, h), false);
  }

  add("query_proj.weight", xavier(h, config.query_length * h), false);
  add("query_proj.bias", nn::Mat(1, config.query_length * h), false);

  for (int l = 0; l < config.n_layers; ++l) {
    std::string p = "layer." + std::to_string(l) + ".";
    add(p + "ln1.gain", nn::Mat(1, h, 1.0), false);
    add(p + "ln1.bias", nn::Mat(1, h), false);
    for (const char* w : {"wq", "wk", "wv", "wo"}) add(p + "attn." + w, xavier(h, h), false);
    for (const char* b : {"bq", "bk", "bv", "bo"}) add(p + "attn." + b, nn::Mat(1, h), false);
    add(p + "ln2.gain", nn::Mat(1, h, 1.0), false);
    add(p + "ln2.bias", nn::Mat(1, h), false);
    add(p + "ff.w1", xavier(h, config.hidden_size_ff), false);
    add(p + "ff.b1", nn::Mat(1, config.hidden_size_ff), false);
    add(p + "ff.w2", xavier(config.hidden_size_ff, h), false);
    add(p + "ff.b2", nn::Mat(1, h), false);
  }

  add("head.label.weight", xavier(h, static_cast<int>(s.labels.node_labels.size())), false);
  add("head.label.bias", nn::Mat(1, static_cast<int>(s.labels.node_labels.size())), false);

  for (const std::string& c : s.labels.channels) {
    std::string p = "head.anchor." + c;
    add(p + ".u", xavier(h, config.hidden_size_anchor), false);
    add(p + ".v", xavier(h, config.hidden_size_anchor), false);
    add(p + ".bias", nn::Mat(1, 1), false);
  }

  if (s.labels.has_edges) {
    add("head.edge_presence.u", xavier(h, config.hidden_size_edge_presence), false);
    add("head.edge_presence.v", xavier(h, config.hidden_size_edge_presence), false);
    add("head.edge_presence.bias", nn::Mat(1, 1), false);
  }
  if (s.labels.has_edge_labels) {
    const int el = static_cast<int>(s.labels.edge_labels.size());
    add("head.edge_label.u", xavier(h, el * config.hidden_size_edge_label), false);
    add("head.edge_label.v", xavier(h, config.hidden_size_edge_label), false);
    add("head.edge_label.bias", nn::Mat(1, el), false);
  }
  return s;
}

int ModelState::index_of(const std::string& name) const {
  for (size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return static_cast<int>(i);
  }
  return -1;
}

nn::Mat& ModelState::tensor(const std::string& name) {
  int i = index_of(name);
  if (i < 0) throw std::invalid_argument("no parameter named '" + name + "'");
  return values[i];
}

const nn::Mat& ModelState::tensor(const std::string& name) const {
  int i = index_of(name);
  if (i < 0) throw std::invalid_argument("no parameter named '" + name + "'");
  return values[i];
}

void ModelState::zero_grads() {
  for (nn::Mat& g : grads) std::fill(g.data.begin(), g.data.end(), 0.0);
}

size_t ModelState::parameter_count() const {
  size_t n = 0;
  for (const nn::Mat& v : values) n += static_cast<size_t>(v.size());
  return n;
}

namespace {

// Binds parameters lazily onto the tape so each forward pass registers only
// what it touches.
struct ParamBinder {
  nn::Tape& tape;
  ModelState& state;
  std::map<std::string, int> bound;

  int operator()(const std::string& name) {
    auto it = bound.find(name);
    if (it != bound.end()) return it->second;
    int idx = state.index_of(name);
    if (idx < 0) throw std::invalid_argument("no parameter named '" + name + "'");
    int node = tape.param(&state.values[idx], &state.grads[idx]);
    bound.emplace(name, node);
    return node;
  }
};

struct GruCell {
  int wz, uz, bz, wr, ur, br, wh, uh, bh;

  static GruCell bind(ParamBinder& p, const std::string& prefix) {
    return {p(prefix + ".update.w"), p(prefix + ".update.u"), p(prefix + ".update.b"),
            p(prefix + ".reset.w"),  p(prefix + ".reset.u"),  p(prefix + ".reset.b"),
            p(prefix + ".cand.w"),   p(prefix + ".cand.u"),   p(prefix + ".cand.b")};
  }

  // One step: h' = h + z ∘ (h̃ - h).
  int step(nn::Tape& t, int x, int h) const {
    int z = t.sigmoid(t.add(t.add(t.matmul(x, wz), t.matmul(h, uz)), bz));
    int r = t.sigmoid(t.add(t.add(t.matmul(x, wr), t.matmul(h, ur)), br));
    int hc = t.tanh_op(t.add(t.add(t.matmul(x, wh), t.matmul(t.mul(r, h), uh)), bh));
    return t.add(h, t.mul(z, t.sub(hc, h)));
  }

  int run(nn::Tape& t, const std::vector<int>& xs, int h0) const {
    int h = h0;
    for (int x : xs) h = step(t, x, h);
    return h;
  }
};

// (U a)(V b)ᵀ / sqrt(d) + bias, with per-side dropout.
int bilinear(nn::Tape& t, ParamBinder& bind, const std::string& prefix, int a, int b,
             int d, double dropout_p, bool training, nn::Rng& rng) {
  int ad = training ? t.dropout(a, dropout_p, rng) : a;
  int bd = training ? t.dropout(b, dropout_p, rng) : b;
  int left = t.matmul(ad, bind(prefix + ".u"));
  int right = t.matmul(bd, bind(prefix + ".v"));
  int scores = t.affine(t.matmul(left, t.transpose(right)), 1.0 / std::sqrt(double(d)), 0.0);
  return t.add_scalar_broadcast(scores, bind(prefix + ".bias"));
}

std::string anchors_key(const GeneralNode& node) {
  std::ostringstream os;
  for (const auto& [channel, toks] : node.anchors) {
    os << channel << ':';
    for (int t : toks) os << t << ',';
    os << ';';
  }
  return os.str();
}

int first_anchor(const GeneralNode& node) {
  int best = std::numeric_limits<int>::max();
  for (const auto& [channel, toks] : node.anchors) {
    if (!toks.empty()) best = std::min(best, *toks.begin());
  }
  return best;
}

}  // namespace

QueryPredictions forward(nn::Tape& tape, ModelState& state, const Sentence& sentence,
                         bool training, nn::Rng& rng, const std::vector<int>* query_order) {
  const ModelConfig& cfg = state.config;
  const LabelSpace& labels = state.labels;
  const int n = sentence.num_tokens();
  const int num_labels = static_cast<int>(labels.node_labels.size());

  QueryPredictions out;
  out.num_tokens = n;
  if (n == 0) {  // degenerate but legal: a sentence with no tokens
    out.num_queries = 0;
    out.label_node = tape.input(nn::Mat(0, num_labels));
    for (size_t c = 0; c < labels.channels.size(); ++c) {
      out.anchor_nodes.push_back(tape.input(nn::Mat(0, 0)));
    }
    if (labels.has_edges) out.presence_node = tape.input(nn::Mat(0, 0));
    for (size_t l = 0; l < labels.edge_labels.size(); ++l) {
      out.edge_label_nodes.push_back(tape.input(nn::Mat(0, 0)));
    }
    return out;
  }

  ParamBinder bind{tape, state, {}};

  std::vector<int> token_ids;
  for (const Token& tok : sentence.tokens) token_ids.push_back(state.vocab.token_id(tok.text));
  int reps = tape.lookup(bind("token_embedding"), token_ids);

  if (cfg.char_embedding) {
    GruCell fwd = GruCell::bind(bind, "char_fwd");
    GruCell bwd = GruCell::bind(bind, "char_bwd");
    int char_table = bind("char_embedding");
    int h0 = tape.input(nn::Mat(1, cfg.char_embedding_size));
    std::vector<int> finals;
    for (const Token& tok : sentence.tokens) {
      std::vector<int> ids = state.vocab.char_ids(tok.text);
      int emb = tape.lookup(char_table, ids);
      std::vector<int> steps, rsteps;
      for (size_t i = 0; i < ids.size(); ++i) {
        steps.push_back(tape.select_rows(emb, {static_cast<int>(i)}));
      }
      rsteps.assign(steps.rbegin(), steps.rend());
      finals.push_back(tape.concat_cols({fwd.run(tape, steps, h0), bwd.run(tape, rsteps, h0)}));
    }
    int char_reps = tape.add_row_broadcast(
        tape.matmul(tape.concat_rows(finals), bind("char_out.weight")), bind("char_out.bias"));
    reps = tape.add(reps, char_reps);
  }

  if (training) reps = tape.dropout(reps, cfg.dropout_word, rng);

  int queries = tape.reshape(
      tape.add_row_broadcast(tape.matmul(reps, bind("query_proj.weight")),
                             bind("query_proj.bias")),
      n * cfg.query_length, cfg.hidden_size);
  const int Q = n * cfg.query_length;
  if (query_order) {
    if (static_cast<int>(query_order->size()) != Q) {
      throw std::invalid_argument("query_order must be a permutation of all queries");
    }
    queries = tape.select_rows(queries, *query_order);
  }

  const int dh = cfg.hidden_size / cfg.n_attention_heads;
  for (int l = 0; l < cfg.n_layers; ++l) {
    std::string p = "layer." + std::to_string(l) + ".";
    int a_in = tape.layer_norm(queries, bind(p + "ln1.gain"), bind(p + "ln1.bias"));
    int q = tape.add_row_broadcast(tape.matmul(a_in, bind(p + "attn.wq")), bind(p + "attn.bq"));
    int k = tape.add_row_broadcast(tape.matmul(a_in, bind(p + "attn.wk")), bind(p + "attn.bk"));
    int v = tape.add_row_broadcast(tape.matmul(a_in, bind(p + "attn.wv")), bind(p + "attn.bv"));
    std::vector<int> heads;
    for (int hh = 0; hh < cfg.n_attention_heads; ++hh) {
      int qs = tape.slice_cols(q, hh * dh, dh);
      int ks = tape.slice_cols(k, hh * dh, dh);
      int vs = tape.slice_cols(v, hh * dh, dh);
      int scores = tape.affine(tape.matmul(qs, tape.transpose(ks)), 1.0 / std::sqrt(double(dh)), 0.0);
      int probs = tape.row_softmax(scores);
      if (training) probs = tape.dropout(probs, cfg.dropout_transformer_attention, rng);
      heads.push_back(tape.matmul(probs, vs));
    }
    int att = tape.add_row_broadcast(tape.matmul(tape.concat_cols(heads), bind(p + "attn.wo")),
                                     bind(p + "attn.bo"));
    if (training) att = tape.dropout(att, cfg.dropout_transformer, rng);
    queries = tape.add(queries, att);

    int f_in = tape.layer_norm(queries, bind(p + "ln2.gain"), bind(p + "ln2.bias"));
    int ff = tape.add_row_broadcast(
        tape.matmul(tape.gelu(tape.add_row_broadcast(tape.matmul(f_in, bind(p + "ff.w1")),
                                                     bind(p + "ff.b1"))),
                    bind(p + "ff.w2")),
        bind(p + "ff.b2"));
    if (training) ff = tape.dropout(ff, cfg.dropout_transformer, rng);
    queries = tape.add(queries, ff);
  }

  out.num_queries = Q;

  int label_in = training ? tape.dropout(queries, cfg.dropout_label, rng) : queries;
  out.label_node = tape.add_row_broadcast(tape.matmul(label_in, bind("head.label.weight")),
                                          bind("head.label.bias"));

  for (const std::string& c : labels.channels) {
    out.anchor_nodes.push_back(bilinear(tape, bind, "head.anchor." + c, queries, reps,
                                        cfg.hidden_size_anchor, cfg.dropout_anchor, training,
                                        rng));
  }

  if (labels.has_edges) {
    out.presence_node = bilinear(tape, bind, "head.edge_presence", queries, queries,
                                 cfg.hidden_size_edge_presence, cfg.dropout_edge_presence,
                                 training, rng);
  }
  if (labels.has_edge_labels) {
    const int el = static_cast<int>(labels.edge_labels.size());
    const int d = cfg.hidden_size_edge_label;
    int qd = training ? tape.dropout(queries, cfg.dropout_edge_label, rng) : queries;
    int left = tape.matmul(qd, bind("head.edge_label.u"));    // [Q × el·d]
    int right = tape.matmul(qd, bind("head.edge_label.v"));   // [Q × d]
    int right_t = tape.transpose(right);
    int bias = bind("head.edge_label.bias");
    for (int ll = 0; ll < el; ++ll) {
      int block = tape.slice_cols(left, ll * d, d);
      int scores = tape.affine(tape.matmul(block, right_t), 1.0 / std::sqrt(double(d)), 0.0);
      out.edge_label_nodes.push_back(
          tape.add_scalar_broadcast(scores, tape.slice_cols(bias, ll, 1)));
    }
  }
  return out;
}

double matching_cost(const nn::Tape& tape, const QueryPredictions& preds,
                     const LabelSpace& labels, const GeneralNode& node, int query) {
  const nn::Mat& label_logits = tape.value(preds.label_node);
  int label_id = labels.node_label_id(node.label);
  double mx = -1e300;
  for (int j = 0; j < label_logits.cols; ++j) mx = std::max(mx, label_logits.at(query, j));
  double z = 0.0;
  for (int j = 0; j < label_logits.cols; ++j) z += std::exp(label_logits.at(query, j) - mx);
  double cost = -(label_logits.at(query, label_id) - mx - std::log(z));

  const int n_channels = static_cast<int>(labels.channels.size());
  const int terms = n_channels * preds.num_tokens;
  if (terms > 0) {
    double anchor_nll = 0.0;
    for (int c = 0; c < n_channels; ++c) {
      const nn::Mat& logits = tape.value(preds.anchor_nodes[c]);
      auto it = node.anchors.find(labels.channels[c]);
      const std::set<int>* toks = it == node.anchors.end() ? nullptr : &it->second;
      for (int t = 0; t < preds.num_tokens; ++t) {
        double x = logits.at(query, t);
        bool on = toks && toks->count(t) > 0;
        anchor_nll += on ? softplus(-x) : softplus(x);  // -log p(indicator)
      }
    }
    cost += anchor_nll / terms;
  }
  return cost;
}

NodeMatch match_nodes(const nn::Tape& tape, const QueryPredictions& preds,
                      const LabelSpace& labels, const GeneralGraph& gold) {
  NodeMatch m;
  const int n_nodes = static_cast<int>(gold.nodes.size());
  m.canonical.resize(n_nodes);
  for (int i = 0; i < n_nodes; ++i) m.canonical[i] = i;
  std::sort(m.canonical.begin(), m.canonical.end(), [&](int a, int b) {
    const GeneralNode& na = gold.nodes[a];
    const GeneralNode& nb = gold.nodes[b];
    int fa = first_anchor(na), fb = first_anchor(nb);
    if (fa != fb) return fa < fb;
    if (na.label != nb.label) return na.label < nb.label;
    return anchors_key(na) < anchors_key(nb);
  });
  m.node_to_query.assign(n_nodes, -1);
  if (n_nodes == 0) return m;

  std::vector<std::vector<double>> cost(n_nodes, std::vector<double>(preds.num_queries));
  for (int i = 0; i < n_nodes; ++i) {
    for (int q = 0; q < preds.num_queries; ++q) {
      cost[i][q] = matching_cost(tape, preds, labels, gold.nodes[m.canonical[i]], q);
    }
  }

  std::vector<int> rows(n_nodes);
  for (int i = 0; i < n_nodes; ++i) rows[i] = i;
  if (n_nodes > preds.num_queries) {
    // More gold nodes than queries: keep the nodes the model can explain most
    // cheaply, drop the rest.
    std::vector<double> min_cost(n_nodes, std::numeric_limits<double>::infinity());
    for (int i = 0; i < n_nodes; ++i) {
      for (double c : cost[i]) min_cost[i] = std::min(min_cost[i], c);
    }
    std::sort(rows.begin(), rows.end(), [&](int a, int b) {
      if (min_cost[a] != min_cost[b]) return min_cost[a] < min_cost[b];
      return a < b;
    });
    rows.resize(preds.num_queries);
    std::sort(rows.begin(), rows.end());
    m.truncated = n_nodes - preds.num_queries;
  }
  if (rows.empty()) return m;

  std::vector<std::vector<double>> kept;
  for (int r : rows) kept.push_back(cost[r]);
  Matching assignment = hungarian(kept);
  m.total_cost = assignment.total_cost;
  for (size_t i = 0; i < rows.size(); ++i) {
    m.node_to_query[rows[i]] = assignment.assignment[i];
  }
  return m;
}

LossBreakdown build_loss(nn::Tape& tape, const QueryPredictions& preds, const ModelState& state,
                         const GeneralGraph& gold, const NodeMatch& match) {
  const LabelSpace& labels = state.labels;
  const ModelConfig& cfg = state.config;
  const double gamma = cfg.focal ? cfg.focal_gamma : 0.0;
  LossBreakdown out;
  out.truncated_nodes = match.truncated;

  // Kept nodes in canonical order with their queries and original indices.
  std::vector<int> kept_orig, kept_query;
  for (size_t i = 0; i < match.canonical.size(); ++i) {
    if (match.node_to_query[i] >= 0) {
      kept_orig.push_back(match.canonical[i]);
      kept_query.push_back(match.node_to_query[i]);
    }
  }

  std::vector<int> terms;

  std::vector<int> label_targets(preds.num_queries, 0);
  for (size_t i = 0; i < kept_orig.size(); ++i) {
    label_targets[kept_query[i]] = labels.node_label_id(gold.nodes[kept_orig[i]].label);
  }
  int label_term = tape.sum_all(tape.cross_entropy(preds.label_node, label_targets, gamma));
  out.label = tape.item(label_term);
  terms.push_back(label_term);

  if (!kept_orig.empty() && preds.num_tokens > 0) {
    std::vector<int> anchor_terms;
    for (size_t c = 0; c < labels.channels.size(); ++c) {
      int rows = tape.select_rows(preds.anchor_nodes[c], kept_query);
      nn::Mat targets(static_cast<int>(kept_orig.size()), preds.num_tokens);
      for (size_t i = 0; i < kept_orig.size(); ++i) {
        const GeneralNode& node = gold.nodes[kept_orig[i]];
        auto it = node.anchors.find(labels.channels[c]);
        if (it == node.anchors.end()) continue;
        for (int t : it->second) targets.at(static_cast<int>(i), t) = 1.0;
      }
      anchor_terms.push_back(tape.sum_all(tape.bce_with_logits(rows, std::move(targets), gamma)));
    }
    int anchor_term = anchor_terms[0];
    for (size_t i = 1; i < anchor_terms.size(); ++i) anchor_term = tape.add(anchor_term, anchor_terms[i]);
    out.anchor = tape.item(anchor_term);
    terms.push_back(anchor_term);
  }

  if (labels.has_edges && !kept_orig.empty()) {
    std::map<int, int> orig_to_kept;
    for (size_t i = 0; i < kept_orig.size(); ++i) orig_to_kept[kept_orig[i]] = static_cast<int>(i);

    std::set<std::pair<int, int>> present;
    std::vector<std::pair<std::pair<int, int>, int>> labeled_edges;  // (cell, label id)
    for (const GeneralEdge& e : gold.edges) {
      auto fi = orig_to_kept.find(e.from);
      auto ti = orig_to_kept.find(e.to);
      if (fi == orig_to_kept.end() || ti == orig_to_kept.end()) continue;
      std::pair<int, int> cell{kept_query[fi->second], kept_query[ti->second]};
      present.insert(cell);
      if (labels.has_edge_labels) labeled_edges.push_back({cell, labels.edge_label_id(e.label)});
    }

    std::vector<std::pair<int, int>> cells;
    nn::Mat targets(static_cast<int>(kept_query.size() * kept_query.size()), 1);
    int idx = 0;
    for (int a : kept_query) {
      for (int b : kept_query) {
        cells.push_back({a, b});
        targets.at(idx++, 0) = present.count({a, b}) ? 1.0 : 0.0;
      }
    }
    int presence_term = tape.sum_all(tape.bce_with_logits(
        tape.gather(preds.presence_node, cells), std::move(targets), 0.0));
    out.edge_presence = tape.item(presence_term);
    terms.push_back(presence_term);

    if (labels.has_edge_labels && !labeled_edges.empty()) {
      std::sort(labeled_edges.begin(), labeled_edges.end());  // edge-order independence
      std::vector<std::pair<int, int>> edge_cells;
      std::vector<int> edge_targets;
      for (const auto& [cell, lid] : labeled_edges) {
        edge_cells.push_back(cell);
        edge_targets.push_back(lid);
      }
      std::vector<int> cols;
      for (int l = 0; l < static_cast<int>(labels.edge_labels.size()); ++l) {
        cols.push_back(tape.gather(preds.edge_label_nodes[l], edge_cells));
      }
      int edge_logits = tape.concat_cols(cols);
      int edge_term = tape.sum_all(tape.cross_entropy(edge_logits, edge_targets, 0.0));
      out.edge_label = tape.item(edge_term);
      terms.push_back(edge_term);
    }
  }

  int total = terms[0];
  for (size_t i = 1; i < terms.size(); ++i) total = tape.add(total, terms[i]);
  out.loss_node = total;
  out.total = tape.item(total);
  return out;
}

LossBreakdown sentence_loss(nn::Tape& tape, ModelState& state, const GeneralGraph& gold,
                            bool training, nn::Rng& rng) {
  QueryPredictions preds = forward(tape, state, gold.sentence, training, rng);
  NodeMatch match = match_nodes(tape, preds, state.labels, gold);
  return build_loss(tape, preds, state, gold, match);
}

PredictStats& PredictStats::operator+=(const PredictStats& o) {
  dropped_opinions += o.dropped_opinions;
  dropped_edges += o.dropped_edges;
  merged_roots += o.merged_roots;
  missing_root += o.missing_root;
  decode_failures += o.decode_failures;
  return *this;
}

namespace {

bool is_exp_label(const std::string& label) { return label.rfind("Exp:", 0) == 0; }

// Removes structure the strict decoders reject, counting what was dropped.
void sanitize_prediction(GeneralGraph& g, const LabelSpace& labels, PredictStats& stats) {
  if (!labels.has_edges) return;

  if (g.encoding == Encoding::LabeledEdge) {
    std::vector<int> roots;
    for (size_t i = 0; i < g.nodes.size(); ++i) {
      if (g.nodes[i].label == "Root") roots.push_back(static_cast<int>(i));
    }
    if (roots.size() > 1) {
      // Fold every extra root into the first.
      int keep = roots[0];
      std::set<int> extra(roots.begin() + 1, roots.end());
      for (GeneralEdge& e : g.edges) {
        if (extra.count(e.from)) e.from = keep;
        if (extra.count(e.to)) e.to = keep;
      }
      std::vector<int> remap(g.nodes.size());
      std::vector<GeneralNode> nodes;
      for (size_t i = 0; i < g.nodes.size(); ++i) {
        if (extra.count(static_cast<int>(i))) {
          remap[i] = -1;
          continue;
        }
        remap[i] = static_cast<int>(nodes.size());
        nodes.push_back(std::move(g.nodes[i]));
      }
      for (GeneralEdge& e : g.edges) {
        e.from = remap[e.from];
        e.to = remap[e.to];
      }
      g.nodes = std::move(nodes);
      stats.merged_roots += static_cast<int>(extra.size());
      roots = {remap[keep]};
    }
    if (roots.size() == 1) {
      g.nodes[roots[0]].anchors["anchor"].clear();
      int root = roots[0];
      std::set<int> expressions;
      for (const GeneralEdge& e : g.edges) {
        if (is_exp_label(e.label) && e.from == root && e.to != root) expressions.insert(e.to);
      }
      std::vector<GeneralEdge> kept;
      std::set<std::tuple<int, int, std::string>> seen;
      for (const GeneralEdge& e : g.edges) {
        bool ok;
        if (is_exp_label(e.label)) {
          ok = e.from == root && e.to != root;
        } else {
          ok = expressions.count(e.from) > 0;
        }
        if (ok && !seen.insert({e.from, e.to, e.label}).second) ok = false;  // duplicate
        if (ok) kept.push_back(e);
        else ++stats.dropped_edges;
      }
      g.edges = std::move(kept);
    }
  } else {  // node-centric
    std::vector<GeneralEdge> kept;
    for (const GeneralEdge& e : g.edges) {
      const std::string& from = g.nodes[e.from].label;
      const std::string& to = g.nodes[e.to].label;
      if (is_exp_label(from) && (to == "Holder" || to == "Target")) kept.push_back(e);
      else ++stats.dropped_edges;
    }
    g.edges = std::move(kept);
  }
}

}  // namespace

GeneralGraph predict_graph(const ModelState& state, const Sentence& sentence,
                           PredictStats* stats) {
  PredictStats local;
  PredictStats& st = stats ? *stats : local;

  nn::Tape tape;
  nn::Rng rng(0);  // unused: no dropout outside training
  QueryPredictions preds =
      forward(tape, const_cast<ModelState&>(state), sentence, /*training=*/false, rng);

  GeneralGraph g;
  g.encoding = state.config.encoding;
  g.sentence = sentence;

  const nn::Mat& label_logits = tape.value(preds.label_node);
  std::vector<int> node_query;
  for (int q = 0; q < preds.num_queries; ++q) {
    int lid = argmax_row(label_logits, q);
    if (lid == 0) continue;
    GeneralNode node;
    node.label = state.labels.node_labels[lid];
    for (size_t c = 0; c < state.labels.channels.size(); ++c) {
      const nn::Mat& logits = tape.value(preds.anchor_nodes[c]);
      std::set<int>& toks = node.anchors[state.labels.channels[c]];
      for (int t = 0; t < preds.num_tokens; ++t) {
        if (logits.at(q, t) > 0.0) toks.insert(t);
      }
    }
    node_query.push_back(q);
    g.nodes.push_back(std::move(node));
  }

  if (state.labels.has_edges) {
    const nn::Mat& presence = tape.value(preds.presence_node);
    for (size_t i = 0; i < g.nodes.size(); ++i) {
      for (size_t j = 0; j < g.nodes.size(); ++j) {
        if (presence.at(node_query[i], node_query[j]) <= 0.0) continue;
        GeneralEdge e;
        e.from = static_cast<int>(i);
        e.to = static_cast<int>(j);
        if (state.labels.has_edge_labels) {
          int best = 0;
          for (size_t l = 1; l < preds.edge_label_nodes.size(); ++l) {
            if (tape.value(preds.edge_label_nodes[l]).at(node_query[i], node_query[j]) >
                tape.value(preds.edge_label_nodes[best]).at(node_query[i], node_query[j])) {
              best = static_cast<int>(l);
            }
          }
          e.label = state.labels.edge_labels[best];
        }
        g.edges.push_back(std::move(e));
      }
    }
  }

  sanitize_prediction(g, state.labels, st);
  return g;
}

SentimentGraph predict(const ModelState& state, const Sentence& sentence, PredictStats* stats) {
  PredictStats local;
  PredictStats& st = stats ? *stats : local;
  GeneralGraph g = predict_graph(state, sentence, &st);

  if (state.config.encoding == Encoding::LabeledEdge) {
    bool has_root = false;
    for (const GeneralNode& n : g.nodes) has_root = has_root || n.label == "Root";
    if (!has_root) {
      ++st.missing_root;
      SentimentGraph empty;
      empty.sentence = sentence;
      return empty;
    }
  }

  try {
    DecodeResult decoded = decode_graph(g);
    st.dropped_opinions += decoded.dropped_opinions;
    return decoded.graph;
  } catch (const EncodingError&) {
    // The sanitizer is meant to make this unreachable; stay total regardless.
    ++st.decode_failures;
    SentimentGraph empty;
    empty.sentence = sentence;
    return empty;
  }
}

GradCheckResult grad_check(const ModelState& state, const GeneralGraph& gold, int min_params,
                           double epsilon, uint64_t sample_seed) {
  ModelState work = state;
  // Dropout is the only stochastic piece; disable it so the loss is a
  // deterministic function of the parameters.
  work.config.dropout_anchor = work.config.dropout_edge_label = 0.0;
  work.config.dropout_edge_presence = work.config.dropout_label = 0.0;
  work.config.dropout_transformer = work.config.dropout_transformer_attention = 0.0;
  work.config.dropout_word = 0.0;

  nn::Rng rng(0);
  NodeMatch match;
  {
    nn::Tape tape;
    QueryPredictions preds = forward(tape, work, gold.sentence, false, rng);
    match = match_nodes(tape, preds, work.labels, gold);
  }

  auto loss_at = [&]() {
    nn::Tape tape;
    QueryPredictions preds = forward(tape, work, gold.sentence, false, rng);
    return build_loss(tape, preds, work, gold, match);
  };

  work.zero_grads();
  {
    nn::Tape tape;
    QueryPredictions preds = forward(tape, work, gold.sentence, false, rng);
    LossBreakdown loss = build_loss(tape, preds, work, gold, match);
    tape.backward(loss.loss_node);
  }

  // Sample entries: one per tensor first, then uniformly.
  nn::Rng sampler(sample_seed);
  std::vector<std::pair<int, int>> picks;
  std::set<std::pair<int, int>> seen;
  for (size_t t = 0; t < work.values.size(); ++t) {
    int i = sampler.uniform_int(0, work.values[t].size() - 1);
    if (seen.insert({static_cast<int>(t), i}).second) picks.push_back({static_cast<int>(t), i});
  }
  while (static_cast<int>(picks.size()) < min_params) {
    int t = sampler.uniform_int(0, static_cast<int>(work.values.size()) - 1);
    int i = sampler.uniform_int(0, work.values[t].size() - 1);
    if (seen.insert({t, i}).second) picks.push_back({t, i});
  }

  GradCheckResult result;
  for (auto [t, i] : picks) {
    double saved = work.values[t].data[i];
    work.values[t].data[i] = saved + epsilon;
    double up = loss_at().total;
    work.values[t].data[i] = saved - epsilon;
    double down = loss_at().total;
    work.values[t].data[i] = saved;
    double numeric = (up - down) / (2.0 * epsilon);
    double analytic = work.grads[t].data[i];
    double rel = std::abs(analytic - numeric) /
                 std::max({1.0, std::abs(analytic), std::abs(numeric)});
    if (rel > result.max_rel_error) {
      result.max_rel_error = rel;
      result.worst_tensor = work.names[t];
    }
    ++result.checked;
  }
  return result;
}

}  // namespace sentgraph::model
