#ifndef SENTGRAPH_MODEL_HPP
#define SENTGRAPH_MODEL_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "sentgraph/data.hpp"
#include "sentgraph/encodings.hpp"
#include "sentgraph/hungarian.hpp"
#include "sentgraph/tensor.hpp"

// Text-to-graph parser: a token encoder feeds per-token queries through a
// permutation-equivariant transformer stack (no positional embeddings), and
// classifier heads read node labels, anchors and edges off the queries. Gold
// nodes are matched to queries with a minimum-cost assignment before the loss
// is formed.
namespace sentgraph::model {

struct ModelConfig {
  Encoding encoding = Encoding::OpinionTuple;
  int query_length = 1;  // queries generated per token

  int hidden_size = 64;
  int hidden_size_ff = 256;
  int hidden_size_anchor = 256;
  int hidden_size_edge_label = 256;
  int hidden_size_edge_presence = 256;
  int n_layers = 3;
  int n_attention_heads = 8;
  bool char_embedding = true;
  int char_embedding_size = 128;
  bool pre_norm = true;  // only pre-norm blocks are implemented

  double dropout_anchor = 0.4;
  double dropout_edge_label = 0.5;
  double dropout_edge_presence = 0.5;
  double dropout_label = 0.85;
  double dropout_transformer = 0.25;
  double dropout_transformer_attention = 0.1;
  double dropout_word = 0.1;

  bool focal = true;
  double focal_gamma = 2.0;

  int batch_size = 16;
  int epochs = 200;
  double beta_1 = 0.9;
  double beta_2 = 0.98;
  // The "encoder" group is the token embedding table, everything else is
  // "decoder". With a from-scratch encoder both groups default to the same
  // learning rate.
  double encoder_learning_rate = 6e-4;
  double encoder_weight_decay = 0.1;
  double decoder_learning_rate = 6e-4;
  double decoder_weight_decay = 1.2e-6;
  double layerwise_lr_decay = 0.9;  // accepted for config compatibility; no
                                    // stacked pretrained encoder to apply it to
  double warmup_proportion = 0.1;
  bool freeze_bert = false;               // freeze the encoder group
  bool encoder_freeze_embedding = false;  // same effect at this scale
  std::string encoder = "desk";

  uint64_t seed = 42;

  void validate() const;  // throws std::invalid_argument on bad values
};

struct Vocabulary {
  std::vector<std::string> tokens;  // id → surface form; id 0 is <unk>
  std::vector<std::string> chars;   // id → UTF-8 code point; id 0 is <unk>

  static Vocabulary build(const Dataset& train);
  int token_id(const std::string& form) const;
  std::vector<int> char_ids(const std::string& form) const;

 private:
  std::map<std::string, int> token_index_;
  std::map<std::string, int> char_index_;
  friend struct ModelState;
  void rebuild_index();
};

// Fixed label inventory per encoding. Node label id 0 is always the
// "no node here" class used for unmatched queries.
struct LabelSpace {
  std::vector<std::string> node_labels;
  std::vector<std::string> edge_labels;  // empty when edges are unlabeled/absent
  std::vector<std::string> channels;     // anchor channel names
  bool has_edges = false;
  bool has_edge_labels = false;

  static LabelSpace for_encoding(Encoding e);
  int node_label_id(const std::string& label) const;
  int edge_label_id(const std::string& label) const;
};

struct ModelState {
  ModelConfig config;
  Vocabulary vocab;
  LabelSpace labels;

  std::vector<std::string> names;  // stable order; checkpoints key on these
  std::vector<nn::Mat> values;
  std::vector<nn::Mat> grads;
  std::vector<char> encoder_group;  // 1 = encoder param group

  static ModelState init(const ModelConfig& config, Vocabulary vocab);

  int index_of(const std::string& name) const;  // -1 when absent
  nn::Mat& tensor(const std::string& name);
  const nn::Mat& tensor(const std::string& name) const;
  void zero_grads();
  size_t parameter_count() const;
};

struct QueryPredictions {
  int num_queries = 0;
  int num_tokens = 0;
  // Tape node ids (valid while the originating tape is alive).
  int label_node = -1;
  std::vector<int> anchor_nodes;      // per channel: [Q×T]
  int presence_node = -1;             // [Q×Q] when the encoding has edges
  std::vector<int> edge_label_nodes;  // per edge label: [Q×Q]
};

// Builds the forward graph on `tape`. Dropout fires only when training=true,
// drawing masks from `rng`. `query_order`, when given, permutes the query
// rows right after projection (used by the equivariance tests).
QueryPredictions forward(nn::Tape& tape, ModelState& state, const Sentence& sentence,
                         bool training, nn::Rng& rng,
                         const std::vector<int>* query_order = nullptr);

// Assignment of gold nodes to queries. Node indices below refer to the
// canonical node order (sorted by first anchor, label, anchors), which makes
// the result independent of the gold graph's node permutation.
struct NodeMatch {
  std::vector<int> canonical;      // canonical position → original node index
  std::vector<int> node_to_query;  // per canonical position; -1 = truncated
  int truncated = 0;
  double total_cost = 0.0;
};

// -log p(label) - mean over (channel, token) of log p(anchor indicator),
// computed from the tape's current values (no gradient flows through it).
double matching_cost(const nn::Tape& tape, const QueryPredictions& preds,
                     const LabelSpace& labels, const GeneralNode& node, int query);

NodeMatch match_nodes(const nn::Tape& tape, const QueryPredictions& preds,
                      const LabelSpace& labels, const GeneralGraph& gold);

struct LossBreakdown {
  int loss_node = -1;  // scalar tape node
  double total = 0.0;
  double label = 0.0;
  double anchor = 0.0;
  double edge_presence = 0.0;
  double edge_label = 0.0;
  int truncated_nodes = 0;
};

// Label cross-entropy over every query (unmatched queries train towards the
// null label), anchor BCE for matched queries, and edge presence/label terms
// between matched queries. Focal modulation applies to the label and anchor
// terms when configured. All terms are sums, weighted 1.0.
LossBreakdown build_loss(nn::Tape& tape, const QueryPredictions& preds,
                         const ModelState& state, const GeneralGraph& gold,
                         const NodeMatch& match);

// Convenience: forward + match + loss on one sentence.
LossBreakdown sentence_loss(nn::Tape& tape, ModelState& state, const GeneralGraph& gold,
                            bool training, nn::Rng& rng);

struct PredictStats {
  int dropped_opinions = 0;  // empty-expression opinions discarded
  int dropped_edges = 0;     // structurally invalid edges removed
  int merged_roots = 0;      // extra root nodes folded into the first
  int missing_root = 0;      // labeled-edge prediction without a root
  int decode_failures = 0;   // decoder rejected the sanitized graph

  PredictStats& operator+=(const PredictStats& o);
};

// Thresholded readout: queries whose label argmax is non-null become nodes,
// anchors/edges activate on positive logits. The graph is sanitized (counts
// in `stats`) and decoded; this never throws on any model output.
SentimentGraph predict(const ModelState& state, const Sentence& sentence,
                       PredictStats* stats = nullptr);

// The raw general graph a prediction produces (after sanitizing), for
// inspection and tests.
GeneralGraph predict_graph(const ModelState& state, const Sentence& sentence,
                           PredictStats* stats = nullptr);

struct GradCheckResult {
  double max_rel_error = 0.0;
  int checked = 0;
  std::string worst_tensor;
};

// Central-difference verification of the full training loss (matching frozen,
// dropout disabled) on one gold graph. Samples at least `min_params` entries,
// covering every tensor at least once.
GradCheckResult grad_check(const ModelState& state, const GeneralGraph& gold,
                           int min_params = 200, double epsilon = 1e-5,
                           uint64_t sample_seed = 1234);

}  // namespace sentgraph::model

#endif  // SENTGRAPH_MODEL_HPP
