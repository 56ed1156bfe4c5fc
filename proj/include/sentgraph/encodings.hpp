#ifndef SENTGRAPH_ENCODINGS_HPP
#define SENTGRAPH_ENCODINGS_HPP

#include <map>
#include <set>
#include <string>
#include <vector>

#include "sentgraph/data.hpp"

namespace sentgraph {

// The three general-graph encodings of a sentiment graph. All three are
// lossless; they differ in where labels live and how aggressively nodes are
// shared (see README).
enum class Encoding { OpinionTuple, NodeCentric, LabeledEdge };

const char* to_string(Encoding e);
std::optional<Encoding> encoding_from_string(const std::string& s);

struct GeneralNode {
  std::string label;
  // channel name → anchored token indices. Opinion-tuple nodes use the
  // channels "holder"/"target"/"expression"; the other encodings use the
  // single channel "anchor".
  std::map<std::string, std::set<int>> anchors;
};

struct GeneralEdge {
  int from = -1;
  int to = -1;
  std::string label;  // empty = unlabeled (node-centric)
};

struct GeneralGraph {
  Encoding encoding = Encoding::OpinionTuple;
  Sentence sentence;
  std::vector<GeneralNode> nodes;
  std::vector<GeneralEdge> edges;
};

class EncodingError : public std::runtime_error {
 public:
  explicit EncodingError(const std::string& what) : std::runtime_error(what) {}
};

// Labels in each encoding's vocabulary:
//   opinion-tuple: Positive | Neutral | Negative      (channels h/t/e)
//   node-centric:  Holder | Target | Exp:<Polarity>   (unlabeled edges)
//   labeled-edge:  Span | Root                        (edges Exp:<P>/Target/Holder)
GeneralGraph encode_graph(const SentimentGraph& g, Encoding encoding);

struct DecodeResult {
  SentimentGraph graph;
  int dropped_opinions = 0;  // opinions discarded for an empty expression
};

// Strict decoders: structurally ill-formed graphs (wrong labels, edges from
// non-expression nodes, missing/duplicated root) raise EncodingError.
// Model predictions are sanitized before reaching these.
DecodeResult decode_graph(const GeneralGraph& graph);

// Checks vocabulary closure, anchor validity and edge endpoints; throws
// EncodingError with a description when violated.
void validate_graph(const GeneralGraph& graph);

struct RoundtripReport {
  bool ok = false;
  std::vector<std::string> missing;  // opinion keys present in gold only
  std::vector<std::string> extra;    // opinion keys present in decoded only
};

RoundtripReport roundtrip_check(const SentimentGraph& g, Encoding encoding);

// Plain-text dump: a `# encoding = <name>` header, then one block per
// sentence ("S <sent_id><TAB><text>", nodes ordered by first anchor index
// then label, edges ordered by (from,to,label)). parse_graph_dump inverts it.
std::string dump_graphs(const std::vector<GeneralGraph>& graphs);
std::vector<GeneralGraph> parse_graph_dump(const std::string& text);

}  // namespace sentgraph

#endif  // SENTGRAPH_ENCODINGS_HPP
