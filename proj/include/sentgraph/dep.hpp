#ifndef SENTGRAPH_DEP_HPP
#define SENTGRAPH_DEP_HPP

#include <string>
#include <vector>

#include "sentgraph/data.hpp"
#include "sentgraph/eval.hpp"

namespace sentgraph {

// Lossy bi-lexical dependency encoding: every span is collapsed onto a single
// head token (its first or last token), roles become labeled arcs between
// heads, and remaining span tokens hang off their head via IN:<role> arcs.
// Nested spans that share a head can no longer be told apart, which is the
// motivation for the general graph encodings.

enum class HeadRule { First, Last };

const char* to_string(HeadRule r);
std::optional<HeadRule> head_rule_from_string(const std::string& s);

struct DepArc {
  int head = -1;  // token index, or kRoot
  int dependent = -1;
  std::string label;  // exp:<Polarity> | targ | hold | IN:exp | IN:targ | IN:hold
};

inline constexpr int kRoot = -1;

struct DepGraph {
  Sentence sentence;
  std::vector<DepArc> arcs;  // free of (head, dependent, label) duplicates
};

struct ArcLossStats {
  long long arcs_total = 0;  // arcs the encoding attempted to emit
  long long arcs_lost = 0;   // duplicates plus label conflicts
  double percent_lost = 0.0;

  ArcLossStats& operator+=(const ArcLossStats& o) {
    arcs_total += o.arcs_total;
    arcs_lost += o.arcs_lost;
    percent_lost = arcs_total > 0 ? 100.0 * arcs_lost / arcs_total : 0.0;
    return *this;
  }
};

struct DepEncodeResult {
  DepGraph graph;
  ArcLossStats loss;
};

// Arc emission order per opinion: ROOT→e exp:<P>, IN:exp, e→t targ, IN:targ,
// e→h hold, IN:hold. A duplicate (head, dependent, label) is counted lost and
// kept once; a (head, dependent) clash with a different label is counted lost
// and the first arc wins.
DepEncodeResult encode_dep(const SentimentGraph& g, HeadRule rule);

struct DepDecodeResult {
  SentimentGraph graph;
  int dangling_in_arcs = 0;  // IN arcs whose head never acts as that role
};

// Inverse of encode_dep as far as the arcs allow. Every ROOT exp arc seeds an
// opinion; targ/hold arcs from the expression head contribute role spans
// (head plus its IN:<role> dependents), expanded by the same cross-product
// rule as the graph decoders. The head rule does not influence decoding; the
// parameter is kept so both directions carry the conversion's configuration.
DepDecodeResult decode_dep(const DepGraph& d, HeadRule rule);

// SF1 of decode(encode(dataset)) against the dataset itself.
PRF roundtrip_sf1(const Dataset& dataset, HeadRule rule);

struct RoleNesting {
  long long nested = 0;
  long long total = 0;  // non-empty spans of the role
  double percent = 0.0;
};

struct NestingStats {
  RoleNesting holder;
  RoleNesting target;
  RoleNesting expression;
};

// A span is nested iff its token set is a proper subset of another span of
// the same role within the same sentence. Spans are counted per opinion
// occurrence; empty spans are not spans.
NestingStats nesting_stats(const Dataset& dataset);

struct DatasetStats {
  long long sentences = 0;
  long long holders = 0;      // non-empty holder spans
  long long targets = 0;      // non-empty target spans
  long long expressions = 0;  // always == number of opinions
  long long positive = 0;
  long long neutral = 0;
  long long negative = 0;
};

DatasetStats dataset_stats(const Dataset& dataset);

// CoNLL-like dump: `index<TAB>form<TAB>heads<TAB>labels` with 1-based token
// indices, head 0 for ROOT, multiple arcs joined by `|`, `_` for arc-less
// tokens, `# sent_id =` / `# text =` comments, blank line between sentences.
std::string dump_dep(const std::vector<DepGraph>& graphs);
std::vector<DepGraph> parse_dep_dump(const std::string& text);

}  // namespace sentgraph

#endif  // SENTGRAPH_DEP_HPP
