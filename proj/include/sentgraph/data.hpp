#ifndef SENTGRAPH_DATA_HPP
#define SENTGRAPH_DATA_HPP

#include <cstdint>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace sentgraph {

// Character offsets throughout are in Unicode scalar values (code points),
// not bytes: the datasets carry Python-style character offsets.

struct Token {
  std::string text;
  int char_start = 0;  // inclusive
  int char_end = 0;    // exclusive
};

struct Sentence {
  std::string sent_id;
  std::string text;
  std::vector<Token> tokens;

  int num_tokens() const { return static_cast<int>(tokens.size()); }
};

// A possibly empty, possibly discontinuous set of character ranges over a
// sentence, plus the token indices it covers.
struct SpanSet {
  std::vector<std::pair<int, int>> ranges;  // sorted, non-overlapping, [begin,end)
  std::set<int> token_indices;

  bool empty() const { return token_indices.empty(); }
};

enum class Polarity { Positive, Neutral, Negative };

const char* to_string(Polarity p);
std::optional<Polarity> polarity_from_string(const std::string& s);

struct Opinion {
  SpanSet holder;      // may be empty
  SpanSet target;      // may be empty
  SpanSet expression;  // never empty in a valid opinion
  Polarity polarity = Polarity::Neutral;
  std::optional<std::string> intensity;  // preserved on round trip, unused otherwise
};

struct SentimentGraph {
  Sentence sentence;
  std::vector<Opinion> opinions;
};

using Dataset = std::vector<SentimentGraph>;

class ParseError : public std::runtime_error {
 public:
  ParseError(std::string sent_id, std::string field, const std::string& what)
      : std::runtime_error("parse error [sent_id=" + (sent_id.empty() ? "?" : sent_id) +
                           ", field=" + field + "]: " + what),
        sent_id(std::move(sent_id)),
        field(std::move(field)) {}
  std::string sent_id;
  std::string field;
};

// UTF-8 helpers. Offsets are code-point indices into the decoded string.
std::vector<uint32_t> decode_utf8(const std::string& s);
std::string encode_utf8(uint32_t cp);
// Slice [begin,end) in code points, returned re-encoded as UTF-8.
std::string utf8_slice(const std::string& s, int begin, int end);
int utf8_length(const std::string& s);

// Whitespace tokenizer: tokens are maximal runs of non-space characters.
std::vector<Token> tokenize(const std::string& text);

// Token index is included iff its character interval overlaps a range by at
// least one character. Throws std::out_of_range on out-of-bounds ranges.
std::set<int> span_to_tokens(const Sentence& sentence,
                             const std::vector<std::pair<int, int>>& ranges);

// Builds a SpanSet from explicit character ranges (sorted and validated).
SpanSet make_span_set(const Sentence& sentence,
                      const std::vector<std::pair<int, int>>& ranges);
// Builds a SpanSet from a token-index set; contiguous token runs merge into
// single character ranges.
SpanSet span_set_from_tokens(const Sentence& sentence, const std::set<int>& tokens);

// Community JSON dataset format, bit-exact per the schema in the README.
Dataset parse_dataset(const std::string& json_text);
std::string serialize_dataset(const Dataset& graphs);

Dataset load_dataset_file(const std::string& path);
void save_dataset_file(const Dataset& graphs, const std::string& path);

// Opinion and graph equality: SpanSets compare as token-index sets, opinion
// order carries no meaning (multiset semantics).
bool opinions_equal(const Opinion& a, const Opinion& b);
bool graphs_equal(const SentimentGraph& a, const SentimentGraph& b);
bool datasets_equal(const Dataset& a, const Dataset& b);

// Canonical sort key used wherever opinions need a deterministic order.
std::string opinion_key(const Opinion& op);

}  // namespace sentgraph

#endif  // SENTGRAPH_DATA_HPP
