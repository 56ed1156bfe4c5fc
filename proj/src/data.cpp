#include "sentgraph/data.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace sentgraph {

using ordered_json = nlohmann::ordered_json;

const char* to_string(Polarity p) {
  switch (p) {
    case Polarity::Positive: return "Positive";
    case Polarity::Neutral: return "Neutral";
    case Polarity::Negative: return "Negative";
  }
  return "?";
}

std::optional<Polarity> polarity_from_string(const std::string& s) {
  if (s == "Positive") return Polarity::Positive;
  if (s == "Neutral") return Polarity::Neutral;
  if (s == "Negative") return Polarity::Negative;
  return std::nullopt;
}

std::vector<uint32_t> decode_utf8(const std::string& s) {
  std::vector<uint32_t> out;
  out.reserve(s.size());
  size_t i = 0;
  while (i < s.size()) {
    unsigned char c = static_cast<unsigned char>(s[i]);
    uint32_t cp = 0;
    int extra = 0;
    if (c < 0x80) {
      cp = c;
    } else if ((c >> 5) == 0x6) {
      cp = c & 0x1f;
      extra = 1;
    } else if ((c >> 4) == 0xe) {
      cp = c & 0x0f;
      extra = 2;
    } else if ((c >> 3) == 0x1e) {
      cp = c & 0x07;
      extra = 3;
    } else {
      throw std::runtime_error("invalid UTF-8 byte at offset " + std::to_string(i));
    }
    if (i + extra >= s.size()) throw std::runtime_error("truncated UTF-8 sequence");
    for (int k = 1; k <= extra; ++k) {
      unsigned char cc = static_cast<unsigned char>(s[i + k]);
      if ((cc >> 6) != 0x2) throw std::runtime_error("invalid UTF-8 continuation byte");
      cp = (cp << 6) | (cc & 0x3f);
    }
    out.push_back(cp);
    i += extra + 1;
  }
  return out;
}

namespace {

void encode_utf8(uint32_t cp, std::string& out) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xc0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3f)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xe0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3f)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3f)));
  } else {
    out.push_back(static_cast<char>(0xf0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3f)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3f)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3f)));
  }
}

bool is_space_cp(uint32_t cp) {
  return cp == ' ' || cp == '\t' || cp == '\n' || cp == '\r' || cp == '\v' || cp == '\f';
}

}  // namespace

std::string encode_utf8(uint32_t cp) {
  std::string out;
  encode_utf8(cp, out);
  return out;
}

std::string utf8_slice(const std::string& s, int begin, int end) {
  std::vector<uint32_t> cps = decode_utf8(s);
  if (begin < 0 || end > static_cast<int>(cps.size()) || begin > end)
    throw std::out_of_range("utf8_slice out of range");
  std::string out;
  for (int i = begin; i < end; ++i) encode_utf8(cps[i], out);
  return out;
}

int utf8_length(const std::string& s) { return static_cast<int>(decode_utf8(s).size()); }

std::vector<Token> tokenize(const std::string& text) {
  std::vector<Token> tokens;
  std::vector<uint32_t> cps = decode_utf8(text);
  int n = static_cast<int>(cps.size());
  int i = 0;
  while (i < n) {
    while (i < n && is_space_cp(cps[i])) ++i;
    if (i >= n) break;
    int start = i;
    std::string form;
    while (i < n && !is_space_cp(cps[i])) {
      encode_utf8(cps[i], form);
      ++i;
    }
    tokens.push_back(Token{std::move(form), start, i});
  }
  return tokens;
}

std::set<int> span_to_tokens(const Sentence& sentence,
                             const std::vector<std::pair<int, int>>& ranges) {
  int text_len = utf8_length(sentence.text);
  std::set<int> out;
  for (const auto& [b, e] : ranges) {
    if (b < 0 || e > text_len || b >= e)
      throw std::out_of_range("span range " + std::to_string(b) + ":" + std::to_string(e) +
                              " out of bounds for sentence of length " + std::to_string(text_len));
    for (int t = 0; t < sentence.num_tokens(); ++t) {
      const Token& tok = sentence.tokens[t];
      if (tok.char_start < e && b < tok.char_end) out.insert(t);
    }
  }
  return out;
}

SpanSet make_span_set(const Sentence& sentence,
                      const std::vector<std::pair<int, int>>& ranges) {
  SpanSet span;
  span.ranges = ranges;
  std::sort(span.ranges.begin(), span.ranges.end());
  for (size_t i = 1; i < span.ranges.size(); ++i) {
    if (span.ranges[i].first < span.ranges[i - 1].second)
      throw std::invalid_argument("overlapping span ranges");
  }
  span.token_indices = span_to_tokens(sentence, span.ranges);
  return span;
}

SpanSet span_set_from_tokens(const Sentence& sentence, const std::set<int>& tokens) {
  SpanSet span;
  span.token_indices = tokens;
  int prev = -2;
  for (int t : tokens) {
    if (t < 0 || t >= sentence.num_tokens())
      throw std::out_of_range("token index out of range");
    if (t == prev + 1 && !span.ranges.empty()) {
      span.ranges.back().second = sentence.tokens[t].char_end;
    } else {
      span.ranges.emplace_back(sentence.tokens[t].char_start, sentence.tokens[t].char_end);
    }
    prev = t;
  }
  return span;
}

namespace {

SpanSet parse_span_field(const ordered_json& field, const Sentence& sentence,
                         const std::string& sent_id, const std::string& name) {
  if (!field.is_array() || field.size() != 2 || !field[0].is_array() || !field[1].is_array())
    throw ParseError(sent_id, name, "expected [[surfaces],[offsets]]");
  const auto& surfaces = field[0];
  const auto& offsets = field[1];
  if (surfaces.size() != offsets.size())
    throw ParseError(sent_id, name, "surface and offset lists differ in length");
  std::vector<std::pair<int, int>> ranges;
  for (size_t i = 0; i < offsets.size(); ++i) {
    if (!offsets[i].is_string() || !surfaces[i].is_string())
      throw ParseError(sent_id, name, "surface/offset entries must be strings");
    const std::string off = offsets[i].get<std::string>();
    size_t colon = off.find(':');
    if (colon == std::string::npos)
      throw ParseError(sent_id, name, "offset '" + off + "' is not of the form begin:end");
    int b = 0, e = 0;
    try {
      b = std::stoi(off.substr(0, colon));
      e = std::stoi(off.substr(colon + 1));
    } catch (const std::exception&) {
      throw ParseError(sent_id, name, "non-integer offset in '" + off + "'");
    }
    int text_len = utf8_length(sentence.text);
    if (b < 0 || e > text_len || b >= e)
      throw ParseError(sent_id, name, "offset '" + off + "' out of bounds or empty");
    const std::string slice = utf8_slice(sentence.text, b, e);
    if (slice != surfaces[i].get<std::string>())
      throw ParseError(sent_id, name, "declared surface '" + surfaces[i].get<std::string>() +
                                          "' does not match text slice '" + slice + "'");
    ranges.emplace_back(b, e);
  }
  std::sort(ranges.begin(), ranges.end());
  for (size_t i = 1; i < ranges.size(); ++i) {
    if (ranges[i].first < ranges[i - 1].second)
      throw ParseError(sent_id, name, "crossing or duplicate offset ranges");
  }
  SpanSet span;
  span.ranges = std::move(ranges);
  span.token_indices = span_to_tokens(sentence, span.ranges);
  return span;
}

}  // namespace

Dataset parse_dataset(const std::string& json_text) {
  ordered_json root;
  try {
    root = ordered_json::parse(json_text);
  } catch (const std::exception& ex) {
    throw ParseError("", "document", std::string("malformed JSON: ") + ex.what());
  }
  if (!root.is_array()) throw ParseError("", "document", "top level must be an array");

  Dataset out;
  std::set<std::string> seen_ids;
  for (const auto& item : root) {
    if (!item.is_object()) throw ParseError("", "document", "array element is not an object");
    if (!item.contains("sent_id") || !item["sent_id"].is_string())
      throw ParseError("", "sent_id", "missing or non-string sent_id");
    SentimentGraph g;
    g.sentence.sent_id = item["sent_id"].get<std::string>();
    const std::string& sid = g.sentence.sent_id;
    if (!seen_ids.insert(sid).second)
      throw ParseError(sid, "sent_id", "duplicate sent_id in dataset");
    if (!item.contains("text") || !item["text"].is_string())
      throw ParseError(sid, "text", "missing or non-string text");
    g.sentence.text = item["text"].get<std::string>();
    g.sentence.tokens = tokenize(g.sentence.text);
    if (!item.contains("opinions") || !item["opinions"].is_array())
      throw ParseError(sid, "opinions", "missing or non-array opinions");
    for (const auto& op_json : item["opinions"]) {
      if (!op_json.is_object()) throw ParseError(sid, "opinions", "opinion is not an object");
      for (const char* key : {"Source", "Target", "Polar_expression", "Polarity"}) {
        if (!op_json.contains(key)) throw ParseError(sid, key, "missing required key");
      }
      Opinion op;
      op.holder = parse_span_field(op_json["Source"], g.sentence, sid, "Source");
      op.target = parse_span_field(op_json["Target"], g.sentence, sid, "Target");
      op.expression = parse_span_field(op_json["Polar_expression"], g.sentence, sid,
                                       "Polar_expression");
      if (op.expression.empty())
        throw ParseError(sid, "Polar_expression", "opinion has empty polar expression");
      if (!op_json["Polarity"].is_string())
        throw ParseError(sid, "Polarity", "polarity must be a string");
      auto pol = polarity_from_string(op_json["Polarity"].get<std::string>());
      if (!pol)
        throw ParseError(sid, "Polarity",
                         "unknown polarity '" + op_json["Polarity"].get<std::string>() + "'");
      op.polarity = *pol;
      if (op_json.contains("Intensity")) {
        if (!op_json["Intensity"].is_string())
          throw ParseError(sid, "Intensity", "intensity must be a string");
        op.intensity = op_json["Intensity"].get<std::string>();
      }
      g.opinions.push_back(std::move(op));
    }
    out.push_back(std::move(g));
  }
  return out;
}

namespace {

ordered_json span_to_json(const SpanSet& span, const Sentence& sentence) {
  ordered_json surfaces = ordered_json::array();
  ordered_json offsets = ordered_json::array();
  for (const auto& [b, e] : span.ranges) {
    surfaces.push_back(utf8_slice(sentence.text, b, e));
    offsets.push_back(std::to_string(b) + ":" + std::to_string(e));
  }
  return ordered_json::array({surfaces, offsets});
}

}  // namespace

std::string serialize_dataset(const Dataset& graphs) {
  ordered_json root = ordered_json::array();
  for (const auto& g : graphs) {
    ordered_json item;
    item["sent_id"] = g.sentence.sent_id;
    item["text"] = g.sentence.text;
    ordered_json ops = ordered_json::array();
    for (const auto& op : g.opinions) {
      ordered_json o;
      o["Source"] = span_to_json(op.holder, g.sentence);
      o["Target"] = span_to_json(op.target, g.sentence);
      o["Polar_expression"] = span_to_json(op.expression, g.sentence);
      o["Polarity"] = to_string(op.polarity);
      if (op.intensity) o["Intensity"] = *op.intensity;
      ops.push_back(std::move(o));
    }
    item["opinions"] = std::move(ops);
    root.push_back(std::move(item));
  }
  return root.dump(2);
}

Dataset load_dataset_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open dataset file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_dataset(buf.str());
}

void save_dataset_file(const Dataset& graphs, const std::string& path) {
  const std::string text = serialize_dataset(graphs);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write dataset file: " + path);
  out << text << '\n';
}

std::string opinion_key(const Opinion& op) {
  std::ostringstream key;
  key << to_string(op.polarity) << "|e:";
  for (int t : op.expression.token_indices) key << t << ',';
  key << "|h:";
  for (int t : op.holder.token_indices) key << t << ',';
  key << "|t:";
  for (int t : op.target.token_indices) key << t << ',';
  return key.str();
}

bool opinions_equal(const Opinion& a, const Opinion& b) {
  return a.polarity == b.polarity && a.expression.token_indices == b.expression.token_indices &&
         a.holder.token_indices == b.holder.token_indices &&
         a.target.token_indices == b.target.token_indices;
}

bool graphs_equal(const SentimentGraph& a, const SentimentGraph& b) {
  if (a.sentence.sent_id != b.sentence.sent_id || a.sentence.text != b.sentence.text) return false;
  if (a.opinions.size() != b.opinions.size()) return false;
  std::vector<std::string> ka, kb;
  for (const auto& op : a.opinions) ka.push_back(opinion_key(op));
  for (const auto& op : b.opinions) kb.push_back(opinion_key(op));
  std::sort(ka.begin(), ka.end());
  std::sort(kb.begin(), kb.end());
  return ka == kb;
}

bool datasets_equal(const Dataset& a, const Dataset& b) {
  if (a.size() != b.size()) return false;
  for (size_t i = 0; i < a.size(); ++i) {
    if (!graphs_equal(a[i], b[i])) return false;
  }
  return true;
}

}  // namespace sentgraph
