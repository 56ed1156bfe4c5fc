#include "sentgraph/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace sentgraph::model {

namespace {

using ordered_json = nlohmann::ordered_json;

constexpr char kMagic[8] = {'S', 'G', 'C', 'K', 'P', 'T', '0', '1'};
constexpr uint32_t kFormatVersion = 1;

ordered_json config_to_json(const ModelConfig& c) {
  ordered_json j;
  j["graph_mode"] = to_string(c.encoding);
  j["query_length"] = c.query_length;
  j["hidden_size"] = c.hidden_size;
  j["hidden_size_ff"] = c.hidden_size_ff;
  j["hidden_size_anchor"] = c.hidden_size_anchor;
  j["hidden_size_edge_label"] = c.hidden_size_edge_label;
  j["hidden_size_edge_presence"] = c.hidden_size_edge_presence;
  j["n_layers"] = c.n_layers;
  j["n_attention_heads"] = c.n_attention_heads;
  j["char_embedding"] = c.char_embedding;
  j["char_embedding_size"] = c.char_embedding_size;
  j["pre_norm"] = c.pre_norm;
  j["dropout_anchor"] = c.dropout_anchor;
  j["dropout_edge_label"] = c.dropout_edge_label;
  j["dropout_edge_presence"] = c.dropout_edge_presence;
  j["dropout_label"] = c.dropout_label;
  j["dropout_transformer"] = c.dropout_transformer;
  j["dropout_transformer_attention"] = c.dropout_transformer_attention;
  j["dropout_word"] = c.dropout_word;
  j["focal"] = c.focal;
  j["focal_gamma"] = c.focal_gamma;
  j["batch_size"] = c.batch_size;
  j["epochs"] = c.epochs;
  j["beta_1"] = c.beta_1;
  j["beta_2"] = c.beta_2;
  j["encoder_learning_rate"] = c.encoder_learning_rate;
  j["encoder_weight_decay"] = c.encoder_weight_decay;
  j["decoder_learning_rate"] = c.decoder_learning_rate;
  j["decoder_weight_decay"] = c.decoder_weight_decay;
  j["layerwise_lr_decay"] = c.layerwise_lr_decay;
  j["warmup_proportion"] = c.warmup_proportion;
  j["freeze_bert"] = c.freeze_bert;
  j["encoder_freeze_embedding"] = c.encoder_freeze_embedding;
  j["encoder"] = c.encoder;
  j["seed"] = c.seed;
  return j;
}

// Applies one key/value onto the config; the value arrives as a JSON scalar.
void apply_config_key(ModelConfig& c, const std::string& key, const ordered_json& v) {
  auto bad = [&](const char* expected) {
    throw std::invalid_argument("config key '" + key + "': expected " + expected + ", got '" +
                                v.dump() + "'");
  };
  auto as_int = [&]() {
    if (!v.is_number_integer()) bad("an integer");
    return v.get<int>();
  };
  auto as_double = [&]() {
    if (!v.is_number()) bad("a number");
    return v.get<double>();
  };
  auto as_bool = [&]() {
    if (!v.is_boolean()) bad("a boolean (true/false)");
    return v.get<bool>();
  };
  auto as_string = [&]() {
    if (!v.is_string()) bad("a string");
    return v.get<std::string>();
  };

  if (key == "graph_mode") {
    auto enc = encoding_from_string(as_string());
    if (!enc) throw std::invalid_argument("config key 'graph_mode': unknown encoding '" +
                                          v.get<std::string>() + "'");
    c.encoding = *enc;
  } else if (key == "query_length") c.query_length = as_int();
  else if (key == "hidden_size") c.hidden_size = as_int();
  else if (key == "hidden_size_ff") c.hidden_size_ff = as_int();
  else if (key == "hidden_size_anchor") c.hidden_size_anchor = as_int();
  else if (key == "hidden_size_edge_label") c.hidden_size_edge_label = as_int();
  else if (key == "hidden_size_edge_presence") c.hidden_size_edge_presence = as_int();
  else if (key == "n_layers") c.n_layers = as_int();
  else if (key == "n_attention_heads") c.n_attention_heads = as_int();
  else if (key == "char_embedding") c.char_embedding = as_bool();
  else if (key == "char_embedding_size") c.char_embedding_size = as_int();
  else if (key == "pre_norm") c.pre_norm = as_bool();
  else if (key == "dropout_anchor") c.dropout_anchor = as_double();
  else if (key == "dropout_edge_label") c.dropout_edge_label = as_double();
  else if (key == "dropout_edge_presence") c.dropout_edge_presence = as_double();
  else if (key == "dropout_label") c.dropout_label = as_double();
  else if (key == "dropout_transformer") c.dropout_transformer = as_double();
  else if (key == "dropout_transformer_attention") c.dropout_transformer_attention = as_double();
  else if (key == "dropout_word") c.dropout_word = as_double();
  else if (key == "focal") c.focal = as_bool();
  else if (key == "focal_gamma") c.focal_gamma = as_double();
  else if (key == "batch_size") c.batch_size = as_int();
  else if (key == "epochs") c.epochs = as_int();
  else if (key == "beta_1") c.beta_1 = as_double();
  else if (key == "beta_2") c.beta_2 = as_double();
  else if (key == "encoder_learning_rate") c.encoder_learning_rate = as_double();
  else if (key == "encoder_weight_decay") c.encoder_weight_decay = as_double();
  else if (key == "decoder_learning_rate") c.decoder_learning_rate = as_double();
  else if (key == "decoder_weight_decay") c.decoder_weight_decay = as_double();
  else if (key == "layerwise_lr_decay") c.layerwise_lr_decay = as_double();
  else if (key == "warmup_proportion") c.warmup_proportion = as_double();
  else if (key == "freeze_bert") c.freeze_bert = as_bool();
  else if (key == "encoder_freeze_embedding") c.encoder_freeze_embedding = as_bool();
  else if (key == "encoder") c.encoder = as_string();
  else if (key == "seed") {
    if (!v.is_number_unsigned() && !v.is_number_integer()) bad("an unsigned integer");
    c.seed = v.get<uint64_t>();
  } else {
    throw std::invalid_argument("unknown config key '" + key + "'");
  }
}

ModelConfig config_from_json(const ordered_json& j) {
  ModelConfig c;
  for (auto it = j.begin(); it != j.end(); ++it) apply_config_key(c, it.key(), it.value());
  return c;
}

void put_u32(std::string& out, uint32_t x) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((x >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, uint64_t x) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((x >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double d) {
  uint64_t bits;
  std::memcpy(&bits, &d, sizeof(bits));
  put_u64(out, bits);
}

struct Reader {
  const std::string& bytes;
  size_t pos = 0;

  void need(size_t n) const {
    if (pos + n > bytes.size()) throw std::runtime_error("checkpoint: truncated file");
  }
  uint32_t u32() {
    need(4);
    uint32_t x = 0;
    for (int i = 0; i < 4; ++i) x |= static_cast<uint32_t>(static_cast<unsigned char>(bytes[pos++])) << (8 * i);
    return x;
  }
  uint64_t u64() {
    need(8);
    uint64_t x = 0;
    for (int i = 0; i < 8; ++i) x |= static_cast<uint64_t>(static_cast<unsigned char>(bytes[pos++])) << (8 * i);
    return x;
  }
  double f64() {
    uint64_t bits = u64();
    double d;
    std::memcpy(&d, &bits, sizeof(d));
    return d;
  }
  std::string str(size_t n) {
    need(n);
    std::string s = bytes.substr(pos, n);
    pos += n;
    return s;
  }
};

}  // namespace

std::string config_to_text(const ModelConfig& config) {
  ordered_json j = config_to_json(config);
  std::ostringstream os;
  for (auto it = j.begin(); it != j.end(); ++it) {
    os << it.key() << " = ";
    if (it.value().is_string()) {
      os << it.value().get<std::string>();
    } else {
      os << it.value().dump();
    }
    os << '\n';
  }
  return os.str();
}

ModelConfig config_from_text(const std::string& text) {
  ModelConfig c;
  std::istringstream is(text);
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    auto trim = [](std::string s) {
      size_t a = s.find_first_not_of(" \t\r");
      size_t b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    std::string stripped = trim(line);
    if (stripped.empty()) continue;
    size_t eq = stripped.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config line " + std::to_string(line_no) +
                                  ": expected 'key = value'");
    }
    std::string key = trim(stripped.substr(0, eq));
    std::string value = trim(stripped.substr(eq + 1));
    if (key.empty() || value.empty()) {
      throw std::invalid_argument("config line " + std::to_string(line_no) +
                                  ": expected 'key = value'");
    }
    ordered_json v = ordered_json::parse(value, nullptr, false);
    if (v.is_discarded()) v = value;  // bare words (encodings, model names) are strings
    try {
      apply_config_key(c, key, v);
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("config line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  c.validate();
  return c;
}

ModelConfig load_config_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open config file '" + path + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return config_from_text(os.str());
}

std::string serialize_checkpoint(const ModelState& state) {
  std::string out;
  out.append(kMagic, sizeof(kMagic));
  put_u32(out, kFormatVersion);

  ordered_json meta;
  meta["config"] = config_to_json(state.config);
  meta["vocab"]["tokens"] = state.vocab.tokens;
  meta["vocab"]["chars"] = state.vocab.chars;
  std::string meta_text = meta.dump();
  put_u64(out, meta_text.size());
  out += meta_text;

  put_u64(out, state.values.size());
  for (size_t t = 0; t < state.values.size(); ++t) {
    const nn::Mat& m = state.values[t];
    put_u32(out, static_cast<uint32_t>(state.names[t].size()));
    out += state.names[t];
    put_u32(out, 2);
    put_u64(out, static_cast<uint64_t>(m.rows));
    put_u64(out, static_cast<uint64_t>(m.cols));
    for (double d : m.data) put_f64(out, d);
  }
  return out;
}

ModelState parse_checkpoint(const std::string& bytes) {
  Reader r{bytes};
  if (r.str(sizeof(kMagic)) != std::string(kMagic, sizeof(kMagic))) {
    throw std::runtime_error("checkpoint: bad magic (not a checkpoint file?)");
  }
  uint32_t version = r.u32();
  if (version != kFormatVersion) {
    throw std::runtime_error("checkpoint: unsupported format version " + std::to_string(version));
  }
  uint64_t meta_len = r.u64();
  ordered_json meta = ordered_json::parse(r.str(meta_len), nullptr, false);
  if (meta.is_discarded() || !meta.contains("config") || !meta.contains("vocab")) {
    throw std::runtime_error("checkpoint: corrupt metadata block");
  }
  ModelConfig config = config_from_json(meta["config"]);
  Vocabulary vocab;
  vocab.tokens = meta["vocab"]["tokens"].get<std::vector<std::string>>();
  vocab.chars = meta["vocab"]["chars"].get<std::vector<std::string>>();

  // Initialize to establish the expected tensor layout, then overwrite.
  ModelState state = ModelState::init(config, std::move(vocab));

  uint64_t count = r.u64();
  if (count != state.values.size()) {
    throw std::runtime_error("checkpoint: expected " + std::to_string(state.values.size()) +
                             " tensors, file has " + std::to_string(count));
  }
  for (uint64_t t = 0; t < count; ++t) {
    std::string name = r.str(r.u32());
    if (name != state.names[t]) {
      throw std::runtime_error("checkpoint: tensor " + std::to_string(t) + " is '" + name +
                               "', expected '" + state.names[t] + "'");
    }
    if (r.u32() != 2) throw std::runtime_error("checkpoint: tensor '" + name + "' is not 2-D");
    uint64_t rows = r.u64(), cols = r.u64();
    nn::Mat& m = state.values[t];
    if (rows != static_cast<uint64_t>(m.rows) || cols != static_cast<uint64_t>(m.cols)) {
      throw std::runtime_error("checkpoint: tensor '" + name + "' has shape " +
                               std::to_string(rows) + "x" + std::to_string(cols) +
                               ", expected " + std::to_string(m.rows) + "x" +
                               std::to_string(m.cols));
    }
    for (double& d : m.data) d = r.f64();
  }
  if (r.pos != bytes.size()) throw std::runtime_error("checkpoint: trailing bytes");
  state.zero_grads();
  return state;
}

void save_checkpoint(const ModelState& state, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  std::string bytes = serialize_checkpoint(state);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing checkpoint to '" + path + "'");
}

ModelState load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint '" + path + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return parse_checkpoint(os.str());
}

}  // namespace sentgraph::model
