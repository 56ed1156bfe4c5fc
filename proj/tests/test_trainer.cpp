#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "sentgraph/checkpoint.hpp"
#include "sentgraph/trainer.hpp"
#include "support/fixtures.hpp"
#include "support/generators.hpp"

using namespace sentgraph;
using namespace sentgraph::model;

namespace {

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.encoding = Encoding::OpinionTuple;
  cfg.query_length = 1;
  cfg.hidden_size = 32;
  cfg.hidden_size_ff = 64;
  cfg.hidden_size_anchor = 16;
  cfg.hidden_size_edge_label = 16;
  cfg.hidden_size_edge_presence = 16;
  cfg.n_layers = 1;
  cfg.n_attention_heads = 4;
  cfg.char_embedding = false;
  cfg.focal = false;
  cfg.dropout_anchor = cfg.dropout_edge_label = cfg.dropout_edge_presence = 0.0;
  cfg.dropout_label = cfg.dropout_transformer = cfg.dropout_transformer_attention = 0.0;
  cfg.dropout_word = 0.0;
  cfg.batch_size = 2;
  cfg.epochs = 60;
  cfg.encoder_learning_rate = 3e-3;
  cfg.decoder_learning_rate = 3e-3;
  cfg.encoder_weight_decay = 0.0;
  cfg.decoder_weight_decay = 0.0;
  cfg.seed = 11;
  return cfg;
}

Dataset tiny_corpus() {
  std::mt19937_64 rng(606060);
  Dataset data;
  for (int i = 0; i < 5; ++i) {
    gen::GraphOptions opt;
    opt.max_opinions = 2;
    opt.distinct_expressions = true;
    data.push_back(gen::random_graph(rng, i, opt));
  }
  return data;
}

}  // namespace

TEST_CASE("learning-rate schedule: zero, peak, cosine tail") {
  const int total = 100;
  const double w = 0.1;
  CHECK(lr_scale(0, total, w) == 0.0);
  CHECK(lr_scale(5, total, w) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(lr_scale(10, total, w) == 1.0);  // warmup ends at the peak
  // Halfway through the decay: progress 0.5 → 0.5·(1+cos(π/2)) = 0.5.
  CHECK(lr_scale(55, total, w) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(lr_scale(100, total, w) == 0.0);
  CHECK(lr_scale(99, total, w) == doctest::Approx(0.5 * (1.0 + std::cos(3.14159265358979323846 * 89.0 / 90.0))));
  for (int s = 1; s < 10; ++s) CHECK(lr_scale(s, total, w) > lr_scale(s - 1, total, w));
  for (int s = 11; s <= 100; ++s) CHECK(lr_scale(s, total, w) <= lr_scale(s - 1, total, w));
  // No warmup: starts at the peak.
  CHECK(lr_scale(0, 10, 0.0) == 1.0);
}

TEST_CASE("training fits a tiny corpus") {
  Dataset data = tiny_corpus();
  TrainResult result = train(tiny_config(), data);

  REQUIRE(result.history.size() == 60);
  CHECK(result.history.front().mean_loss > result.history.back().mean_loss);
  CHECK(result.best_sf1 >= 0.8);
  CHECK(result.best_epoch >= 1);
  // Selection score is the max over history.
  double best = -1.0;
  for (const EpochStats& e : result.history) best = std::max(best, e.train_sf1);
  CHECK(result.best_sf1 == best);
  CHECK(dataset_sf1(result.best, data) == doctest::Approx(result.best_sf1));
}

TEST_CASE("training is bitwise deterministic") {
  Dataset data = tiny_corpus();
  ModelConfig cfg = tiny_config();
  cfg.epochs = 4;
  // Nonzero dropout exercises mask reproducibility too.
  cfg.dropout_word = 0.1;
  cfg.dropout_label = 0.2;

  TrainResult a = train(cfg, data);
  TrainResult b = train(cfg, data);
  REQUIRE(a.history.size() == b.history.size());
  for (size_t i = 0; i < a.history.size(); ++i) {
    CHECK(a.history[i].mean_loss == b.history[i].mean_loss);  // bitwise
    CHECK(a.history[i].train_sf1 == b.history[i].train_sf1);
  }
  for (size_t t = 0; t < a.best.values.size(); ++t) {
    CHECK(a.best.values[t].data == b.best.values[t].data);
  }
}

TEST_CASE("dev set drives selection") {
  Dataset data = tiny_corpus();
  Dataset dev(data.begin(), data.begin() + 2);
  ModelConfig cfg = tiny_config();
  cfg.epochs = 6;
  TrainOptions opts;
  opts.dev = &dev;
  int callbacks = 0;
  opts.on_epoch = [&](const EpochStats& e) {
    ++callbacks;
    CHECK(e.dev_sf1 >= 0.0);
  };
  TrainResult result = train(cfg, data, opts);
  CHECK(callbacks == 6);
  double best_dev = -1.0;
  for (const EpochStats& e : result.history) best_dev = std::max(best_dev, e.dev_sf1);
  CHECK(result.best_sf1 == best_dev);
}

TEST_CASE("frozen encoder stays bit-identical") {
  Dataset data = tiny_corpus();
  ModelConfig cfg = tiny_config();
  cfg.epochs = 3;
  cfg.encoder_freeze_embedding = true;

  TrainResult result = train(cfg, data);
  ModelState fresh = ModelState::init(cfg, Vocabulary::build(data));
  const nn::Mat& trained_emb = result.best.tensor("token_embedding");
  CHECK(trained_emb.data == fresh.tensor("token_embedding").data);  // bitwise

  // Decoder parameters did move.
  CHECK(result.best.tensor("query_proj.weight").data != fresh.tensor("query_proj.weight").data);

  // Without freezing, the embedding moves too.
  cfg.encoder_freeze_embedding = false;
  TrainResult unfrozen = train(cfg, data);
  CHECK(unfrozen.best.tensor("token_embedding").data != fresh.tensor("token_embedding").data);
}

TEST_CASE("divergence aborts with a diagnostic") {
  Dataset data = tiny_corpus();
  ModelConfig cfg = tiny_config();
  cfg.epochs = 3;
  // Adam updates are scale-free (≈lr per step), so a merely large rate drifts
  // instead of exploding; this one overflows the very next forward pass.
  cfg.encoder_learning_rate = 1e200;
  cfg.decoder_learning_rate = 1e200;
  CHECK_THROWS_WITH_AS(train(cfg, data),
                       doctest::Contains("training diverged"), std::runtime_error);
}

TEST_CASE("checkpoint round-trips bitwise") {
  Dataset data = tiny_corpus();
  ModelConfig cfg = tiny_config();
  cfg.epochs = 2;
  cfg.char_embedding = true;  // include the char tensors in the file
  cfg.char_embedding_size = 8;
  TrainResult result = train(cfg, data);

  std::string bytes = serialize_checkpoint(result.best);
  ModelState loaded = parse_checkpoint(bytes);

  CHECK(loaded.names == result.best.names);
  for (size_t t = 0; t < loaded.values.size(); ++t) {
    CHECK(loaded.values[t].data == result.best.values[t].data);
  }
  CHECK(loaded.vocab.tokens == result.best.vocab.tokens);
  CHECK(loaded.vocab.chars == result.best.vocab.chars);
  CHECK(config_to_text(loaded.config) == config_to_text(result.best.config));

  // Loaded model predicts identically.
  for (const SentimentGraph& g : data) {
    CHECK(graphs_equal(predict(loaded, g.sentence), predict(result.best, g.sentence)));
  }

  // Serialization is stable byte-for-byte.
  CHECK(serialize_checkpoint(loaded) == bytes);
}

TEST_CASE("checkpoint corruption fails loudly") {
  ModelState state = ModelState::init(tiny_config(), Vocabulary::build(tiny_corpus()));
  std::string bytes = serialize_checkpoint(state);

  CHECK_THROWS_WITH_AS(parse_checkpoint(bytes.substr(0, 4)),
                       doctest::Contains("truncated"), std::runtime_error);
  CHECK_THROWS_WITH_AS(parse_checkpoint(bytes.substr(0, bytes.size() / 2)),
                       doctest::Contains("truncated"), std::runtime_error);

  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK_THROWS_WITH_AS(parse_checkpoint(bad_magic), doctest::Contains("magic"),
                       std::runtime_error);

  std::string bad_version = bytes;
  bad_version[8] = 9;
  CHECK_THROWS_WITH_AS(parse_checkpoint(bad_version), doctest::Contains("version"),
                       std::runtime_error);

  std::string trailing = bytes + "junk";
  CHECK_THROWS_WITH_AS(parse_checkpoint(trailing), doctest::Contains("trailing"),
                       std::runtime_error);
}

TEST_CASE("checkpoint files round-trip through disk") {
  ModelState state = ModelState::init(tiny_config(), Vocabulary::build(tiny_corpus()));
  std::string path = "test_ckpt_tmp.bin";
  save_checkpoint(state, path);
  ModelState loaded = load_checkpoint(path);
  for (size_t t = 0; t < loaded.values.size(); ++t) {
    CHECK(loaded.values[t].data == state.values[t].data);
  }
  std::remove(path.c_str());
  CHECK_THROWS_AS(load_checkpoint(path), std::runtime_error);
}

TEST_CASE("config text round-trips and rejects junk") {
  ModelConfig cfg = tiny_config();
  cfg.encoding = Encoding::LabeledEdge;
  cfg.query_length = 2;
  cfg.focal_gamma = 1.5;
  cfg.seed = 98765;

  ModelConfig back = config_from_text(config_to_text(cfg));
  CHECK(config_to_text(back) == config_to_text(cfg));
  CHECK(back.encoding == Encoding::LabeledEdge);
  CHECK(back.query_length == 2);
  CHECK(back.focal_gamma == 1.5);
  CHECK(back.seed == 98765);

  // Partial configs override defaults only.
  ModelConfig partial = config_from_text("n_layers = 0\nfocal = false\n# comment\n\n");
  CHECK(partial.n_layers == 0);
  CHECK_FALSE(partial.focal);
  CHECK(partial.hidden_size == ModelConfig{}.hidden_size);

  CHECK_THROWS_WITH_AS(config_from_text("no_such_key = 1"), doctest::Contains("unknown config key"),
                       std::invalid_argument);
  CHECK_THROWS_WITH_AS(config_from_text("n_layers"), doctest::Contains("key = value"),
                       std::invalid_argument);
  CHECK_THROWS_WITH_AS(config_from_text("focal = 7"), doctest::Contains("boolean"),
                       std::invalid_argument);
  CHECK_THROWS_WITH_AS(config_from_text("graph_mode = nonsense"), doctest::Contains("encoding"),
                       std::invalid_argument);
  CHECK_THROWS_WITH_AS(config_from_text("pre_norm = false"), doctest::Contains("pre-norm"),
                       std::invalid_argument);
  CHECK_THROWS_WITH_AS(config_from_text("n_layers = -3"), doctest::Contains("n_layers"),
                       std::invalid_argument);
}

TEST_CASE("predict_dataset aligns with gold sentences") {
  Dataset data = tiny_corpus();
  ModelState state = ModelState::init(tiny_config(), Vocabulary::build(data));
  PredictStats stats;
  Dataset pred = predict_dataset(state, data, &stats);
  REQUIRE(pred.size() == data.size());
  for (size_t i = 0; i < pred.size(); ++i) {
    CHECK(pred[i].sentence.sent_id == data[i].sentence.sent_id);
  }
  double sf1 = dataset_sf1(state, data);
  CHECK(sf1 >= 0.0);
  CHECK(sf1 <= 1.0);
}
