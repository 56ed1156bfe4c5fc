#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

// Exercises the shared-library boundary only: this test links libsentgraph
// and includes nothing from the C++ core headers.
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sentgraph/capi.h"

using nlohmann::json;

namespace {

const char* kDatasetJson = R"([
  {
    "sent_id": "ex-nesting-01",
    "text": "Nowadays I actually enjoy the bad acting.",
    "opinions": [
      {
        "Source": [["I"], ["9:10"]],
        "Target": [["the bad acting."], ["26:41"]],
        "Polar_expression": [["enjoy"], ["20:25"]],
        "Polarity": "Positive"
      },
      {
        "Source": [[], []],
        "Target": [["acting."], ["34:41"]],
        "Polar_expression": [["bad"], ["30:33"]],
        "Polarity": "Negative"
      }
    ]
  },
  {
    "sent_id": "ex-plain-02",
    "text": "We loved the ending",
    "opinions": [
      {
        "Source": [["We"], ["0:2"]],
        "Target": [["the ending"], ["9:19"]],
        "Polar_expression": [["loved"], ["3:8"]],
        "Polarity": "Positive"
      }
    ]
  }
])";

// RAII helpers so failures don't leak handles across CHECKs.
struct Str {
  char* p = nullptr;
  ~Str() { sg_string_free(p); }
  operator char**() { return &p; }
  std::string get() const { return p ? p : ""; }
};

struct Data {
  sg_dataset* p = nullptr;
  ~Data() { sg_dataset_free(p); }
  operator sg_dataset**() { return &p; }
};

struct Model {
  sg_model* p = nullptr;
  ~Model() { sg_model_free(p); }
  operator sg_model**() { return &p; }
};

const char* kTinyConfig =
    "graph_mode = opinion-tuple\n"
    "hidden_size = 16\n"
    "hidden_size_ff = 32\n"
    "hidden_size_anchor = 8\n"
    "hidden_size_edge_label = 8\n"
    "hidden_size_edge_presence = 8\n"
    "n_layers = 0\n"
    "n_attention_heads = 4\n"
    "char_embedding = false\n"
    "focal = false\n"
    "dropout_anchor = 0\ndropout_edge_label = 0\ndropout_edge_presence = 0\n"
    "dropout_label = 0\ndropout_transformer = 0\ndropout_transformer_attention = 0\n"
    "dropout_word = 0\n"
    "batch_size = 2\n"
    "epochs = 3\n"
    "decoder_learning_rate = 0.005\n"
    "encoder_learning_rate = 0.005\n"
    "seed = 5\n";

}  // namespace

TEST_CASE("version and error state") {
  CHECK(std::string(sg_version()) == "1.0.0");
  CHECK(sg_last_error() != nullptr);
}

TEST_CASE("dataset parse, serialize, reparse") {
  Data d;
  REQUIRE(sg_dataset_parse(kDatasetJson, d) == SG_OK);
  CHECK(sg_dataset_size(d.p) == 2);

  Str text;
  REQUIRE(sg_dataset_to_json(d.p, text) == SG_OK);
  Data again;
  REQUIRE(sg_dataset_parse(text.p, again) == SG_OK);
  CHECK(sg_dataset_size(again.p) == 2);

  // Serialization is a fixed point.
  Str text2;
  REQUIRE(sg_dataset_to_json(again.p, text2) == SG_OK);
  CHECK(text.get() == text2.get());
}

TEST_CASE("dataset errors carry codes and messages") {
  Data d;
  CHECK(sg_dataset_parse("this is not json", d) == SG_ERROR_PARSE);
  CHECK(std::string(sg_last_error()).size() > 0);
  CHECK(sg_dataset_parse(nullptr, d) == SG_ERROR_INVALID_ARGUMENT);
  CHECK(sg_dataset_read("/nonexistent/path.json", d) == SG_ERROR_IO);
  CHECK(d.p == nullptr);  // out-params untouched on failure
}

TEST_CASE("dataset statistics") {
  Data d;
  REQUIRE(sg_dataset_parse(kDatasetJson, d) == SG_OK);
  Str out;
  REQUIRE(sg_dataset_stats_json(d.p, out) == SG_OK);
  json j = json::parse(out.get());
  CHECK(j["sentences"] == 2);
  CHECK(j["holders"] == 2);
  CHECK(j["targets"] == 3);
  CHECK(j["expressions"] == 3);
  CHECK(j["polarity"]["positive"] == 2);
  CHECK(j["polarity"]["negative"] == 1);
  // "acting." nests inside "the bad acting." (same role, same sentence).
  CHECK(j["nesting"]["target"]["nested"] == 1);
}

TEST_CASE("graph encodings round-trip through the dump format") {
  Data d;
  REQUIRE(sg_dataset_parse(kDatasetJson, d) == SG_OK);
  for (const char* enc : {"opinion-tuple", "node-centric", "labeled-edge"}) {
    CAPTURE(enc);
    Str dump;
    REQUIRE(sg_encode_graphs(d.p, enc, dump) == SG_OK);
    CHECK(dump.get().find("ex-nesting-01") != std::string::npos);

    Data back;
    Str stats;
    REQUIRE(sg_decode_graphs(dump.p, back, stats) == SG_OK);
    CHECK(sg_dataset_size(back.p) == 2);
    CHECK(json::parse(stats.get())["dropped_opinions"] == 0);

    Str rt;
    REQUIRE(sg_roundtrip_json(d.p, enc, rt) == SG_OK);
    json j = json::parse(rt.get());
    CHECK(j["exact"] == true);
    CHECK(j["sf1"]["f1"] == 1.0);
  }
  Str dump;
  CHECK(sg_encode_graphs(d.p, "no-such-encoding", dump) == SG_ERROR_INVALID_ARGUMENT);
}

TEST_CASE("dependency encoding is lossy on the nesting fixture") {
  Data d;
  REQUIRE(sg_dataset_parse(kDatasetJson, d) == SG_OK);

  Str dump, loss;
  REQUIRE(sg_encode_dep(d.p, "last", dump, loss) == SG_OK);
  CHECK(json::parse(loss.get())["arcs_total"].get<long long>() > 0);

  Data back;
  Str stats;
  REQUIRE(sg_decode_dep(dump.p, back, stats) == SG_OK);
  CHECK(sg_dataset_size(back.p) == 2);

  Str rt;
  REQUIRE(sg_roundtrip_json(d.p, "dep-head-final", rt) == SG_OK);
  json j = json::parse(rt.get());
  CHECK(j["exact"] == false);  // both targets collapse onto "acting."
  CHECK(j["sf1"]["f1"] < 1.0);

  CHECK(sg_encode_dep(d.p, "middle", dump, loss) == SG_ERROR_INVALID_ARGUMENT);
}

TEST_CASE("evaluation of a dataset against itself") {
  Data d;
  REQUIRE(sg_dataset_parse(kDatasetJson, d) == SG_OK);
  Str text, js;
  REQUIRE(sg_evaluate(d.p, d.p, text, js) == SG_OK);
  json j = json::parse(js.get());
  CHECK(j["sf1"]["f1"] == 1.0);
  CHECK(j["nsf1"]["f1"] == 1.0);
  CHECK(j["spans"]["expression"]["f1"] == 1.0);
  CHECK(text.get().find("sf1.f1 1.000000") != std::string::npos);
}

TEST_CASE("significance of identical systems is null") {
  Data d;
  REQUIRE(sg_dataset_parse(kDatasetJson, d) == SG_OK);
  const sg_dataset* runs[2] = {d.p, d.p};
  Str out;
  REQUIRE(sg_significance(d.p, runs, 2, runs, 2, 200, 100, 0.05, 3, 1, 1, out) == SG_OK);
  json j = json::parse(out.get());
  CHECK(j["observed_diff"] == 0.0);
  CHECK(j["decision"] == "not-significant");
  CHECK(j["pairwise_p"].size() == 4);
}

TEST_CASE("train, predict, save, reload") {
  Data d;
  REQUIRE(sg_dataset_parse(kDatasetJson, d) == SG_OK);

  int epochs_seen = 0;
  auto on_epoch = [](const char* line, void* user) {
    json j = json::parse(line);
    CHECK(j.contains("mean_loss"));
    CHECK(j["epoch"].get<int>() >= 1);
    ++*static_cast<int*>(user);
  };
  Model m;
  Str summary;
  REQUIRE(sg_train(kTinyConfig, d.p, d.p, on_epoch, &epochs_seen, m, summary) == SG_OK);
  CHECK(epochs_seen == 3);
  CHECK(sg_model_parameter_count(m.p) > 0);
  json sj = json::parse(summary.get());
  CHECK(sj["epochs"] == 3);
  CHECK(sj["best_epoch"].get<int>() >= 1);

  Data pred;
  Str stats;
  REQUIRE(sg_model_predict(m.p, d.p, pred, stats) == SG_OK);
  CHECK(sg_dataset_size(pred.p) == 2);
  CHECK(json::parse(stats.get())["decode_failures"] == 0);

  REQUIRE(sg_model_write(m.p, "capi_model_tmp.bin") == SG_OK);
  Model loaded;
  REQUIRE(sg_model_read("capi_model_tmp.bin", loaded) == SG_OK);
  std::remove("capi_model_tmp.bin");

  Str cfg_a, cfg_b;
  REQUIRE(sg_model_config_text(m.p, cfg_a) == SG_OK);
  REQUIRE(sg_model_config_text(loaded.p, cfg_b) == SG_OK);
  CHECK(cfg_a.get() == cfg_b.get());
  CHECK(cfg_a.get().find("hidden_size = 16") != std::string::npos);

  // Same predictions after the round trip.
  Data pred2;
  REQUIRE(sg_model_predict(loaded.p, d.p, pred2, nullptr) == SG_OK);
  Str j1, j2;
  REQUIRE(sg_dataset_to_json(pred.p, j1) == SG_OK);
  REQUIRE(sg_dataset_to_json(pred2.p, j2) == SG_OK);
  CHECK(j1.get() == j2.get());
}

TEST_CASE("train rejects a bad config as a parse error") {
  Data d;
  REQUIRE(sg_dataset_parse(kDatasetJson, d) == SG_OK);
  Model m;
  CHECK(sg_train("hidden_size = what", d.p, nullptr, nullptr, nullptr, m, nullptr) ==
        SG_ERROR_PARSE);
  CHECK(std::string(sg_last_error()).find("hidden_size") != std::string::npos);
}

TEST_CASE("model read rejects garbage") {
  {
    std::ofstream f("capi_garbage_tmp.bin", std::ios::binary);
    f << "garbage bytes, not a checkpoint";
  }
  Model m;
  CHECK(sg_model_read("capi_garbage_tmp.bin", m) == SG_ERROR_PARSE);
  std::remove("capi_garbage_tmp.bin");
  CHECK(sg_model_read("capi_missing_tmp.bin", m) == SG_ERROR_IO);
}

TEST_CASE("evaluation alignment errors map to conversion") {
  Data d;
  REQUIRE(sg_dataset_parse(kDatasetJson, d) == SG_OK);
  Data one;
  REQUIRE(sg_dataset_parse(R"([{"sent_id":"other","text":"x","opinions":[]}])", one) == SG_OK);
  Str text;
  CHECK(sg_evaluate(d.p, one.p, text, nullptr) == SG_ERROR_CONVERSION);
}
