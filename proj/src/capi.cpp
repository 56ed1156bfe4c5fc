#include "sentgraph/capi.h"

#include <cstdlib>
#include <cstring>
#include <new>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sentgraph/bootstrap.hpp"
#include "sentgraph/checkpoint.hpp"
#include "sentgraph/data.hpp"
#include "sentgraph/dep.hpp"
#include "sentgraph/encodings.hpp"
#include "sentgraph/eval.hpp"
#include "sentgraph/tensor.hpp"
#include "sentgraph/trainer.hpp"

using nlohmann::ordered_json;
namespace sg = sentgraph;

struct sg_dataset {
  sg::Dataset data;
};

struct sg_model {
  sg::model::ModelState state;
};

namespace {

thread_local std::string g_last_error;

sg_status fail(sg_status code, const std::string& message) {
  g_last_error = message;
  return code;
}

// Maps core exceptions onto status codes. Individual entry points that know
// better (e.g. config parsing) translate before reaching this.
template <typename Fn>
sg_status guarded(Fn&& fn) {
  try {
    return fn();
  } catch (const sg::ParseError& e) {
    return fail(SG_ERROR_PARSE, e.what());
  } catch (const sg::EncodingError& e) {
    return fail(SG_ERROR_CONVERSION, e.what());
  } catch (const sg::nn::NumericError& e) {
    return fail(SG_ERROR_NUMERIC, e.what());
  } catch (const std::invalid_argument& e) {
    return fail(SG_ERROR_CONVERSION, e.what());
  } catch (const std::out_of_range& e) {
    return fail(SG_ERROR_PARSE, e.what());
  } catch (const std::bad_alloc&) {
    return fail(SG_ERROR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(SG_ERROR_INTERNAL, e.what());
  }
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

sg_status require(bool ok, const char* what) {
  return ok ? SG_OK : fail(SG_ERROR_INVALID_ARGUMENT, what);
}

ordered_json prf_json(const sg::PRF& prf) {
  return ordered_json{{"p", prf.precision}, {"r", prf.recall}, {"f1", prf.f1}};
}

ordered_json predict_stats_json(const sg::model::PredictStats& s) {
  return ordered_json{{"dropped_opinions", s.dropped_opinions},
                      {"dropped_edges", s.dropped_edges},
                      {"merged_roots", s.merged_roots},
                      {"missing_root", s.missing_root},
                      {"decode_failures", s.decode_failures}};
}

// Graph-dump or dependency round trip, scored against the original.
sg_status roundtrip_impl(const sg::Dataset& data, const std::string& encoding, char** json_out) {
  sg::Dataset decoded;
  decoded.reserve(data.size());
  if (encoding == "dep-head-first" || encoding == "dep-head-final") {
    sg::HeadRule rule = encoding == "dep-head-first" ? sg::HeadRule::First : sg::HeadRule::Last;
    for (const sg::SentimentGraph& g : data) {
      decoded.push_back(sg::decode_dep(sg::encode_dep(g, rule).graph, rule).graph);
    }
  } else {
    auto enc = sg::encoding_from_string(encoding);
    if (!enc) return fail(SG_ERROR_INVALID_ARGUMENT, "unknown encoding '" + encoding + "'");
    for (const sg::SentimentGraph& g : data) {
      decoded.push_back(sg::decode_graph(sg::encode_graph(g, *enc)).graph);
    }
  }
  ordered_json j;
  j["encoding"] = encoding;
  j["sf1"] = prf_json(sg::sent_graph_f1(data, decoded, true));
  j["exact"] = sg::datasets_equal(data, decoded);
  *json_out = dup_string(j.dump(2));
  return SG_OK;
}

}  // namespace

extern "C" {

const char* sg_version(void) { return "1.0.0"; }

const char* sg_last_error(void) { return g_last_error.c_str(); }

void sg_string_free(char* s) { std::free(s); }

/* ---- datasets ------------------------------------------------------- */

sg_status sg_dataset_parse(const char* json_text, sg_dataset** out) {
  if (sg_status s = require(json_text && out, "sg_dataset_parse: null argument")) return s;
  return guarded([&] {
    auto* d = new sg_dataset{sg::parse_dataset(json_text)};
    *out = d;
    return SG_OK;
  });
}

sg_status sg_dataset_read(const char* path, sg_dataset** out) {
  if (sg_status s = require(path && out, "sg_dataset_read: null argument")) return s;
  return guarded([&]() -> sg_status {
    try {
      *out = new sg_dataset{sg::load_dataset_file(path)};
    } catch (const sg::ParseError&) {
      throw;
    } catch (const std::runtime_error& e) {
      return fail(SG_ERROR_IO, e.what());  // cannot open
    }
    return SG_OK;
  });
}

sg_status sg_dataset_to_json(const sg_dataset* d, char** json_out) {
  if (sg_status s = require(d && json_out, "sg_dataset_to_json: null argument")) return s;
  return guarded([&] {
    *json_out = dup_string(sg::serialize_dataset(d->data));
    return SG_OK;
  });
}

sg_status sg_dataset_write(const sg_dataset* d, const char* path) {
  if (sg_status s = require(d && path, "sg_dataset_write: null argument")) return s;
  return guarded([&]() -> sg_status {
    try {
      sg::save_dataset_file(d->data, path);
    } catch (const std::runtime_error& e) {
      return fail(SG_ERROR_IO, e.what());
    }
    return SG_OK;
  });
}

size_t sg_dataset_size(const sg_dataset* d) { return d ? d->data.size() : 0; }

void sg_dataset_free(sg_dataset* d) { delete d; }

sg_status sg_dataset_stats_json(const sg_dataset* d, char** json_out) {
  if (sg_status s = require(d && json_out, "sg_dataset_stats_json: null argument")) return s;
  return guarded([&] {
    sg::DatasetStats st = sg::dataset_stats(d->data);
    sg::NestingStats nest = sg::nesting_stats(d->data);
    auto role = [](const sg::RoleNesting& r) {
      return ordered_json{{"nested", r.nested}, {"total", r.total}, {"percent", r.percent}};
    };
    ordered_json j;
    j["sentences"] = st.sentences;
    j["holders"] = st.holders;
    j["targets"] = st.targets;
    j["expressions"] = st.expressions;
    j["polarity"] =
        ordered_json{{"positive", st.positive}, {"neutral", st.neutral}, {"negative", st.negative}};
    j["nesting"] = ordered_json{
        {"holder", role(nest.holder)}, {"target", role(nest.target)},
        {"expression", role(nest.expression)}};
    *json_out = dup_string(j.dump(2));
    return SG_OK;
  });
}

/* ---- graph encodings -------------------------------------------------- */

sg_status sg_encode_graphs(const sg_dataset* d, const char* encoding, char** dump_out) {
  if (sg_status s = require(d && encoding && dump_out, "sg_encode_graphs: null argument")) return s;
  return guarded([&]() -> sg_status {
    auto enc = sg::encoding_from_string(encoding);
    if (!enc) {
      return fail(SG_ERROR_INVALID_ARGUMENT, "unknown encoding '" + std::string(encoding) + "'");
    }
    std::vector<sg::GeneralGraph> graphs;
    graphs.reserve(d->data.size());
    for (const sg::SentimentGraph& g : d->data) graphs.push_back(sg::encode_graph(g, *enc));
    *dump_out = dup_string(sg::dump_graphs(graphs));
    return SG_OK;
  });
}

sg_status sg_decode_graphs(const char* dump_text, sg_dataset** out, char** stats_json_out) {
  if (sg_status s = require(dump_text && out, "sg_decode_graphs: null argument")) return s;
  return guarded([&] {
    std::vector<sg::GeneralGraph> graphs = sg::parse_graph_dump(dump_text);
    sg::Dataset data;
    data.reserve(graphs.size());
    long long dropped = 0;
    for (const sg::GeneralGraph& g : graphs) {
      sg::DecodeResult r = sg::decode_graph(g);
      dropped += r.dropped_opinions;
      data.push_back(std::move(r.graph));
    }
    if (stats_json_out) {
      *stats_json_out = dup_string(ordered_json{{"dropped_opinions", dropped}}.dump(2));
    }
    *out = new sg_dataset{std::move(data)};
    return SG_OK;
  });
}

sg_status sg_roundtrip_json(const sg_dataset* d, const char* encoding, char** json_out) {
  if (sg_status s = require(d && encoding && json_out, "sg_roundtrip_json: null argument")) return s;
  return guarded([&] { return roundtrip_impl(d->data, encoding, json_out); });
}

/* ---- dependency encoding ---------------------------------------------- */

sg_status sg_encode_dep(const sg_dataset* d, const char* head_rule, char** dump_out,
                        char** loss_json_out) {
  if (sg_status s = require(d && head_rule && dump_out, "sg_encode_dep: null argument")) return s;
  return guarded([&]() -> sg_status {
    auto rule = sg::head_rule_from_string(head_rule);
    if (!rule) {
      return fail(SG_ERROR_INVALID_ARGUMENT, "unknown head rule '" + std::string(head_rule) + "'");
    }
    std::vector<sg::DepGraph> graphs;
    graphs.reserve(d->data.size());
    sg::ArcLossStats loss;
    for (const sg::SentimentGraph& g : d->data) {
      sg::DepEncodeResult r = sg::encode_dep(g, *rule);
      loss += r.loss;
      graphs.push_back(std::move(r.graph));
    }
    *dump_out = dup_string(sg::dump_dep(graphs));
    if (loss_json_out) {
      ordered_json j{{"arcs_total", loss.arcs_total},
                     {"arcs_lost", loss.arcs_lost},
                     {"percent_lost", loss.percent_lost}};
      *loss_json_out = dup_string(j.dump(2));
    }
    return SG_OK;
  });
}

sg_status sg_decode_dep(const char* dump_text, sg_dataset** out, char** stats_json_out) {
  if (sg_status s = require(dump_text && out, "sg_decode_dep: null argument")) return s;
  return guarded([&] {
    std::vector<sg::DepGraph> graphs = sg::parse_dep_dump(dump_text);
    sg::Dataset data;
    data.reserve(graphs.size());
    long long dangling = 0;
    for (const sg::DepGraph& g : graphs) {
      // The rule only matters for encoding; either constant decodes the same.
      sg::DepDecodeResult r = sg::decode_dep(g, sg::HeadRule::Last);
      dangling += r.dangling_in_arcs;
      data.push_back(std::move(r.graph));
    }
    if (stats_json_out) {
      *stats_json_out = dup_string(ordered_json{{"dangling_in_arcs", dangling}}.dump(2));
    }
    *out = new sg_dataset{std::move(data)};
    return SG_OK;
  });
}

/* ---- evaluation -------------------------------------------------------- */

sg_status sg_evaluate(const sg_dataset* gold, const sg_dataset* pred, char** text_out,
                      char** json_out) {
  if (sg_status s = require(gold && pred, "sg_evaluate: null argument")) return s;
  return guarded([&] {
    sg::MetricsReport report = sg::evaluate(gold->data, pred->data);
    if (text_out) *text_out = dup_string(sg::report_to_text(report));
    if (json_out) *json_out = dup_string(sg::report_to_json(report));
    return SG_OK;
  });
}

sg_status sg_significance(const sg_dataset* gold, const sg_dataset* const* runs_a, size_t n_a,
                          const sg_dataset* const* runs_b, size_t n_b, long long b_joint,
                          long long b_pair, double alpha, int pair_wins_required, uint64_t seed,
                          int threads, char** json_out) {
  if (sg_status s = require(gold && runs_a && runs_b && json_out && n_a > 0 && n_b > 0,
                            "sg_significance: null or empty argument")) {
    return s;
  }
  for (size_t i = 0; i < n_a; ++i)
    if (sg_status s = require(runs_a[i], "sg_significance: null run handle")) return s;
  for (size_t i = 0; i < n_b; ++i)
    if (sg_status s = require(runs_b[i], "sg_significance: null run handle")) return s;
  return guarded([&] {
    std::vector<sg::Dataset> a, b;
    for (size_t i = 0; i < n_a; ++i) a.push_back(runs_a[i]->data);
    for (size_t i = 0; i < n_b; ++i) b.push_back(runs_b[i]->data);
    sg::BootstrapConfig cfg;
    cfg.b_joint = b_joint;
    cfg.b_pair = b_pair;
    cfg.alpha = alpha;
    cfg.pair_wins_required = pair_wins_required;
    cfg.seed = seed;
    cfg.threads = threads;
    sg::SignificanceResult r = sg::significance_test(gold->data, a, b, cfg);
    ordered_json j;
    j["observed_diff"] = r.observed_diff;
    j["joint_p"] = r.joint_p;
    j["pairwise_p"] = r.pairwise_p;
    j["pairwise_wins"] = r.pairwise_wins;
    j["pair_wins_required"] = pair_wins_required;
    j["alpha"] = alpha;
    j["decision"] = r.decision == sg::SignificanceDecision::SignificantlyBetter
                        ? "significantly-better"
                        : "not-significant";
    *json_out = dup_string(j.dump(2));
    return SG_OK;
  });
}

/* ---- model -------------------------------------------------------------- */

sg_status sg_train(const char* config_text, const sg_dataset* train_set, const sg_dataset* dev_set,
                   void (*on_epoch)(const char* epoch_json, void* user), void* user,
                   sg_model** out, char** summary_json_out) {
  if (sg_status s = require(config_text && train_set && out, "sg_train: null argument")) return s;
  sg::model::ModelConfig config;
  try {
    config = sg::model::config_from_text(config_text);
  } catch (const std::invalid_argument& e) {
    return fail(SG_ERROR_PARSE, e.what());
  }
  return guarded([&]() -> sg_status {
    sg::model::TrainOptions options;
    if (dev_set) options.dev = &dev_set->data;
    if (on_epoch) {
      options.on_epoch = [&](const sg::model::EpochStats& e) {
        ordered_json j{{"epoch", e.epoch},
                       {"mean_loss", e.mean_loss},
                       {"train_sf1", e.train_sf1},
                       {"dev_sf1", e.dev_sf1},
                       {"lr_multiplier", e.lr_multiplier},
                       {"truncated_nodes", e.truncated_nodes}};
        std::string line = j.dump();
        on_epoch(line.c_str(), user);
      };
    }
    try {
      sg::model::TrainResult result = sg::model::train(config, train_set->data, options);
      if (summary_json_out) {
        ordered_json j{{"epochs", result.history.size()},
                       {"best_epoch", result.best_epoch},
                       {"best_sf1", result.best_sf1}};
        *summary_json_out = dup_string(j.dump(2));
      }
      *out = new sg_model{std::move(result.best)};
    } catch (const std::runtime_error& e) {
      if (std::string(e.what()).find("diverged") != std::string::npos) {
        return fail(SG_ERROR_NUMERIC, e.what());
      }
      throw;
    }
    return SG_OK;
  });
}

sg_status sg_model_read(const char* path, sg_model** out) {
  if (sg_status s = require(path && out, "sg_model_read: null argument")) return s;
  return guarded([&]() -> sg_status {
    try {
      *out = new sg_model{sg::model::load_checkpoint(path)};
    } catch (const std::runtime_error& e) {
      std::string what = e.what();
      return fail(what.find("cannot open") != std::string::npos ? SG_ERROR_IO : SG_ERROR_PARSE,
                  what);
    }
    return SG_OK;
  });
}

sg_status sg_model_write(const sg_model* m, const char* path) {
  if (sg_status s = require(m && path, "sg_model_write: null argument")) return s;
  return guarded([&]() -> sg_status {
    try {
      sg::model::save_checkpoint(m->state, path);
    } catch (const std::runtime_error& e) {
      return fail(SG_ERROR_IO, e.what());
    }
    return SG_OK;
  });
}

sg_status sg_model_config_text(const sg_model* m, char** text_out) {
  if (sg_status s = require(m && text_out, "sg_model_config_text: null argument")) return s;
  return guarded([&] {
    *text_out = dup_string(sg::model::config_to_text(m->state.config));
    return SG_OK;
  });
}

uint64_t sg_model_parameter_count(const sg_model* m) {
  return m ? static_cast<uint64_t>(m->state.parameter_count()) : 0;
}

sg_status sg_model_predict(const sg_model* m, const sg_dataset* input, sg_dataset** out,
                           char** stats_json_out) {
  if (sg_status s = require(m && input && out, "sg_model_predict: null argument")) return s;
  return guarded([&] {
    sg::model::PredictStats stats;
    sg::Dataset pred = sg::model::predict_dataset(m->state, input->data, &stats);
    if (stats_json_out) *stats_json_out = dup_string(predict_stats_json(stats).dump(2));
    *out = new sg_dataset{std::move(pred)};
    return SG_OK;
  });
}

void sg_model_free(sg_model* m) { delete m; }

} /* extern "C" */
